// SPDX-License-Identifier: Apache-2.0
//
// Joint masked-phoneme / phoneme-to-grapheme training.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plbert/checkpoint.hpp"
#include "plbert/corpus.hpp"
#include "plbert/masking.hpp"
#include "plbert/model.hpp"
#include "plbert/optim.hpp"

namespace plbert {

struct ObjectiveConfig {
  bool use_mlm = true;
  bool use_p2g = true;
  double p2g_weight = 1.0;  // lambda

  /// Throws UsageError("no objective enabled") when both are off.
  void validate() const;
};

struct LossReport {
  double loss_mlm = 0.0;  // mean CE over scored masked positions
  double loss_p2g = 0.0;  // mean CE over valid positions
  double total = 0.0;     // use_mlm * loss_mlm + use_p2g * lambda * loss_p2g
  std::size_t n_mlm = 0;
  std::size_t n_p2g = 0;
};

/// Losses of one batch, pooled over all rows. When `grads` is non-null the
/// gradient of `total` is accumulated into it; a disabled objective
/// contributes nothing. Dropout uses one stream per row derived from
/// `dropout_seed`.
template <class T>
LossReport loss_and_grads(const EncoderParams<T>& params, const BatchTensors& batch, const ObjectiveConfig& objective,
                          ParamGrads* grads = nullptr, double dropout = 0.0, std::uint64_t dropout_seed = 0);

struct TrainConfig {
  ModelConfig model;
  MaskPolicy mask;
  OptimConfig optim;  // optim.total_steps is the run length
  ObjectiveConfig objective;
  bool score_only_msk = false;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;

  /// Every setting as key=value pairs (model keys excluded), for logs and
  /// checkpoints.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Inverse of entries(); throws FormatError on a missing or bad key.
  static TrainConfig from_entries(const ModelConfig& model, std::span<const std::pair<std::string, std::string>> entries);
};

/// Everything needed to continue a run bit-identically. The data order is
/// a pure function of (seed, epoch), so (epoch, cursor) stands in for the
/// generator state.
struct TrainState {
  EncoderParams<float> params;
  AdamState<float> adam;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t cursor = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

TrainState init_train_state(const TrainConfig& config);

/// Shuffled record order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n_records, std::uint64_t seed, std::uint64_t epoch);

/// Masks and collates the next batch_size records of the current epoch
/// (fewer at the end of an epoch), padded to the longest row, and advances
/// the cursor.
BatchTensors next_batch(TrainState& state, std::span<const ExampleRecord> records, const TrainConfig& config);

/// Forward, backward, clipping and one AdamW update. Throws NumericError on a
/// non-finite loss or parameter.
LossReport train_step(TrainState& state, const BatchTensors& batch, const TrainConfig& config);

struct TrainHooks {
  /// Called after every update with the new state, its losses and the lr used.
  std::function<void(const TrainState&, const LossReport&, double)> on_step;
  /// Called every checkpoint_every updates and after the last one.
  std::function<void(const TrainState&)> on_checkpoint;
  std::size_t checkpoint_every = 0;
  /// Stops the loop early when it returns true (checked after each update).
  std::function<bool(const TrainState&)> stop;
};

/// Runs until state.step reaches config.optim.total_steps.
void run_training(TrainState& state, std::span<const ExampleRecord> records, const TrainConfig& config,
                  const TrainHooks& hooks = {});

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& config);
std::pair<TrainState, TrainConfig> from_checkpoint(const Checkpoint& ckpt);

/// "step=<n> loss_mlm=<f> loss_p2g=<f> lr=<f>"
std::string metrics_line(std::uint64_t step, const LossReport& report, double lr);

struct EvalReport {
  double mlm_accuracy = 0.0;      // top-1 on scored masked positions
  double mlm_unigram = 0.0;       // most frequent target phoneme's share of those positions
  double mlm_loss = 0.0;
  std::size_t mlm_count = 0;
  double p2g_accuracy = 0.0;      // top-1 over valid positions
  double p2g_loss = 0.0;
  std::size_t p2g_count = 0;
};

/// Inference-mode evaluation. With a mask policy, record i is masked with
/// mask_seed(seed, 0, i); without one the inputs are left intact and only
/// the grapheme metrics are meaningful.
EvalReport evaluate(const EncoderParams<float>& params, std::span<const ExampleRecord> records,
                    const MaskPolicy* mask, std::uint64_t seed, bool score_only_msk = false);

}  // namespace plbert
