// SPDX-License-Identifier: Apache-2.0
//
// Linear grapheme probe on frozen final-layer hidden states.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "plbert/corpus.hpp"
#include "plbert/masking.hpp"
#include "plbert/model.hpp"

namespace plbert {

struct ProbeConfig {
  std::size_t steps = 300;
  std::size_t batch_size = 1024;  // positions per Adam step; >= the split size means full batch
  double lr = 0.01;
  double init_std = 0.01;
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DataSplit {
  std::vector<std::size_t> train;  // sorted record indices
  std::vector<std::size_t> eval;
};

/// Random record-level split; eval gets ceil(eval_fraction * n) records.
/// Throws DataError if either side would be empty.
DataSplit split_records(std::size_t n_records, double eval_fraction, std::uint64_t seed);

struct ProbeFeatures {
  Matrix<float> features;           // one row per valid position
  std::vector<std::int32_t> labels; // grapheme id per row
  std::vector<std::size_t> records; // source record indices, sorted
};

/// Runs the encoder in inference mode (no masking, no dropout) over the
/// selected records. Throws DataError("empty split") when `indices` is empty.
ProbeFeatures extract_features(const EncoderParams<float>& encoder, std::span<const ExampleRecord> records,
                               std::span<const std::size_t> indices);

/// Features for a masked-phoneme readout: record i is masked with
/// mask_seed(seed, 0, i) and the rows are the hidden states at its masked
/// positions, labelled with the original phoneme. Records with nothing
/// masked contribute no rows.
ProbeFeatures extract_masked_features(const EncoderParams<float>& encoder, std::span<const ExampleRecord> records,
                                      std::span<const std::size_t> indices, const MaskPolicy& policy,
                                      std::uint64_t seed);

struct ProbeParams {
  Matrix<double> weight;  // V_g x H
  Matrix<double> bias;    // 1 x V_g
  std::vector<std::size_t> train_records;
};

/// Multinomial logistic regression fit with Adam on mean cross-entropy.
/// With steps = 0 the probe keeps its random initialisation.
ProbeParams probe_train(const ProbeFeatures& train, std::size_t n_classes, const ProbeConfig& config);

Matrix<double> probe_logits(const ProbeParams& probe, const Matrix<float>& features);

/// Fraction of rows whose label ranks among the k largest logits, ties going
/// to the lower id.
double topk_accuracy(const Matrix<double>& logits, std::span<const std::int32_t> labels, std::size_t k);

struct ProbeReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double majority_baseline = 0.0;  // share of the most frequent eval label
  std::size_t n_eval = 0;
};

/// Throws DataError("splits must be disjoint") if any eval record was used
/// to train the probe.
ProbeReport probe_eval(const ProbeParams& probe, const ProbeFeatures& eval);

}  // namespace plbert
