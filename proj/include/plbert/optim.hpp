// SPDX-License-Identifier: Apache-2.0
//
// AdamW with linear warmup / linear decay and global-norm clipping.
#pragma once

#include <cstddef>
#include <cstdint>

#include "plbert/model.hpp"

namespace plbert {

struct OptimConfig {
  double lr = 1e-3;  // peak
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.1;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::size_t total_steps = 1000;

  void validate() const;
};

/// Learning rate for update number `step` (0-based): linear warmup over the
/// first ceil(warmup_fraction * total_steps) updates, then linear decay that
/// would reach 0 at total_steps. Steps past the end get 0.
double learning_rate(const OptimConfig& config, std::uint64_t step);

/// First and second moments, stored like the parameters.
template <class T>
struct AdamState {
  EncoderParams<T> m;
  EncoderParams<T> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <class T>
AdamState<T> make_adam_state(const EncoderParams<T>& params);

/// Euclidean norm over every gradient tensor.
double global_norm(const ParamGrads& grads);

/// Scales the gradients so that their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ParamGrads& grads, double max_norm);

/// One AdamW update with bias correction for update number `step` (0-based).
/// Embeddings and weights are decayed; biases and norm parameters are not.
template <class T>
void adamw_update(EncoderParams<T>& params, AdamState<T>& state, const ParamGrads& grads, const OptimConfig& config,
                  std::uint64_t step, double lr);

}  // namespace plbert
