// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "plbert/tensor.hpp"
#include "plbert/vocab.hpp"

namespace plbert {

/// -log softmax(logits)[label], with max subtraction.
double cross_entropy(std::span<const double> logits, std::int32_t label);

/// Same, and writes weight * (softmax(logits) - onehot(label)) into `grad`.
double cross_entropy_grad(std::span<const double> logits, std::int32_t label, double weight, std::span<double> grad);

/// Sum and count of per-position cross-entropies.
struct LossTerm {
  double sum = 0.0;
  std::size_t count = 0;

  /// 0 when nothing was scored.
  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
  LossTerm& operator+=(const LossTerm& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

/// Masked-phoneme loss over the positions in `masked` (labels y_p).
LossTerm loss_mlm(const Matrix<double>& logits, std::span<const TokenId> y_p, std::span<const std::uint32_t> masked);

/// Grapheme loss over every position in [0, n_valid).
LossTerm loss_p2g(const Matrix<double>& logits, std::span<const TokenId> y_g, std::size_t n_valid);

/// Loss over rows whose label is not kIgnoreLabel. If `grad` is non-null,
/// row gradients scaled by `weight` are written for scored rows; other rows
/// are left untouched.
LossTerm labelled_loss(const Matrix<double>& logits, std::span<const std::int32_t> labels, double weight = 0.0,
                       Matrix<double>* grad = nullptr);

/// Number of entries that outrank `label`: strictly larger logits, plus equal
/// logits with a lower id. The label is in the top k iff rank < k.
std::size_t label_rank(std::span<const double> logits, std::int32_t label);

}  // namespace plbert
