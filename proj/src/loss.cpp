// SPDX-License-Identifier: Apache-2.0
#include "plbert/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "plbert/errors.hpp"
#include "plbert/masking.hpp"

namespace plbert {

namespace {

void check_label(std::size_t k, std::int32_t label) {
  if (label < 0 || static_cast<std::size_t>(label) >= k) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
  }
}

double log_sum_exp(std::span<const double> logits, double max) {
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  return max + std::log(sum);
}

}  // namespace

double cross_entropy(std::span<const double> logits, std::int32_t label) {
  check_label(logits.size(), label);
  const double max = *std::max_element(logits.begin(), logits.end());
  return log_sum_exp(logits, max) - logits[static_cast<std::size_t>(label)];
}

double cross_entropy_grad(std::span<const double> logits, std::int32_t label, double weight, std::span<double> grad) {
  check_label(logits.size(), label);
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    grad[k] = std::exp(logits[k] - max);
    sum += grad[k];
  }
  for (std::size_t k = 0; k < logits.size(); ++k) grad[k] = weight * (grad[k] / sum);
  grad[static_cast<std::size_t>(label)] -= weight;
  return max + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

LossTerm loss_mlm(const Matrix<double>& logits, std::span<const TokenId> y_p, std::span<const std::uint32_t> masked) {
  LossTerm t;
  for (std::uint32_t i : masked) {
    if (i >= logits.rows() || i >= y_p.size()) throw DataError("masked index out of range");
    t.sum += cross_entropy(logits.row_span(i), y_p[i]);
    ++t.count;
  }
  return t;
}

LossTerm loss_p2g(const Matrix<double>& logits, std::span<const TokenId> y_g, std::size_t n_valid) {
  if (n_valid > logits.rows() || n_valid > y_g.size()) throw DataError("valid length exceeds the logit rows");
  LossTerm t;
  for (std::size_t i = 0; i < n_valid; ++i) {
    t.sum += cross_entropy(logits.row_span(i), y_g[i]);
    ++t.count;
  }
  return t;
}

LossTerm labelled_loss(const Matrix<double>& logits, std::span<const std::int32_t> labels, double weight,
                       Matrix<double>* grad) {
  if (labels.size() != logits.rows()) throw UsageError("label count does not match the logit rows");
  LossTerm t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    t.sum += grad != nullptr ? cross_entropy_grad(logits.row_span(i), labels[i], weight, grad->row_span(i))
                             : cross_entropy(logits.row_span(i), labels[i]);
    ++t.count;
  }
  return t;
}

std::size_t label_rank(std::span<const double> logits, std::int32_t label) {
  check_label(logits.size(), label);
  const auto l = static_cast<std::size_t>(label);
  const double z = logits[l];
  std::size_t rank = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (logits[k] > z || (logits[k] == z && k < l)) ++rank;
  }
  return rank;
}

}  // namespace plbert
