// SPDX-License-Identifier: Apache-2.0
#include "plbert/probe.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "plbert/errors.hpp"
#include "plbert/kernels.hpp"
#include "plbert/loss.hpp"
#include "plbert/rng.hpp"

namespace plbert {

void ProbeConfig::validate() const {
  if (batch_size == 0) throw UsageError("probe batch size must be >= 1");
  if (!(lr >= 0.0)) throw UsageError("probe lr must be >= 0");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw UsageError("eval fraction must be in (0, 1)");
}

DataSplit split_records(std::size_t n, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw UsageError("eval fraction must be in (0, 1)");
  const auto n_eval = static_cast<std::size_t>(std::ceil(eval_fraction * static_cast<double>(n)));
  if (n_eval == 0 || n_eval >= n) throw DataError("empty split");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  DataSplit s;
  s.eval.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
  std::sort(s.eval.begin(), s.eval.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

ProbeFeatures extract_features(const EncoderParams<float>& encoder, std::span<const ExampleRecord> records,
                               std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty split");
  std::size_t rows = 0;
  for (std::size_t idx : indices) {
    if (idx >= records.size()) throw DataError("record index out of range");
    rows += records[idx].length();
  }
  const std::size_t H = encoder.config.hidden;
  ProbeFeatures out;
  out.features = Matrix<float>(rows, H);
  out.labels.reserve(rows);
  out.records.assign(indices.begin(), indices.end());
  std::sort(out.records.begin(), out.records.end());

  std::size_t row = 0;
  for (std::size_t idx : indices) {
    const ExampleRecord& rec = records[idx];
    const std::vector<std::uint8_t> valid(rec.length(), 1);
    const ForwardResult<float> fr = forward(encoder, std::span<const TokenId>(rec.phonemes), std::span(valid));
    for (std::size_t i = 0; i < rec.length(); ++i) std::copy_n(fr.hidden.row(i), H, out.features.row(row + i));
    const auto yg = grapheme_labels(rec);
    out.labels.insert(out.labels.end(), yg.begin(), yg.end());
    row += rec.length();
  }
  return out;
}

ProbeFeatures extract_masked_features(const EncoderParams<float>& encoder, std::span<const ExampleRecord> records,
                                      std::span<const std::size_t> indices, const MaskPolicy& policy,
                                      std::uint64_t seed) {
  if (indices.empty()) throw DataError("empty split");
  const std::size_t H = encoder.config.hidden;
  std::vector<float> rows;
  ProbeFeatures out;
  out.records.assign(indices.begin(), indices.end());
  std::sort(out.records.begin(), out.records.end());
  for (std::size_t idx : indices) {
    if (idx >= records.size()) throw DataError("record index out of range");
    Rng rng(mask_seed(seed, 0, idx));
    const MaskedExample ex = apply_mask(records[idx], policy, rng, encoder.config.phoneme_vocab_size);
    if (ex.masked.empty()) continue;
    const std::vector<std::uint8_t> valid(ex.length, 1);
    const ForwardResult<float> fr = forward(encoder, std::span<const TokenId>(ex.x), std::span(valid));
    for (std::uint32_t i : ex.masked) {
      rows.insert(rows.end(), fr.hidden.row(i), fr.hidden.row(i) + H);
      out.labels.push_back(ex.y_p[i]);
    }
  }
  out.features = Matrix<float>(out.labels.size(), H);
  std::copy(rows.begin(), rows.end(), out.features.data());
  return out;
}

ProbeParams probe_train(const ProbeFeatures& train, std::size_t n_classes, const ProbeConfig& config) {
  config.validate();
  const std::size_t n = train.labels.size(), H = train.features.cols();
  if (n == 0) throw DataError("empty split");
  for (std::int32_t y : train.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("probe label outside the label range");
  }

  ProbeParams p;
  p.weight = Matrix<double>(n_classes, H);
  p.bias = Matrix<double>(1, n_classes);
  p.train_records = train.records;
  Rng init(derive_seed(config.seed, 0x70726f6265ULL));
  for (double& w : p.weight.values()) w = init.normal() * config.init_std;

  Matrix<double> mw(n_classes, H), vw(n_classes, H), mb(1, n_classes), vb(1, n_classes);
  Matrix<double> gw(n_classes, H), gb(1, n_classes);
  std::vector<double> logits(n_classes), grad(n_classes);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::size_t batch = std::min(config.batch_size, n);

  std::vector<std::size_t> order(n);
  std::size_t cursor = n;
  std::uint64_t epoch = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    gw.fill(0.0);
    gb.fill(0.0);
    for (std::size_t k = 0; k < batch; ++k) {
      if (cursor == n) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        if (batch < n) {
          Rng rng(derive_seed(config.seed, 0x6570ULL, epoch));
          for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
        }
        ++epoch;
        cursor = 0;
      }
      const std::size_t r = order[cursor++];
      const float* x = train.features.row(r);
      for (std::size_t v = 0; v < n_classes; ++v) logits[v] = kernels::dot(p.weight.row(v), x, H) + p.bias(0, v);
      cross_entropy_grad(logits, train.labels[r], 1.0 / static_cast<double>(batch), grad);
      for (std::size_t v = 0; v < n_classes; ++v) {
        gb(0, v) += grad[v];
        kernels::axpy(grad[v], x, gw.row(v), H);
      }
    }
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    auto adam = [&](Matrix<double>& w, Matrix<double>& m, Matrix<double>& v, const Matrix<double>& g) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * gi;
        v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
        w.data()[i] -= config.lr * (m.data()[i] / c1) / (std::sqrt(v.data()[i] / c2) + eps);
      }
    };
    adam(p.weight, mw, vw, gw);
    adam(p.bias, mb, vb, gb);
  }
  for (double w : p.weight.values()) {
    if (!std::isfinite(w)) throw NumericError("probe weights became non-finite");
  }
  return p;
}

Matrix<double> probe_logits(const ProbeParams& probe, const Matrix<float>& features) {
  const std::size_t V = probe.weight.rows(), H = probe.weight.cols();
  if (features.cols() != H) throw UsageError("feature width does not match the probe");
  Matrix<double> out(features.rows(), V);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t v = 0; v < V; ++v) out(r, v) = kernels::dot(probe.weight.row(v), features.row(r), H) + probe.bias(0, v);
  }
  return out;
}

double topk_accuracy(const Matrix<double>& logits, std::span<const std::int32_t> labels, std::size_t k) {
  if (labels.size() != logits.rows()) throw UsageError("label count does not match the logit rows");
  if (labels.empty()) throw DataError("no rows to score");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) hits += label_rank(logits.row_span(r), labels[r]) < k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ProbeReport probe_eval(const ProbeParams& probe, const ProbeFeatures& eval) {
  if (eval.labels.empty()) throw DataError("empty split");
  std::vector<std::size_t> overlap;
  std::set_intersection(probe.train_records.begin(), probe.train_records.end(), eval.records.begin(), eval.records.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) throw DataError("splits must be disjoint");

  const Matrix<double> logits = probe_logits(probe, eval.features);
  ProbeReport rep;
  rep.n_eval = eval.labels.size();
  rep.top1 = topk_accuracy(logits, eval.labels, 1);
  rep.top5 = topk_accuracy(logits, eval.labels, 5);
  std::unordered_map<std::int32_t, std::size_t> counts;
  std::size_t best = 0;
  for (std::int32_t y : eval.labels) best = std::max(best, ++counts[y]);
  rep.majority_baseline = static_cast<double>(best) / static_cast<double>(rep.n_eval);
  return rep;
}

}  // namespace plbert
