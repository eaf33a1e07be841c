// SPDX-License-Identifier: Apache-2.0
#include "plbert/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "plbert/errors.hpp"
#include "plbert/loss.hpp"

namespace plbert {

namespace {

constexpr std::uint64_t kOrderTag = 0x6f72646572ULL;
constexpr std::uint64_t kDropoutTag = 0x64726f70ULL;

std::string flag(bool b) { return b ? "1" : "0"; }

class EntryMap {
 public:
  explicit EntryMap(std::span<const std::pair<std::string, std::string>> entries) {
    for (const auto& [k, v] : entries) map_[k] = v;
  }

  const std::string& raw(const std::string& key) const {
    auto it = map_.find(key);
    if (it == map_.end()) throw FormatError("missing setting '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = raw(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw FormatError("invalid value for '" + key + "': " + s);
    return v;
  }

  std::uint64_t integer(const std::string& key) const {
    const std::string& s = raw(key);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw FormatError("invalid value for '" + key + "': " + s);
    }
    return std::stoull(s);
  }

  bool boolean(const std::string& key) const {
    const std::string& s = raw(key);
    if (s != "0" && s != "1") throw FormatError("invalid value for '" + key + "': " + s);
    return s == "1";
  }

 private:
  std::map<std::string, std::string, std::less<>> map_;
};

std::size_t count_labels(std::span<const std::int32_t> labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::int32_t l) { return l != kIgnoreLabel; }));
}

}  // namespace

void ObjectiveConfig::validate() const {
  if (!use_mlm && !use_p2g) throw UsageError("no objective enabled");
  if (!(p2g_weight >= 0.0) || !std::isfinite(p2g_weight)) throw UsageError("p2g weight must be finite and >= 0");
}

void TrainConfig::validate() const {
  model.validate();
  mask.validate();
  optim.validate();
  objective.validate();
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {
      {"train.seed", std::to_string(seed)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.score_only_msk", flag(score_only_msk)},
      {"objective.use_mlm", flag(objective.use_mlm)},
      {"objective.use_p2g", flag(objective.use_p2g)},
      {"objective.p2g_weight", format_double(objective.p2g_weight)},
      {"mask.select_prob", format_double(mask.select_prob)},
      {"mask.mask_prob", format_double(mask.mask_prob)},
      {"mask.random_prob", format_double(mask.random_prob)},
      {"mask.keep_prob", format_double(mask.keep_prob)},
      {"optim.lr", format_double(optim.lr)},
      {"optim.weight_decay", format_double(optim.weight_decay)},
      {"optim.beta1", format_double(optim.beta1)},
      {"optim.beta2", format_double(optim.beta2)},
      {"optim.eps", format_double(optim.eps)},
      {"optim.warmup_fraction", format_double(optim.warmup_fraction)},
      {"optim.clip_norm", format_double(optim.clip_norm)},
      {"optim.total_steps", std::to_string(optim.total_steps)},
  };
}

TrainConfig TrainConfig::from_entries(const ModelConfig& model,
                                      std::span<const std::pair<std::string, std::string>> entries) {
  const EntryMap m(entries);
  TrainConfig c;
  c.model = model;
  c.seed = m.integer("train.seed");
  c.batch_size = m.integer("train.batch_size");
  c.score_only_msk = m.boolean("train.score_only_msk");
  c.objective.use_mlm = m.boolean("objective.use_mlm");
  c.objective.use_p2g = m.boolean("objective.use_p2g");
  c.objective.p2g_weight = m.real("objective.p2g_weight");
  c.mask.select_prob = m.real("mask.select_prob");
  c.mask.mask_prob = m.real("mask.mask_prob");
  c.mask.random_prob = m.real("mask.random_prob");
  c.mask.keep_prob = m.real("mask.keep_prob");
  c.optim.lr = m.real("optim.lr");
  c.optim.weight_decay = m.real("optim.weight_decay");
  c.optim.beta1 = m.real("optim.beta1");
  c.optim.beta2 = m.real("optim.beta2");
  c.optim.eps = m.real("optim.eps");
  c.optim.warmup_fraction = m.real("optim.warmup_fraction");
  c.optim.clip_norm = m.real("optim.clip_norm");
  c.optim.total_steps = m.integer("optim.total_steps");
  return c;
}

template <class T>
LossReport loss_and_grads(const EncoderParams<T>& params, const BatchTensors& batch, const ObjectiveConfig& objective,
                          ParamGrads* grads, double dropout, std::uint64_t dropout_seed) {
  objective.validate();
  const ModelConfig& c = params.config;
  const std::size_t Vp = c.phoneme_vocab_size, Vg = c.grapheme_vocab_size, W = batch.width;

  LossReport report;
  report.n_mlm = count_labels(batch.mlm_labels);
  report.n_p2g = count_labels(batch.p2g_labels);
  const double w_mlm = report.n_mlm == 0 ? 0.0 : 1.0 / static_cast<double>(report.n_mlm);
  const double w_p2g = report.n_p2g == 0 ? 0.0 : objective.p2g_weight / static_cast<double>(report.n_p2g);

  LossTerm mlm, p2g;
  std::vector<std::int32_t> mlm_labels, p2g_labels;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const auto valid = batch.valid_row(b);
    for (std::size_t i = 0; i < W; ++i) {
      if (valid[i] == 0 && (batch.mlm_row(b)[i] != kIgnoreLabel || batch.p2g_row(b)[i] != kIgnoreLabel)) {
        throw UsageError("label at padded position " + std::to_string(i) + " of row " + std::to_string(b));
      }
    }
    Rng rng(derive_seed(dropout_seed, b));
    const DropoutContext dc{dropout, dropout > 0.0 ? &rng : nullptr};
    const ForwardResult<T> fr = forward(params, batch.input_row(b), valid, dc);
    const auto& pos = fr.trace.positions;
    const std::size_t n = pos.size();
    const HeadLogits logits = heads(params, fr.trace.output);

    mlm_labels.resize(n);
    p2g_labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      mlm_labels[r] = batch.mlm_row(b)[pos[r]];
      p2g_labels[r] = batch.p2g_row(b)[pos[r]];
    }

    if (grads == nullptr) {
      mlm += labelled_loss(logits.mlm, mlm_labels);
      p2g += labelled_loss(logits.p2g, p2g_labels);
      continue;
    }
    Matrix<double> gm(n, Vp), gp(n, Vg);
    mlm += labelled_loss(logits.mlm, mlm_labels, w_mlm, objective.use_mlm ? &gm : nullptr);
    p2g += labelled_loss(logits.p2g, p2g_labels, w_p2g, objective.use_p2g ? &gp : nullptr);
    Matrix<double> full_m(W, Vp), full_p(W, Vg);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(gm.row(r), Vp, full_m.row(pos[r]));
      std::copy_n(gp.row(r), Vg, full_p.row(pos[r]));
    }
    backward(params, fr.trace, full_m, full_p, *grads);
  }

  report.loss_mlm = mlm.mean();
  report.loss_p2g = p2g.mean();
  report.total = (objective.use_mlm ? report.loss_mlm : 0.0) +
                 (objective.use_p2g ? objective.p2g_weight * report.loss_p2g : 0.0);
  return report;
}

template LossReport loss_and_grads<float>(const EncoderParams<float>&, const BatchTensors&, const ObjectiveConfig&,
                                          ParamGrads*, double, std::uint64_t);
template LossReport loss_and_grads<double>(const EncoderParams<double>&, const BatchTensors&, const ObjectiveConfig&,
                                           ParamGrads*, double, std::uint64_t);

TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.params = init_params<float>(config.model, config.seed);
  s.adam = make_adam_state(s.params);
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, kOrderTag, epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchTensors next_batch(TrainState& state, std::span<const ExampleRecord> records, const TrainConfig& config) {
  if (records.empty()) throw DataError("no training records");
  if (state.cursor >= records.size()) {
    ++state.epoch;
    state.cursor = 0;
  }
  const auto order = epoch_order(records.size(), config.seed, state.epoch);
  const std::size_t take = std::min<std::size_t>(config.batch_size, records.size() - state.cursor);
  std::vector<MaskedExample> examples;
  examples.reserve(take);
  std::size_t width = 0;
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t idx = order[state.cursor + k];
    Rng rng(mask_seed(config.seed, state.epoch, idx));
    examples.push_back(apply_mask(records[idx], config.mask, rng, config.model.phoneme_vocab_size));
    width = std::max(width, examples.back().length);
  }
  state.cursor += take;
  return collate(examples, width, config.score_only_msk);
}

LossReport train_step(TrainState& state, const BatchTensors& batch, const TrainConfig& config) {
  ParamGrads grads = zero_params<double>(state.params.config, true);
  const LossReport report = loss_and_grads(state.params, batch, config.objective, &grads, config.model.dropout,
                                           derive_seed(config.seed, kDropoutTag, state.step));
  if (!std::isfinite(report.total)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "non-finite loss at step %llu (loss_mlm=%g loss_p2g=%g)",
                  static_cast<unsigned long long>(state.step + 1), report.loss_mlm, report.loss_p2g);
    throw NumericError(buf);
  }
  clip_global_norm(grads, config.optim.clip_norm);
  const double lr = learning_rate(config.optim, state.step);
  adamw_update(state.params, state.adam, grads, config.optim, state.step, lr);
  if (!all_finite(state.params)) {
    throw NumericError("non-finite parameter after step " + std::to_string(state.step + 1));
  }
  ++state.step;
  return report;
}

void run_training(TrainState& state, std::span<const ExampleRecord> records, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (records.empty()) throw DataError("no training records");
  const std::uint64_t total = config.optim.total_steps;
  while (state.step < total) {
    BatchTensors batch = next_batch(state, records, config);
    const double lr = learning_rate(config.optim, state.step);
    const LossReport report = train_step(state, batch, config);
    if (hooks.on_step) hooks.on_step(state, report, lr);
    const bool stop = hooks.stop && hooks.stop(state);
    const bool periodic = hooks.checkpoint_every > 0 && state.step % hooks.checkpoint_every == 0;
    if (hooks.on_checkpoint && (periodic || stop || state.step == total)) hooks.on_checkpoint(state);
    if (stop) break;
  }
}

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& config) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::full;
  ckpt.params = state.params;
  ckpt.adam = state.adam;
  ckpt.settings = config.entries();
  ckpt.settings.emplace_back("progress.step", std::to_string(state.step));
  ckpt.settings.emplace_back("progress.epoch", std::to_string(state.epoch));
  ckpt.settings.emplace_back("progress.cursor", std::to_string(state.cursor));
  return ckpt;
}

std::pair<TrainState, TrainConfig> from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::full || !ckpt.adam) {
    throw DataError("checkpoint has no optimizer state; cannot resume training from it");
  }
  TrainConfig config = TrainConfig::from_entries(ckpt.model(), ckpt.settings);
  const EntryMap m(ckpt.settings);
  TrainState s;
  s.params = ckpt.params;
  s.adam = *ckpt.adam;
  s.step = m.integer("progress.step");
  s.epoch = m.integer("progress.epoch");
  s.cursor = m.integer("progress.cursor");
  return {std::move(s), std::move(config)};
}

std::string metrics_line(std::uint64_t step, const LossReport& report, double lr) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%llu loss_mlm=%.9g loss_p2g=%.9g lr=%.9g", static_cast<unsigned long long>(step),
                report.loss_mlm, report.loss_p2g, lr);
  return buf;
}

EvalReport evaluate(const EncoderParams<float>& params, std::span<const ExampleRecord> records, const MaskPolicy* mask,
                    std::uint64_t seed, bool score_only_msk) {
  EvalReport rep;
  std::vector<std::size_t> target_counts(params.config.phoneme_vocab_size, 0);
  std::size_t mlm_hits = 0, p2g_hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    MaskedExample ex;
    if (mask != nullptr) {
      Rng rng(mask_seed(seed, 0, i));
      ex = apply_mask(records[i], *mask, rng, params.config.phoneme_vocab_size);
    } else {
      ex.length = records[i].length();
      ex.x = records[i].phonemes;
      ex.y_p = records[i].phonemes;
      ex.y_g = grapheme_labels(records[i]);
    }
    const std::vector<MaskedExample> one{ex};
    const BatchTensors batch = collate(one, ex.length, score_only_msk);
    const ForwardResult<float> fr = forward(params, batch.input_row(0), batch.valid_row(0));
    const HeadLogits logits = heads(params, fr.trace.output);
    for (std::size_t r = 0; r < ex.length; ++r) {
      const std::int32_t yg = batch.p2g_labels[r];
      rep.p2g_loss += cross_entropy(logits.p2g.row_span(r), yg);
      p2g_hits += label_rank(logits.p2g.row_span(r), yg) == 0 ? 1 : 0;
      ++rep.p2g_count;
      const std::int32_t yp = batch.mlm_labels[r];
      if (yp == kIgnoreLabel) continue;
      rep.mlm_loss += cross_entropy(logits.mlm.row_span(r), yp);
      mlm_hits += label_rank(logits.mlm.row_span(r), yp) == 0 ? 1 : 0;
      ++target_counts[static_cast<std::size_t>(yp)];
      ++rep.mlm_count;
    }
  }
  if (rep.p2g_count > 0) {
    rep.p2g_loss /= static_cast<double>(rep.p2g_count);
    rep.p2g_accuracy = static_cast<double>(p2g_hits) / static_cast<double>(rep.p2g_count);
  }
  if (rep.mlm_count > 0) {
    const double n = static_cast<double>(rep.mlm_count);
    rep.mlm_loss /= n;
    rep.mlm_accuracy = static_cast<double>(mlm_hits) / n;
    rep.mlm_unigram = static_cast<double>(*std::max_element(target_counts.begin(), target_counts.end())) / n;
  }
  return rep;
}

}  // namespace plbert
