// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracle/reference_model.hpp"
#include "plbert/checkpoint.hpp"
#include "plbert/errors.hpp"
#include "plbert/train.hpp"
#include "test_support.hpp"

using namespace plbert;
using testing_support::fixture_records;

namespace {

// A batch of random records for the small gradient-check model.
BatchTensors random_batch(std::uint64_t seed, std::size_t rows, std::size_t extra_width = 0) {
  Rng rng(seed);
  std::vector<MaskedExample> ex;
  std::size_t width = 0;
  for (std::size_t b = 0; b < rows; ++b) {
    const auto r = testing_support::random_record(rng, 1 + rng.uniform_int(2), 2, 10, 7);
    Rng mrng(rng.next_u64());
    ex.push_back(apply_mask(r, {0.5, 0.8, 0.1, 0.1}, mrng, 10));
    width = std::max(width, ex.back().length);
  }
  return collate(ex, width + extra_width);
}

TrainConfig small_train_config(std::size_t steps) {
  TrainConfig c;
  c.model = testing_support::fixture_toy_config();
  c.model.n_layers = 1;
  c.model.hidden = 32;
  c.model.intermediate = 64;
  c.model.heads = 2;
  c.model.embed = 16;
  c.batch_size = 8;
  c.seed = 5;
  c.optim.lr = 3e-3;
  c.optim.total_steps = steps;
  return c;
}

}  // namespace

TEST(Objective, RejectsNoObjective) {
  ObjectiveConfig o;
  o.use_mlm = false;
  o.use_p2g = false;
  try {
    o.validate();
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_STREQ(e.what(), "no objective enabled");
  }
}

TEST(LossAndGrads, MatchesIndependentRecomputation) {
  const auto c = testing_support::grad_check_config();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto p = testing_support::random_params(c, seed);
    auto batch = random_batch(seed, 3);
    ObjectiveConfig obj;
    obj.p2g_weight = 0.7;
    const auto report = loss_and_grads(p, batch, obj);

    long double mlm = 0, p2g = 0;
    std::size_t n_mlm = 0, n_p2g = 0;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const auto ids = std::vector<TokenId>(batch.input_row(b).begin(), batch.input_row(b).end());
      const auto valid = std::vector<std::uint8_t>(batch.valid_row(b).begin(), batch.valid_row(b).end());
      const auto ref = oracle::run(p, ids, valid);
      for (std::size_t i = 0; i < batch.width; ++i) {
        if (batch.mlm_row(b)[i] >= 0) {
          mlm += oracle::cross_entropy(ref.mlm[i], batch.mlm_row(b)[i]);
          ++n_mlm;
        }
        if (batch.p2g_row(b)[i] >= 0) {
          p2g += oracle::cross_entropy(ref.p2g[i], batch.p2g_row(b)[i]);
          ++n_p2g;
        }
      }
    }
    ASSERT_EQ(report.n_mlm, n_mlm);
    ASSERT_EQ(report.n_p2g, n_p2g);
    const double em = n_mlm ? static_cast<double>(mlm / n_mlm) : 0.0, eg = static_cast<double>(p2g / n_p2g);
    EXPECT_NEAR(report.loss_mlm, em, 1e-6 * std::max(1.0, em));
    EXPECT_NEAR(report.loss_p2g, eg, 1e-6 * eg);
    EXPECT_NEAR(report.total, em + 0.7 * eg, 1e-6 * (em + eg));
  }
}

TEST(LossAndGrads, FullLossGradientCheck) {
  const auto c = testing_support::grad_check_config();
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = testing_support::random_params(c, seed);
    const auto batch = random_batch(seed + 100, 2);
    const ObjectiveConfig obj{true, true, 0.5};
    auto grads = zero_params<double>(c);
    loss_and_grads(p, batch, obj, &grads);
    double worst = 0;
    std::string where;
    for (const auto& f : EncoderParams<double>::fields()) {
      auto& m = p.*f.member;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double orig = m.data()[i];
        m.data()[i] = orig + 1e-5;
        const double up = loss_and_grads(p, batch, obj).total;
        m.data()[i] = orig - 1e-5;
        const double down = loss_and_grads(p, batch, obj).total;
        m.data()[i] = orig;
        const double num = (up - down) / 2e-5, ana = (grads.*f.member).data()[i];
        const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-3});
        if (rel > worst) {
          worst = rel;
          where = std::string(f.name);
        }
      }
    }
    EXPECT_LT(worst, 1e-5) << where;
  }
}

TEST(LossAndGrads, DisabledObjectiveContributesNothing) {
  const auto c = testing_support::grad_check_config();
  const auto p = testing_support::random_params(c, 4);
  const auto batch = random_batch(9, 3);
  auto g_mlm = zero_params<double>(c), g_p2g = zero_params<double>(c), g_both = zero_params<double>(c);
  const auto r_mlm = loss_and_grads(p, batch, {true, false, 1.0}, &g_mlm);
  const auto r_p2g = loss_and_grads(p, batch, {false, true, 1.0}, &g_p2g);
  loss_and_grads(p, batch, {true, true, 1.0}, &g_both);
  for (double v : g_mlm.p2g_weight.values()) ASSERT_EQ(v, 0.0);
  for (double v : g_mlm.p2g_bias.values()) ASSERT_EQ(v, 0.0);
  for (double v : g_p2g.mlm_weight.values()) ASSERT_EQ(v, 0.0);
  for (double v : g_p2g.mlm_bias.values()) ASSERT_EQ(v, 0.0);
  EXPECT_EQ(r_mlm.total, r_mlm.loss_mlm);
  EXPECT_EQ(r_p2g.total, r_p2g.loss_p2g);
  for (std::size_t i = 0; i < g_both.query_weight.size(); ++i)
    EXPECT_NEAR(g_both.query_weight.data()[i], g_mlm.query_weight.data()[i] + g_p2g.query_weight.data()[i], 1e-12);
}

TEST(LossAndGrads, InvariantToPaddingContentAndWidth) {
  const auto c = testing_support::grad_check_config();
  auto big = c;
  big.max_len = 12;
  const auto p = testing_support::random_params(big, 6);
  Rng rng(1);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto narrow = random_batch(seed, 3);
    auto wide = random_batch(seed, 3, 1 + rng.uniform_int(6));
    for (std::size_t i = 0; i < wide.inputs.size(); ++i) {
      if (!wide.valid[i]) wide.inputs[i] = static_cast<TokenId>(rng.uniform_int(10));
    }
    auto ga = zero_params<double>(big), gb = zero_params<double>(big);
    const auto a = loss_and_grads(p, narrow, {}, &ga);
    const auto b = loss_and_grads(p, wide, {}, &gb);
    EXPECT_LE(std::abs(a.loss_mlm - b.loss_mlm), 1e-12);
    EXPECT_LE(std::abs(a.loss_p2g - b.loss_p2g), 1e-12);
    for (std::size_t i = 0; i < ga.value_weight.size(); ++i)
      ASSERT_LE(std::abs(ga.value_weight.data()[i] - gb.value_weight.data()[i]), 1e-12);
  }
}

TEST(LossAndGrads, RejectsLabelAtPaddedPosition) {
  const auto c = testing_support::grad_check_config();
  const auto p = testing_support::random_params(c, 1);
  auto batch = random_batch(3, 2, 1);
  batch.p2g_labels[batch.width - 1] = 2;
  EXPECT_THROW(loss_and_grads(p, batch, {}), UsageError);
}

TEST(TrainConfig, EntriesRoundTrip) {
  auto c = small_train_config(77);
  c.mask.select_prob = 0.2;
  c.objective.p2g_weight = 0.3;
  c.score_only_msk = true;
  c.optim.weight_decay = 1.0 / 3.0;
  const auto back = TrainConfig::from_entries(c.model, c.entries());
  EXPECT_EQ(back.entries(), c.entries());
  EXPECT_EQ(back.optim.weight_decay, c.optim.weight_decay);
  auto missing = c.entries();
  missing.pop_back();
  EXPECT_THROW(TrainConfig::from_entries(c.model, missing), FormatError);
}

TEST(DataOrder, EpochPermutations) {
  const auto a = epoch_order(50, 3, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(50, 3, 0));
  EXPECT_NE(a, epoch_order(50, 3, 1));
  EXPECT_NE(a, epoch_order(50, 4, 0));
}

TEST(DataOrder, BatchesNeverSpanEpochs) {
  const auto& records = fixture_records("corpus_50.txt");
  ASSERT_EQ(records.size(), 50u);
  auto config = small_train_config(10);
  config.batch_size = 16;
  auto state = init_train_state(config);
  std::vector<std::size_t> sizes;
  for (int i = 0; i < 5; ++i) sizes.push_back(next_batch(state, records, config).batch);
  EXPECT_EQ(sizes, (std::vector<std::size_t>{16, 16, 16, 2, 16}));
  EXPECT_EQ(state.epoch, 1u);
  EXPECT_EQ(state.cursor, 16u);
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto& records = fixture_records("corpus_50.txt");
  auto config = small_train_config(20);
  config.model.dropout = 0.1;
  auto a = init_train_state(config), b = init_train_state(config);
  run_training(a, records, config);
  run_training(b, records, config);
  EXPECT_EQ(a, b);
  std::ostringstream sa, sb;
  save_checkpoint(to_checkpoint(a, config), sa);
  save_checkpoint(to_checkpoint(b, config), sb);
  EXPECT_EQ(sa.str(), sb.str());
  auto other = config;
  other.seed = 6;
  auto c = init_train_state(other);
  run_training(c, records, other);
  EXPECT_NE(a.params, c.params);
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  const auto& records = fixture_records("corpus_50.txt");
  auto config = small_train_config(100);
  config.model.dropout = 0.1;
  auto full = init_train_state(config);
  std::vector<std::string> full_log;
  TrainHooks full_hooks;
  full_hooks.on_step = [&](const TrainState& s, const LossReport& r, double lr) {
    full_log.push_back(metrics_line(s.step, r, lr));
  };
  run_training(full, records, config, full_hooks);

  auto part = init_train_state(config);
  std::vector<std::string> log;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainState& s, const LossReport& r, double lr) { log.push_back(metrics_line(s.step, r, lr)); };
  hooks.stop = [](const TrainState& s) { return s.step == 37; };
  run_training(part, records, config, hooks);
  ASSERT_EQ(part.step, 37u);

  std::stringstream buf;
  save_checkpoint(to_checkpoint(part, config), buf);
  auto [resumed, resumed_config] = from_checkpoint(load_checkpoint(buf));
  EXPECT_EQ(resumed_config.entries(), config.entries());
  hooks.stop = nullptr;
  run_training(resumed, records, resumed_config, hooks);
  EXPECT_EQ(resumed, full);
  EXPECT_EQ(log, full_log);
}

TEST(Training, LossDecreases) {
  // 200 steps of the toy model on the 50-sentence corpus; the masked-phoneme
  // loss averaged over consecutive 20-step windows must strictly decrease.
  const auto& records = fixture_records("corpus_50.txt");
  TrainConfig config;
  config.model = testing_support::fixture_toy_config();
  config.seed = 5;
  // Whole-corpus batches keep mask sampling noise below the per-window drop.
  config.batch_size = 50;
  config.optim.lr = 5e-3;
  config.optim.total_steps = 200;
  std::vector<double> mlm;
  auto state = init_train_state(config);
  TrainHooks hooks;
  hooks.on_step = [&](const TrainState&, const LossReport& r, double) { mlm.push_back(r.loss_mlm); };
  run_training(state, records, config, hooks);
  ASSERT_EQ(mlm.size(), 200u);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < 10; ++w) {
    const double mean = std::accumulate(mlm.begin() + 20 * w, mlm.begin() + 20 * (w + 1), 0.0) / 20;
    EXPECT_LT(mean, previous) << "window " << w;
    previous = mean;
  }
}

TEST(Training, NonFiniteLossIsReported) {
  const auto& records = fixture_records("corpus_50.txt");
  auto config = small_train_config(5);
  auto state = init_train_state(config);
  state.params.ffn_out_bias(0, 0) = std::numeric_limits<float>::infinity();
  try {
    run_training(state, records, config);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at step 1"), std::string::npos) << e.what();
  }
}

TEST(Training, MetricsLineFormat) {
  LossReport r;
  r.loss_mlm = 1.5;
  r.loss_p2g = 0.25;
  EXPECT_EQ(metrics_line(12, r, 0.001), "step=12 loss_mlm=1.5 loss_p2g=0.25 lr=0.001");
}

TEST(Evaluate, DeterministicAndUnmaskedHasNoMlm) {
  const auto& records = fixture_records("corpus_50.txt");
  const auto config = small_train_config(1);
  const auto params = init_params<float>(config.model, 3);
  const MaskPolicy policy;
  const auto a = evaluate(params, records, &policy, 7);
  const auto b = evaluate(params, records, &policy, 7);
  EXPECT_EQ(a.mlm_accuracy, b.mlm_accuracy);
  EXPECT_EQ(a.mlm_loss, b.mlm_loss);
  EXPECT_GT(a.mlm_count, 0u);
  EXPECT_GT(a.mlm_unigram, 0.0);
  const auto plain = evaluate(params, records, nullptr, 7);
  EXPECT_EQ(plain.mlm_count, 0u);
  std::size_t n = 0;
  for (const auto& r : records) n += r.length();
  EXPECT_EQ(plain.p2g_count, n);
}
