// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracle/reference_model.hpp"
#include "plbert/errors.hpp"
#include "plbert/model.hpp"
#include "test_support.hpp"

using namespace plbert;
using testing_support::grad_check_config;
using testing_support::random_params;

namespace {

std::vector<std::uint8_t> all_valid(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

double objective(const EncoderParams<double>& p, const std::vector<TokenId>& ids, const std::vector<std::uint8_t>& valid,
                 const Matrix<double>& gm, const Matrix<double>& gp, double dropout, std::uint64_t seed) {
  Rng rng(seed);
  auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid), {dropout, &rng});
  auto logits = heads(p, fr.hidden);
  long double acc = 0;
  for (std::size_t i = 0; i < gm.size(); ++i) acc += gm.data()[i] * logits.mlm.data()[i];
  for (std::size_t i = 0; i < gp.size(); ++i) acc += gp.data()[i] * logits.p2g.data()[i];
  return static_cast<double>(acc);
}

struct GradCheckResult {
  double worst = 0.0;
  std::string worst_tensor;
};

// Compares backward() against central differences for every parameter
// element. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed, double dropout, double floor) {
  auto p = random_params(config, seed);
  Rng rng(seed ^ 0xabcdef);
  const std::size_t L = config.max_len;
  std::vector<TokenId> ids(L);
  for (auto& id : ids) id = static_cast<TokenId>(rng.uniform_int(config.phoneme_vocab_size));
  std::vector<std::uint8_t> valid(L, 1);
  valid[L - 1] = 0;  // one padded position
  Matrix<double> gm(L, config.phoneme_vocab_size), gp(L, config.grapheme_vocab_size);
  for (double& g : gm.values()) g = rng.normal();
  for (double& g : gp.values()) g = rng.normal();
  const std::uint64_t dseed = seed + 17;

  Rng drng(dseed);
  auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid), {dropout, &drng});
  auto grads = zero_params<double>(config, true);
  backward(p, fr.trace, gm, gp, grads);

  const double h = 1e-5;
  GradCheckResult res;
  const auto& fields = EncoderParams<double>::fields();
  for (const auto& f : fields) {
    Matrix<double>& m = p.*f.member;
    const Matrix<double>& g = grads.*f.member;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = objective(p, ids, valid, gm, gp, dropout, dseed);
      m.data()[i] = orig - h;
      const double down = objective(p, ids, valid, gm, gp, dropout, dseed);
      m.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = g.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      if (rel > res.worst) {
        res.worst = rel;
        res.worst_tensor = std::string(f.name) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = grad_check_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), UsageError);
  c = grad_check_config();
  c.embed = 9;
  EXPECT_THROW(c.validate(), UsageError);
  c = grad_check_config();
  c.max_len = 0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(ModelInit, DeterministicPerSeed) {
  const auto c = ModelConfig::toy(42, 100);
  EXPECT_EQ(init_params<float>(c, 5), init_params<float>(c, 5));
  EXPECT_NE(init_params<float>(c, 5), init_params<float>(c, 6));
}

TEST(ModelInit, Distribution) {
  const auto c = ModelConfig::toy(42, 100);
  const auto p = init_params<double>(c, 3);
  for (double v : p.ffn_in_weight.values()) EXPECT_LE(std::abs(v), 2 * c.init_std);
  for (double v : p.ffn_in_bias.values()) EXPECT_EQ(v, 0.0);
  for (double v : p.attention_norm_gain.values()) EXPECT_EQ(v, 1.0);
  double sq = 0;
  for (double v : p.ffn_in_weight.values()) sq += v * v;
  const double sd = std::sqrt(sq / static_cast<double>(p.ffn_in_weight.size()));
  // Truncation at 2 sigma shrinks the standard deviation to about 0.88 sigma.
  EXPECT_NEAR(sd, 0.88 * c.init_std, 0.05 * c.init_std);
}

TEST(ModelInit, ParameterCountIndependentOfDepth) {
  for (std::size_t layers : {1, 2, 12}) {
    auto c = ModelConfig::toy(42, 231);
    c.n_layers = layers;
    EXPECT_EQ(parameter_count(init_params<float>(c, 1)), parameter_count(ModelConfig::toy(42, 231)));
  }
}

TEST(ModelInit, DefaultCountMatchesClosedForm) {
  const auto c = ModelConfig::base(42, 231);
  const std::size_t Vp = 42, Vg = 231, E = 128, H = 768, F = 2048, P = 512;
  const std::size_t embeddings = Vp * E + E * H + P * E;
  const std::size_t attention = 4 * H * H + 4 * H;
  const std::size_t ffn = H * F + F + F * H + H;
  const std::size_t norms = 2 * 2 * H;
  const std::size_t head_params = H * Vp + Vp + H * Vg + Vg;
  EXPECT_EQ(parameter_count(c), embeddings + attention + ffn + norms + head_params);
  EXPECT_EQ(parameter_count(init_params<float>(c, 0)), parameter_count(c));
  auto tied = c;
  tied.tie_mlm_head = true;
  EXPECT_EQ(parameter_count(tied), parameter_count(c) - H * Vp);
}

TEST(ModelForward, ShapeAndErrors) {
  const auto c = ModelConfig::toy(42, 100);
  const auto p = init_params<float>(c, 1);
  std::vector<TokenId> ids{3, 4, 5, 6, 7};
  auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(5)));
  EXPECT_EQ(fr.hidden.rows(), 5u);
  EXPECT_EQ(fr.hidden.cols(), c.hidden);
  auto logits = heads(p, fr.hidden);
  EXPECT_EQ(logits.mlm.rows(), 5u);
  EXPECT_EQ(logits.mlm.cols(), 42u);
  EXPECT_EQ(logits.p2g.cols(), 100u);

  ids[2] = 42;
  EXPECT_THROW(forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(5))), DataError);
  ids[2] = -1;
  EXPECT_THROW(forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(5))), DataError);
  std::vector<TokenId> long_ids(c.max_len + 1, 3);
  EXPECT_THROW(forward(p, std::span<const TokenId>(long_ids), std::span<const std::uint8_t>(all_valid(c.max_len + 1))),
               DataError);
}

TEST(ModelForward, MatchesOracleSingleHead) {
  ModelConfig c;
  c.n_layers = 1;
  c.hidden = 4;
  c.intermediate = 8;
  c.heads = 1;
  c.embed = 3;
  c.max_len = 3;
  c.phoneme_vocab_size = 6;
  c.grapheme_vocab_size = 5;
  c.dropout = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = random_params(c, seed);
    const std::vector<TokenId> ids{3, 5, 4};
    const std::vector<std::uint8_t> valid = all_valid(3);
    const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid));
    const auto logits = heads(p, fr.hidden);
    const auto ref = oracle::run(p, ids, valid);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < c.hidden; ++k) EXPECT_NEAR(fr.hidden(i, k), static_cast<double>(ref.hidden[i][k]), 1e-10);
      for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(logits.mlm(i, k), static_cast<double>(ref.mlm[i][k]), 1e-10);
      for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(logits.p2g(i, k), static_cast<double>(ref.p2g[i][k]), 1e-10);
    }
  }
}

TEST(ModelForward, MatchesOracleMultiHeadWithPadding) {
  for (bool tied : {false, true}) {
    ModelConfig c = grad_check_config();
    c.n_layers = 3;
    c.max_len = 7;
    c.tie_mlm_head = tied;
    const auto p = random_params(c, 11);
    const std::vector<TokenId> ids{3, 9, 4, 4, 8, 0, 0};
    const std::vector<std::uint8_t> valid{1, 1, 1, 1, 1, 0, 0};
    const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid));
    const auto logits = heads(p, fr.hidden);
    const auto ref = oracle::run(p, ids, valid);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t k = 0; k < c.hidden; ++k) EXPECT_NEAR(fr.hidden(i, k), static_cast<double>(ref.hidden[i][k]), 1e-10);
      for (std::size_t k = 0; k < c.phoneme_vocab_size; ++k) EXPECT_NEAR(logits.mlm(i, k), static_cast<double>(ref.mlm[i][k]), 1e-10);
      for (std::size_t k = 0; k < c.grapheme_vocab_size; ++k) EXPECT_NEAR(logits.p2g(i, k), static_cast<double>(ref.p2g[i][k]), 1e-10);
    }
  }
}

TEST(ModelForward, FloatTracksDouble) {
  const auto c = ModelConfig::toy(42, 100);
  const auto pf = init_params<float>(c, 4);
  const auto pd = cast_params<double>(pf);
  std::vector<TokenId> ids{3, 9, 14, 20, 33, 41, 5};
  const auto valid = all_valid(ids.size());
  const auto hf = forward(pf, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
  const auto hd = forward(pd, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
  for (std::size_t i = 0; i < hf.size(); ++i) EXPECT_NEAR(hf.data()[i], hd.data()[i], 1e-4);
}

TEST(ModelForward, PermutationEquivariantWithoutPositions) {
  auto c = grad_check_config();
  c.max_len = 6;
  auto p = random_params(c, 5);
  p.position_embedding.fill(0.0);
  const std::vector<TokenId> ids{3, 4, 5, 6, 7, 8};
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  std::vector<TokenId> permuted(ids.size());
  for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ids[perm[i]];
  const auto valid = all_valid(ids.size());
  const auto a = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
  const auto b = forward(p, std::span<const TokenId>(permuted), std::span<const std::uint8_t>(valid)).hidden;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t k = 0; k < c.hidden; ++k) EXPECT_NEAR(b(i, k), a(perm[i], k), 1e-12);
}

TEST(ModelForward, PaddingIsolation) {
  const auto c = ModelConfig::toy(42, 100);
  const auto p = init_params<float>(c, 9);
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(20);
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(3 + rng.uniform_int(39));
    const auto base = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(n))).hidden;

    const std::size_t width = n + 1 + rng.uniform_int(10);
    std::vector<TokenId> padded(width);
    std::vector<std::uint8_t> valid(width, 0);
    for (std::size_t i = 0; i < width; ++i) {
      padded[i] = i < n ? ids[i] : static_cast<TokenId>(rng.uniform_int(42));
      valid[i] = i < n ? 1 : 0;
    }
    const auto out = forward(p, std::span<const TokenId>(padded), std::span<const std::uint8_t>(valid)).hidden;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c.hidden; ++k) ASSERT_LE(std::abs(out(i, k) - base(i, k)), 1e-12);
    for (std::size_t i = n; i < width; ++i)
      for (std::size_t k = 0; k < c.hidden; ++k) ASSERT_EQ(out(i, k), 0.0f);
  }
}

TEST(ModelForward, AttentionRowsAreDistributions) {
  const auto c = ModelConfig::toy(42, 100);
  const auto p = init_params<float>(c, 2);
  const std::vector<TokenId> ids{3, 4, 5, 0, 6, 0};
  const std::vector<std::uint8_t> valid{1, 1, 1, 0, 1, 0};
  const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid));
  for (const auto& layer : fr.trace.layers) {
    // Only the four valid keys have columns; padded keys get no weight at all.
    ASSERT_EQ(layer.probs.cols(), 4u);
    for (std::size_t r = 0; r < layer.probs.rows(); ++r) {
      double sum = 0;
      for (std::size_t j = 0; j < layer.probs.cols(); ++j) sum += layer.probs(r, j);
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(ModelForward, DropoutIsSeededAndOffByDefault) {
  auto c = ModelConfig::toy(42, 100);
  c.dropout = 0.1;
  const auto p = init_params<float>(c, 2);
  const std::vector<TokenId> ids{3, 4, 5, 6};
  const auto valid = all_valid(4);
  Rng a(1), b(1), d(2);
  const auto ha = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid), {0.1, &a}).hidden;
  const auto hb = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid), {0.1, &b}).hidden;
  const auto hd = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid), {0.1, &d}).hidden;
  const auto h0 = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
  const auto h1 = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
  EXPECT_EQ(ha, hb);
  EXPECT_NE(ha, hd);
  EXPECT_EQ(h0, h1);
  EXPECT_NE(h0, ha);
}

TEST(ModelHeads, ZeroHiddenGivesBiases) {
  auto c = ModelConfig::toy(42, 100);
  auto p = random_params(c, 4);
  Matrix<double> zero(3, c.hidden);
  const auto logits = heads(p, zero);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t v = 0; v < 42; ++v) EXPECT_EQ(logits.mlm(i, v), p.mlm_bias(0, v));
    for (std::size_t v = 0; v < 100; ++v) EXPECT_EQ(logits.p2g(i, v), p.p2g_bias(0, v));
  }
  EXPECT_THROW(heads(strip_heads(p), zero), UsageError);
}

TEST(ModelBackward, ZeroUpstreamGivesZeroGradients) {
  const auto c = grad_check_config();
  const auto p = random_params(c, 1);
  const std::vector<TokenId> ids{3, 4, 5, 6, 7};
  const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(5)));
  auto grads = zero_params<double>(c, true);
  backward(p, fr.trace, Matrix<double>(5, 10), Matrix<double>(5, 7), grads);
  grads.for_each([](const auto& f, const Matrix<double>& g) {
    for (double v : g.values()) ASSERT_EQ(v, 0.0) << f.name;
  });
}

TEST(ModelBackward, RejectsMismatchedTrace) {
  const auto c = grad_check_config();
  const auto p = random_params(c, 1);
  const std::vector<TokenId> ids{3, 4, 5};
  const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(3)));
  auto other = c;
  other.hidden = 12;
  other.heads = 3;
  const auto q = random_params(other, 1);
  auto grads = zero_params<double>(other, true);
  EXPECT_THROW(backward(q, fr.trace, Matrix<double>(3, 10), Matrix<double>(3, 7), grads), UsageError);
  auto deeper = c;
  deeper.n_layers = 3;
  auto grads2 = zero_params<double>(deeper, true);
  EXPECT_THROW(backward(random_params(deeper, 1), fr.trace, Matrix<double>(3, 10), Matrix<double>(3, 7), grads2),
               UsageError);
  auto grads3 = zero_params<double>(c, true);
  EXPECT_THROW(backward(p, fr.trace, Matrix<double>(4, 10), Matrix<double>(3, 7), grads3), UsageError);
}

TEST(ModelBackward, SharedBlockAccumulatesAcrossLayers) {
  auto c = grad_check_config();
  const auto p2 = random_params(c, 8);
  auto p4 = p2;
  p4.config.n_layers = 4;
  const std::vector<TokenId> ids{3, 4, 5, 6, 7};
  Matrix<double> gm(5, 10, 1.0), gp(5, 7, -0.5);
  auto run = [&](const EncoderParams<double>& p) {
    const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(all_valid(5)));
    auto g = zero_params<double>(p.config, true);
    backward(p, fr.trace, gm, gp, g);
    return g;
  };
  const auto g2 = run(p2);
  const auto g4 = run(p4);
  EXPECT_NE(g2.query_weight, g4.query_weight);
  EXPECT_NE(g2.ffn_in_weight, g4.ffn_in_weight);
}

class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, AllTensorsAgreeWithFiniteDifferences) {
  const auto r = grad_check(grad_check_config(), GetParam(), 0.0, 1e-3);
  EXPECT_LT(r.worst, 1e-5) << "worst element " << r.worst_tensor;
}

TEST_P(GradientCheck, TiedHead) {
  auto c = grad_check_config();
  c.tie_mlm_head = true;
  const auto r = grad_check(c, GetParam(), 0.0, 1e-3);
  EXPECT_LT(r.worst, 1e-5) << "worst element " << r.worst_tensor;
}

TEST_P(GradientCheck, WithDropoutReplayed) {
  const auto r = grad_check(grad_check_config(), GetParam(), 0.2, 1e-3);
  EXPECT_LT(r.worst, 1e-5) << "worst element " << r.worst_tensor;
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Values(1, 2, 3));

TEST(ModelBackward, HiddenGradientMatchesFiniteDifferences) {
  const auto c = grad_check_config();
  auto p = random_params(c, 21);
  const std::vector<TokenId> ids{3, 4, 5, 6, 7};
  const auto valid = all_valid(5);
  Rng rng(3);
  Matrix<double> gh(5, c.hidden);
  for (double& v : gh.values()) v = rng.normal();
  const auto fr = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid));
  auto grads = zero_params<double>(c, true);
  backward_hidden(p, fr.trace, gh, grads);
  auto f = [&]() {
    const auto h = forward(p, std::span<const TokenId>(ids), std::span<const std::uint8_t>(valid)).hidden;
    double acc = 0;
    for (std::size_t i = 0; i < h.size(); ++i) acc += h.data()[i] * gh.data()[i];
    return acc;
  };
  for (std::size_t i = 0; i < p.value_weight.size(); ++i) {
    const double orig = p.value_weight.data()[i];
    p.value_weight.data()[i] = orig + 1e-4;
    const double up = f();
    p.value_weight.data()[i] = orig - 1e-4;
    const double down = f();
    p.value_weight.data()[i] = orig;
    const double num = (up - down) / 2e-4;
    EXPECT_NEAR(grads.value_weight.data()[i], num, 1e-5 * std::max(1.0, std::abs(num)));
  }
  for (double v : grads.p2g_weight.values()) EXPECT_EQ(v, 0.0);
}

TEST(ModelParams, CastAndStrip) {
  const auto c = ModelConfig::toy(42, 100);
  const auto p = init_params<float>(c, 1);
  EXPECT_EQ(cast_params<float>(cast_params<double>(p)), p);
  const auto enc = strip_heads(p);
  EXPECT_FALSE(enc.has_heads());
  EXPECT_EQ(parameter_count(enc), parameter_count(c, false));
  EXPECT_TRUE(all_finite(p));
  auto bad = p;
  bad.key_bias(0, 3) = std::nanf("");
  EXPECT_FALSE(all_finite(bad));
}
