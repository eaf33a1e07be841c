// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle/reference_model.hpp"
#include "plbert/errors.hpp"
#include "plbert/loss.hpp"
#include "plbert/masking.hpp"
#include "plbert/rng.hpp"

using namespace plbert;

TEST(CrossEntropy, UniformIsLogK) {
  const std::vector<double> logits(10, 0.37);
  for (int label = 0; label < 10; ++label) EXPECT_NEAR(cross_entropy(logits, label), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, KnownValue) {
  const std::vector<double> logits{0.2, -1.3, 0.7};
  EXPECT_NEAR(cross_entropy(logits, 2), 0.55495691964199064844, 1e-14);
}

TEST(CrossEntropy, StableForLargeLogits) {
  const std::vector<double> logits{1000.0, 0.0, -1000.0};
  EXPECT_NEAR(cross_entropy(logits, 0), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(logits, 1), 1000.0, 1e-9);
  EXPECT_NEAR(cross_entropy(logits, 2), 2000.0, 1e-9);
  std::vector<double> grad(3);
  cross_entropy_grad(logits, 2, 1.0, grad);
  for (double g : grad) EXPECT_TRUE(std::isfinite(g));
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(7);
    for (double& v : logits) v = 3 * rng.normal();
    const int label = static_cast<int>(rng.uniform_int(7));
    std::vector<double> grad(7);
    const double loss = cross_entropy_grad(logits, label, 0.5, grad);
    EXPECT_NEAR(loss, cross_entropy(logits, label), 1e-14);
    double sum = 0;
    for (std::size_t k = 0; k < 7; ++k) {
      sum += grad[k];
      auto up = logits, down = logits;
      up[k] += 1e-6;
      down[k] -= 1e-6;
      const double numeric = 0.5 * (cross_entropy(up, label) - cross_entropy(down, label)) / 2e-6;
      EXPECT_NEAR(grad[k], numeric, 1e-8);
    }
    EXPECT_NEAR(sum, 0.0, 1e-14);
  }
}

TEST(CrossEntropy, RejectsBadLabel) {
  const std::vector<double> logits{0.0, 1.0};
  EXPECT_THROW(cross_entropy(logits, 2), DataError);
  EXPECT_THROW(cross_entropy(logits, -1), DataError);
}

// Pooled losses against a per-position long-double oracle on random batches.
TEST(BatchLoss, MatchesPerPositionOracle) {
  Rng rng(21);
  for (int batch = 0; batch < 100; ++batch) {
    const std::size_t n = 1 + rng.uniform_int(12), vp = 10, vg = 7;
    Matrix<double> mlm(n, vp), p2g(n, vg);
    for (double& v : mlm.values()) v = 4 * rng.normal();
    for (double& v : p2g.values()) v = 4 * rng.normal();
    std::vector<TokenId> y_p(n), y_g(n);
    std::vector<std::uint32_t> masked;
    for (std::size_t i = 0; i < n; ++i) {
      y_p[i] = static_cast<TokenId>(3 + rng.uniform_int(vp - 3));
      y_g[i] = static_cast<TokenId>(1 + rng.uniform_int(vg - 1));
      if (rng.uniform() < 0.4) masked.push_back(static_cast<std::uint32_t>(i));
    }
    const std::size_t n_valid = 1 + rng.uniform_int(n);

    long double mlm_sum = 0, p2g_sum = 0;
    for (std::uint32_t i : masked) {
      std::vector<long double> row(mlm.row(i), mlm.row(i) + vp);
      mlm_sum += oracle::cross_entropy(row, y_p[i]);
    }
    for (std::size_t i = 0; i < n_valid; ++i) {
      std::vector<long double> row(p2g.row(i), p2g.row(i) + vg);
      p2g_sum += oracle::cross_entropy(row, y_g[i]);
    }
    const auto lm = loss_mlm(mlm, y_p, masked);
    const auto lg = loss_p2g(p2g, y_g, n_valid);
    EXPECT_EQ(lm.count, masked.size());
    EXPECT_EQ(lg.count, n_valid);
    if (!masked.empty()) {
      const double expect = static_cast<double>(mlm_sum / masked.size());
      EXPECT_NEAR(lm.mean(), expect, 1e-6 * std::abs(expect));
    } else {
      EXPECT_EQ(lm.mean(), 0.0);
    }
    const double expect_g = static_cast<double>(p2g_sum / n_valid);
    EXPECT_NEAR(lg.mean(), expect_g, 1e-6 * std::abs(expect_g));
  }
}

TEST(BatchLoss, LabelledLossSkipsIgnoredRows) {
  Matrix<double> logits(3, 4);
  logits(0, 1) = 2.0;
  logits(2, 3) = -1.0;
  const std::vector<std::int32_t> labels{1, kIgnoreLabel, 0};
  Matrix<double> grad(3, 4, 9.0);
  const auto term = labelled_loss(logits, labels, 0.25, &grad);
  EXPECT_EQ(term.count, 2u);
  EXPECT_NEAR(term.sum, cross_entropy(logits.row_span(0), 1) + cross_entropy(logits.row_span(2), 0), 1e-15);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(grad(1, k), 9.0);
  double row0 = 0;
  for (std::size_t k = 0; k < 4; ++k) row0 += grad(0, k);
  EXPECT_NEAR(row0, 0.0, 1e-15);
  EXPECT_EQ(LossTerm{}.mean(), 0.0);
}

TEST(LabelRank, TiesGoToLowerId) {
  const std::vector<double> logits{1.0, 3.0, 3.0, 0.5};
  EXPECT_EQ(label_rank(logits, 1), 0u);
  EXPECT_EQ(label_rank(logits, 2), 1u);
  EXPECT_EQ(label_rank(logits, 0), 2u);
  EXPECT_EQ(label_rank(logits, 3), 3u);
}
