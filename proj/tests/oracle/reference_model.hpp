// SPDX-License-Identifier: Apache-2.0
//
// Straight-line long-double encoder used as a test oracle. It shares no code
// with the library model: it applies -inf key masking over the full padded
// sequence instead of compacting valid rows, and uses plain loops instead of
// the kernel table.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "plbert/model.hpp"

namespace oracle {

using Real = long double;
using Mat = std::vector<std::vector<Real>>;

inline Mat to_mat(const plbert::Matrix<double>& m) {
  Mat out(m.rows(), std::vector<Real>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

// x (n x in) times W^T (W is out x in) plus optional bias row.
inline Mat affine(const Mat& x, const Mat& w, const Mat* b) {
  Mat y(x.size(), std::vector<Real>(w.size(), 0.0L));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < w.size(); ++o) {
      Real acc = b ? (*b)[0][o] : 0.0L;
      for (std::size_t i = 0; i < w[o].size(); ++i) acc += x[r][i] * w[o][i];
      y[r][o] = acc;
    }
  return y;
}

inline Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, Real eps) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const std::size_t n = x[r].size();
    Real mean = 0;
    for (Real v : x[r]) mean += v;
    mean /= n;
    Real var = 0;
    for (Real v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t i = 0; i < n; ++i) y[r][i] = (x[r][i] - mean) / std::sqrt(var + eps) * g[0][i] + b[0][i];
  }
  return y;
}

struct Output {
  Mat hidden;  // L x H, zero rows at invalid positions
  Mat mlm;     // L x V_p
  Mat p2g;     // L x V_g
};

inline Output run(const plbert::EncoderParams<double>& p, const std::vector<std::int32_t>& ids,
                  const std::vector<std::uint8_t>& valid) {
  const auto& c = p.config;
  const std::size_t L = ids.size(), H = c.hidden, A = c.heads, d = H / A;
  const Mat tok = to_mat(p.token_embedding), pos = to_mat(p.position_embedding), proj = to_mat(p.embedding_projection);

  Mat e(L, std::vector<Real>(c.embed));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t k = 0; k < c.embed; ++k) e[i][k] = tok[ids[i]][k] + pos[i][k];
  Mat h = affine(e, proj, nullptr);

  const Mat wq = to_mat(p.query_weight), bq = to_mat(p.query_bias);
  const Mat wk = to_mat(p.key_weight), bk = to_mat(p.key_bias);
  const Mat wv = to_mat(p.value_weight), bv = to_mat(p.value_bias);
  const Mat wo = to_mat(p.output_weight), bo = to_mat(p.output_bias);
  const Mat g1 = to_mat(p.attention_norm_gain), b1 = to_mat(p.attention_norm_bias);
  const Mat wi = to_mat(p.ffn_in_weight), bi = to_mat(p.ffn_in_bias);
  const Mat wf = to_mat(p.ffn_out_weight), bf = to_mat(p.ffn_out_bias);
  const Mat g2 = to_mat(p.ffn_norm_gain), b2 = to_mat(p.ffn_norm_bias);

  for (std::size_t layer = 0; layer < c.n_layers; ++layer) {
    const Mat q = affine(h, wq, &bq), k = affine(h, wk, &bk), v = affine(h, wv, &bv);
    Mat ctx(L, std::vector<Real>(H, 0.0L));
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t i = 0; i < L; ++i) {
        std::vector<Real> s(L);
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!valid[j]) {
            s[j] = -std::numeric_limits<Real>::infinity();
            continue;
          }
          Real dot = 0;
          for (std::size_t t = 0; t < d; ++t) dot += q[i][a * d + t] * k[j][a * d + t];
          s[j] = dot / std::sqrt(static_cast<Real>(d));
          if (s[j] > mx) mx = s[j];
        }
        Real z = 0;
        for (std::size_t j = 0; j < L; ++j) {
          s[j] = valid[j] ? std::exp(s[j] - mx) : 0.0L;
          z += s[j];
        }
        for (std::size_t j = 0; j < L; ++j)
          for (std::size_t t = 0; t < d; ++t) ctx[i][a * d + t] += s[j] / z * v[j][a * d + t];
      }
    Mat att = affine(ctx, wo, &bo);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t t = 0; t < H; ++t) att[i][t] += h[i][t];
    const Mat n1 = layer_norm(att, g1, b1, c.layernorm_eps);
    Mat f = affine(n1, wi, &bi);
    for (auto& row : f)
      for (Real& x : row) x = 0.5L * x * (1.0L + std::erf(x / std::sqrt(2.0L)));
    Mat f2 = affine(f, wf, &bf);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t t = 0; t < H; ++t) f2[i][t] += n1[i][t];
    h = layer_norm(f2, g2, b2, c.layernorm_eps);
  }
  for (std::size_t i = 0; i < L; ++i)
    if (!valid[i]) h[i].assign(H, 0.0L);

  Output out;
  out.hidden = h;
  const Mat mb = to_mat(p.mlm_bias), pw = to_mat(p.p2g_weight), pb = to_mat(p.p2g_bias);
  Mat mw;
  if (c.tie_mlm_head) {
    // Effective weight T P^T: (V_p x E) times (E x H).
    mw.assign(c.phoneme_vocab_size, std::vector<Real>(H, 0.0L));
    for (std::size_t vv = 0; vv < c.phoneme_vocab_size; ++vv)
      for (std::size_t t = 0; t < H; ++t)
        for (std::size_t k2 = 0; k2 < c.embed; ++k2) mw[vv][t] += tok[vv][k2] * proj[t][k2];
  } else {
    mw = to_mat(p.mlm_weight);
  }
  out.mlm = affine(h, mw, &mb);
  out.p2g = affine(h, pw, &pb);
  return out;
}

// -log softmax(row)[label] in long double.
inline Real cross_entropy(const std::vector<Real>& row, std::int32_t label) {
  Real mx = row[0];
  for (Real v : row) mx = v > mx ? v : mx;
  Real z = 0;
  for (Real v : row) z += std::exp(v - mx);
  return std::log(z) + mx - row[static_cast<std::size_t>(label)];
}

}  // namespace oracle
