// SPDX-License-Identifier: Apache-2.0
#include "plbert/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "plbert/errors.hpp"
#include "plbert/kernels.hpp"

namespace plbert {

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  if (n_layers < 1) throw UsageError("n_layers must be >= 1");
  if (hidden < 1 || heads < 1 || hidden % heads != 0) throw UsageError("hidden must be a positive multiple of heads");
  if (embed < 1 || embed > hidden) throw UsageError("embed must be in [1, hidden]");
  if (intermediate < 1) throw UsageError("intermediate must be >= 1");
  if (max_len < 1) throw UsageError("max_len must be >= 1");
  if (phoneme_vocab_size <= static_cast<std::size_t>(PhonemeVocab::kNumSpecials)) {
    throw UsageError("phoneme vocabulary must contain at least one non-special symbol");
  }
  if (grapheme_vocab_size < static_cast<std::size_t>(GraphemeVocab::kNumSpecials)) {
    throw UsageError("grapheme vocabulary must contain the special tokens");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
  if (!(layernorm_eps > 0.0)) throw UsageError("layernorm_eps must be > 0");
  if (!(init_std > 0.0)) throw UsageError("init_std must be > 0");
}

bool ModelConfig::same_shapes(const ModelConfig& o) const {
  return hidden == o.hidden && intermediate == o.intermediate && heads == o.heads && embed == o.embed &&
         max_len == o.max_len && phoneme_vocab_size == o.phoneme_vocab_size &&
         grapheme_vocab_size == o.grapheme_vocab_size && tie_mlm_head == o.tie_mlm_head;
}

ModelConfig ModelConfig::base(std::size_t phoneme_vocab, std::size_t grapheme_vocab) {
  ModelConfig c;
  c.phoneme_vocab_size = phoneme_vocab;
  c.grapheme_vocab_size = grapheme_vocab;
  return c;
}

ModelConfig ModelConfig::toy(std::size_t phoneme_vocab, std::size_t grapheme_vocab) {
  ModelConfig c;
  c.n_layers = 2;
  c.hidden = 64;
  c.intermediate = 256;
  c.heads = 4;
  c.embed = 32;
  c.max_len = 128;
  c.phoneme_vocab_size = phoneme_vocab;
  c.grapheme_vocab_size = grapheme_vocab;
  return c;
}

// ---------------------------------------------------------------------------
// Parameter layout

template <class T>
const std::array<typename EncoderParams<T>::Field, 23>& EncoderParams<T>::fields() {
  using P = EncoderParams<T>;
  using K = TensorKind;
  using G = TensorGroup;
  static const std::array<Field, 23> table{{
      {"embed.token", &P::token_embedding, K::embedding, G::encoder},
      {"embed.position", &P::position_embedding, K::embedding, G::encoder},
      {"embed.projection", &P::embedding_projection, K::weight, G::encoder},
      {"block.attention.query.weight", &P::query_weight, K::weight, G::encoder},
      {"block.attention.query.bias", &P::query_bias, K::bias, G::encoder},
      {"block.attention.key.weight", &P::key_weight, K::weight, G::encoder},
      {"block.attention.key.bias", &P::key_bias, K::bias, G::encoder},
      {"block.attention.value.weight", &P::value_weight, K::weight, G::encoder},
      {"block.attention.value.bias", &P::value_bias, K::bias, G::encoder},
      {"block.attention.output.weight", &P::output_weight, K::weight, G::encoder},
      {"block.attention.output.bias", &P::output_bias, K::bias, G::encoder},
      {"block.attention_norm.gain", &P::attention_norm_gain, K::norm_gain, G::encoder},
      {"block.attention_norm.bias", &P::attention_norm_bias, K::norm_bias, G::encoder},
      {"block.ffn.in.weight", &P::ffn_in_weight, K::weight, G::encoder},
      {"block.ffn.in.bias", &P::ffn_in_bias, K::bias, G::encoder},
      {"block.ffn.out.weight", &P::ffn_out_weight, K::weight, G::encoder},
      {"block.ffn.out.bias", &P::ffn_out_bias, K::bias, G::encoder},
      {"block.ffn_norm.gain", &P::ffn_norm_gain, K::norm_gain, G::encoder},
      {"block.ffn_norm.bias", &P::ffn_norm_bias, K::norm_bias, G::encoder},
      {"head.mlm.weight", &P::mlm_weight, K::weight, G::mlm_head},
      {"head.mlm.bias", &P::mlm_bias, K::bias, G::mlm_head},
      {"head.p2g.weight", &P::p2g_weight, K::weight, G::p2g_head},
      {"head.p2g.bias", &P::p2g_bias, K::bias, G::p2g_head},
  }};
  return table;
}

std::pair<std::size_t, std::size_t> tensor_shape(const ModelConfig& c, std::string_view name, bool with_heads) {
  const std::size_t H = c.hidden, F = c.intermediate, E = c.embed;
  const std::size_t Vp = c.phoneme_vocab_size, Vg = c.grapheme_vocab_size;
  if (name == "embed.token") return {Vp, E};
  if (name == "embed.position") return {c.max_len, E};
  if (name == "embed.projection") return {H, E};
  if (name.starts_with("block.attention.")) {
    return name.ends_with(".weight") ? std::pair{H, H} : std::pair{std::size_t{1}, H};
  }
  if (name.starts_with("block.attention_norm.") || name.starts_with("block.ffn_norm.")) return {1, H};
  if (name == "block.ffn.in.weight") return {F, H};
  if (name == "block.ffn.in.bias") return {1, F};
  if (name == "block.ffn.out.weight") return {H, F};
  if (name == "block.ffn.out.bias") return {1, H};
  if (!with_heads) return {0, 0};
  if (name == "head.mlm.weight") return c.tie_mlm_head ? std::pair{std::size_t{0}, std::size_t{0}} : std::pair{Vp, H};
  if (name == "head.mlm.bias") return {1, Vp};
  if (name == "head.p2g.weight") return {Vg, H};
  if (name == "head.p2g.bias") return {1, Vg};
  throw UsageError("unknown tensor '" + std::string(name) + "'");
}

template <class T>
EncoderParams<T> zero_params(const ModelConfig& config, bool with_heads) {
  config.validate();
  EncoderParams<T> p;
  p.config = config;
  for (const auto& field : EncoderParams<T>::fields()) {
    auto [rows, cols] = tensor_shape(config, field.name, with_heads);
    if (rows * cols > 0) p.*field.member = Matrix<T>(rows, cols);
  }
  return p;
}

template <class T>
EncoderParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  EncoderParams<T> p = zero_params<T>(config, true);
  const auto& fields = EncoderParams<T>::fields();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    Matrix<T>& m = p.*fields[i].member;
    if (m.empty()) continue;
    switch (fields[i].kind) {
      case TensorKind::embedding:
      case TensorKind::weight: {
        // One stream per tensor, so tying or omitting a tensor leaves the rest unchanged.
        Rng rng(derive_seed(seed, 0x696e6974ULL, i));
        for (auto& v : m.values()) v = static_cast<T>(rng.truncated_normal(config.init_std));
        break;
      }
      case TensorKind::norm_gain:
        m.fill(T{1});
        break;
      case TensorKind::bias:
      case TensorKind::norm_bias:
        break;
    }
  }
  return p;
}

template <class To, class From>
EncoderParams<To> cast_params(const EncoderParams<From>& src) {
  EncoderParams<To> dst;
  dst.config = src.config;
  const auto& from_fields = EncoderParams<From>::fields();
  const auto& to_fields = EncoderParams<To>::fields();
  for (std::size_t i = 0; i < from_fields.size(); ++i) {
    const Matrix<From>& a = src.*from_fields[i].member;
    if (a.empty()) continue;
    Matrix<To> b(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) b.data()[k] = static_cast<To>(a.data()[k]);
    dst.*to_fields[i].member = std::move(b);
  }
  return dst;
}

template <class T>
EncoderParams<T> strip_heads(const EncoderParams<T>& params) {
  EncoderParams<T> out = params;
  out.mlm_weight = {};
  out.mlm_bias = {};
  out.p2g_weight = {};
  out.p2g_bias = {};
  return out;
}

template <class T>
std::size_t parameter_count(const EncoderParams<T>& params) {
  std::size_t n = 0;
  params.for_each([&](const auto&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

std::size_t parameter_count(const ModelConfig& c, bool with_heads) {
  const std::size_t H = c.hidden, F = c.intermediate, E = c.embed;
  const std::size_t Vp = c.phoneme_vocab_size, Vg = c.grapheme_vocab_size;
  const std::size_t embeddings = Vp * E + E * H + c.max_len * E;
  const std::size_t block = 4 * (H * H + H) + (H * F + F) + (F * H + H) + 4 * H;
  std::size_t heads = 0;
  if (with_heads) heads = (c.tie_mlm_head ? 0 : H * Vp) + Vp + H * Vg + Vg;
  return embeddings + block + heads;
}

template <class T>
bool all_finite(const EncoderParams<T>& params) {
  bool ok = true;
  params.for_each([&](const auto&, const Matrix<T>& m) {
    for (T v : m.values()) {
      if (!std::isfinite(v)) {
        ok = false;
        return;
      }
    }
  });
  return ok;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

// y = x W^T + b, W stored out x in.
template <class T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>* bias) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
  Matrix<T> y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = x.row(r);
    T* yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = kernels::dot(xr, w.row(o), in);
      if (bias != nullptr) acc += static_cast<double>((*bias)(0, o));
      yr[o] = static_cast<T>(acc);
    }
  }
  return y;
}

// Accumulates dW += dy^T x, db += colsum(dy), dx += dy W.
template <class T>
void linear_backward(const Matrix<double>& dy, const Matrix<T>& x, const Matrix<T>& w, Matrix<double>& dw,
                     Matrix<double>* db, Matrix<double>* dx) {
  const std::size_t n = dy.rows(), out = dy.cols(), in = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* g = dy.row(r);
    const T* xr = x.row(r);
    double* dxr = dx != nullptr ? dx->row(r) : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      if (g[o] == 0.0) continue;
      kernels::axpy(g[o], xr, dw.row(o), in);
      if (db != nullptr) (*db)(0, o) += g[o];
      if (dxr != nullptr) kernels::axpy(g[o], w.row(o), dxr, in);
    }
  }
}

template <class T>
void layernorm_row(const double* x, std::size_t H, double eps, const T* gain, const T* bias, T* xhat_out,
                   double& rstd_out, T* y_out) {
  double mean = 0.0;
  for (std::size_t i = 0; i < H; ++i) mean += x[i];
  mean /= static_cast<double>(H);
  double var = 0.0;
  for (std::size_t i = 0; i < H; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(H);
  const double rstd = 1.0 / std::sqrt(var + eps);
  rstd_out = rstd;
  for (std::size_t i = 0; i < H; ++i) {
    const double xh = (x[i] - mean) * rstd;
    xhat_out[i] = static_cast<T>(xh);
    y_out[i] = static_cast<T>(static_cast<double>(gain[i]) * xh + static_cast<double>(bias[i]));
  }
}

template <class T>
void layernorm_backward(const Matrix<double>& dy, const Matrix<T>& xhat, const std::vector<double>& rstd,
                        const Matrix<T>& gain, Matrix<double>& dgain, Matrix<double>& dbias, Matrix<double>& dx) {
  const std::size_t n = dy.rows(), H = dy.cols();
  std::vector<double> dxhat(H);
  for (std::size_t r = 0; r < n; ++r) {
    const double* g = dy.row(r);
    const T* xh = xhat.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
      dxhat[i] = g[i] * static_cast<double>(gain(0, i));
      dgain(0, i) += g[i] * static_cast<double>(xh[i]);
      dbias(0, i) += g[i];
      m1 += dxhat[i];
      m2 += dxhat[i] * static_cast<double>(xh[i]);
    }
    m1 /= static_cast<double>(H);
    m2 /= static_cast<double>(H);
    double* out = dx.row(r);
    for (std::size_t i = 0; i < H; ++i) {
      out[i] = rstd[r] * (dxhat[i] - m1 - static_cast<double>(xh[i]) * m2);
    }
  }
}

std::vector<std::uint8_t> draw_keep(std::size_t count, const DropoutContext& dropout) {
  std::vector<std::uint8_t> keep(count);
  for (auto& k : keep) k = dropout.rng->uniform() >= dropout.rate ? 1 : 0;
  return keep;
}

double keep_factor(const std::vector<std::uint8_t>& keep, std::size_t i, double scale) {
  return keep.empty() ? 1.0 : (keep[i] != 0 ? scale : 0.0);
}

template <class T>
void check_trace(const EncoderParams<T>& params, const ForwardTrace<T>& trace) {
  if (!params.config.same_shapes(trace.config) || trace.layers.size() != params.config.n_layers ||
      trace.output.rows() != trace.positions.size()) {
    throw UsageError("forward trace does not match the parameters");
  }
}

template <class T>
void check_grads(const EncoderParams<T>& params, const ParamGrads& grads) {
  bool ok = params.config.same_shapes(grads.config);
  const auto& pf = EncoderParams<T>::fields();
  const auto& gf = ParamGrads::fields();
  for (std::size_t i = 0; ok && i < pf.size(); ++i) {
    const auto& a = params.*pf[i].member;
    const auto& b = grads.*gf[i].member;
    ok = a.rows() == b.rows() && a.cols() == b.cols();
  }
  if (!ok) throw UsageError("gradient accumulator does not match the parameters");
}

// Reverse pass from the compact (n x H) hidden-state gradient.
template <class T>
void encoder_backward(const EncoderParams<T>& p, const ForwardTrace<T>& tr, Matrix<double> dh, ParamGrads& g) {
  const ModelConfig& c = p.config;
  const std::size_t n = tr.positions.size();
  if (n == 0) return;
  const std::size_t H = c.hidden, F = c.intermediate, A = c.heads, d = c.head_dim(), E = c.embed;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double ds = tr.dropout_scale;

  std::vector<double> dp(n), pt(n);
  for (std::size_t l = c.n_layers; l-- > 0;) {
    const LayerCache<T>& lc = tr.layers[l];

    Matrix<double> dr2(n, H);
    layernorm_backward(dh, lc.norm2_xhat, lc.norm2_rstd, p.ffn_norm_gain, g.ffn_norm_gain, g.ffn_norm_bias, dr2);

    Matrix<double> dffn = dr2;
    if (!lc.ffn_keep.empty()) {
      for (std::size_t i = 0; i < dffn.size(); ++i) dffn.data()[i] *= keep_factor(lc.ffn_keep, i, ds);
    }
    Matrix<double> dact(n, F);
    linear_backward(dffn, lc.ffn_act, p.ffn_out_weight, g.ffn_out_weight, &g.ffn_out_bias, &dact);
    for (std::size_t i = 0; i < dact.size(); ++i) {
      dact.data()[i] *= gelu_grad(static_cast<double>(lc.ffn_pre.data()[i]));
    }
    Matrix<double> dh1 = dr2;
    linear_backward(dact, lc.norm1_out, p.ffn_in_weight, g.ffn_in_weight, &g.ffn_in_bias, &dh1);

    Matrix<double> dr1(n, H);
    layernorm_backward(dh1, lc.norm1_xhat, lc.norm1_rstd, p.attention_norm_gain, g.attention_norm_gain,
                       g.attention_norm_bias, dr1);

    Matrix<double> dattn = dr1;
    if (!lc.attention_keep.empty()) {
      for (std::size_t i = 0; i < dattn.size(); ++i) dattn.data()[i] *= keep_factor(lc.attention_keep, i, ds);
    }
    Matrix<double> dctx(n, H);
    linear_backward(dattn, lc.context, p.output_weight, g.output_weight, &g.output_bias, &dctx);

    Matrix<double> dq(n, H), dk(n, H), dv(n, H);
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t off = a * d;
      for (std::size_t r = 0; r < n; ++r) {
        const T* prow = lc.probs.row(a * n + r);
        const double* dctx_r = dctx.row(r) + off;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double kf = keep_factor(lc.probs_keep, (a * n + r) * n + j, ds);
          const double pj = static_cast<double>(prow[j]);
          const double dpt = kernels::dot(dctx_r, lc.value.row(j) + off, d);
          if (kf != 0.0) kernels::axpy(pj * kf, dctx_r, dv.row(j) + off, d);
          dp[j] = dpt * kf;
          weighted += pj * dp[j];
        }
        double* dq_r = dq.row(r) + off;
        for (std::size_t j = 0; j < n; ++j) {
          const double dsj = static_cast<double>(prow[j]) * (dp[j] - weighted) * scale;
          if (dsj == 0.0) continue;
          kernels::axpy(dsj, lc.key.row(j) + off, dq_r, d);
          kernels::axpy(dsj, lc.query.row(r) + off, dk.row(j) + off, d);
        }
      }
    }

    Matrix<double> dinput = dr1;
    linear_backward(dq, lc.input, p.query_weight, g.query_weight, &g.query_bias, &dinput);
    linear_backward(dk, lc.input, p.key_weight, g.key_weight, &g.key_bias, &dinput);
    linear_backward(dv, lc.input, p.value_weight, g.value_weight, &g.value_bias, &dinput);
    dh = std::move(dinput);
  }

  if (!tr.embed_keep.empty()) {
    for (std::size_t i = 0; i < dh.size(); ++i) dh.data()[i] *= keep_factor(tr.embed_keep, i, ds);
  }
  Matrix<double> de(n, E);
  linear_backward(dh, tr.embedded, p.embedding_projection, g.embedding_projection, nullptr, &de);
  for (std::size_t r = 0; r < n; ++r) {
    kernels::axpy(1.0, de.row(r), g.token_embedding.row(static_cast<std::size_t>(tr.tokens[r])), E);
    kernels::axpy(1.0, de.row(r), g.position_embedding.row(tr.positions[r]), E);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward

template <class T>
ForwardResult<T> forward(const EncoderParams<T>& params, std::span<const TokenId> ids,
                         std::span<const std::uint8_t> valid, DropoutContext dropout) {
  const ModelConfig& c = params.config;
  const std::size_t L = ids.size();
  if (valid.size() != L) throw UsageError("ids and validity mask differ in length");
  if (L > c.max_len) {
    throw DataError("sequence length " + std::to_string(L) + " exceeds max_len " + std::to_string(c.max_len));
  }
  for (std::size_t i = 0; i < L; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= c.phoneme_vocab_size) {
      throw DataError("phoneme id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " is out of range");
    }
  }

  const std::size_t H = c.hidden, F = c.intermediate, A = c.heads, d = c.head_dim(), E = c.embed;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const bool drop = dropout.active();

  ForwardResult<T> result;
  ForwardTrace<T>& tr = result.trace;
  tr.config = c;
  tr.length = L;
  tr.dropout_scale = drop ? 1.0 / (1.0 - dropout.rate) : 1.0;
  for (std::size_t i = 0; i < L; ++i) {
    if (valid[i] != 0) {
      tr.positions.push_back(static_cast<std::uint32_t>(i));
      tr.tokens.push_back(ids[i]);
    }
  }
  const std::size_t n = tr.positions.size();

  tr.embedded = Matrix<T>(n, E);
  for (std::size_t r = 0; r < n; ++r) {
    const T* tok = params.token_embedding.row(static_cast<std::size_t>(tr.tokens[r]));
    const T* pos = params.position_embedding.row(tr.positions[r]);
    T* out = tr.embedded.row(r);
    for (std::size_t e = 0; e < E; ++e) {
      out[e] = static_cast<T>(static_cast<double>(tok[e]) + static_cast<double>(pos[e]));
    }
  }
  Matrix<T> h = linear(tr.embedded, params.embedding_projection, static_cast<const Matrix<T>*>(nullptr));
  if (drop) {
    tr.embed_keep = draw_keep(h.size(), dropout);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h.data()[i] = static_cast<T>(static_cast<double>(h.data()[i]) * keep_factor(tr.embed_keep, i, tr.dropout_scale));
    }
  }

  std::vector<double> scores(n), row(std::max(H, d));
  tr.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    LayerCache<T>& lc = tr.layers[l];
    lc.input = std::move(h);
    lc.query = linear(lc.input, params.query_weight, &params.query_bias);
    lc.key = linear(lc.input, params.key_weight, &params.key_bias);
    lc.value = linear(lc.input, params.value_weight, &params.value_bias);

    lc.probs = Matrix<T>(A * n, n);
    if (drop) lc.probs_keep = draw_keep(A * n * n, dropout);
    lc.context = Matrix<T>(n, H);
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t off = a * d;
      for (std::size_t r = 0; r < n; ++r) {
        const T* q = lc.query.row(r) + off;
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          scores[j] = kernels::dot(q, lc.key.row(j) + off, d) * scale;
          max_score = std::max(max_score, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          sum += scores[j];
        }
        T* prow = lc.probs.row(a * n + r);
        std::fill_n(row.begin(), d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          prow[j] = static_cast<T>(scores[j] / sum);
          const double w = static_cast<double>(prow[j]) * keep_factor(lc.probs_keep, (a * n + r) * n + j, tr.dropout_scale);
          if (w != 0.0) kernels::axpy(w, lc.value.row(j) + off, row.data(), d);
        }
        T* ctx = lc.context.row(r) + off;
        for (std::size_t k = 0; k < d; ++k) ctx[k] = static_cast<T>(row[k]);
      }
    }

    lc.attention_out = linear(lc.context, params.output_weight, &params.output_bias);
    if (drop) lc.attention_keep = draw_keep(n * H, dropout);
    lc.norm1_xhat = Matrix<T>(n, H);
    lc.norm1_rstd.resize(n);
    lc.norm1_out = Matrix<T>(n, H);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < H; ++i) {
        row[i] = static_cast<double>(lc.input(r, i)) +
                 static_cast<double>(lc.attention_out(r, i)) * keep_factor(lc.attention_keep, r * H + i, tr.dropout_scale);
      }
      layernorm_row(row.data(), H, c.layernorm_eps, params.attention_norm_gain.row(0),
                    params.attention_norm_bias.row(0), lc.norm1_xhat.row(r), lc.norm1_rstd[r], lc.norm1_out.row(r));
    }

    lc.ffn_pre = linear(lc.norm1_out, params.ffn_in_weight, &params.ffn_in_bias);
    lc.ffn_act = Matrix<T>(n, F);
    for (std::size_t i = 0; i < lc.ffn_pre.size(); ++i) {
      lc.ffn_act.data()[i] = static_cast<T>(gelu(static_cast<double>(lc.ffn_pre.data()[i])));
    }
    lc.ffn_out = linear(lc.ffn_act, params.ffn_out_weight, &params.ffn_out_bias);
    if (drop) lc.ffn_keep = draw_keep(n * H, dropout);
    lc.norm2_xhat = Matrix<T>(n, H);
    lc.norm2_rstd.resize(n);
    h = Matrix<T>(n, H);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < H; ++i) {
        row[i] = static_cast<double>(lc.norm1_out(r, i)) +
                 static_cast<double>(lc.ffn_out(r, i)) * keep_factor(lc.ffn_keep, r * H + i, tr.dropout_scale);
      }
      layernorm_row(row.data(), H, c.layernorm_eps, params.ffn_norm_gain.row(0), params.ffn_norm_bias.row(0),
                    lc.norm2_xhat.row(r), lc.norm2_rstd[r], h.row(r));
    }
  }

  tr.output = std::move(h);
  result.hidden = Matrix<T>(L, H);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(tr.output.row(r), H, result.hidden.row(tr.positions[r]));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Heads

template <class T>
HeadLogits heads(const EncoderParams<T>& params, const Matrix<T>& hidden) {
  const ModelConfig& c = params.config;
  if (!params.has_heads()) throw UsageError("parameters have no prediction heads");
  if (hidden.cols() != c.hidden) throw UsageError("hidden width does not match the model");
  const std::size_t L = hidden.rows(), H = c.hidden, E = c.embed;
  const std::size_t Vp = c.phoneme_vocab_size, Vg = c.grapheme_vocab_size;

  HeadLogits out{Matrix<double>(L, Vp), Matrix<double>(L, Vg)};
  std::vector<double> z(E);
  for (std::size_t r = 0; r < L; ++r) {
    const T* h = hidden.row(r);
    double* mlm = out.mlm.row(r);
    if (c.tie_mlm_head) {
      // logits = (h P) T^T with P the embedding projection and T the token table.
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t k = 0; k < H; ++k) {
        if (h[k] != T{0}) kernels::axpy(static_cast<double>(h[k]), params.embedding_projection.row(k), z.data(), E);
      }
      for (std::size_t v = 0; v < Vp; ++v) {
        mlm[v] = kernels::dot(z.data(), params.token_embedding.row(v), E) + static_cast<double>(params.mlm_bias(0, v));
      }
    } else {
      for (std::size_t v = 0; v < Vp; ++v) {
        mlm[v] = kernels::dot(h, params.mlm_weight.row(v), H) + static_cast<double>(params.mlm_bias(0, v));
      }
    }
    double* p2g = out.p2g.row(r);
    for (std::size_t v = 0; v < Vg; ++v) {
      p2g[v] = kernels::dot(h, params.p2g_weight.row(v), H) + static_cast<double>(params.p2g_bias(0, v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward

template <class T>
void backward_hidden(const EncoderParams<T>& params, const ForwardTrace<T>& trace, const Matrix<double>& grad_hidden,
                     ParamGrads& grads) {
  check_trace(params, trace);
  check_grads(params, grads);
  if (grad_hidden.rows() != trace.length || grad_hidden.cols() != params.config.hidden) {
    throw UsageError("hidden-state gradient has the wrong shape");
  }
  const std::size_t n = trace.positions.size(), H = params.config.hidden;
  Matrix<double> compact(n, H);
  for (std::size_t r = 0; r < n; ++r) std::copy_n(grad_hidden.row(trace.positions[r]), H, compact.row(r));
  encoder_backward(params, trace, std::move(compact), grads);
}

template <class T>
void backward(const EncoderParams<T>& params, const ForwardTrace<T>& trace, const Matrix<double>& grad_mlm,
              const Matrix<double>& grad_p2g, ParamGrads& grads) {
  check_trace(params, trace);
  check_grads(params, grads);
  const ModelConfig& c = params.config;
  if (!params.has_heads()) throw UsageError("parameters have no prediction heads");
  const std::size_t L = trace.length, H = c.hidden, E = c.embed;
  const std::size_t Vp = c.phoneme_vocab_size, Vg = c.grapheme_vocab_size;
  if (grad_mlm.rows() != L || grad_mlm.cols() != Vp || grad_p2g.rows() != L || grad_p2g.cols() != Vg) {
    throw UsageError("logit gradients have the wrong shape");
  }

  const std::size_t n = trace.positions.size();
  Matrix<double> dh(n, H);
  std::vector<double> z(E), dz(E);

  // Padded rows have zero hidden state, so they only reach the biases.
  std::size_t compact = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const bool is_valid = compact < n && trace.positions[compact] == i;
    const T* h = is_valid ? trace.output.row(compact) : nullptr;
    double* dhr = is_valid ? dh.row(compact) : nullptr;

    const double* gp = grad_p2g.row(i);
    for (std::size_t v = 0; v < Vg; ++v) {
      if (gp[v] == 0.0) continue;
      grads.p2g_bias(0, v) += gp[v];
      if (is_valid) {
        kernels::axpy(gp[v], h, grads.p2g_weight.row(v), H);
        kernels::axpy(gp[v], params.p2g_weight.row(v), dhr, H);
      }
    }

    const double* gm = grad_mlm.row(i);
    if (c.tie_mlm_head) {
      if (is_valid) {
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t k = 0; k < H; ++k) {
          if (h[k] != T{0}) kernels::axpy(static_cast<double>(h[k]), params.embedding_projection.row(k), z.data(), E);
        }
      }
      std::fill(dz.begin(), dz.end(), 0.0);
      bool any = false;
      for (std::size_t v = 0; v < Vp; ++v) {
        if (gm[v] == 0.0) continue;
        grads.mlm_bias(0, v) += gm[v];
        if (is_valid) {
          any = true;
          kernels::axpy(gm[v], z.data(), grads.token_embedding.row(v), E);
          kernels::axpy(gm[v], params.token_embedding.row(v), dz.data(), E);
        }
      }
      if (any) {
        for (std::size_t k = 0; k < H; ++k) {
          if (h[k] != T{0}) kernels::axpy(static_cast<double>(h[k]), dz.data(), grads.embedding_projection.row(k), E);
          dhr[k] += kernels::dot(dz.data(), params.embedding_projection.row(k), E);
        }
      }
    } else {
      for (std::size_t v = 0; v < Vp; ++v) {
        if (gm[v] == 0.0) continue;
        grads.mlm_bias(0, v) += gm[v];
        if (is_valid) {
          kernels::axpy(gm[v], h, grads.mlm_weight.row(v), H);
          kernels::axpy(gm[v], params.mlm_weight.row(v), dhr, H);
        }
      }
    }
    if (is_valid) ++compact;
  }

  encoder_backward(params, trace, std::move(dh), grads);
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define PLBERT_INSTANTIATE(T)                                                                                  \
  template struct EncoderParams<T>;                                                                            \
  template EncoderParams<T> zero_params<T>(const ModelConfig&, bool);                                          \
  template EncoderParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                 \
  template EncoderParams<T> strip_heads<T>(const EncoderParams<T>&);                                           \
  template std::size_t parameter_count<T>(const EncoderParams<T>&);                                            \
  template bool all_finite<T>(const EncoderParams<T>&);                                                        \
  template ForwardResult<T> forward<T>(const EncoderParams<T>&, std::span<const TokenId>,                      \
                                       std::span<const std::uint8_t>, DropoutContext);                         \
  template HeadLogits heads<T>(const EncoderParams<T>&, const Matrix<T>&);                                     \
  template void backward<T>(const EncoderParams<T>&, const ForwardTrace<T>&, const Matrix<double>&,            \
                            const Matrix<double>&, ParamGrads&);                                               \
  template void backward_hidden<T>(const EncoderParams<T>&, const ForwardTrace<T>&, const Matrix<double>&,     \
                                   ParamGrads&);

PLBERT_INSTANTIATE(float)
PLBERT_INSTANTIATE(double)
#undef PLBERT_INSTANTIATE

template EncoderParams<double> cast_params<double, float>(const EncoderParams<float>&);
template EncoderParams<float> cast_params<float, double>(const EncoderParams<double>&);
template EncoderParams<float> cast_params<float, float>(const EncoderParams<float>&);
template EncoderParams<double> cast_params<double, double>(const EncoderParams<double>&);

}  // namespace plbert
