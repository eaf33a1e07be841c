// SPDX-License-Identifier: Apache-2.0
//
// ALBERT-style phoneme encoder: factorised token embeddings plus learned
// absolute positions, projected to the hidden width, followed by ONE post-LN
// transformer block applied n_layers times, and two linear prediction heads
// (masked phoneme, phoneme-to-grapheme).
//
// Everything is templated on the parameter storage type. Training and
// checkpoints use float; double is used for gradient checks and oracles.
// Reductions always accumulate in double.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "plbert/rng.hpp"
#include "plbert/tensor.hpp"
#include "plbert/vocab.hpp"

namespace plbert {

struct ModelConfig {
  std::size_t n_layers = 12;
  std::size_t hidden = 768;
  std::size_t intermediate = 2048;
  std::size_t heads = 12;
  std::size_t embed = 128;
  std::size_t max_len = 512;
  std::size_t phoneme_vocab_size = 0;
  std::size_t grapheme_vocab_size = 0;
  double layernorm_eps = 1e-12;
  double dropout = 0.1;
  double init_std = 0.02;
  bool tie_mlm_head = false;

  /// Throws UsageError on inconsistent dimensions.
  void validate() const;

  std::size_t head_dim() const { return hidden / heads; }

  /// Same tensor shapes (everything except dropout / init_std / n_layers).
  bool same_shapes(const ModelConfig& other) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  /// 12 layers, H=768, F=2048, 12 heads, E=128, 512 positions.
  static ModelConfig base(std::size_t phoneme_vocab, std::size_t grapheme_vocab);
  /// Desk-scale: 2 layers, H=64, F=256, 4 heads, E=32, 128 positions.
  static ModelConfig toy(std::size_t phoneme_vocab, std::size_t grapheme_vocab);
};

enum class TensorKind { embedding, weight, bias, norm_gain, norm_bias };
enum class TensorGroup { encoder, mlm_head, p2g_head };

template <class T>
struct EncoderParams {
  ModelConfig config;

  Matrix<T> token_embedding;       // V_p x E
  Matrix<T> position_embedding;    // max_len x E
  Matrix<T> embedding_projection;  // H x E (out x in)

  // Shared transformer block. Linear weights are stored out x in.
  Matrix<T> query_weight, query_bias;
  Matrix<T> key_weight, key_bias;
  Matrix<T> value_weight, value_bias;
  Matrix<T> output_weight, output_bias;
  Matrix<T> attention_norm_gain, attention_norm_bias;
  Matrix<T> ffn_in_weight, ffn_in_bias;    // F x H, 1 x F
  Matrix<T> ffn_out_weight, ffn_out_bias;  // H x F, 1 x H
  Matrix<T> ffn_norm_gain, ffn_norm_bias;

  Matrix<T> mlm_weight, mlm_bias;  // V_p x H (absent when tied), 1 x V_p
  Matrix<T> p2g_weight, p2g_bias;  // V_g x H, 1 x V_g

  struct Field {
    std::string_view name;
    Matrix<T> EncoderParams::*member;
    TensorKind kind;
    TensorGroup group;
  };

  /// All tensors in the fixed serialisation order.
  static const std::array<Field, 23>& fields();

  bool has_heads() const { return !p2g_weight.empty(); }

  /// Visit the tensors that are present, in serialisation order.
  template <class F>
  void for_each(F&& f) {
    for (const auto& field : fields()) {
      if (!(this->*field.member).empty()) f(field, this->*field.member);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& field : fields()) {
      if (!(this->*field.member).empty()) f(field, this->*field.member);
    }
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

using ParamGrads = EncoderParams<double>;

/// Shape of the named tensor under `config`, or (0, 0) when it is absent
/// (tied MLM weight, or heads of an encoder-only export).
std::pair<std::size_t, std::size_t> tensor_shape(const ModelConfig& config, std::string_view name, bool with_heads);

/// Zero-filled parameters with every tensor allocated.
template <class T>
EncoderParams<T> zero_params(const ModelConfig& config, bool with_heads = true);

/// Weights ~ truncated normal(0, init_std) at 2 sigma, biases 0, norm gains 1.
template <class T>
EncoderParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <class To, class From>
EncoderParams<To> cast_params(const EncoderParams<From>& params);

/// Copy without the prediction heads, for downstream consumers.
template <class T>
EncoderParams<T> strip_heads(const EncoderParams<T>& params);

template <class T>
std::size_t parameter_count(const EncoderParams<T>& params);

/// Closed-form count for `config`; independent of n_layers.
std::size_t parameter_count(const ModelConfig& config, bool with_heads = true);

/// Dropout source for one forward pass. A null rng or zero rate disables it.
struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

template <class T>
struct LayerCache {
  Matrix<T> input;  // n x H
  Matrix<T> query, key, value;
  Matrix<T> probs;  // (heads * n) x n, softmax output before dropout
  std::vector<std::uint8_t> probs_keep;
  Matrix<T> context;
  Matrix<T> attention_out;  // before dropout
  std::vector<std::uint8_t> attention_keep;
  Matrix<T> norm1_xhat;
  std::vector<double> norm1_rstd;
  Matrix<T> norm1_out;
  Matrix<T> ffn_pre;
  Matrix<T> ffn_act;
  Matrix<T> ffn_out;  // before dropout
  std::vector<std::uint8_t> ffn_keep;
  Matrix<T> norm2_xhat;
  std::vector<double> norm2_rstd;
};

/// Activations of one forward pass over the valid positions only.
template <class T>
struct ForwardTrace {
  ModelConfig config;
  std::size_t length = 0;                // L, including padding
  std::vector<std::uint32_t> positions;  // valid positions, ascending
  std::vector<TokenId> tokens;           // token at each valid position
  double dropout_scale = 1.0;
  Matrix<T> embedded;  // n x E, token + position
  std::vector<std::uint8_t> embed_keep;
  std::vector<LayerCache<T>> layers;
  Matrix<T> output;  // n x H
};

template <class T>
struct ForwardResult {
  Matrix<T> hidden;  // L x H; rows at invalid positions are zero
  ForwardTrace<T> trace;
};

/// Encodes one sequence. Invalid key positions receive zero attention weight
/// and invalid query rows are zero in the output. Throws DataError if an id
/// is out of range or L exceeds max_len.
template <class T>
ForwardResult<T> forward(const EncoderParams<T>& params, std::span<const TokenId> ids,
                         std::span<const std::uint8_t> valid, DropoutContext dropout = {});

struct HeadLogits {
  Matrix<double> mlm;  // L x V_p
  Matrix<double> p2g;  // L x V_g
};

/// Affine projections of every hidden row; softmax is left to the loss.
template <class T>
HeadLogits heads(const EncoderParams<T>& params, const Matrix<T>& hidden);

/// Reverse-mode gradients of sum(grad_mlm .* logits_mlm + grad_p2g .* logits_p2g)
/// with respect to every parameter, accumulated into `grads`. The shared block
/// collects contributions from all n_layers applications. Throws UsageError if
/// the trace, gradients or accumulator do not match `params`.
template <class T>
void backward(const EncoderParams<T>& params, const ForwardTrace<T>& trace, const Matrix<double>& grad_mlm,
              const Matrix<double>& grad_p2g, ParamGrads& grads);

/// Same, starting from the gradient of the L x H hidden states (no heads).
template <class T>
void backward_hidden(const EncoderParams<T>& params, const ForwardTrace<T>& trace, const Matrix<double>& grad_hidden,
                     ParamGrads& grads);

/// True when every parameter is finite.
template <class T>
bool all_finite(const EncoderParams<T>& params);

}  // namespace plbert
