// SPDX-License-Identifier: Apache-2.0
//
// Whole-word masking and batch collation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "plbert/corpus.hpp"
#include "plbert/rng.hpp"

namespace plbert {

struct MaskPolicy {
  double select_prob = 0.15;
  double mask_prob = 0.8;
  double random_prob = 0.1;
  double keep_prob = 0.1;

  /// Throws UsageError unless all probabilities are in [0, 1] and the three
  /// replacement outcomes sum to 1 (within 1e-9).
  void validate() const;
};

enum class MaskOutcome : std::uint8_t { mask, random, keep };

struct MaskedExample {
  std::vector<TokenId> x;    // inputs after masking, length N
  std::vector<TokenId> y_p;  // original phonemes, length N
  std::vector<TokenId> y_g;  // grapheme per position, length N
  std::vector<std::uint32_t> masked;   // I, sorted
  std::vector<MaskOutcome> outcomes;   // parallel to `masked`
  std::size_t length = 0;              // N

  friend bool operator==(const MaskedExample&, const MaskedExample&) = default;
};

/// Each word is selected independently with probability select_prob. A
/// selected word draws one outcome (MSK / RANDOM / KEEP) shared by all of its
/// phonemes; RANDOM replacement ids are drawn per position, uniformly over the
/// non-special phoneme ids [3, phoneme_vocab_size). Every position of a
/// selected word enters `masked`, whatever the outcome.
MaskedExample apply_mask(const ExampleRecord& record, const MaskPolicy& policy, Rng& rng,
                         std::size_t phoneme_vocab_size);

/// Seed for masking record `record_index`; independent of worker count.
std::uint64_t mask_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t record_index);

inline constexpr std::int32_t kIgnoreLabel = -1;

/// Right-padded batch. All matrices are row-major batch x width.
struct BatchTensors {
  std::size_t batch = 0;
  std::size_t width = 0;
  std::vector<TokenId> inputs;          // PAD beyond N
  std::vector<std::uint8_t> valid;      // 1 for i < N
  std::vector<std::int32_t> mlm_labels; // y_p at scored masked positions, else kIgnoreLabel
  std::vector<std::int32_t> p2g_labels; // y_g for i < N, else kIgnoreLabel
  std::vector<std::size_t> lengths;     // N per row

  std::span<const TokenId> input_row(std::size_t b) const { return {inputs.data() + b * width, width}; }
  std::span<const std::uint8_t> valid_row(std::size_t b) const { return {valid.data() + b * width, width}; }
  std::span<const std::int32_t> mlm_row(std::size_t b) const { return {mlm_labels.data() + b * width, width}; }
  std::span<const std::int32_t> p2g_row(std::size_t b) const { return {p2g_labels.data() + b * width, width}; }
};

/// Pads `examples` to `width`. With `score_only_msk` only positions whose
/// outcome was MSK carry an MLM label. Throws UsageError on an empty batch or
/// when any N exceeds width.
BatchTensors collate(std::span<const MaskedExample> examples, std::size_t width, bool score_only_msk = false);

}  // namespace plbert
