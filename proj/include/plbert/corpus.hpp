// SPDX-License-Identifier: Apache-2.0
//
// Phoneme/grapheme pairing: each whole word contributes one grapheme target
// and its lexicon pronunciation as phoneme inputs.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plbert/lexicon.hpp"
#include "plbert/vocab.hpp"

namespace plbert {

inline constexpr std::size_t kDefaultMaxLen = 512;

struct AlignedWord {
  TokenId grapheme = GraphemeVocab::kUnknown;
  std::vector<TokenId> phonemes;

  friend bool operator==(const AlignedWord&, const AlignedWord&) = default;
};

struct AlignedSentence {
  std::vector<AlignedWord> words;

  std::size_t phoneme_count() const;
  friend bool operator==(const AlignedSentence&, const AlignedSentence&) = default;
};

struct WordSpan {
  std::uint32_t start = 0;
  std::uint32_t length = 0;
  TokenId grapheme = GraphemeVocab::kUnknown;

  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// One training example: the flattened phoneme sequence plus the word spans
/// that partition it. The valid length N is phonemes.size().
struct ExampleRecord {
  std::vector<TokenId> phonemes;
  std::vector<WordSpan> spans;

  std::size_t length() const { return phonemes.size(); }
  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

enum class OovPolicy { skip_sentence, drop_word };

OovPolicy parse_oov_policy(std::string_view name);
std::string_view oov_policy_name(OovPolicy policy);

struct AlignOptions {
  OovPolicy oov_policy = OovPolicy::skip_sentence;
  std::size_t max_len = kDefaultMaxLen;
};

/// Per-sentence bookkeeping, summed by prepare_corpus.
struct AlignCounts {
  std::size_t words = 0;
  std::size_t oov_words = 0;
  std::size_t truncated_words = 0;
};

/// Aligns one normalised sentence. Returns std::nullopt (skip) when the
/// sentence contains an OOV word under skip_sentence, or when no word can be
/// aligned. A word is OOV if it is absent from the lexicon or one of its
/// phonemes is not in `phonemes`. Sentences longer than max_len phonemes are
/// cut after the last word that still fits.
std::optional<AlignedSentence> align_sentence(std::span<const std::string> words, const Lexicon& lexicon,
                                              const PhonemeVocab& phonemes, const GraphemeVocab& graphemes,
                                              const AlignOptions& options, AlignCounts* counts = nullptr);

ExampleRecord flatten(const AlignedSentence& sentence);

/// Throws FormatError unless spans partition [0, N) in order with non-empty
/// lengths and no phoneme id is special.
void validate_record(const ExampleRecord& record);

/// Per-position grapheme targets y_g (length N).
std::vector<TokenId> grapheme_labels(const ExampleRecord& record);

struct PrepareStats {
  std::size_t sentences = 0;
  std::size_t kept = 0;
  std::size_t skipped = 0;
  std::size_t words = 0;
  std::size_t oov_words = 0;
  std::size_t truncated_words = 0;

  double oov_rate() const { return words == 0 ? 0.0 : static_cast<double>(oov_words) / static_cast<double>(words); }
};

/// Normalises and aligns every sentence. Work is split across `workers`
/// threads; output order always follows input order.
std::vector<ExampleRecord> prepare_corpus(std::span<const std::string> sentences, const Lexicon& lexicon,
                                          const PhonemeVocab& phonemes, const GraphemeVocab& graphemes,
                                          const AlignOptions& options, std::size_t workers = 1,
                                          PrepareStats* stats = nullptr);

}  // namespace plbert
