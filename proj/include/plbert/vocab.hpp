// SPDX-License-Identifier: Apache-2.0
//
// Phoneme and grapheme vocabularies. Phonemes are the only model input
// alphabet; graphemes (whole, case-folded words) exist only as P2G targets.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plbert {

using TokenId = std::int32_t;

class Lexicon;

/// Dense bidirectional token <-> id table.
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> tokens);

  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> tokens() const { return tokens_; }

  friend bool operator==(const TokenTable& a, const TokenTable& b) { return a.tokens_ == b.tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> ids_;
};

class PhonemeVocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kUnknown = 2;
  static constexpr TokenId kNumSpecials = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kMaskToken = "<msk>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  PhonemeVocab() : PhonemeVocab(std::vector<std::string>{}) {}
  /// `symbols` are the non-special phonemes, in id order.
  explicit PhonemeVocab(std::vector<std::string> symbols);

  /// Id of `phoneme`, or kUnknown.
  TokenId encode(std::string_view phoneme) const;
  std::optional<TokenId> find(std::string_view phoneme) const { return table_.find(phoneme); }
  const std::string& decode(TokenId id) const { return table_.token(id); }
  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

  std::size_t size() const { return table_.size(); }
  std::span<const std::string> tokens() const { return table_.tokens(); }

  friend bool operator==(const PhonemeVocab&, const PhonemeVocab&) = default;

 private:
  TokenTable table_;
};

class GraphemeVocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnknown = 1;
  static constexpr TokenId kNumSpecials = 2;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  GraphemeVocab() : GraphemeVocab(std::vector<std::string>{}, 1) {}
  /// `words` are the non-special graphemes, in id order.
  GraphemeVocab(std::vector<std::string> words, std::size_t cutoff);

  /// Id of the case-folded `word`, or kUnknown.
  TokenId encode(std::string_view word) const;
  std::optional<TokenId> find(std::string_view word) const { return table_.find(word); }
  const std::string& decode(TokenId id) const { return table_.token(id); }
  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

  std::size_t size() const { return table_.size(); }
  std::size_t cutoff() const { return cutoff_; }
  std::span<const std::string> tokens() const { return table_.tokens(); }

  friend bool operator==(const GraphemeVocab&, const GraphemeVocab&) = default;

 private:
  TokenTable table_;
  std::size_t cutoff_ = 1;
};

/// Specials plus every distinct phoneme in the lexicon, sorted.
/// Throws DataError("empty lexicon") when the lexicon has no entries.
PhonemeVocab build_phoneme_vocab(const Lexicon& lexicon);

/// Streaming word-frequency counter for grapheme vocabulary construction.
class WordCounter {
 public:
  /// Case-folds `word`; tokens without any letter or digit are ignored.
  void add(std::string_view word);
  void add_all(std::span<const std::string> words);
  std::size_t count(std::string_view word) const;
  std::size_t distinct() const { return counts_.size(); }

  /// Words with frequency >= cutoff, by (descending frequency, ascending text).
  GraphemeVocab finish(std::size_t cutoff) const;

 private:
  std::map<std::string, std::size_t, std::less<>> counts_;
};

GraphemeVocab build_grapheme_vocab(std::span<const std::string> words, std::size_t cutoff);

// Vocab file: header `PLBERT-VOCAB v1 <kind> <size>` (grapheme files append
// `cutoff=<n>`), then one token per line in id order.
void save_vocab(const PhonemeVocab& vocab, std::ostream& out);
void save_vocab(const GraphemeVocab& vocab, std::ostream& out);
void save_vocab(const PhonemeVocab& vocab, const std::filesystem::path& path);
void save_vocab(const GraphemeVocab& vocab, const std::filesystem::path& path);

PhonemeVocab load_phoneme_vocab(std::istream& in);
GraphemeVocab load_grapheme_vocab(std::istream& in);
PhonemeVocab load_phoneme_vocab(const std::filesystem::path& path);
GraphemeVocab load_grapheme_vocab(const std::filesystem::path& path);

/// ASCII case folding; other bytes are passed through unchanged.
std::string case_fold(std::string_view word);

}  // namespace plbert
