// SPDX-License-Identifier: Apache-2.0
//
// Pronunciation lexicon: the G2P backend. Lookup is exact on the
// case-folded word; absence is reported as a value (OOV), not an error.
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace plbert {

using Pronunciation = std::vector<std::string>;

class Lexicon {
 public:
  using Entries = std::map<std::string, Pronunciation, std::less<>>;

  /// Adds an entry; the word is case-folded. The first pronunciation of a
  /// word wins and later ones are ignored. Returns false on a duplicate.
  /// Throws DataError on an empty word, empty pronunciation or empty phoneme.
  bool add(std::string_view word, Pronunciation phonemes);

  const Pronunciation* find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word) != nullptr; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entries& entries() const { return entries_; }

 private:
  Entries entries_;
};

/// Parses `word<TAB>ph1 ph2 ...` lines. Blank lines and lines starting with
/// ';;;' or '#' are skipped. Throws FormatError with the line number on
/// malformed lines.
Lexicon parse_lexicon(std::istream& in);
Lexicon load_lexicon(const std::filesystem::path& path);

/// Exact lookup. std::nullopt means out-of-vocabulary.
std::optional<std::span<const std::string>> g2p(std::string_view word, const Lexicon& lexicon);

}  // namespace plbert
