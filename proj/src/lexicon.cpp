// SPDX-License-Identifier: Apache-2.0
#include "plbert/lexicon.hpp"

#include <fstream>
#include <istream>

#include "plbert/errors.hpp"
#include "plbert/vocab.hpp"

namespace plbert {

bool Lexicon::add(std::string_view word, Pronunciation phonemes) {
  if (word.empty()) throw DataError("lexicon entry with empty word");
  if (phonemes.empty()) throw DataError("lexicon entry '" + std::string(word) + "' has no phonemes");
  for (const auto& p : phonemes) {
    if (p.empty()) throw DataError("lexicon entry '" + std::string(word) + "' has an empty phoneme");
  }
  return entries_.emplace(case_fold(word), std::move(phonemes)).second;
}

const Pronunciation* Lexicon::find(std::string_view word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) {
    const std::string folded = case_fold(word);
    if (folded != word) it = entries_.find(folded);
  }
  return it == entries_.end() ? nullptr : &it->second;
}

Lexicon parse_lexicon(std::istream& in) {
  Lexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.starts_with("#") || line.starts_with(";;;")) continue;

    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": expected word<TAB>phonemes");
    }
    std::string_view word(line.data(), tab);
    std::string_view rest(line.data() + tab + 1, line.size() - tab - 1);
    if (word.empty()) throw FormatError("lexicon line " + std::to_string(line_no) + ": empty word");

    Pronunciation pron;
    std::size_t i = 0;
    while (i < rest.size()) {
      while (i < rest.size() && (rest[i] == ' ' || rest[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < rest.size() && rest[j] != ' ' && rest[j] != '\t') ++j;
      if (j > i) pron.emplace_back(rest.substr(i, j - i));
      i = j;
    }
    if (pron.empty()) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": no phonemes for '" + std::string(word) + "'");
    }
    lexicon.add(word, std::move(pron));
  }
  return lexicon;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  return parse_lexicon(in);
}

std::optional<std::span<const std::string>> g2p(std::string_view word, const Lexicon& lexicon) {
  if (const Pronunciation* pron = lexicon.find(word)) {
    return std::span<const std::string>(*pron);
  }
  return std::nullopt;
}

}  // namespace plbert
