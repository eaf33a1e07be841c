// SPDX-License-Identifier: Apache-2.0
#include "plbert/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "plbert/errors.hpp"
#include "plbert/lexicon.hpp"

namespace plbert {

namespace {

constexpr std::string_view kMagic = "PLBERT-VOCAB";
constexpr std::string_view kVersion = "v1";

FormatError vocab_error(const std::string& what) { return FormatError("PLBERT-VOCAB v1: " + what); }

std::vector<std::string> with_specials(std::initializer_list<std::string_view> specials,
                                       std::vector<std::string> rest) {
  std::vector<std::string> all;
  all.reserve(specials.size() + rest.size());
  for (auto s : specials) all.emplace_back(s);
  for (auto& t : rest) all.push_back(std::move(t));
  return all;
}

bool has_alnum(std::string_view word) {
  return std::any_of(word.begin(), word.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t parse_count(std::string_view s, const char* what) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw vocab_error(std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return value;
}

void write_tokens(std::ostream& out, std::string_view header, std::span<const std::string> tokens) {
  out << header << '\n';
  for (const auto& t : tokens) {
    if (t.empty() || t.find_first_of("\n\r") != std::string::npos) {
      throw DataError("vocab token is empty or contains a line break");
    }
    out << t << '\n';
  }
  if (!out) throw Error("failed writing vocab");
}

struct ParsedVocab {
  std::vector<std::string> tokens;
  std::size_t cutoff = 0;
};

ParsedVocab read_tokens(std::istream& in, std::string_view expected_kind,
                        std::initializer_list<std::string_view> specials) {
  std::string header;
  if (!std::getline(in, header)) throw vocab_error("missing header");
  auto fields = split_ws(header);
  if (fields.empty() || fields[0] != kMagic) throw vocab_error("bad magic");
  if (fields.size() < 2 || fields[1] != kVersion) {
    throw vocab_error("unsupported version '" + (fields.size() > 1 ? std::string(fields[1]) : std::string()) + "'");
  }
  if (fields.size() < 4) throw vocab_error("truncated header");
  if (fields[2] != expected_kind) {
    throw vocab_error("expected kind '" + std::string(expected_kind) + "', got '" + std::string(fields[2]) + "'");
  }
  ParsedVocab parsed;
  const std::size_t size = parse_count(fields[3], "size");
  for (std::size_t i = 4; i < fields.size(); ++i) {
    if (fields[i].starts_with("cutoff=")) {
      parsed.cutoff = parse_count(fields[i].substr(7), "cutoff");
    } else {
      throw vocab_error("unknown header field '" + std::string(fields[i]) + "'");
    }
  }
  if (size < specials.size()) throw vocab_error("size smaller than the special-token count");

  parsed.tokens.reserve(std::min<std::size_t>(size, 1u << 20));
  std::string line;
  std::set<std::string, std::less<>> seen;
  while (parsed.tokens.size() < size && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw vocab_error("empty token at line " + std::to_string(parsed.tokens.size() + 2));
    if (!seen.insert(line).second) throw vocab_error("duplicate token '" + line + "'");
    parsed.tokens.push_back(line);
  }
  if (parsed.tokens.size() != size) {
    throw vocab_error("truncated: expected " + std::to_string(size) + " tokens, got " +
                      std::to_string(parsed.tokens.size()));
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") throw vocab_error("trailing data after " + std::to_string(size) + " tokens");
  }
  std::size_t i = 0;
  for (auto s : specials) {
    if (parsed.tokens[i] != s) {
      throw vocab_error("special token " + std::to_string(i) + " must be '" + std::string(s) + "'");
    }
    ++i;
  }
  parsed.tokens.erase(parsed.tokens.begin(), parsed.tokens.begin() + static_cast<std::ptrdiff_t>(specials.size()));
  return parsed;
}

template <class Vocab, class Load>
Vocab load_file(const std::filesystem::path& path, Load load) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file " + path.string());
  return load(in);
}

template <class Vocab>
void save_file(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create vocab file " + path.string());
  save_vocab(vocab, out);
}

}  // namespace

std::string case_fold(std::string_view word) {
  std::string out(word);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

TokenTable::TokenTable(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::optional<TokenId> TokenTable::find(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& TokenTable::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

PhonemeVocab::PhonemeVocab(std::vector<std::string> symbols)
    : table_(with_specials({kPadToken, kMaskToken, kUnknownToken}, std::move(symbols))) {}

TokenId PhonemeVocab::encode(std::string_view phoneme) const { return table_.find(phoneme).value_or(kUnknown); }

GraphemeVocab::GraphemeVocab(std::vector<std::string> words, std::size_t cutoff)
    : table_(with_specials({kPadToken, kUnknownToken}, std::move(words))), cutoff_(cutoff) {}

TokenId GraphemeVocab::encode(std::string_view word) const {
  return table_.find(case_fold(word)).value_or(kUnknown);
}

PhonemeVocab build_phoneme_vocab(const Lexicon& lexicon) {
  if (lexicon.empty()) throw DataError("empty lexicon");
  std::set<std::string, std::less<>> symbols;
  for (const auto& [word, pron] : lexicon.entries()) {
    for (const auto& p : pron) symbols.insert(p);
  }
  return PhonemeVocab(std::vector<std::string>(symbols.begin(), symbols.end()));
}

void WordCounter::add(std::string_view word) {
  if (!has_alnum(word)) return;
  std::string folded = case_fold(word);
  auto it = counts_.find(folded);
  if (it == counts_.end()) {
    counts_.emplace(std::move(folded), 1);
  } else {
    ++it->second;
  }
}

void WordCounter::add_all(std::span<const std::string> words) {
  for (const auto& w : words) add(w);
}

std::size_t WordCounter::count(std::string_view word) const {
  auto it = counts_.find(case_fold(word));
  return it == counts_.end() ? 0 : it->second;
}

GraphemeVocab WordCounter::finish(std::size_t cutoff) const {
  if (cutoff < 1) throw UsageError("grapheme cutoff must be >= 1");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [word, n] : counts_) {
    if (n >= cutoff) kept.emplace_back(word, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(std::move(w));
  return GraphemeVocab(std::move(words), cutoff);
}

GraphemeVocab build_grapheme_vocab(std::span<const std::string> words, std::size_t cutoff) {
  WordCounter counter;
  counter.add_all(words);
  return counter.finish(cutoff);
}

void save_vocab(const PhonemeVocab& vocab, std::ostream& out) {
  std::ostringstream header;
  header << kMagic << ' ' << kVersion << " phoneme " << vocab.size();
  write_tokens(out, header.str(), vocab.tokens());
}

void save_vocab(const GraphemeVocab& vocab, std::ostream& out) {
  std::ostringstream header;
  header << kMagic << ' ' << kVersion << " grapheme " << vocab.size() << " cutoff=" << vocab.cutoff();
  write_tokens(out, header.str(), vocab.tokens());
}

void save_vocab(const PhonemeVocab& vocab, const std::filesystem::path& path) { save_file(vocab, path); }
void save_vocab(const GraphemeVocab& vocab, const std::filesystem::path& path) { save_file(vocab, path); }

PhonemeVocab load_phoneme_vocab(std::istream& in) {
  auto parsed = read_tokens(in, "phoneme",
                            {PhonemeVocab::kPadToken, PhonemeVocab::kMaskToken, PhonemeVocab::kUnknownToken});
  return PhonemeVocab(std::move(parsed.tokens));
}

GraphemeVocab load_grapheme_vocab(std::istream& in) {
  auto parsed = read_tokens(in, "grapheme", {GraphemeVocab::kPadToken, GraphemeVocab::kUnknownToken});
  if (parsed.cutoff < 1) throw vocab_error("grapheme vocab requires cutoff>=1");
  return GraphemeVocab(std::move(parsed.tokens), parsed.cutoff);
}

PhonemeVocab load_phoneme_vocab(const std::filesystem::path& path) {
  return load_file<PhonemeVocab>(path, [](std::istream& in) { return load_phoneme_vocab(in); });
}

GraphemeVocab load_grapheme_vocab(const std::filesystem::path& path) {
  return load_file<GraphemeVocab>(path, [](std::istream& in) { return load_grapheme_vocab(in); });
}

}  // namespace plbert
