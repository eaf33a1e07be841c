// SPDX-License-Identifier: Apache-2.0
#include "plbert/text.hpp"

#include <array>

#include "plbert/errors.hpp"

namespace plbert {

namespace {

constexpr std::array<std::string_view, 20> kOnes = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};

constexpr std::array<std::string_view, 10> kTens = {
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};

void below_hundred(int v, std::vector<std::string>& out) {
  if (v < 20) {
    out.emplace_back(kOnes[static_cast<std::size_t>(v)]);
    return;
  }
  out.emplace_back(kTens[static_cast<std::size_t>(v / 10)]);
  if (v % 10 != 0) out.emplace_back(kOnes[static_cast<std::size_t>(v % 10)]);
}

bool is_letter(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Returns the ASCII-only, case-folded projection of UTF-8 `text`; everything
// that is not a letter, digit or apostrophe becomes a space.
std::string fold_ascii(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if (byte < 0x80) {
      char c = static_cast<char>(byte);
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      out.push_back(is_letter(c) || is_digit(c) || c == '\'' ? c : ' ');
      ++i;
      continue;
    }
    // Multi-byte sequence: skip the lead byte and its continuation bytes.
    std::size_t len = 1;
    if ((byte & 0xE0) == 0xC0) {
      len = 2;
    } else if ((byte & 0xF0) == 0xE0) {
      len = 3;
    } else if ((byte & 0xF8) == 0xF0) {
      len = 4;
    }
    std::size_t j = 1;
    while (j < len && i + j < text.size() && (static_cast<unsigned char>(text[i + j]) & 0xC0) == 0x80) ++j;
    i += j;
  }
  return out;
}

void emit_digits(std::string_view digits, std::vector<std::string>& out) {
  const bool leading_zero = digits.size() > 1 && digits.front() == '0';
  if (digits.size() <= 4 && !leading_zero) {
    int value = 0;
    for (char c : digits) value = value * 10 + (c - '0');
    auto words = number_to_words(value);
    out.insert(out.end(), words.begin(), words.end());
    return;
  }
  for (char c : digits) out.emplace_back(kOnes[static_cast<std::size_t>(c - '0')]);
}

void emit_letters(std::string_view run, std::vector<std::string>& out) {
  // Keep apostrophes only when flanked by letters.
  std::string word;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (run[i] == '\'') {
      if (i > 0 && i + 1 < run.size() && is_letter(run[i - 1]) && is_letter(run[i + 1])) word.push_back('\'');
    } else {
      word.push_back(run[i]);
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
}

}  // namespace

std::vector<std::string> number_to_words(int value) {
  if (value < 0 || value > 9999) {
    throw UsageError("number_to_words supports 0..9999, got " + std::to_string(value));
  }
  std::vector<std::string> out;
  if (value == 0) {
    out.emplace_back("zero");
    return out;
  }
  if (value >= 1000) {
    out.emplace_back(kOnes[static_cast<std::size_t>(value / 1000)]);
    out.emplace_back("thousand");
    value %= 1000;
  }
  if (value >= 100) {
    out.emplace_back(kOnes[static_cast<std::size_t>(value / 100)]);
    out.emplace_back("hundred");
    value %= 100;
  }
  if (value > 0) below_hundred(value, out);
  return out;
}

std::vector<std::string> normalize(std::string_view text) {
  const std::string folded = fold_ascii(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < folded.size()) {
    if (folded[i] == ' ') {
      ++i;
      continue;
    }
    if (is_digit(folded[i])) {
      std::size_t j = i;
      while (j < folded.size() && is_digit(folded[j])) ++j;
      emit_digits(std::string_view(folded).substr(i, j - i), out);
      i = j;
    } else {
      std::size_t j = i;
      while (j < folded.size() && (is_letter(folded[j]) || folded[j] == '\'')) ++j;
      emit_letters(std::string_view(folded).substr(i, j - i), out);
      i = j;
    }
  }
  return out;
}

}  // namespace plbert
