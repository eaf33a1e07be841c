// SPDX-License-Identifier: Apache-2.0
#include "plbert/corpus.hpp"

#include <algorithm>
#include <thread>

#include "plbert/errors.hpp"
#include "plbert/text.hpp"

namespace plbert {

std::size_t AlignedSentence::phoneme_count() const {
  std::size_t n = 0;
  for (const auto& w : words) n += w.phonemes.size();
  return n;
}

OovPolicy parse_oov_policy(std::string_view name) {
  if (name == "skip_sentence") return OovPolicy::skip_sentence;
  if (name == "drop_word") return OovPolicy::drop_word;
  throw UsageError("unknown OOV policy '" + std::string(name) + "' (expected skip_sentence or drop_word)");
}

std::string_view oov_policy_name(OovPolicy policy) {
  return policy == OovPolicy::skip_sentence ? "skip_sentence" : "drop_word";
}

std::optional<AlignedSentence> align_sentence(std::span<const std::string> words, const Lexicon& lexicon,
                                              const PhonemeVocab& phonemes, const GraphemeVocab& graphemes,
                                              const AlignOptions& options, AlignCounts* counts) {
  AlignCounts local;
  AlignedSentence sentence;
  std::size_t total = 0;
  bool full = false;
  bool skip = false;

  for (const auto& word : words) {
    ++local.words;
    auto pron = g2p(word, lexicon);
    AlignedWord aligned;
    bool oov = !pron.has_value();
    if (!oov) {
      aligned.phonemes.reserve(pron->size());
      for (const auto& p : *pron) {
        auto id = phonemes.find(p);
        if (!id) {
          oov = true;
          break;
        }
        aligned.phonemes.push_back(*id);
      }
    }
    if (oov) {
      ++local.oov_words;
      if (options.oov_policy == OovPolicy::skip_sentence) skip = true;
      continue;
    }
    if (full || total + aligned.phonemes.size() > options.max_len) {
      full = true;
      ++local.truncated_words;
      continue;
    }
    aligned.grapheme = graphemes.encode(word);
    total += aligned.phonemes.size();
    sentence.words.push_back(std::move(aligned));
  }

  if (counts != nullptr) {
    counts->words += local.words;
    counts->oov_words += local.oov_words;
    counts->truncated_words += local.truncated_words;
  }
  if (skip || sentence.words.empty()) return std::nullopt;
  return sentence;
}

ExampleRecord flatten(const AlignedSentence& sentence) {
  ExampleRecord record;
  record.phonemes.reserve(sentence.phoneme_count());
  record.spans.reserve(sentence.words.size());
  for (const auto& w : sentence.words) {
    record.spans.push_back(WordSpan{static_cast<std::uint32_t>(record.phonemes.size()),
                                    static_cast<std::uint32_t>(w.phonemes.size()), w.grapheme});
    record.phonemes.insert(record.phonemes.end(), w.phonemes.begin(), w.phonemes.end());
  }
  return record;
}

void validate_record(const ExampleRecord& record) {
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < record.spans.size(); ++i) {
    const auto& s = record.spans[i];
    if (s.start != cursor) throw FormatError("span " + std::to_string(i) + " does not start where the previous ended");
    if (s.length == 0) throw FormatError("span " + std::to_string(i) + " is empty");
    if (s.grapheme < GraphemeVocab::kUnknown) throw FormatError("span " + std::to_string(i) + " has a PAD grapheme");
    cursor += s.length;
  }
  if (cursor != record.phonemes.size()) throw FormatError("spans do not cover the phoneme sequence");
  for (TokenId id : record.phonemes) {
    if (id < PhonemeVocab::kNumSpecials) throw FormatError("record contains a special phoneme id");
  }
}

std::vector<TokenId> grapheme_labels(const ExampleRecord& record) {
  std::vector<TokenId> labels(record.phonemes.size(), GraphemeVocab::kPad);
  for (const auto& s : record.spans) {
    std::fill_n(labels.begin() + s.start, s.length, s.grapheme);
  }
  return labels;
}

std::vector<ExampleRecord> prepare_corpus(std::span<const std::string> sentences, const Lexicon& lexicon,
                                          const PhonemeVocab& phonemes, const GraphemeVocab& graphemes,
                                          const AlignOptions& options, std::size_t workers, PrepareStats* stats) {
  const std::size_t n = sentences.size();
  std::vector<std::optional<ExampleRecord>> slots(n);
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::vector<AlignCounts> counts(workers);

  auto run = [&](std::size_t worker) {
    // Contiguous chunks keep each slot owned by exactly one thread.
    const std::size_t begin = n * worker / workers;
    const std::size_t end = n * (worker + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      auto words = normalize(sentences[i]);
      if (auto aligned = align_sentence(words, lexicon, phonemes, graphemes, options, &counts[worker])) {
        slots[i] = flatten(*aligned);
      }
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
  }

  std::vector<ExampleRecord> records;
  records.reserve(n);
  PrepareStats local;
  local.sentences = n;
  for (auto& slot : slots) {
    if (slot) {
      records.push_back(std::move(*slot));
    }
  }
  local.kept = records.size();
  local.skipped = n - records.size();
  for (const auto& c : counts) {
    local.words += c.words;
    local.oov_words += c.oov_words;
    local.truncated_words += c.truncated_words;
  }
  if (stats != nullptr) *stats = local;
  return records;
}

}  // namespace plbert
