// SPDX-License-Identifier: Apache-2.0
#include "plbert/masking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plbert/errors.hpp"

namespace plbert {

void MaskPolicy::validate() const {
  for (double p : {select_prob, mask_prob, random_prob, keep_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("mask probabilities must lie in [0, 1]");
  }
  if (std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9) {
    throw UsageError("mask_prob + random_prob + keep_prob must equal 1");
  }
}

MaskedExample apply_mask(const ExampleRecord& record, const MaskPolicy& policy, Rng& rng,
                         std::size_t phoneme_vocab_size) {
  policy.validate();
  if (record.spans.empty()) throw DataError("cannot mask a record with zero words");
  const std::size_t n_symbols =
      phoneme_vocab_size > static_cast<std::size_t>(PhonemeVocab::kNumSpecials)
          ? phoneme_vocab_size - static_cast<std::size_t>(PhonemeVocab::kNumSpecials)
          : 0;

  MaskedExample ex;
  ex.length = record.phonemes.size();
  ex.x = record.phonemes;
  ex.y_p = record.phonemes;
  ex.y_g = grapheme_labels(record);

  for (const auto& span : record.spans) {
    if (!(rng.uniform() < policy.select_prob)) continue;
    const double u = rng.uniform();
    MaskOutcome outcome = MaskOutcome::keep;
    if (u < policy.mask_prob) {
      outcome = MaskOutcome::mask;
    } else if (u < policy.mask_prob + policy.random_prob) {
      outcome = MaskOutcome::random;
    }
    for (std::uint32_t i = span.start; i < span.start + span.length; ++i) {
      if (outcome == MaskOutcome::mask) {
        ex.x[i] = PhonemeVocab::kMask;
      } else if (outcome == MaskOutcome::random) {
        if (n_symbols == 0) throw DataError("RANDOM replacement needs at least one non-special phoneme");
        ex.x[i] = PhonemeVocab::kNumSpecials + static_cast<TokenId>(rng.uniform_int(n_symbols));
      }
      ex.masked.push_back(i);
      ex.outcomes.push_back(outcome);
    }
  }
  return ex;
}

std::uint64_t mask_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t record_index) {
  return derive_seed(global_seed, 0x6d61736bULL, epoch, record_index);
}

BatchTensors collate(std::span<const MaskedExample> examples, std::size_t width, bool score_only_msk) {
  if (examples.empty()) throw UsageError("cannot collate an empty batch");
  for (std::size_t b = 0; b < examples.size(); ++b) {
    if (examples[b].length > width) {
      throw UsageError("example " + std::to_string(b) + " has length " + std::to_string(examples[b].length) +
                       " > batch width " + std::to_string(width));
    }
  }
  BatchTensors t;
  t.batch = examples.size();
  t.width = width;
  const std::size_t cells = t.batch * width;
  t.inputs.assign(cells, PhonemeVocab::kPad);
  t.valid.assign(cells, 0);
  t.mlm_labels.assign(cells, kIgnoreLabel);
  t.p2g_labels.assign(cells, kIgnoreLabel);
  t.lengths.reserve(t.batch);

  for (std::size_t b = 0; b < t.batch; ++b) {
    const auto& ex = examples[b];
    const std::size_t row = b * width;
    t.lengths.push_back(ex.length);
    for (std::size_t i = 0; i < ex.length; ++i) {
      t.inputs[row + i] = ex.x[i];
      t.valid[row + i] = 1;
      t.p2g_labels[row + i] = ex.y_g[i];
    }
    for (std::size_t k = 0; k < ex.masked.size(); ++k) {
      if (score_only_msk && ex.outcomes[k] != MaskOutcome::mask) continue;
      const std::size_t i = ex.masked[k];
      t.mlm_labels[row + i] = ex.y_p[i];
    }
  }
  return t;
}

}  // namespace plbert
