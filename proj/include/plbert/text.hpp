// SPDX-License-Identifier: Apache-2.0
//
// Minimal rule-based text normalisation for the phonemisation front-end.
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace plbert {

/// English number words for 0..9999, e.g. 1999 -> one thousand nine hundred
/// ninety nine. Throws UsageError outside that range.
std::vector<std::string> number_to_words(int value);

/// Splits `text` into case-folded word tokens.
///  - non-ASCII code points and invalid UTF-8 bytes are dropped;
///  - punctuation separates tokens; an apostrophe is kept only between letters;
///  - letter and digit runs inside a token are split apart;
///  - a digit run of at most four digits without a leading zero is expanded
///    with number_to_words, any other digit run is read digit by digit.
std::vector<std::string> normalize(std::string_view text);

}  // namespace plbert
