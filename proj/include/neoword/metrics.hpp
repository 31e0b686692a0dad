// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace neoword {

// Whitespace-token count.
size_t word_count(std::string_view text);

// Sentences end at '.', '!' or '?' followed by whitespace or end of text;
// only segments containing an alphanumeric character count.
size_t sentence_count(std::string_view text);

// Fraction of words equal to `target` after normalization (lowercase, edge
// punctuation stripped). 0 for empty text.
double word_prevalence(std::string_view text, std::string_view target);

// Number of characters in 0-9.
size_t digit_count(std::string_view text);

// UTF-8 byte count.
size_t byte_length(std::string_view text);

// Words of `text` under the prevalence normalization, in order.
std::vector<std::string> normalized_words(std::string_view text);

}  // namespace neoword
