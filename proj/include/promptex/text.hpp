#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace promptex::text {

// Lowercased alphanumeric runs; every other byte is a separator. Used by
// the repetition metric and the mock embedders.
std::vector<std::string> tokenize(std::string_view text);

// Whitespace-delimited words after trimming; punctuation stays attached.
std::vector<std::string_view> words(std::string_view text);
std::size_t word_count(std::string_view text);

std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

// Trimmed, lowercased, internal whitespace collapsed to single spaces.
std::string normalize_phrase(std::string_view text);

// Splits on ',' and trims each piece; empty pieces are dropped.
std::vector<std::string> split_commas(std::string_view text);

std::vector<std::string> split(std::string_view text, std::string_view delimiter);
std::string join(const std::vector<std::string>& parts, std::string_view delimiter);

bool starts_with_word(std::string_view text, std::string_view word);

}  // namespace promptex::text
