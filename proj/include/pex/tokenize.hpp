#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pex {

// Whitespace word splitting. This is the only tokenization the in-process
// backends use: the unit of scoring for tabular and softmax-toy models is a
// whitespace-delimited word. Remote backends tokenize server-side.
std::vector<std::string> tokenize(std::string_view text);

// Joins tokens with single spaces (inverse of tokenize up to whitespace runs).
std::string join_tokens(const std::vector<std::string>& tokens);

// Number of whitespace-delimited words.
std::size_t word_count(std::string_view text);

}  // namespace pex
