#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace codepipe::utf8 {

/// Byte offsets of every code point start, plus a final entry equal to
/// text.size(). Invalid bytes each count as one character.
std::vector<std::size_t> char_offsets(std::string_view text);

std::size_t char_count(std::string_view text);

}  // namespace codepipe::utf8
