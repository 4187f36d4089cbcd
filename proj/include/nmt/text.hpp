#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nmt::text {

// Invalid UTF-8 sequences decode to U+FFFD.
std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);
std::string to_utf8(char32_t c);

// Whitespace-separated words (ASCII space, tab, newline).
std::vector<std::string> split_words(std::string_view text);
std::size_t count_words(std::string_view text);

std::string trim(std::string_view text);

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace nmt::text
