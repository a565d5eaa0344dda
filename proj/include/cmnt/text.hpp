#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cmnt {

using Words = std::vector<std::string>;

// Splits on runs of ASCII whitespace.
Words split_words(std::string_view line);
std::string join_words(const Words& words, std::string_view sep = " ");
// Splits on single tabs; an empty line gives an empty list.
Words split_tabs(std::string_view line);

// Lines without their terminators. Throws DataError if the file can't be read.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// True when every code point is ASCII punctuation (empty strings are not).
bool is_punctuation(std::string_view word);
// Splits a UTF-8 string into code points; malformed bytes become single-byte pieces.
std::vector<std::string> utf8_chars(std::string_view s);

}  // namespace cmnt
