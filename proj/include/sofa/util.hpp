#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sofa {

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Hex SHA-256 of a file's content; throws error_kind::io when unreadable.
std::string sha256_file(const std::filesystem::path & path);

std::string read_file(const std::filesystem::path & path);

// Writes to a sibling temp file, then renames over `path`. Creates parent dirs.
void write_file(const std::filesystem::path & path, std::string_view content);

// Unicode helpers (ICU-backed).
std::string nfc(std::string_view text);
std::string to_lower(std::string_view text);

// Trims ASCII/Unicode-space at both ends and collapses interior runs to one space.
std::string collapse_whitespace(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

// Lines without terminators; a trailing newline does not add an empty line.
std::vector<std::string_view> split_lines(std::string_view text);

// ASCII slug: "Korean people" -> "korean-people". Non-ASCII bytes pass through.
std::string slugify(std::string_view text);

// Minimal RFC-4180 reader: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> parse_delimited(std::string_view content, char delimiter);

// Quotes a field only when it needs it.
std::string csv_field(std::string_view field, char delimiter = ',');

}  // namespace sofa
