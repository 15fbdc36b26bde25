#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace poda::util {

std::string sha256_hex(std::string_view data);

// Throws Error{UnreadablePath}.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`. Parent
// directories are created as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

// Splits on '\n', dropping a trailing '\r' from each line. A trailing
// newline does not produce an empty final element.
std::vector<std::string> split_lines(std::string_view text);

// UTC, ISO-8601 with millisecond precision: 2024-01-31T12:00:00.000Z
std::string utc_timestamp_now();

// Maps an arbitrary id to a name safe for use as a single path component.
std::string safe_file_stem(std::string_view id);

}  // namespace poda::util
