#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

namespace eqr::jsonl {

/// Calls `fn(record, line_number)` for every non-blank line of `path`.
/// Malformed JSON raises DataError with the 1-based line number.
void for_each(const std::filesystem::path& path,
              const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// Opens `path` for writing, creating parent directories.
std::ofstream open_for_write(const std::filesystem::path& path, bool append = false);

/// Writes `contents` to a temp file next to `path` and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

/// Fetches a required string field or throws DataError.
std::string require_string(const nlohmann::json& record, const char* key);

}  // namespace eqr::jsonl
