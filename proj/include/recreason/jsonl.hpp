#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace recreason {

using json = nlohmann::json;

/// Reads one JSON value per non-blank line. Throws Error("IoError") when the
/// file cannot be opened and Error("ParseError") naming the line otherwise.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Streams lines; `on_line` receives (line_number, text). Blank lines skipped.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, const std::string&)>& on_line);

/// Serializes records as compact JSON, one per line, trailing newline.
std::string to_jsonl(const std::vector<json>& records);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

} // namespace recreason
