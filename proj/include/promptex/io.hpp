#pragma once

// Small file helpers shared by the CLI and the service.

#include <string>
#include <vector>

#include <json.hpp>

namespace promptex::io {

std::string read_file(const std::string& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& doc);
// Nonempty lines with trailing '\r' removed.
std::vector<std::string> read_lines(const std::string& path);
std::vector<nlohmann::json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& docs);
bool exists(const std::string& path);
void ensure_directory(const std::string& path);

}  // namespace promptex::io
