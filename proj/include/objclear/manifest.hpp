#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace objclear {

using Json = nlohmann::ordered_json;

/// One JSON object per non-blank line.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

/// Resolves `field` of `record` against `base` and checks that it exists.
/// Throws IoError naming the file (and the manifest line) when it does not.
std::filesystem::path manifest_path(const Json& record, const std::string& field,
                                    const std::filesystem::path& base, std::size_t line);

}  // namespace objclear
