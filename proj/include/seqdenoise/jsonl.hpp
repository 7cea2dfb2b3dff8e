#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace seqdenoise {

using json = nlohmann::json;

/// Reads a JSONL file line by line; gzip-compressed files are decompressed
/// transparently. Blank lines are skipped. The callback receives the parsed
/// object and its 1-based line number. Malformed JSON raises ParseError.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t line)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Whole-file read (gzip-transparent).
std::string read_text(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written artifact.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string to_jsonl(const std::vector<json>& rows);

}  // namespace seqdenoise
