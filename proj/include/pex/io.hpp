#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pex {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

// Write-then-rename so partially written stage outputs never become visible.
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content);

// JSONL: one JSON object per line.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Json>& records);

// Parallel index loop. Results must be written by index so output order never
// depends on scheduling. jobs <= 1 runs inline.
void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace pex
