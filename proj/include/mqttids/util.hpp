#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mqttids {

// FNV-1a over raw bytes; used for reproducibility checks in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string content_hash_hex(std::string_view bytes);
std::string file_hash_hex(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames into place, so a failed
// command never leaves a partial output behind.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// Minimal CSV helpers. Values containing comma/quote/newline are quoted.
std::string csv_escape(std::string_view field);
std::vector<std::string> csv_split_line(const std::string& line);
std::vector<std::vector<std::string>> csv_read(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace mqttids
