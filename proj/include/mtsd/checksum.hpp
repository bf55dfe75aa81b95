#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "mtsd/model.hpp"

namespace mtsd {

// FNV-1a over raw bytes; used for ensemble/soft-label provenance and the
// run manifest.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t checksum_doubles(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t checksum_model(const MultitaskModel& model);
std::uint64_t checksum_ensemble(std::span<const MultitaskModel> members);
std::uint64_t checksum_file(const std::filesystem::path& file);
std::string checksum_hex(std::uint64_t h);

}  // namespace mtsd
