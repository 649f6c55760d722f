#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "recme/model.hpp"

namespace recme {

// Checkpoint container, all integers little-endian:
//
//   "RSID" | u16 version | u32 header_len | header (JSON text, header_len bytes)
//   | parameter arrays as f64, in manifest order | u32 CRC-32 of all preceding bytes
//
// The header carries the architecture spec, a manifest of
// {name, shape, offset} (byte offset into the parameter section) and the
// speaker registry.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state);
ModelState parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace recme
