#pragma once

#include "msplat/types.hpp"

#include <string>

namespace msplat {

/// PFM with a little-endian (negative) scale marker; rows are stored
/// bottom-up on disk per the format and top-down in memory. 1 or 3 channels.
void write_pfm(const std::string& path, const GridF& image);
GridF read_pfm(const std::string& path);

/// 8-bit PNG; 1 (gray) or 3 (rgb) channels. Reading strips alpha and expands
/// palettes; 16-bit files are rejected.
void write_png(const std::string& path, const GridU8& image);
GridU8 read_png(const std::string& path);

GridU8 to_u8(const GridF& image);  // clamps to [0,1], rounds to 0..255
GridF to_unit(const GridU8& image); // /255

} // namespace msplat
