#pragma once

#include <filesystem>
#include <string>

#include "trec/raster.hpp"

namespace trec {

// Binary portable pixmap/graymap (P6/P5), 8 bit.
Raster8 read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Raster8& img);

// Portable float map ("Pf" grayscale / "PF" color), little-endian,
// bottom-to-top row order as the format prescribes.
RasterF read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const RasterF& img);

}  // namespace trec
