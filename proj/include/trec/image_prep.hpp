#pragma once

#include <string>
#include <vector>

#include "trec/geometry.hpp"
#include "trec/raster.hpp"

namespace trec {

struct TileRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

// Exact partition of a raster into grid_x * grid_y rectangles.
struct TileLayout {
  int grid_x = 0, grid_y = 0;
  std::vector<TileRect> tiles;  // row-major

  static TileLayout regular(int width, int height, int grid_x, int grid_y);
  int tile_index(double x, double y) const;
};

struct PrepConfig {
  double scale_factor = 1.0;     // working / full resolution, (0,1]
  int tile_grid_x = 8;
  int tile_grid_y = 8;
  double clip_limit = 2.0;
  double vignette_gain_floor = 0.2;  // clamp bound for the correction divisor
};

struct PreparedImage {
  std::string id;
  int tripod_index = 0;
  int rotation_index = 0;
  Raster8 rgb;       // undistorted, devignetted, downscaled
  Raster8 gray_eq;   // adaptively equalized grayscale of rgb
  double scale_factor = 1.0;
  CameraIntrinsics intrinsics;  // scaled to working resolution
  TileLayout tiles;
};

// Resamples so the ideal pinhole model holds and divides out the calibrated
// vignette falloff (gain clamped to [floor, 1]). Full-resolution output.
Raster8 undistort_and_devignette(const ImageRecord& img, const CameraIntrinsics& intr,
                                 double vignette_gain_floor = 0.2);

// Per-tile clipped histogram equalization with bilinear blending across tile
// boundaries; any channel count, processed as grayscale (1 channel expected).
Raster8 equalize_adaptive(const Raster8& gray, int grid_x, int grid_y, double clip_limit);

// Area-averaged resampling, factor in (0,1].
Raster8 downscale(const Raster8& img, double factor);

Raster8 to_gray(const Raster8& rgb);

PreparedImage prepare_image(const ImageRecord& img, const CameraIntrinsics& intr,
                            const PrepConfig& config);

}  // namespace trec
