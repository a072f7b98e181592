#include "trec/image_prep.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace trec {

TileLayout TileLayout::regular(int width, int height, int grid_x, int grid_y) {
  if (grid_x < 1 || grid_y < 1)
    fail(ErrorCode::kInvalidArgument, "tile grid dims must be >= 1");
  TileLayout layout;
  layout.grid_x = grid_x;
  layout.grid_y = grid_y;
  layout.tiles.reserve(static_cast<size_t>(grid_x) * grid_y);
  for (int ty = 0; ty < grid_y; ++ty) {
    const int y0 = static_cast<int>(static_cast<long long>(height) * ty / grid_y);
    const int y1 = static_cast<int>(static_cast<long long>(height) * (ty + 1) / grid_y);
    for (int tx = 0; tx < grid_x; ++tx) {
      const int x0 = static_cast<int>(static_cast<long long>(width) * tx / grid_x);
      const int x1 = static_cast<int>(static_cast<long long>(width) * (tx + 1) / grid_x);
      layout.tiles.push_back(TileRect{x0, y0, x1, y1});
    }
  }
  return layout;
}

int TileLayout::tile_index(double x, double y) const {
  for (size_t i = 0; i < tiles.size(); ++i)
    if (tiles[i].contains(x, y)) return static_cast<int>(i);
  return -1;
}

Raster8 undistort_and_devignette(const ImageRecord& img, const CameraIntrinsics& intr,
                                 double vignette_gain_floor) {
  intr.validate();
  if (img.pixels.width() != intr.width || img.pixels.height() != intr.height)
    fail(ErrorCode::kInvalidArgument,
         "image " + img.id + ": sensor size does not match intrinsics");
  const Raster8& src = img.pixels;
  Raster8 out(src.width(), src.height(), src.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      // Output grid is the ideal pinhole image; sample the recorded (distorted)
      // image at the corresponding location.
      const Vec2 observed = apply_distortion(Vec2(x, y), intr);
      const double gain =
          std::clamp(intr.vignette_gain(observed), vignette_gain_floor, 1.0);
      for (int c = 0; c < src.channels(); ++c) {
        const double v = bilinear(src, observed.x(), observed.y(), c) / gain;
        out.at(x, y, c) = to_u8(v);
      }
    }
  }
  return out;
}

namespace {

// Clipped-CDF lookup table for one tile. Excess above the clip limit is
// redistributed uniformly; the map is monotone by construction.
std::array<uint8_t, 256> tile_lut(const std::array<uint32_t, 256>& hist, double clip_limit) {
  const uint64_t total = std::accumulate(hist.begin(), hist.end(), uint64_t{0});
  std::array<double, 256> h;
  for (int i = 0; i < 256; ++i) h[i] = hist[i];
  if (total > 0) {
    const double limit = std::max(1.0, clip_limit * static_cast<double>(total) / 256.0);
    double excess = 0.0;
    for (int i = 0; i < 256; ++i) {
      if (h[i] > limit) {
        excess += h[i] - limit;
        h[i] = limit;
      }
    }
    const double incr = excess / 256.0;
    for (int i = 0; i < 256; ++i) h[i] += incr;
  }
  std::array<uint8_t, 256> lut{};
  double cdf = 0.0;
  const double denom = total > 0 ? static_cast<double>(total) : 1.0;
  for (int i = 0; i < 256; ++i) {
    cdf += h[i];
    lut[i] = to_u8(255.0 * cdf / denom);
  }
  return lut;
}

}  // namespace

Raster8 equalize_adaptive(const Raster8& gray, int grid_x, int grid_y, double clip_limit) {
  if (gray.channels() != 1)
    fail(ErrorCode::kInvalidArgument, "equalize_adaptive expects 1 channel");
  if (!(clip_limit > 0.0)) fail(ErrorCode::kInvalidArgument, "clip_limit must be > 0");
  const TileLayout layout = TileLayout::regular(gray.width(), gray.height(), grid_x, grid_y);

  std::vector<std::array<uint8_t, 256>> luts(layout.tiles.size());
  std::vector<double> centers_x(grid_x), centers_y(grid_y);
  for (size_t t = 0; t < layout.tiles.size(); ++t) {
    const TileRect& r = layout.tiles[t];
    std::array<uint32_t, 256> hist{};
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) hist[gray.at(x, y)]++;
    luts[t] = tile_lut(hist, clip_limit);
  }
  for (int tx = 0; tx < grid_x; ++tx) {
    const TileRect& r = layout.tiles[tx];
    centers_x[tx] = 0.5 * (r.x0 + r.x1 - 1);
  }
  for (int ty = 0; ty < grid_y; ++ty) {
    const TileRect& r = layout.tiles[static_cast<size_t>(ty) * grid_x];
    centers_y[ty] = 0.5 * (r.y0 + r.y1 - 1);
  }

  Raster8 out(gray.width(), gray.height(), 1);
  for (int y = 0; y < gray.height(); ++y) {
    // Vertical blend weights between the two nearest tile rows.
    int ty0 = 0;
    while (ty0 + 1 < grid_y && centers_y[ty0 + 1] <= y) ++ty0;
    int ty1 = std::min(ty0 + 1, grid_y - 1);
    if (y < centers_y[ty0]) ty1 = ty0;
    const double dy = centers_y[ty1] - centers_y[ty0];
    const double fy = dy > 0 ? std::clamp((y - centers_y[ty0]) / dy, 0.0, 1.0) : 0.0;
    for (int x = 0; x < gray.width(); ++x) {
      int tx0 = 0;
      while (tx0 + 1 < grid_x && centers_x[tx0 + 1] <= x) ++tx0;
      int tx1 = std::min(tx0 + 1, grid_x - 1);
      if (x < centers_x[tx0]) tx1 = tx0;
      const double dx = centers_x[tx1] - centers_x[tx0];
      const double fx = dx > 0 ? std::clamp((x - centers_x[tx0]) / dx, 0.0, 1.0) : 0.0;
      const uint8_t g = gray.at(x, y);
      const double v00 = luts[static_cast<size_t>(ty0) * grid_x + tx0][g];
      const double v10 = luts[static_cast<size_t>(ty0) * grid_x + tx1][g];
      const double v01 = luts[static_cast<size_t>(ty1) * grid_x + tx0][g];
      const double v11 = luts[static_cast<size_t>(ty1) * grid_x + tx1][g];
      out.at(x, y) =
          to_u8((v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy);
    }
  }
  return out;
}

Raster8 downscale(const Raster8& img, double factor) {
  if (!(factor > 0.0 && factor <= 1.0))
    fail(ErrorCode::kInvalidArgument, "downscale factor must be in (0,1]");
  if (factor == 1.0) return img;
  const int out_w = std::max(1, static_cast<int>(std::lround(img.width() * factor)));
  const int out_h = std::max(1, static_cast<int>(std::lround(img.height() * factor)));
  const double inv = 1.0 / factor;
  // Center-anchored convention: output coordinate u maps to source coordinate
  // u/factor, consistent with scaling intrinsics by the same factor. Pixel i
  // covers [i-0.5, i+0.5) in continuous coordinates.
  Raster8 out(out_w, out_h, img.channels());
  std::vector<double> acc(img.channels());
  for (int oy = 0; oy < out_h; ++oy) {
    const double ay = std::max((oy - 0.5) * inv, -0.5);
    const double by = std::min((oy + 0.5) * inv, img.height() - 0.5);
    const int y_lo = std::max(0, static_cast<int>(std::floor(ay + 0.5)));
    const int y_hi = std::min(img.height() - 1, static_cast<int>(std::ceil(by - 0.5)));
    for (int ox = 0; ox < out_w; ++ox) {
      const double ax = std::max((ox - 0.5) * inv, -0.5);
      const double bx = std::min((ox + 0.5) * inv, img.width() - 0.5);
      const int x_lo = std::max(0, static_cast<int>(std::floor(ax + 0.5)));
      const int x_hi = std::min(img.width() - 1, static_cast<int>(std::ceil(bx - 0.5)));
      std::fill(acc.begin(), acc.end(), 0.0);
      double area = 0.0;
      for (int y = y_lo; y <= y_hi; ++y) {
        const double hy = std::min(y + 0.5, by) - std::max(y - 0.5, ay);
        if (hy <= 0) continue;
        for (int x = x_lo; x <= x_hi; ++x) {
          const double wx = std::min(x + 0.5, bx) - std::max(x - 0.5, ax);
          if (wx <= 0) continue;
          const double w = wx * hy;
          for (int c = 0; c < img.channels(); ++c) acc[c] += w * img.at(x, y, c);
          area += w;
        }
      }
      for (int c = 0; c < img.channels(); ++c)
        out.at(ox, oy, c) = area > 0 ? to_u8(acc[c] / area) : 0;
    }
  }
  return out;
}

Raster8 to_gray(const Raster8& rgb) {
  if (rgb.channels() == 1) return rgb;
  Raster8 gray(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      gray.at(x, y) = to_u8(0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) +
                            0.114 * rgb.at(x, y, 2));
  return gray;
}

PreparedImage prepare_image(const ImageRecord& img, const CameraIntrinsics& intr,
                            const PrepConfig& config) {
  PreparedImage prepared;
  prepared.id = img.id;
  prepared.tripod_index = img.tripod_index;
  prepared.rotation_index = img.rotation_index;
  prepared.scale_factor = config.scale_factor;

  const Raster8 undistorted =
      undistort_and_devignette(img, intr, config.vignette_gain_floor);
  prepared.rgb = downscale(undistorted, config.scale_factor);
  prepared.intrinsics = intr.scaled(config.scale_factor);
  // Keep the scaled sensor size consistent with what downscale produced.
  prepared.intrinsics.width = prepared.rgb.width();
  prepared.intrinsics.height = prepared.rgb.height();
  prepared.gray_eq = equalize_adaptive(to_gray(prepared.rgb), config.tile_grid_x,
                                       config.tile_grid_y, config.clip_limit);
  prepared.tiles = TileLayout::regular(prepared.rgb.width(), prepared.rgb.height(),
                                       config.tile_grid_x, config.tile_grid_y);
  return prepared;
}

}  // namespace trec
