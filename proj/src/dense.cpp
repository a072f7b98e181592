#include "trec/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trec/parallel.hpp"

namespace trec {

PairSelection select_pairs(const std::vector<CameraPose>& poses,
                           const std::vector<SweepImageInfo>& info,
                           const CameraIntrinsics& intr, double min_overlap) {
  PairSelection selection;
  auto in_view = [&](const CameraPose& pose, const Vec3& dir_world) {
    const Vec3 d = pose.rotation * dir_world;
    if (d.z() <= 0) return false;
    const double x = intr.focal_length * d.x() / d.z() + intr.principal_point.x();
    const double y = intr.focal_length * d.y() / d.z() + intr.principal_point.y();
    // Pixel-area bounds keep border samples from dropping out to roundoff.
    return x >= -0.5 && x <= intr.width - 0.5 && y >= -0.5 && y <= intr.height - 0.5;
  };
  // Fraction of reference view directions (at infinity) that land inside the
  // other frustum; parallax is negligible against tunnel-scale depths.
  auto overlap = [&](int a, int b) {
    constexpr int kGrid = 13;
    int inside = 0;
    for (int gy = 0; gy < kGrid; ++gy)
      for (int gx = 0; gx < kGrid; ++gx) {
        const Vec2 px(intr.principal_point.x() +
                          (gx / (kGrid - 1.0) - 0.5) * (intr.width - 1),
                      intr.principal_point.y() +
                          (gy / (kGrid - 1.0) - 0.5) * (intr.height - 1));
        const Vec3 dir = pixel_ray(px, poses[a], intr);
        if (in_view(poses[b], dir)) ++inside;
      }
    return static_cast<double>(inside) / (kGrid * kGrid);
  };

  for (size_t i = 0; i < info.size(); ++i) {
    if (info[i].tripod_index != 0) continue;
    StereoPair best;
    best.reference_image = static_cast<int>(i);
    for (size_t j = 0; j < info.size(); ++j) {
      if (info[j].tripod_index != 1) continue;
      const double o =
          std::min(overlap(static_cast<int>(i), static_cast<int>(j)),
                   overlap(static_cast<int>(j), static_cast<int>(i)));
      if (o > best.overlap) {
        best.overlap = o;
        best.match_image = static_cast<int>(j);
      }
    }
    if (best.match_image >= 0 && best.overlap >= min_overlap) {
      selection.pairs.push_back(best);
    } else {
      selection.warnings.push_back(
          "coverage gap: no stereo partner for rotation step " +
          std::to_string(info[i].rotation_index) + " (best overlap " +
          std::to_string(best.overlap) + ")");
    }
  }
  return selection;
}

namespace {

struct Homography {
  Mat3 h;
  Vec2 apply(const Vec2& p) const {
    const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
    return Vec2(q.x() / q.z(), q.y() / q.z());
  }
};

struct RectifiedPair {
  // rectified pixel -> original pixel, and inverse, per image
  Homography to_original[2];
  Homography from_original[2];
  int width[2] = {0, 0};
  int height = 0;
};

Mat3 intrinsic_matrix(double focal, const Vec2& pp) {
  Mat3 k;
  k << focal, 0, pp.x(), 0, focal, pp.y(), 0, 0, 1;
  return k;
}

// Shared-orientation rectification: both cameras rotated so the baseline is
// the common x axis and scanlines correspond.
RectifiedPair rectify(const CameraPose& pose_a, const CameraPose& pose_b,
                      const CameraIntrinsics& intr) {
  const Vec3 baseline = pose_b.center - pose_a.center;
  if (baseline.norm() < 1e-12)
    fail(ErrorCode::kDegenerateGeometry, "rectification needs a nonzero baseline");
  const Vec3 x_axis = baseline.normalized();
  Vec3 mean_view = pose_a.view_direction() + pose_b.view_direction();
  mean_view -= mean_view.dot(x_axis) * x_axis;
  if (mean_view.norm() < 1e-9) {
    // Views along the baseline; fall back to any perpendicular direction.
    mean_view = std::abs(x_axis.z()) < 0.9 ? x_axis.cross(Vec3(0, 0, 1))
                                           : x_axis.cross(Vec3(0, 1, 0));
  }
  const Vec3 z_axis = mean_view.normalized();
  const Vec3 y_axis = z_axis.cross(x_axis);
  Mat3 r_rect;
  r_rect.row(0) = x_axis.transpose();
  r_rect.row(1) = y_axis.transpose();
  r_rect.row(2) = z_axis.transpose();

  const Mat3 k = intrinsic_matrix(intr.focal_length, intr.principal_point);
  const Mat3 k_inv = k.inverse();
  const CameraPose* poses[2] = {&pose_a, &pose_b};

  // Map original corners to the undisplaced rectified frame to size the
  // output rasters; a shared vertical range keeps scanlines aligned.
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
  double x_lo[2], x_hi[2];
  Mat3 fwd[2];
  for (int i = 0; i < 2; ++i) {
    fwd[i] = r_rect * poses[i]->rotation.transpose() * k_inv;  // px -> rect ray
    x_lo[i] = std::numeric_limits<double>::infinity();
    x_hi[i] = -x_lo[i];
    for (const double cx : {0.0, intr.width - 1.0})
      for (const double cy : {0.0, intr.height - 1.0}) {
        const Vec3 ray = fwd[i] * Vec3(cx, cy, 1.0);
        if (ray.z() <= 1e-9) continue;
        const double rx = intr.focal_length * ray.x() / ray.z();
        const double ry = intr.focal_length * ray.y() / ray.z();
        x_lo[i] = std::min(x_lo[i], rx);
        x_hi[i] = std::max(x_hi[i], rx);
        y_lo = std::min(y_lo, ry);
        y_hi = std::max(y_hi, ry);
      }
  }
  RectifiedPair rp;
  rp.height = std::min(static_cast<int>(std::ceil(y_hi - y_lo)) + 1, 4 * intr.height);
  for (int i = 0; i < 2; ++i) {
    rp.width[i] = std::min(static_cast<int>(std::ceil(x_hi[i] - x_lo[i])) + 1, 4 * intr.width);
    const Mat3 k_rect =
        intrinsic_matrix(intr.focal_length, Vec2(-x_lo[i], -y_lo));
    rp.from_original[i].h = k_rect * fwd[i];
    rp.to_original[i].h = rp.from_original[i].h.inverse();
  }
  return rp;
}

struct FloatPlanes {
  int width = 0, height = 0;
  std::vector<float> plane[3];
  std::vector<uint8_t> valid;

  float at(int c, int x, int y) const { return plane[c][static_cast<size_t>(y) * width + x]; }
  bool ok(int x, int y) const { return valid[static_cast<size_t>(y) * width + x] != 0; }
};

FloatPlanes warp_to_rectified(const Raster8& rgb, const Homography& to_original, int width,
                              int height) {
  FloatPlanes out;
  out.width = width;
  out.height = height;
  for (auto& p : out.plane) p.assign(static_cast<size_t>(width) * height, 0.f);
  out.valid.assign(static_cast<size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 src = to_original.apply(Vec2(x, y));
      if (src.x() < 0 || src.y() < 0 || src.x() > rgb.width() - 1 ||
          src.y() > rgb.height() - 1)
        continue;
      const size_t at = static_cast<size_t>(y) * width + x;
      out.valid[at] = 1;
      for (int c = 0; c < 3; ++c)
        out.plane[c][at] = bilinear(rgb, src.x(), src.y(), c);
    }
  }
  return out;
}

// Summed-area tables per channel for windowed means and correlations.
struct BoxSums {
  int width = 0, height = 0;
  std::vector<double> sum, sum_sq;

  static size_t idx(int width, int x, int y) {
    return static_cast<size_t>(y) * (width + 1) + x;
  }

  void build(const std::vector<float>& plane, int w, int h) {
    width = w;
    height = h;
    sum.assign(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    sum_sq.assign(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = plane[static_cast<size_t>(y) * w + x];
        sum[idx(w, x + 1, y + 1)] =
            v + sum[idx(w, x, y + 1)] + sum[idx(w, x + 1, y)] - sum[idx(w, x, y)];
        sum_sq[idx(w, x + 1, y + 1)] = v * v + sum_sq[idx(w, x, y + 1)] +
                                       sum_sq[idx(w, x + 1, y)] - sum_sq[idx(w, x, y)];
      }
  }

  double window(const std::vector<double>& table, int x0, int y0, int x1, int y1) const {
    return table[idx(width, x1 + 1, y1 + 1)] - table[idx(width, x0, y1 + 1)] -
           table[idx(width, x1 + 1, y0)] + table[idx(width, x0, y0)];
  }
};

struct SearchRange {
  float lo = 0.f, hi = -1.f;
  bool empty() const { return hi < lo; }
};

// Per-cell disparity prior interpolated from the seed correspondences.
std::vector<SearchRange> build_prior(const std::vector<Vec2>& seed_ref_rect,
                                     const std::vector<double>& seed_disp, int width,
                                     int height, int cell, double margin,
                                     int* cells_x_out, int* cells_y_out) {
  const int cells_x = (width + cell - 1) / cell;
  const int cells_y = (height + cell - 1) / cell;
  *cells_x_out = cells_x;
  *cells_y_out = cells_y;
  std::vector<SearchRange> raw(static_cast<size_t>(cells_x) * cells_y);
  for (size_t s = 0; s < seed_ref_rect.size(); ++s) {
    const int cx = std::clamp(static_cast<int>(seed_ref_rect[s].x()) / cell, 0, cells_x - 1);
    const int cy = std::clamp(static_cast<int>(seed_ref_rect[s].y()) / cell, 0, cells_y - 1);
    auto& r = raw[static_cast<size_t>(cy) * cells_x + cx];
    const float d = static_cast<float>(seed_disp[s]);
    if (r.empty()) {
      r.lo = r.hi = d;
    } else {
      r.lo = std::min(r.lo, d);
      r.hi = std::max(r.hi, d);
    }
  }
  SearchRange global;
  for (const auto& r : raw)
    if (!r.empty()) {
      if (global.empty()) {
        global = r;
      } else {
        global.lo = std::min(global.lo, r.lo);
        global.hi = std::max(global.hi, r.hi);
      }
    }
  // Dilate over a 5x5 cell neighbourhood so ranges cover slanted surfaces,
  // then widen by the configured margin; empty cells fall back to the global
  // seed range.
  std::vector<SearchRange> prior(raw.size());
  for (int cy = 0; cy < cells_y; ++cy)
    for (int cx = 0; cx < cells_x; ++cx) {
      SearchRange r;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int px = cx + dx, py = cy + dy;
          if (px < 0 || px >= cells_x || py < 0 || py >= cells_y) continue;
          const auto& c = raw[static_cast<size_t>(py) * cells_x + px];
          if (c.empty()) continue;
          if (r.empty()) {
            r = c;
          } else {
            r.lo = std::min(r.lo, c.lo);
            r.hi = std::max(r.hi, c.hi);
          }
        }
      if (r.empty()) r = global;
      r.lo -= static_cast<float>(margin);
      r.hi += static_cast<float>(margin);
      prior[static_cast<size_t>(cy) * cells_x + cx] = r;
    }
  return prior;
}

struct MatchResult {
  std::vector<float> disparity;   // NaN invalid
  std::vector<float> confidence;
};

// One-directional rectified scanline matching.
MatchResult match_direction(const FloatPlanes& ref, const FloatPlanes& other,
                            const std::vector<SearchRange>& prior, int cells_x, int cell,
                            const DenseMatchConfig& config) {
  const int w = ref.width, h = ref.height;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  MatchResult result;
  result.disparity.assign(static_cast<size_t>(w) * h, nan);
  result.confidence.assign(static_cast<size_t>(w) * h, 0.f);

  BoxSums ref_sums[3], other_sums[3];
  for (int c = 0; c < 3; ++c) {
    ref_sums[c].build(ref.plane[c], w, h);
    other_sums[c].build(other.plane[c], other.width, other.height);
  }

  float global_lo = std::numeric_limits<float>::max(), global_hi = -global_lo;
  for (const auto& r : prior) {
    if (r.empty()) continue;
    global_lo = std::min(global_lo, r.lo);
    global_hi = std::max(global_hi, r.hi);
  }
  if (global_hi < global_lo) return result;
  const int d_lo = static_cast<int>(std::floor(global_lo));
  const int d_hi = static_cast<int>(std::ceil(global_hi));

  const int rad = config.window_radius;
  const int n = (2 * rad + 1) * (2 * rad + 1);
  const size_t plane_size = static_cast<size_t>(w) * h;
  std::vector<float> best(plane_size, -1e9f), left(plane_size, -1e9f),
      right(plane_size, -1e9f), prev(plane_size, -1e9f), cur(plane_size, -1e9f);
  std::vector<int> best_d(plane_size, std::numeric_limits<int>::min());
  std::vector<float> product(plane_size);
  BoxSums product_sums;

  for (int d = d_lo; d <= d_hi; ++d) {
    std::fill(cur.begin(), cur.end(), -1e9f);
    // Correlation of ref(x) with other(x + d) per channel; each channel with
    // texture contributes its own cue, flat channels abstain.
    std::vector<float> ncc_sum(plane_size, 0.f);
    std::vector<uint8_t> contrib(plane_size, 0);
    std::vector<uint8_t> in_range(plane_size, 1);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int ox = x + d;
          const size_t at = static_cast<size_t>(y) * w + x;
          product[at] = (ox >= 0 && ox < other.width)
                            ? ref.plane[c][at] *
                                  other.plane[c][static_cast<size_t>(y) * other.width + ox]
                            : 0.f;
        }
      product_sums.build(product, w, h);
      for (int y = rad; y < h - rad; ++y) {
        for (int x = rad; x < w - rad; ++x) {
          const size_t at = static_cast<size_t>(y) * w + x;
          const int ox = x + d;
          if (ox - rad < 0 || ox + rad >= other.width) {
            in_range[at] = 0;
            continue;
          }
          const double sa = ref_sums[c].window(ref_sums[c].sum, x - rad, y - rad, x + rad, y + rad);
          const double saa =
              ref_sums[c].window(ref_sums[c].sum_sq, x - rad, y - rad, x + rad, y + rad);
          const double sb = other_sums[c].window(other_sums[c].sum, ox - rad, y - rad,
                                                 ox + rad, y + rad);
          const double sbb = other_sums[c].window(other_sums[c].sum_sq, ox - rad, y - rad,
                                                  ox + rad, y + rad);
          const double sab =
              product_sums.window(product_sums.sum, x - rad, y - rad, x + rad, y + rad);
          const double var_a = saa - sa * sa / n;
          const double var_b = sbb - sb * sb / n;
          if (var_a < 1.0 || var_b < 1.0) continue;  // no texture in this channel
          const double cov = sab - sa * sb / n;
          ncc_sum[at] += static_cast<float>(cov / std::sqrt(var_a * var_b));
          contrib[at]++;
        }
      }
    }
    for (int y = rad; y < h - rad; ++y)
      for (int x = rad; x < w - rad; ++x) {
        const size_t at = static_cast<size_t>(y) * w + x;
        if (!in_range[at] || !contrib[at] || !ref.ok(x, y)) continue;
        const auto& range = prior[static_cast<size_t>(y / cell) * cells_x + (x / cell)];
        if (range.empty() || d < range.lo || d > range.hi) continue;
        cur[at] = ncc_sum[at] / static_cast<float>(contrib[at]);
      }

    for (size_t at = 0; at < plane_size; ++at) {
      if (cur[at] > best[at]) {
        left[at] = (best_d[at] == d - 1) ? best[at] : prev[at];
        best[at] = cur[at];
        best_d[at] = d;
        right[at] = -1e9f;
      } else if (best_d[at] == d - 1) {
        right[at] = cur[at];
      }
    }
    std::swap(prev, cur);
  }

  for (size_t at = 0; at < plane_size; ++at) {
    if (best[at] < static_cast<float>(config.min_ncc)) continue;
    float d = static_cast<float>(best_d[at]);
    float curvature = 0.f;
    if (left[at] > -1e8f && right[at] > -1e8f) {
      const float denom = left[at] - 2.f * best[at] + right[at];
      if (denom < -1e-9f) {
        d += 0.5f * (left[at] - right[at]) / denom;
        curvature = -denom;
      }
    }
    result.disparity[at] = d;
    const float peak = std::clamp(best[at], 0.f, 1.f);
    const float sharp = std::clamp(curvature / 0.05f, 0.f, 1.f);
    result.confidence[at] = peak * (0.25f + 0.75f * sharp);
  }
  return result;
}

// Photometric 1D refinement along the scanline (Lucas-Kanade style), a few
// fixed-point steps per valid pixel.
void refine_flow(const FloatPlanes& ref, const FloatPlanes& other, MatchResult* result,
                 int window_radius, int workers) {
  const int w = ref.width, h = ref.height;
  const int rad = std::min(window_radius, 3);
  parallel_for(rad, h - rad, workers, [&](int y) {
    for (int x = rad; x < w - rad; ++x) {
      const size_t at = static_cast<size_t>(y) * w + x;
      float d = result->disparity[at];
      if (!std::isfinite(d)) continue;
      for (int iter = 0; iter < 3; ++iter) {
        double num = 0.0, den = 0.0;
        for (int dy = -rad; dy <= rad; ++dy)
          for (int dx = -rad; dx <= rad; ++dx) {
            const int px = x + dx, py = y + dy;
            const double ox = px + d;
            const int o0 = static_cast<int>(std::floor(ox));
            if (o0 - 1 < 0 || o0 + 2 >= other.width) continue;
            const double fx = ox - o0;
            for (int c = 0; c < 3; ++c) {
              const float* row = &other.plane[c][static_cast<size_t>(py) * other.width];
              const double v0 = row[o0], v1 = row[o0 + 1];
              const double interp = v0 * (1 - fx) + v1 * fx;
              const double grad = 0.5 * (row[o0 + 1] - row[o0 - 1]) * (1 - fx) +
                                  0.5 * (row[o0 + 2] - row[o0]) * fx;
              const double err =
                  ref.plane[c][static_cast<size_t>(py) * w + px] - interp;
              num += err * grad;
              den += grad * grad;
            }
          }
        if (den < 1e-9) break;
        const double step = std::clamp(num / den, -0.5, 0.5);
        d += static_cast<float>(step);
        if (std::abs(step) < 1e-3) break;
      }
      if (std::abs(d - result->disparity[at]) <= 1.0f) result->disparity[at] = d;
    }
  });
}

float sample_disparity(const MatchResult& m, int width, int height, double x, double y) {
  const int xi = static_cast<int>(std::lround(x));
  const int yi = static_cast<int>(std::lround(y));
  if (xi < 0 || xi >= width || yi < 0 || yi >= height)
    return std::numeric_limits<float>::quiet_NaN();
  return m.disparity[static_cast<size_t>(yi) * width + xi];
}

}  // namespace

DisparityMap dense_match(const StereoPair& pair, const PreparedImage& reference,
                         const PreparedImage& match,
                         const std::vector<CameraPose>& poses,
                         const std::vector<std::pair<Vec2, Vec2>>& seeds,
                         const DenseMatchConfig& config) {
  if (static_cast<int>(seeds.size()) < config.min_seeds)
    fail(ErrorCode::kInsufficientMatches,
         "dense matching needs >= " + std::to_string(config.min_seeds) +
             " tie-point seeds, got " + std::to_string(seeds.size()));
  const CameraIntrinsics& intr = reference.intrinsics;
  const RectifiedPair rp =
      rectify(poses[pair.reference_image], poses[pair.match_image], intr);

  const FloatPlanes rect_ref =
      warp_to_rectified(reference.rgb, rp.to_original[0], rp.width[0], rp.height);
  const FloatPlanes rect_match =
      warp_to_rectified(match.rgb, rp.to_original[1], rp.width[1], rp.height);

  // Seeds in rectified coordinates; disparity measured along the x axis.
  std::vector<Vec2> seed_ref_rect;
  std::vector<double> seed_disp;
  for (const auto& [pr, pm] : seeds) {
    const Vec2 rr = rp.from_original[0].apply(pr);
    const Vec2 rm = rp.from_original[1].apply(pm);
    if (std::abs(rr.y() - rm.y()) > 2.0) continue;  // off-epipolar seed
    seed_ref_rect.push_back(rr);
    seed_disp.push_back(rm.x() - rr.x());
  }
  if (static_cast<int>(seed_ref_rect.size()) < config.min_seeds)
    fail(ErrorCode::kInsufficientMatches, "tie-point seeds inconsistent with epipolar geometry");

  int cells_x = 0, cells_y = 0;
  const auto prior =
      build_prior(seed_ref_rect, seed_disp, rp.width[0], rp.height, config.prior_cell_px,
                  config.search_margin_px, &cells_x, &cells_y);
  // Mirror prior for the right-to-left pass.
  std::vector<Vec2> seed_match_rect;
  std::vector<double> seed_disp_rev;
  for (size_t s = 0; s < seed_ref_rect.size(); ++s) {
    seed_match_rect.push_back(seed_ref_rect[s] + Vec2(seed_disp[s], 0));
    seed_disp_rev.push_back(-seed_disp[s]);
  }
  int cells_x_rev = 0, cells_y_rev = 0;
  const auto prior_rev =
      build_prior(seed_match_rect, seed_disp_rev, rp.width[1], rp.height,
                  config.prior_cell_px, config.search_margin_px, &cells_x_rev, &cells_y_rev);

  MatchResult forward =
      match_direction(rect_ref, rect_match, prior, cells_x, config.prior_cell_px, config);
  MatchResult backward = match_direction(rect_match, rect_ref, prior_rev, cells_x_rev,
                                         config.prior_cell_px, config);

  if (config.refine_subpixel_flow) {
    refine_flow(rect_ref, rect_match, &forward, config.window_radius, config.workers);
    refine_flow(rect_match, rect_ref, &backward, config.window_radius, config.workers);
  }

  // Left-right consistency in rectified space.
  for (int y = 0; y < rp.height; ++y)
    for (int x = 0; x < rp.width[0]; ++x) {
      const size_t at = static_cast<size_t>(y) * rp.width[0] + x;
      const float d = forward.disparity[at];
      if (!std::isfinite(d)) continue;
      const float back = sample_disparity(backward, rp.width[1], rp.height, x + d, y);
      if (!std::isfinite(back) ||
          std::abs(d + back) > static_cast<float>(config.lr_threshold_px)) {
        forward.disparity[at] = std::numeric_limits<float>::quiet_NaN();
        forward.confidence[at] = 0.f;
      }
    }

  // Resample into the original reference geometry as 2-vector offsets.
  DisparityMap map;
  map.reference_image = pair.reference_image;
  map.match_image = pair.match_image;
  map.offsets = RasterF(intr.width, intr.height, 2, std::numeric_limits<float>::quiet_NaN());
  map.confidence = RasterF(intr.width, intr.height, 1, 0.f);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Vec2 rr = rp.from_original[0].apply(Vec2(x, y));
      const int rx = static_cast<int>(std::lround(rr.x()));
      const int ry = static_cast<int>(std::lround(rr.y()));
      if (rx < 0 || rx >= rp.width[0] || ry < 0 || ry >= rp.height) continue;
      const size_t at = static_cast<size_t>(ry) * rp.width[0] + rx;
      const float d = forward.disparity[at];
      if (!std::isfinite(d)) continue;
      // Stay on the epipolar line: match position derived in rectified
      // coordinates at this pixel's exact rectified row.
      const Vec2 match_rect(rr.x() + d, rr.y());
      const Vec2 match_orig = rp.to_original[1].apply(match_rect);
      if (match_orig.x() < 0 || match_orig.y() < 0 || match_orig.x() > intr.width - 1 ||
          match_orig.y() > intr.height - 1)
        continue;
      map.offsets.at(x, y, 0) = static_cast<float>(match_orig.x() - x);
      map.offsets.at(x, y, 1) = static_cast<float>(match_orig.y() - y);
      map.confidence.at(x, y) = forward.confidence[at];
    }
  }
  return map;
}

}  // namespace trec
