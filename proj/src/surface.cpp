#include "trec/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "trec/image_io.hpp"
#include "trec/keyvalue.hpp"

namespace trec {

bool GridSpec::compatible(const GridSpec& other) const {
  return (origin - other.origin).norm() < 1e-12 &&
         (frame - other.frame).cwiseAbs().maxCoeff() < 1e-12 &&
         axial_extent == other.axial_extent && axial_bin == other.axial_bin &&
         azimuth_bins == other.azimuth_bins;
}

bool GridSpec::locate(const Vec3& point, int* azimuth, int* axial, double* radius) const {
  const Vec3 q = frame * (point - origin);
  const double ax = q.x() + axial_extent / 2.0;
  if (ax < 0.0 || ax >= axial_extent) return false;
  *axial = std::min(axial_bins() - 1, static_cast<int>(ax / axial_bin));
  const double theta = std::atan2(q.z(), q.y());  // [-pi, pi)
  int az = static_cast<int>((theta + M_PI) / azimuth_bin());
  if (az >= azimuth_bins) az -= azimuth_bins;
  if (az < 0) az = 0;
  *azimuth = az;
  *radius = std::hypot(q.y(), q.z());
  return true;
}

double GridSpec::azimuth_angle(int azimuth_bin_index) const {
  return (azimuth_bin_index + 0.5) * azimuth_bin() - M_PI;
}

double GridSpec::axial_position(int axial_bin_index) const {
  return (axial_bin_index + 0.5) * axial_bin - axial_extent / 2.0;
}

Vec3 GridSpec::bin_center_direction(int azimuth, int axial, double radius) const {
  const double theta = azimuth_angle(azimuth);
  const Vec3 local(axial_position(axial), radius * std::cos(theta),
                   radius * std::sin(theta));
  return origin + frame.transpose() * local;
}

SphericalGrid SphericalGrid::empty(const GridSpec& spec) {
  SphericalGrid grid;
  grid.spec = spec;
  grid.radius = RasterF(spec.azimuth_bins, spec.axial_bins(), 1, 0.f);
  grid.texture = RasterF(spec.azimuth_bins, spec.axial_bins(), 3, 0.f);
  grid.weight = RasterF(spec.azimuth_bins, spec.axial_bins(), 1, 0.f);
  return grid;
}

void GridAccumulator::add(const Vec3& global_point, double weight, float r, float g,
                          float b) {
  if (!(weight > 0.0)) return;
  int azimuth, axial;
  double radius;
  if (!spec_.locate(global_point, &azimuth, &axial, &radius)) return;
  Sample s;
  s.bin = axial * spec_.azimuth_bins + azimuth;
  s.radius = static_cast<float>(radius);
  s.weight = static_cast<float>(weight);
  s.rgb[0] = r;
  s.rgb[1] = g;
  s.rgb[2] = b;
  samples_.push_back(s);
}

namespace {

// Weighted lower median: smallest value whose cumulative weight reaches half
// the total.
template <typename GetValue, typename GetWeight>
float weighted_median(std::vector<int>& order, const GetValue& value,
                      const GetWeight& weight) {
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return value(a) < value(b); });
  double total = 0.0;
  for (int i : order) total += weight(i);
  double cum = 0.0;
  for (int i : order) {
    cum += weight(i);
    if (cum >= 0.5 * total) return value(i);
  }
  return value(order.back());
}

}  // namespace

SphericalGrid GridAccumulator::finalize(double mad_multiplier) const {
  SphericalGrid grid = SphericalGrid::empty(spec_);
  if (samples_.empty()) return grid;

  std::vector<int> order(samples_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return samples_[a].bin < samples_[b].bin; });

  size_t run_start = 0;
  std::vector<int> run;
  while (run_start < order.size()) {
    const int bin = samples_[order[run_start]].bin;
    size_t run_end = run_start;
    run.clear();
    while (run_end < order.size() && samples_[order[run_end]].bin == bin)
      run.push_back(order[run_end++]);

    auto radius_of = [&](int i) { return samples_[i].radius; };
    auto weight_of = [&](int i) { return samples_[i].weight; };
    std::vector<int> med_order = run;
    const float center = weighted_median(med_order, radius_of, weight_of);
    std::vector<float> deviations;
    deviations.reserve(run.size());
    std::vector<int> dev_order(run.size());
    std::iota(dev_order.begin(), dev_order.end(), 0);
    for (int i : run) deviations.push_back(std::abs(samples_[i].radius - center));
    auto dev_of = [&](int i) { return deviations[i]; };
    auto dev_weight = [&](int i) { return samples_[run[i]].weight; };
    const float mad = weighted_median(dev_order, dev_of, dev_weight);
    // A vanishing MAD (half the weight agrees exactly) rejects any sample
    // that deviates at all beyond numerical noise.
    const float cutoff =
        static_cast<float>(mad_multiplier) * std::max(mad, 1e-6f);

    double wsum = 0.0, wr = 0.0, wrgb[3] = {0, 0, 0};
    for (int i : run) {
      if (std::abs(samples_[i].radius - center) > cutoff) continue;
      wsum += samples_[i].weight;
      wr += static_cast<double>(samples_[i].weight) * samples_[i].radius;
      for (int c = 0; c < 3; ++c)
        wrgb[c] += static_cast<double>(samples_[i].weight) * samples_[i].rgb[c];
    }
    if (wsum > 0.0) {
      const int axial = bin / spec_.azimuth_bins;
      const int azimuth = bin % spec_.azimuth_bins;
      grid.radius.at(azimuth, axial) = static_cast<float>(wr / wsum);
      grid.weight.at(azimuth, axial) = static_cast<float>(wsum);
      for (int c = 0; c < 3; ++c)
        grid.texture.at(azimuth, axial, c) = static_cast<float>(wrgb[c] / wsum);
    }
    run_start = run_end;
  }
  return grid;
}

namespace {

// Midpoint of the shortest segment between two viewing rays.
std::optional<Vec3> two_ray_midpoint(const Vec3& c1, const Vec3& d1, const Vec3& c2,
                                     const Vec3& d2) {
  const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2);
  const Vec3 w = c2 - c1;
  const double denom = a * c - b * b;
  if (denom < 1e-15) return std::nullopt;  // parallel rays
  const double t = (w.dot(d1) * c - w.dot(d2) * b) / denom;
  const double s = (w.dot(d1) * b - w.dot(d2) * a) / denom;
  if (t <= 0.0 || s <= 0.0) return std::nullopt;  // behind a camera
  return 0.5 * (c1 + t * d1 + c2 + s * d2);
}

}  // namespace

SphericalGrid reconstruct_patch(const DisparityMap& disparity,
                                const std::vector<CameraPose>& poses,
                                const CameraIntrinsics& intr,
                                const Raster8& reference_rgb, const GridSpec& spec,
                                const PatchConfig& config) {
  const CameraPose& ref_pose = poses[disparity.reference_image];
  const CameraPose& match_pose = poses[disparity.match_image];
  GridAccumulator acc(spec);
  size_t added = 0;
  for (int y = 0; y < disparity.offsets.height(); y += config.pixel_stride) {
    for (int x = 0; x < disparity.offsets.width(); x += config.pixel_stride) {
      if (!disparity.valid_at(x, y)) continue;
      const float conf = disparity.confidence.at(x, y);
      if (conf < config.min_confidence) continue;
      const Vec2 ref_px(x, y);
      const Vec2 match_px(x + disparity.offsets.at(x, y, 0),
                          y + disparity.offsets.at(x, y, 1));
      const Vec3 d1 = pixel_ray(ref_px, ref_pose, intr);
      const Vec3 d2 = pixel_ray(match_px, match_pose, intr);
      const auto point = two_ray_midpoint(ref_pose.center, d1, match_pose.center, d2);
      if (!point) continue;
      acc.add(*point, conf, reference_rgb.at(x, y, 0), reference_rgb.at(x, y, 1),
              reference_rgb.at(x, y, 2));
      ++added;
    }
  }
  if (added == 0) return SphericalGrid::empty(spec);  // empty patch, caller warns
  return acc.finalize(config.mad_multiplier);
}

namespace {

// City-block distance to the nearest empty bin, wrapping in azimuth.
std::vector<float> distance_to_boundary(const RasterF& weight) {
  const int w = weight.width(), h = weight.height();
  constexpr float kInf = 1e9f;
  std::vector<float> dist(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      dist[static_cast<size_t>(y) * w + x] = weight.at(x, y) > 0.f ? kInf : 0.f;
  auto at = [&](int x, int y) -> float& {
    return dist[static_cast<size_t>(y) * w + ((x % w) + w) % w];
  };
  // Axial borders count as boundary.
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float best = at(x, y);
        best = std::min(best, at(x - 1, y) + 1.f);
        if (y > 0) best = std::min(best, at(x, y - 1) + 1.f);
        else best = std::min(best, 1.f);
        at(x, y) = best;
      }
    for (int y = h - 1; y >= 0; --y)
      for (int x = w - 1; x >= 0; --x) {
        float best = at(x, y);
        best = std::min(best, at(x + 1, y) + 1.f);
        if (y < h - 1) best = std::min(best, at(x, y + 1) + 1.f);
        else best = std::min(best, 1.f);
        at(x, y) = best;
      }
  }
  return dist;
}

// Normalized box blur over valid bins, wrapping in azimuth; two passes
// approximate a Gaussian.
RasterF normalized_blur(const RasterF& value, const RasterF& mask, int radius,
                        int passes = 2) {
  const int w = value.width(), h = value.height();
  RasterF num(w, h, 1, 0.f), den(w, h, 1, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float m = mask.at(x, y) > 0.f ? 1.f : 0.f;
      num.at(x, y) = m * value.at(x, y);
      den.at(x, y) = m;
    }
  auto box = [&](RasterF& img) {
    RasterF tmp(w, h, 1, 0.f);
    // Horizontal with wrap.
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += img.at(((k % w) + w) % w, y);
      for (int x = 0; x < w; ++x) {
        tmp.at(x, y) = static_cast<float>(acc / (2 * radius + 1));
        const int drop = ((x - radius) % w + w) % w;
        const int take = ((x + radius + 1) % w + w) % w;
        acc += img.at(take, y) - img.at(drop, y);
      }
    }
    // Vertical, clamped.
    RasterF out(w, h, 1, 0.f);
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) {
        double acc = 0.0;
        int count = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = y + k;
          if (yy < 0 || yy >= h) continue;
          acc += tmp.at(x, yy);
          ++count;
        }
        out.at(x, y) = static_cast<float>(acc / std::max(1, count));
      }
    }
    img = out;
  };
  for (int p = 0; p < passes; ++p) {
    box(num);
    box(den);
  }
  RasterF result(w, h, 1, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      result.at(x, y) = den.at(x, y) > 1e-12f ? num.at(x, y) / den.at(x, y) : 0.f;
  return result;
}

}  // namespace

SphericalGrid merge_patches(const std::vector<SphericalGrid>& patches,
                            const MergeConfig& config) {
  if (patches.empty()) fail(ErrorCode::kInvalidArgument, "no patches to merge");
  for (const auto& p : patches)
    if (!p.spec.compatible(patches[0].spec))
      fail(ErrorCode::kInvalidArgument, "patch grid definitions are incompatible");

  const int w = patches[0].spec.azimuth_bins;
  const int h = patches[0].spec.axial_bins();

  // Feathered per-patch weights and base/detail decomposition.
  std::vector<std::vector<float>> feathered(patches.size());
  std::vector<RasterF> base(patches.size());
  for (size_t p = 0; p < patches.size(); ++p) {
    const auto dist = distance_to_boundary(patches[p].weight);
    feathered[p].resize(static_cast<size_t>(w) * h, 0.f);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t at = static_cast<size_t>(y) * w + x;
        if (patches[p].weight.at(x, y) <= 0.f) continue;
        const float ramp =
            std::min(1.f, dist[at] / static_cast<float>(config.feather_bins));
        feathered[p][at] = patches[p].weight.at(x, y) * std::max(ramp, 1e-3f);
      }
    base[p] = normalized_blur(patches[p].radius, patches[p].weight, config.base_blur_bins);
  }

  SphericalGrid merged = SphericalGrid::empty(patches[0].spec);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t at = static_cast<size_t>(y) * w + x;
      double wsum = 0.0;
      int contributors = 0, first = -1;
      bool all_equal = true;
      for (size_t p = 0; p < patches.size(); ++p) {
        if (feathered[p][at] <= 0.f) continue;
        if (first < 0) {
          first = static_cast<int>(p);
        } else if (patches[p].radius.at(x, y) != patches[first].radius.at(x, y) ||
                   patches[p].texture.at(x, y, 0) != patches[first].texture.at(x, y, 0) ||
                   patches[p].texture.at(x, y, 1) != patches[first].texture.at(x, y, 1) ||
                   patches[p].texture.at(x, y, 2) != patches[first].texture.at(x, y, 2)) {
          all_equal = false;
        }
        wsum += feathered[p][at];
        ++contributors;
      }
      if (contributors == 0) continue;
      if (all_equal) {
        // Identical contributions pass through bit for bit.
        merged.radius.at(x, y) = patches[first].radius.at(x, y);
        for (int c = 0; c < 3; ++c)
          merged.texture.at(x, y, c) = patches[first].texture.at(x, y, c);
        merged.weight.at(x, y) = static_cast<float>(wsum);
        continue;
      }
      // Cross-faded low-frequency component plus the detail of the
      // dominant patch.
      double base_blend = 0.0, tex[3] = {0, 0, 0};
      double best_weight = -1.0;
      float detail = 0.f;
      for (size_t p = 0; p < patches.size(); ++p) {
        const float fw = feathered[p][at];
        if (fw <= 0.f) continue;
        base_blend += fw * base[p].at(x, y);
        for (int c = 0; c < 3; ++c) tex[c] += fw * patches[p].texture.at(x, y, c);
        const float det = patches[p].radius.at(x, y) - base[p].at(x, y);
        if (fw > best_weight || (fw == best_weight && det < detail)) {
          best_weight = fw;
          detail = det;
        }
      }
      merged.radius.at(x, y) = static_cast<float>(base_blend / wsum + detail);
      for (int c = 0; c < 3; ++c)
        merged.texture.at(x, y, c) = static_cast<float>(tex[c] / wsum);
      merged.weight.at(x, y) = static_cast<float>(wsum);
    }
  }
  return merged;
}

Profile extract_profile(const SphericalGrid& model, double station, int max_fill_bins) {
  const GridSpec& spec = model.spec;
  const double half = spec.axial_extent / 2.0;
  if (station < -half || station > half)
    fail(ErrorCode::kOutOfRange, "station outside the model extent");

  // Neighbouring bin rows around the station plane.
  const double pos = (station + half) / spec.axial_bin - 0.5;
  int y0 = static_cast<int>(std::floor(pos));
  double t = pos - y0;
  if (y0 < 0) {
    y0 = 0;
    t = 0.0;
  }
  int y1 = y0 + 1;
  if (y1 >= spec.axial_bins()) {
    y1 = spec.axial_bins() - 1;
    t = 0.0;
  }

  std::vector<double> ring(spec.azimuth_bins, std::numeric_limits<double>::quiet_NaN());
  for (int x = 0; x < spec.azimuth_bins; ++x) {
    const bool has0 = model.has(x, y0), has1 = model.has(x, y1);
    if (t == 0.0) {
      if (has0) ring[x] = model.radius.at(x, y0);
    } else if (has0 && has1) {
      ring[x] = (1.0 - t) * model.radius.at(x, y0) + t * model.radius.at(x, y1);
    }
  }
  // Bridge short gaps by circular linear interpolation; longer runs stay holes.
  std::vector<double> filled = ring;
  const int n = spec.azimuth_bins;
  auto wrap = [n](int x) { return ((x % n) + n) % n; };
  for (int x = 0; x < n; ++x) {
    if (!std::isnan(ring[x]) || std::isnan(ring[wrap(x - 1)])) continue;
    // x starts a hole run; measure it.
    int len = 0;
    while (len < n && std::isnan(ring[wrap(x + len)])) ++len;
    if (len > max_fill_bins || len >= n) continue;
    const double a = ring[wrap(x - 1)];
    const double b = ring[wrap(x + len)];
    for (int k = 0; k < len; ++k) {
      const double f = static_cast<double>(k + 1) / (len + 1);
      filled[wrap(x + k)] = (1.0 - f) * a + f * b;
    }
  }
  // A fully empty ring would have no run starts; holes covering everything
  // stay holes.

  Profile profile;
  profile.station = station;
  for (int x = 0; x < n; ++x) {
    if (std::isnan(filled[x])) continue;
    profile.samples.push_back(Profile::Sample{spec.azimuth_angle(x), filled[x]});
  }
  return profile;
}

DeviationResult compare_models(const SphericalGrid& model, const SphericalGrid& reference) {
  if (!model.spec.compatible(reference.spec))
    fail(ErrorCode::kInvalidArgument, "models use different grid definitions");
  const int w = model.spec.azimuth_bins, h = model.spec.axial_bins();
  DeviationResult result;
  result.deviation = RasterF(w, h, 1, std::numeric_limits<float>::quiet_NaN());
  std::vector<double> magnitudes;
  double sum = 0.0, sq = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!model.has(x, y) || !reference.has(x, y)) continue;
      const double d =
          static_cast<double>(model.radius.at(x, y)) - reference.radius.at(x, y);
      result.deviation.at(x, y) = static_cast<float>(d);
      sum += d;
      sq += d * d;
      magnitudes.push_back(std::abs(d));
    }
  if (magnitudes.empty())
    fail(ErrorCode::kNoOverlap, "models have no overlapping coverage");
  result.stats.valid_bins = magnitudes.size();
  result.stats.mean = sum / magnitudes.size();
  result.stats.rms = std::sqrt(sq / magnitudes.size());
  std::sort(magnitudes.begin(), magnitudes.end());
  result.stats.p95_abs =
      magnitudes[std::min(magnitudes.size() - 1,
                          static_cast<size_t>(0.95 * (magnitudes.size() - 1) + 0.5))];
  result.stats.max_abs = magnitudes.back();
  return result;
}

Raster8 render_deviation(const RasterF& deviation, double range_m) {
  Raster8 img(deviation.width(), deviation.height(), 3, 0);
  for (int y = 0; y < deviation.height(); ++y)
    for (int x = 0; x < deviation.width(); ++x) {
      const float d = deviation.at(x, y);
      if (!std::isfinite(d)) {
        img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = 30;
        continue;
      }
      // Blue (negative) over white to red (positive).
      const double t = std::clamp(d / range_m, -1.0, 1.0);
      if (t >= 0) {
        img.at(x, y, 0) = 255;
        img.at(x, y, 1) = to_u8(255 * (1.0 - t));
        img.at(x, y, 2) = to_u8(255 * (1.0 - t));
      } else {
        img.at(x, y, 0) = to_u8(255 * (1.0 + t));
        img.at(x, y, 1) = to_u8(255 * (1.0 + t));
        img.at(x, y, 2) = 255;
      }
    }
  return img;
}

void save_grid(const std::filesystem::path& basename, const SphericalGrid& grid) {
  KeyValueFile meta;
  meta.set_double("origin_x", grid.spec.origin.x());
  meta.set_double("origin_y", grid.spec.origin.y());
  meta.set_double("origin_z", grid.spec.origin.z());
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      meta.set_double("frame_" + std::to_string(r) + std::to_string(c), grid.spec.frame(r, c));
  meta.set_double("axial_extent", grid.spec.axial_extent);
  meta.set_double("axial_bin", grid.spec.axial_bin);
  meta.set_int("azimuth_bins", grid.spec.azimuth_bins);
  meta.save(basename.string() + "_meta.txt");

  write_pfm(basename.string() + "_radius.pfm", grid.radius);
  write_pfm(basename.string() + "_weight.pfm", grid.weight);
  Raster8 tex(grid.texture.width(), grid.texture.height(), 3);
  for (int y = 0; y < tex.height(); ++y)
    for (int x = 0; x < tex.width(); ++x)
      for (int c = 0; c < 3; ++c) tex.at(x, y, c) = to_u8(grid.texture.at(x, y, c));
  write_pnm(basename.string() + "_texture.ppm", tex);
}

SphericalGrid load_grid(const std::filesystem::path& basename) {
  const KeyValueFile meta = KeyValueFile::load(basename.string() + "_meta.txt");
  SphericalGrid grid;
  grid.spec.origin = Vec3(meta.require_double("origin_x"), meta.require_double("origin_y"),
                          meta.require_double("origin_z"));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      grid.spec.frame(r, c) = meta.require_double("frame_" + std::to_string(r) + std::to_string(c));
  grid.spec.axial_extent = meta.require_double("axial_extent");
  grid.spec.axial_bin = meta.require_double("axial_bin");
  grid.spec.azimuth_bins = meta.get_int("azimuth_bins", 0);

  grid.radius = read_pfm(basename.string() + "_radius.pfm");
  grid.weight = read_pfm(basename.string() + "_weight.pfm");
  const Raster8 tex = read_pnm(basename.string() + "_texture.ppm");
  grid.texture = RasterF(tex.width(), tex.height(), 3, 0.f);
  for (int y = 0; y < tex.height(); ++y)
    for (int x = 0; x < tex.width(); ++x)
      for (int c = 0; c < 3; ++c) grid.texture.at(x, y, c) = tex.at(x, y, c);
  if (grid.radius.width() != grid.spec.azimuth_bins ||
      grid.radius.height() != grid.spec.axial_bins())
    fail(ErrorCode::kIoError, "grid rasters do not match the grid definition");
  return grid;
}

void export_mesh_ply(const std::filesystem::path& path, const SphericalGrid& grid) {
  const int w = grid.spec.azimuth_bins, h = grid.spec.axial_bins();
  std::vector<int> vertex_id(static_cast<size_t>(w) * h, -1);
  std::vector<Vec3> vertices;
  std::vector<std::array<uint8_t, 3>> colors;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!grid.has(x, y)) continue;
      vertex_id[static_cast<size_t>(y) * w + x] = static_cast<int>(vertices.size());
      vertices.push_back(grid.spec.bin_center_direction(x, y, grid.radius.at(x, y)));
      colors.push_back({to_u8(grid.texture.at(x, y, 0)), to_u8(grid.texture.at(x, y, 1)),
                        to_u8(grid.texture.at(x, y, 2))});
    }
  std::vector<std::array<int, 3>> faces;
  auto id = [&](int x, int y) { return vertex_id[static_cast<size_t>(y) * w + ((x % w) + w) % w]; };
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int a = id(x, y), b = id(x + 1, y), c = id(x, y + 1), d = id(x + 1, y + 1);
      if (a >= 0 && b >= 0 && c >= 0) faces.push_back({a, b, c});
      if (b >= 0 && d >= 0 && c >= 0) faces.push_back({b, d, c});
    }

  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  char buf[256];
  for (size_t i = 0; i < vertices.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %d %d %d\n", vertices[i].x(),
                  vertices[i].y(), vertices[i].z(), colors[i][0], colors[i][1],
                  colors[i][2]);
    out << buf;
  }
  for (const auto& f : faces) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
}

std::string format_deviation_report(const DeviationStats& stats) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "deviation statistics over %zu bins\n"
                "  mean   %+.4f mm\n"
                "  rms    %.4f mm\n"
                "  p95    %.4f mm (absolute)\n"
                "  max    %.4f mm (absolute)\n",
                stats.valid_bins, stats.mean * 1000.0, stats.rms * 1000.0,
                stats.p95_abs * 1000.0, stats.max_abs * 1000.0);
  return buf;
}

}  // namespace trec
