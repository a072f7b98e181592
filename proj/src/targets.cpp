#include "trec/targets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>

namespace trec {

namespace {

// Box mean via summed-area table, for the local threshold.
struct IntegralImage {
  int width, height;
  std::vector<double> sum;

  explicit IntegralImage(const Raster8& img)
      : width(img.width()), height(img.height()), sum((width + 1) * (height + 1), 0.0) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        sum[(y + 1) * (width + 1) + (x + 1)] = img.at(x, y) +
                                               sum[y * (width + 1) + (x + 1)] +
                                               sum[(y + 1) * (width + 1) + x] -
                                               sum[y * (width + 1) + x];
  }

  double mean(int x, int y, int radius) const {
    const int x0 = std::max(0, x - radius), x1 = std::min(width - 1, x + radius);
    const int y0 = std::max(0, y - radius), y1 = std::min(height - 1, y + radius);
    const double s = sum[(y1 + 1) * (width + 1) + (x1 + 1)] -
                     sum[y0 * (width + 1) + (x1 + 1)] -
                     sum[(y1 + 1) * (width + 1) + x0] + sum[y0 * (width + 1) + x0];
    return s / ((x1 - x0 + 1) * (y1 - y0 + 1));
  }
};

Raster8 local_threshold(const Raster8& gray, int window, double offset, bool bright) {
  const IntegralImage integral(gray);
  const int radius = window / 2;
  Raster8 binary(gray.width(), gray.height(), 1, 0);
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x) {
      const double mean = integral.mean(x, y, radius);
      const bool on = bright ? gray.at(x, y) > mean + offset : gray.at(x, y) < mean - offset;
      binary.at(x, y) = on ? 255 : 0;
    }
  return binary;
}

Raster8 erode3(const Raster8& b) {
  Raster8 out(b.width(), b.height(), 1, 0);
  for (int y = 1; y < b.height() - 1; ++y)
    for (int x = 1; x < b.width() - 1; ++x) {
      uint8_t v = 255;
      for (int dy = -1; dy <= 1 && v; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (!b.at(x + dx, y + dy)) {
            v = 0;
            break;
          }
      out.at(x, y) = v;
    }
  return out;
}

Raster8 dilate3(const Raster8& b) {
  Raster8 out(b.width(), b.height(), 1, 0);
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x) {
      uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int px = x + dx, py = y + dy;
          if (px >= 0 && px < b.width() && py >= 0 && py < b.height() && b.at(px, py)) {
            v = 255;
            break;
          }
        }
      out.at(x, y) = v;
    }
  return out;
}

struct Blob {
  std::vector<std::pair<int, int>> pixels;
  int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
  double area() const { return static_cast<double>(pixels.size()); }
};

std::vector<Blob> connected_components(const Raster8& binary, size_t min_area,
                                       size_t max_area) {
  std::vector<Blob> blobs;
  Raster8 seen(binary.width(), binary.height(), 1, 0);
  for (int sy = 0; sy < binary.height(); ++sy) {
    for (int sx = 0; sx < binary.width(); ++sx) {
      if (!binary.at(sx, sy) || seen.at(sx, sy)) continue;
      Blob blob;
      std::queue<std::pair<int, int>> frontier;
      frontier.emplace(sx, sy);
      seen.at(sx, sy) = 1;
      while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop();
        blob.pixels.emplace_back(x, y);
        blob.x0 = std::min(blob.x0, x);
        blob.y0 = std::min(blob.y0, y);
        blob.x1 = std::max(blob.x1, x);
        blob.y1 = std::max(blob.y1, y);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px < 0 || px >= binary.width() || py < 0 || py >= binary.height())
              continue;
            if (!binary.at(px, py) || seen.at(px, py)) continue;
            seen.at(px, py) = 1;
            frontier.emplace(px, py);
          }
      }
      if (blob.pixels.size() >= min_area && blob.pixels.size() <= max_area)
        blobs.push_back(std::move(blob));
    }
  }
  return blobs;
}

// Isoperimetric ratio 4 pi A / P^2 with an 8-connected contour length
// (diagonal steps count sqrt(2)).
double blob_circularity(const Blob& blob, const Raster8& binary) {
  double perimeter = 0.0;
  for (const auto& [x, y] : blob.pixels) {
    auto inside = [&](int px, int py) {
      return px >= 0 && px < binary.width() && py >= 0 && py < binary.height() &&
             binary.at(px, py) != 0;
    };
    const bool boundary = !inside(x + 1, y) || !inside(x - 1, y) || !inside(x, y + 1) ||
                          !inside(x, y - 1);
    if (!boundary) continue;
    // Local contour length contribution from the exposed 4-neighborhood.
    int exposed = 0;
    exposed += !inside(x + 1, y);
    exposed += !inside(x - 1, y);
    exposed += !inside(x, y + 1);
    exposed += !inside(x, y - 1);
    perimeter += exposed > 1 ? std::sqrt(2.0) : 1.0;
  }
  if (perimeter <= 0.0) return 0.0;
  return std::min(1.0, 4.0 * M_PI * blob.area() / (perimeter * perimeter));
}

struct HoughCircle {
  double cx = 0, cy = 0, radius = 0;
  double score = 0;  // supported perimeter fraction
};

// Gradient-voting circle Hough restricted to the blob neighbourhood.
HoughCircle hough_circle(const Raster8& gray, const Blob& blob, double min_radius,
                         double max_radius, bool bright) {
  const int margin = static_cast<int>(std::ceil(max_radius)) + 2;
  const int x0 = std::max(1, blob.x0 - margin), x1 = std::min(gray.width() - 2, blob.x1 + margin);
  const int y0 = std::max(1, blob.y0 - margin), y1 = std::min(gray.height() - 2, blob.y1 + margin);
  const int w = x1 - x0 + 1, h = y1 - y0 + 1;
  if (w < 3 || h < 3) return {};

  struct EdgePixel {
    double x, y, gx, gy;
  };
  std::vector<EdgePixel> edges;
  double max_mag = 0.0;
  std::vector<double> mags(static_cast<size_t>(w) * h, 0.0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double gx = (gray.at(x + 1, y) - gray.at(x - 1, y)) * 0.5;
      const double gy = (gray.at(x, y + 1) - gray.at(x, y - 1)) * 0.5;
      const double mag = std::hypot(gx, gy);
      mags[static_cast<size_t>(y - y0) * w + (x - x0)] = mag;
      max_mag = std::max(max_mag, mag);
    }
  const double edge_cut = std::max(4.0, 0.2 * max_mag);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double mag = mags[static_cast<size_t>(y - y0) * w + (x - x0)];
      if (mag < edge_cut) continue;
      const double gx = (gray.at(x + 1, y) - gray.at(x - 1, y)) * 0.5;
      const double gy = (gray.at(x, y + 1) - gray.at(x, y - 1)) * 0.5;
      edges.push_back(EdgePixel{static_cast<double>(x), static_cast<double>(y),
                                gx / mag, gy / mag});
    }

  HoughCircle best;
  std::vector<int> acc(static_cast<size_t>(w) * h);
  const int r_lo = static_cast<int>(std::floor(min_radius));
  const int r_hi = static_cast<int>(std::ceil(max_radius));
  for (int r = r_lo; r <= r_hi; ++r) {
    std::fill(acc.begin(), acc.end(), 0);
    for (const auto& e : edges) {
      // For a bright disk the gradient at the rim points inward.
      const double sign = bright ? 1.0 : -1.0;
      const int cx = static_cast<int>(std::lround(e.x + sign * r * e.gx)) - x0;
      const int cy = static_cast<int>(std::lround(e.y + sign * r * e.gy)) - y0;
      if (cx < 0 || cx >= w || cy < 0 || cy >= h) continue;
      acc[static_cast<size_t>(cy) * w + cx]++;
    }
    for (int cy = 0; cy < h; ++cy)
      for (int cx = 0; cx < w; ++cx) {
        // 3x3 vote pooling absorbs quantization spread.
        int votes = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int px = cx + dx, py = cy + dy;
            if (px >= 0 && px < w && py >= 0 && py < h)
              votes += acc[static_cast<size_t>(py) * w + px];
          }
        const double score = votes / (2.0 * M_PI * r);
        if (score > best.score) {
          best.score = score;
          best.cx = cx + x0;
          best.cy = cy + y0;
          best.radius = r;
        }
      }
  }
  return best;
}

// Intensity-weighted centroid over the disk, background level taken from a
// surrounding annulus.
Vec2 subpixel_centroid(const Raster8& gray, double cx, double cy, double radius,
                       bool bright) {
  const int r_in = static_cast<int>(std::ceil(radius)) + 2;
  const int r_out = r_in + 4;
  double bg_sum = 0.0;
  int bg_count = 0;
  for (int y = static_cast<int>(cy) - r_out; y <= static_cast<int>(cy) + r_out; ++y)
    for (int x = static_cast<int>(cx) - r_out; x <= static_cast<int>(cx) + r_out; ++x) {
      if (!gray.in_bounds(x, y)) continue;
      const double d = std::hypot(x - cx, y - cy);
      if (d > r_in + 1 && d <= r_out) {
        bg_sum += gray.at(x, y);
        ++bg_count;
      }
    }
  const double bg = bg_count > 0 ? bg_sum / bg_count : 0.0;

  double wsum = 0.0, wx = 0.0, wy = 0.0;
  for (int y = static_cast<int>(cy) - r_in; y <= static_cast<int>(cy) + r_in; ++y)
    for (int x = static_cast<int>(cx) - r_in; x <= static_cast<int>(cx) + r_in; ++x) {
      if (!gray.in_bounds(x, y)) continue;
      if (std::hypot(x - cx, y - cy) > r_in) continue;
      const double w =
          bright ? std::max(0.0, gray.at(x, y) - bg) : std::max(0.0, bg - gray.at(x, y));
      wsum += w;
      wx += w * x;
      wy += w * y;
    }
  if (wsum <= 0.0) return Vec2(cx, cy);
  return Vec2(wx / wsum, wy / wsum);
}

}  // namespace

std::vector<TargetObservation> detect_targets(const PreparedImage& image,
                                              const TargetDetectConfig& config) {
  const Raster8 gray = to_gray(image.rgb);
  Raster8 binary = local_threshold(gray, config.threshold_window | 1,
                                   config.threshold_offset, config.bright_on_dark);
  binary = dilate3(erode3(binary));   // open: remove speckle
  binary = erode3(dilate3(binary));   // close: fill pinholes

  const double min_area = 0.5 * M_PI * config.min_radius_px * config.min_radius_px;
  const double max_area = 2.0 * M_PI * config.max_radius_px * config.max_radius_px;
  const auto blobs = connected_components(binary, static_cast<size_t>(min_area),
                                          static_cast<size_t>(max_area));

  std::vector<TargetObservation> detections;
  for (const auto& blob : blobs) {
    const double circularity = blob_circularity(blob, binary);
    if (circularity < config.circularity_tolerance) continue;
    const HoughCircle circle =
        hough_circle(gray, blob, config.min_radius_px, config.max_radius_px,
                     config.bright_on_dark);
    if (circle.score < config.min_hough_score) continue;
    if (circle.radius < config.min_radius_px || circle.radius > config.max_radius_px)
      continue;
    const double margin = config.border_margin_factor * circle.radius;
    if (circle.cx < margin || circle.cy < margin || circle.cx > gray.width() - 1 - margin ||
        circle.cy > gray.height() - 1 - margin)
      continue;

    TargetObservation obs;
    obs.center = subpixel_centroid(gray, circle.cx, circle.cy, circle.radius,
                                   config.bright_on_dark);
    obs.radius = circle.radius;
    obs.circularity = circularity;
    obs.score = circle.score * circularity;
    detections.push_back(obs);
  }
  std::sort(detections.begin(), detections.end(),
            [](const TargetObservation& a, const TargetObservation& b) {
              if (a.center.y() != b.center.y()) return a.center.y() < b.center.y();
              return a.center.x() < b.center.x();
            });
  return detections;
}

namespace {

Mat3 fundamental_from_poses(const CameraPose& a, const CameraPose& b,
                            const CameraIntrinsics& intr) {
  // x_b^T E x_a = 0 for normalized coordinates; E = [t]x R with the relative
  // motion from a to b.
  const Mat3 r = b.rotation * a.rotation.transpose();
  const Vec3 t = b.rotation * (a.center - b.center);
  Mat3 tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  const Mat3 e = tx * r;
  Mat3 k;
  k << intr.focal_length, 0, intr.principal_point.x(), 0, intr.focal_length,
      intr.principal_point.y(), 0, 0, 1;
  const Mat3 k_inv = k.inverse();
  return k_inv.transpose() * e * k_inv;
}

double symmetric_epipolar_distance(const Mat3& f, const Vec2& a, const Vec2& b) {
  const Vec3 la = f * Vec3(a.x(), a.y(), 1.0);
  const Vec3 lb = f.transpose() * Vec3(b.x(), b.y(), 1.0);
  const double da = std::abs(la.x() * b.x() + la.y() * b.y() + la.z()) /
                    std::max(1e-15, std::hypot(la.x(), la.y()));
  const double db = std::abs(lb.x() * a.x() + lb.y() * a.y() + lb.z()) /
                    std::max(1e-15, std::hypot(lb.x(), lb.y()));
  return std::max(da, db);
}

}  // namespace

std::vector<LocalTarget> correspond_targets(
    const std::vector<std::vector<TargetObservation>>& detections_per_image,
    const std::vector<CameraPose>& poses, const CameraIntrinsics& intrinsics,
    const TargetCorrespondConfig& config) {
  const int num_images = static_cast<int>(detections_per_image.size());
  struct Node {
    int image, detection;
  };
  std::vector<Node> nodes;
  std::vector<int> node_of_start(num_images + 1, 0);
  for (int i = 0; i < num_images; ++i) {
    node_of_start[i] = static_cast<int>(nodes.size());
    for (size_t d = 0; d < detections_per_image[i].size(); ++d)
      nodes.push_back(Node{i, static_cast<int>(d)});
  }
  node_of_start[num_images] = static_cast<int>(nodes.size());

  // Pairwise epipolar consistency graph across images.
  std::vector<int> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int i = 0; i < num_images; ++i) {
    for (int j = i + 1; j < num_images; ++j) {
      if (detections_per_image[i].empty() || detections_per_image[j].empty()) continue;
      const Mat3 f = fundamental_from_poses(poses[i], poses[j], intrinsics);
      for (size_t a = 0; a < detections_per_image[i].size(); ++a)
        for (size_t b = 0; b < detections_per_image[j].size(); ++b) {
          const double d = symmetric_epipolar_distance(
              f, detections_per_image[i][a].center, detections_per_image[j][b].center);
          if (d < config.epipolar_threshold_px) {
            const int na = node_of_start[i] + static_cast<int>(a);
            const int nb = node_of_start[j] + static_cast<int>(b);
            const int ra = find(na), rb = find(nb);
            if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
          }
        }
    }
  }

  std::map<int, std::vector<int>> groups;
  for (size_t n = 0; n < nodes.size(); ++n) groups[find(static_cast<int>(n))].push_back(static_cast<int>(n));

  std::vector<LocalTarget> targets;
  for (auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    // A detection whose image appears twice in the group is ambiguous
    // (consistent with two distinct targets): drop all of that image's
    // detections from the group.
    std::map<int, int> image_count;
    for (int n : members) image_count[nodes[n].image]++;
    std::vector<int> usable;
    for (int n : members)
      if (image_count[nodes[n].image] == 1) usable.push_back(n);
    if (usable.size() < 2) continue;

    std::vector<RayObservation> rays;
    std::vector<TargetObservation> observations;
    for (int n : usable) {
      TargetObservation obs = detections_per_image[nodes[n].image][nodes[n].detection];
      obs.image = nodes[n].image;
      observations.push_back(obs);
      rays.push_back(RayObservation{poses[nodes[n].image], intrinsics, obs.center});
    }
    try {
      const TriangulationResult tri = triangulate(rays);
      if (tri.rms_px >= config.max_triangulation_rms_px) continue;
      LocalTarget target;
      target.local_point = tri.point;
      target.observations = std::move(observations);
      target.triangulation_rms_px = tri.rms_px;
      targets.push_back(std::move(target));
    } catch (const Error&) {
      // no stereo base within the group; skip it
    }
  }
  std::sort(targets.begin(), targets.end(), [](const LocalTarget& a, const LocalTarget& b) {
    if (a.local_point.x() != b.local_point.x()) return a.local_point.x() < b.local_point.x();
    return a.local_point.y() < b.local_point.y();
  });
  return targets;
}

}  // namespace trec
