#include "trec/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>

namespace trec {

namespace {

// ---------------------------------------------------------------------------
// Scale-space detection

struct FloatImage {
  int width = 0, height = 0;
  std::vector<float> data;

  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
};

FloatImage from_gray(const Raster8& gray) {
  FloatImage img;
  img.width = gray.width();
  img.height = gray.height();
  img.data.resize(gray.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) img.at(x, y) = gray.at(x, y) / 255.0f;
  return img;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

FloatImage gaussian_blur(const FloatImage& src, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  FloatImage tmp{src.width, src.height, std::vector<float>(src.data.size())};
  FloatImage dst{src.width, src.height, std::vector<float>(src.data.size())};
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * src.at(std::clamp(x + i, 0, src.width - 1), y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, src.height - 1));
      dst.at(x, y) = acc;
    }
  }
  return dst;
}

FloatImage downsample2(const FloatImage& src) {
  FloatImage dst;
  dst.width = src.width / 2;
  dst.height = src.height / 2;
  dst.data.resize(static_cast<size_t>(dst.width) * dst.height);
  for (int y = 0; y < dst.height; ++y)
    for (int x = 0; x < dst.width; ++x)
      dst.at(x, y) = 0.25f * (src.at(2 * x, 2 * y) + src.at(2 * x + 1, 2 * y) +
                              src.at(2 * x, 2 * y + 1) + src.at(2 * x + 1, 2 * y + 1));
  return dst;
}

// Scale-normalized determinant of the Hessian of the blurred image.
FloatImage hessian_response(const FloatImage& blurred, double sigma) {
  FloatImage resp{blurred.width, blurred.height,
                  std::vector<float>(blurred.data.size(), 0.f)};
  const float norm = static_cast<float>(sigma * sigma * sigma * sigma);
  for (int y = 1; y < blurred.height - 1; ++y) {
    for (int x = 1; x < blurred.width - 1; ++x) {
      const float lxx = blurred.at(x + 1, y) - 2.f * blurred.at(x, y) + blurred.at(x - 1, y);
      const float lyy = blurred.at(x, y + 1) - 2.f * blurred.at(x, y) + blurred.at(x, y - 1);
      const float lxy = 0.25f * (blurred.at(x + 1, y + 1) - blurred.at(x + 1, y - 1) -
                                 blurred.at(x - 1, y + 1) + blurred.at(x - 1, y - 1));
      resp.at(x, y) = norm * (lxx * lyy - lxy * lxy);
    }
  }
  return resp;
}

struct OctaveData {
  std::vector<FloatImage> blurred;
  std::vector<FloatImage> response;
  std::vector<double> sigmas;  // at octave resolution
};

// Quadratic subpixel/subscale interpolation around a 3x3x3 extremum.
bool refine_extremum(const OctaveData& oct, int level, int x, int y, Vec3& offset,
                     double& value) {
  const auto& r0 = oct.response[level - 1];
  const auto& r1 = oct.response[level];
  const auto& r2 = oct.response[level + 1];
  const double dx = 0.5 * (r1.at(x + 1, y) - r1.at(x - 1, y));
  const double dy = 0.5 * (r1.at(x, y + 1) - r1.at(x, y - 1));
  const double ds = 0.5 * (r2.at(x, y) - r0.at(x, y));
  const double dxx = r1.at(x + 1, y) - 2.0 * r1.at(x, y) + r1.at(x - 1, y);
  const double dyy = r1.at(x, y + 1) - 2.0 * r1.at(x, y) + r1.at(x, y - 1);
  const double dss = r2.at(x, y) - 2.0 * r1.at(x, y) + r0.at(x, y);
  const double dxy = 0.25 * (r1.at(x + 1, y + 1) - r1.at(x + 1, y - 1) -
                             r1.at(x - 1, y + 1) + r1.at(x - 1, y - 1));
  const double dxs = 0.25 * (r2.at(x + 1, y) - r2.at(x - 1, y) - r0.at(x + 1, y) +
                             r0.at(x - 1, y));
  const double dys = 0.25 * (r2.at(x, y + 1) - r2.at(x, y - 1) - r0.at(x, y + 1) +
                             r0.at(x, y - 1));
  Mat3 h;
  h << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
  const Vec3 g(dx, dy, ds);
  const double det = h.determinant();
  if (std::abs(det) < 1e-30) return false;
  offset = -h.inverse() * g;
  if (offset.cwiseAbs().maxCoeff() > 1.5) return false;
  value = r1.at(x, y) + 0.5 * g.dot(offset);
  return true;
}

// ---------------------------------------------------------------------------
// Descriptor

double dominant_orientation(const FloatImage& img, double x, double y, double sigma) {
  constexpr int kBins = 36;
  std::array<double, kBins> hist{};
  const double radius = 4.5 * sigma;
  const int r = static_cast<int>(std::ceil(radius));
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 1 || px >= img.width - 1 || py < 1 || py >= img.height - 1) continue;
      if (dx * dx + dy * dy > radius * radius) continue;
      const double gx = 0.5 * (img.at(px + 1, py) - img.at(px - 1, py));
      const double gy = 0.5 * (img.at(px, py + 1) - img.at(px, py - 1));
      const double mag = std::hypot(gx, gy);
      const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (2.25 * sigma * sigma));
      const double angle = std::atan2(gy, gx);
      int bin = static_cast<int>(std::floor((angle + M_PI) / (2.0 * M_PI) * kBins));
      bin = std::clamp(bin, 0, kBins - 1);
      hist[bin] += w * mag;
    }
  }
  // Circular smoothing, then the peak bin with parabolic refinement.
  std::array<double, kBins> smooth{};
  for (int i = 0; i < kBins; ++i)
    smooth[i] = 0.25 * hist[(i + kBins - 1) % kBins] + 0.5 * hist[i] +
                0.25 * hist[(i + 1) % kBins];
  int best = 0;
  for (int i = 1; i < kBins; ++i)
    if (smooth[i] > smooth[best]) best = i;
  const double l = smooth[(best + kBins - 1) % kBins];
  const double c = smooth[best];
  const double rr = smooth[(best + 1) % kBins];
  double shift = 0.0;
  const double denom = l - 2.0 * c + rr;
  if (std::abs(denom) > 1e-12) shift = std::clamp(0.5 * (l - rr) / denom, -0.5, 0.5);
  return (best + 0.5 + shift) / kBins * 2.0 * M_PI - M_PI;
}

float sample_bilinear(const FloatImage& img, double x, double y) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = std::min(static_cast<int>(x), img.width - 2 >= 0 ? img.width - 2 : 0);
  const int y0 = std::min(static_cast<int>(y), img.height - 2 >= 0 ? img.height - 2 : 0);
  const double fx = x - x0, fy = y - y0;
  return static_cast<float>(
      (img.at(x0, y0) * (1 - fx) + img.at(x0 + 1, y0) * fx) * (1 - fy) +
      (img.at(x0, y0 + 1) * (1 - fx) + img.at(x0 + 1, y0 + 1) * fx) * fy);
}

// 4x4 subregions x (sum dx, sum |dx|, sum dy, sum |dy|) over a 20-sigma
// oriented patch, Gaussian weighted and L2-normalized.
std::array<float, 64> describe(const FloatImage& img, double x, double y, double sigma,
                               double orientation) {
  std::array<float, 64> desc{};
  const double cos_t = std::cos(orientation), sin_t = std::sin(orientation);
  constexpr int kHalf = 10;  // samples per side from -10..9, one per sigma
  for (int sy = -kHalf; sy < kHalf; ++sy) {
    for (int sx = -kHalf; sx < kHalf; ++sx) {
      const double u = (sx + 0.5) * sigma;
      const double v = (sy + 0.5) * sigma;
      const double px = x + cos_t * u - sin_t * v;
      const double py = y + sin_t * u + cos_t * v;
      const double step = sigma;
      const double gx =
          0.5 * (sample_bilinear(img, px + step, py) - sample_bilinear(img, px - step, py));
      const double gy =
          0.5 * (sample_bilinear(img, px, py + step) - sample_bilinear(img, px, py - step));
      // Rotate the gradient into the patch frame.
      const double du = cos_t * gx + sin_t * gy;
      const double dv = -sin_t * gx + cos_t * gy;
      const double w = std::exp(-0.5 * (u * u + v * v) / (3.3 * sigma * 3.3 * sigma));
      const int bin_x = (sx + kHalf) / 5;
      const int bin_y = (sy + kHalf) / 5;
      float* cell = &desc[(bin_y * 4 + bin_x) * 4];
      cell[0] += static_cast<float>(w * du);
      cell[1] += static_cast<float>(w * std::abs(du));
      cell[2] += static_cast<float>(w * dv);
      cell[3] += static_cast<float>(w * std::abs(dv));
    }
  }
  double norm = 0.0;
  for (float v : desc) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm > 1e-12)
    for (float& v : desc) v = static_cast<float>(v / norm);
  return desc;
}

}  // namespace

std::vector<Feature> detect(const PreparedImage& image, const DetectorConfig& config) {
  if (config.max_per_tile < 1)
    fail(ErrorCode::kInvalidArgument, "max_per_tile must be >= 1");
  const int levels = config.scales_per_octave + 2;
  std::vector<Feature> all;

  FloatImage base = from_gray(image.gray_eq);
  for (int octave = 0; octave < config.octaves; ++octave) {
    if (base.width < 32 || base.height < 32) break;
    OctaveData oct;
    oct.blurred.reserve(levels);
    oct.sigmas.reserve(levels);
    for (int i = 0; i < levels; ++i) {
      const double sigma =
          config.base_sigma * std::pow(2.0, static_cast<double>(i) / config.scales_per_octave);
      oct.sigmas.push_back(sigma);
      oct.blurred.push_back(gaussian_blur(base, sigma));
      oct.response.push_back(hessian_response(oct.blurred.back(), sigma));
    }

    const double pos_scale = std::pow(2.0, octave);
    const double pos_offset = (pos_scale - 1.0) / 2.0;  // center-anchored pyramid
    const int margin = config.border_margin;
    for (int level = 1; level + 1 < levels; ++level) {
      const auto& r1 = oct.response[level];
      for (int y = margin; y < r1.height - margin; ++y) {
        for (int x = margin; x < r1.width - margin; ++x) {
          const float v = r1.at(x, y);
          if (v <= config.response_threshold) continue;
          bool is_max = true;
          for (int dl = -1; dl <= 1 && is_max; ++dl)
            for (int dy = -1; dy <= 1 && is_max; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                if (oct.response[level + dl].at(x + dx, y + dy) >= v) {
                  is_max = false;
                  break;
                }
              }
          if (!is_max) continue;
          Vec3 offset;
          double value;
          if (!refine_extremum(oct, level, x, y, offset, value)) continue;
          const double sigma_oct =
              oct.sigmas[level] * std::pow(2.0, offset.z() / config.scales_per_octave);
          Feature f;
          f.position = Vec2((x + offset.x()) * pos_scale + pos_offset,
                            (y + offset.y()) * pos_scale + pos_offset);
          f.scale = sigma_oct * pos_scale;
          f.response = value;
          if (f.position.x() < 0 || f.position.y() < 0 ||
              f.position.x() > image.gray_eq.width() - 1 ||
              f.position.y() > image.gray_eq.height() - 1)
            continue;
          f.orientation = dominant_orientation(oct.blurred[level], x + offset.x(),
                                               y + offset.y(), sigma_oct);
          f.descriptor = describe(oct.blurred[level], x + offset.x(), y + offset.y(),
                                  sigma_oct, f.orientation);
          all.push_back(std::move(f));
        }
      }
    }
    base = downsample2(base);
  }

  // Spatial distribution: per-tile cap by response rank.
  std::vector<std::vector<size_t>> per_tile(image.tiles.tiles.size());
  std::vector<Feature> kept;
  for (size_t i = 0; i < all.size(); ++i) {
    const int t = image.tiles.tile_index(all[i].position.x(), all[i].position.y());
    if (t >= 0) per_tile[t].push_back(i);
  }
  for (auto& tile : per_tile) {
    std::sort(tile.begin(), tile.end(), [&](size_t a, size_t b) {
      if (all[a].response != all[b].response) return all[a].response > all[b].response;
      if (all[a].position.y() != all[b].position.y())
        return all[a].position.y() < all[b].position.y();
      return all[a].position.x() < all[b].position.x();
    });
    for (size_t k = 0; k < tile.size() && k < static_cast<size_t>(config.max_per_tile); ++k)
      kept.push_back(all[tile[k]]);
  }
  // Deterministic output order independent of tile traversal.
  std::sort(kept.begin(), kept.end(), [](const Feature& a, const Feature& b) {
    if (a.position.y() != b.position.y()) return a.position.y() < b.position.y();
    if (a.position.x() != b.position.x()) return a.position.x() < b.position.x();
    return a.scale < b.scale;
  });
  return kept;
}

// ---------------------------------------------------------------------------
// Matching

namespace {

double descriptor_dist2(const std::array<float, 64>& a, const std::array<float, 64>& b) {
  double d = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    d += diff * diff;
  }
  return d;
}

struct TwoNearest {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  int second = -1;
  double second_d2 = std::numeric_limits<double>::infinity();

  void offer(int index, double d2) {
    if (d2 < best_d2) {
      second = best;
      second_d2 = best_d2;
      best = index;
      best_d2 = d2;
    } else if (d2 < second_d2) {
      second = index;
      second_d2 = d2;
    }
  }
};

// kd-tree over 64-d descriptors with a bounded best-bin-first search; the
// exact path below handles small sets.
class DescriptorTree {
 public:
  explicit DescriptorTree(const std::vector<Feature>& items) : items_(items) {
    indices_.resize(items.size());
    std::iota(indices_.begin(), indices_.end(), 0);
    root_ = build(0, static_cast<int>(indices_.size()));
  }

  TwoNearest search(const std::array<float, 64>& query, int max_checks) const {
    TwoNearest result;
    int checks = 0;
    using QueueItem = std::pair<double, int>;  // (min possible distance, node)
    std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> queue;
    queue.emplace(0.0, root_);
    while (!queue.empty() && checks < max_checks) {
      const auto [bound, node_id] = queue.top();
      queue.pop();
      if (bound >= result.second_d2) continue;
      int id = node_id;
      while (id >= 0 && !nodes_[id].is_leaf()) {
        const auto& node = nodes_[id];
        const double diff = query[node.dim] - node.split;
        const int near = diff <= 0 ? node.left : node.right;
        const int far = diff <= 0 ? node.right : node.left;
        queue.emplace(bound + diff * diff, far);
        id = near;
      }
      if (id < 0) continue;
      const auto& leaf = nodes_[id];
      for (int i = leaf.begin; i < leaf.end; ++i) {
        result.offer(indices_[i], descriptor_dist2(query, items_[indices_[i]].descriptor));
        ++checks;
      }
    }
    return result;
  }

 private:
  struct Node {
    int dim = -1;
    float split = 0.f;
    int left = -1, right = -1;
    int begin = 0, end = 0;
    bool is_leaf() const { return dim < 0; }
  };

  int build(int begin, int end) {
    Node node;
    if (end - begin <= 8) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split on the dimension of largest spread at the midpoint.
    int best_dim = 0;
    float best_spread = -1.f;
    for (int d = 0; d < 64; ++d) {
      float lo = std::numeric_limits<float>::max(), hi = -lo;
      for (int i = begin; i < end; ++i) {
        const float v = items_[indices_[i]].descriptor[d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = d;
      }
    }
    const int mid = (begin + end) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end, [&](int a, int b) {
                       return items_[a].descriptor[best_dim] < items_[b].descriptor[best_dim];
                     });
    node.dim = best_dim;
    node.split = items_[indices_[mid]].descriptor[best_dim];
    nodes_.push_back(node);
    const int id = static_cast<int>(nodes_.size()) - 1;
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  const std::vector<Feature>& items_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

std::vector<TwoNearest> nearest_two_all(const std::vector<Feature>& queries,
                                        const std::vector<Feature>& targets,
                                        const MatchConfig& config) {
  std::vector<TwoNearest> result(queries.size());
  if (targets.empty()) return result;
  if (static_cast<int>(targets.size()) < config.exact_below) {
    for (size_t i = 0; i < queries.size(); ++i)
      for (size_t j = 0; j < targets.size(); ++j)
        result[i].offer(static_cast<int>(j),
                        descriptor_dist2(queries[i].descriptor, targets[j].descriptor));
  } else {
    DescriptorTree tree(targets);
    for (size_t i = 0; i < queries.size(); ++i)
      result[i] = tree.search(queries[i].descriptor, config.tree_checks);
  }
  return result;
}

}  // namespace

std::vector<std::pair<int, int>> match_pair(const std::vector<Feature>& a,
                                            const std::vector<Feature>& b,
                                            const MatchConfig& config) {
  if (!(config.ratio > 0.0 && config.ratio < 1.0))
    fail(ErrorCode::kInvalidArgument, "match ratio must be in (0,1)");
  std::vector<std::pair<int, int>> matches;
  if (a.empty() || b.empty()) return matches;

  const auto forward = nearest_two_all(a, b, config);
  const auto backward = nearest_two_all(b, a, config);

  const double ratio2 = config.ratio * config.ratio;
  const double abs2 = config.absolute_threshold * config.absolute_threshold;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& fwd = forward[i];
    if (fwd.best < 0) continue;
    if (fwd.second >= 0) {
      if (!(fwd.best_d2 < ratio2 * fwd.second_d2)) continue;
    } else {
      // No second-best exists; accept only under the absolute threshold.
      if (!(fwd.best_d2 < abs2)) continue;
    }
    const auto& bwd = backward[fwd.best];
    if (bwd.best != static_cast<int>(i)) continue;  // mutual-best only
    matches.emplace_back(static_cast<int>(i), fwd.best);
  }
  return matches;
}

// ---------------------------------------------------------------------------
// Robust geometric filtering

namespace {

struct Normalization {
  Mat3 t = Mat3::Identity();
};

Normalization normalize_points(const std::vector<Vec2>& pts, std::vector<Vec2>& out) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double rms = 0.0;
  for (const auto& p : pts) rms += (p - mean).squaredNorm();
  rms = std::sqrt(rms / pts.size());
  const double s = rms > 1e-12 ? std::sqrt(2.0) / rms : 1.0;
  Normalization n;
  n.t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  out.resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) out[i] = s * (pts[i] - mean);
  return n;
}

// Normalized 8-point (least squares over all given correspondences).
Mat3 fit_fundamental(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<Vec2> an, bn;
  const Normalization na = normalize_points(a, an);
  const Normalization nb = normalize_points(b, bn);
  Eigen::MatrixXd m(a.size(), 9);
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = an[i].x(), y = an[i].y();
    const double xp = bn[i].x(), yp = bn[i].y();
    m.row(i) << xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 fm;
  fm << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  // Enforce rank 2.
  Eigen::JacobiSVD<Mat3> fsvd(fm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 singular = fsvd.singularValues();
  singular(2) = 0.0;
  fm = fsvd.matrixU() * singular.asDiagonal() * fsvd.matrixV().transpose();
  return nb.t.transpose() * fm * na.t;
}

double point_line_distance(const Vec3& line, const Vec2& p) {
  const double denom = std::hypot(line.x(), line.y());
  if (denom < 1e-15) return std::numeric_limits<double>::infinity();
  return std::abs(line.x() * p.x() + line.y() * p.y() + line.z()) / denom;
}

// Symmetric epipolar distance: the larger of the two point-to-line distances.
double fundamental_error(const Mat3& f, const Vec2& a, const Vec2& b) {
  const Vec3 pa(a.x(), a.y(), 1.0);
  const Vec3 pb(b.x(), b.y(), 1.0);
  return std::max(point_line_distance(f * pa, b),
                  point_line_distance(f.transpose() * pb, a));
}

Mat3 fit_homography(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<Vec2> an, bn;
  const Normalization na = normalize_points(a, an);
  const Normalization nb = normalize_points(b, bn);
  Eigen::MatrixXd m(2 * a.size(), 9);
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = an[i].x(), y = an[i].y();
    const double xp = bn[i].x(), yp = bn[i].y();
    m.row(2 * i) << -x, -y, -1, 0, 0, 0, xp * x, xp * y, xp;
    m.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, yp * x, yp * y, yp;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hm;
  hm << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return nb.t.inverse() * hm * na.t;
}

double homography_error(const Mat3& h, const Mat3& h_inv, const Vec2& a, const Vec2& b) {
  const Vec3 fwd = h * Vec3(a.x(), a.y(), 1.0);
  const Vec3 bwd = h_inv * Vec3(b.x(), b.y(), 1.0);
  if (std::abs(fwd.z()) < 1e-15 || std::abs(bwd.z()) < 1e-15)
    return std::numeric_limits<double>::infinity();
  const double ef = (fwd.hnormalized() - b).norm();
  const double eb = (bwd.hnormalized() - a).norm();
  return std::max(ef, eb);
}

template <typename FitFn, typename ErrFn>
std::pair<Mat3, std::vector<char>> ransac_model(const std::vector<Vec2>& a,
                                                const std::vector<Vec2>& b,
                                                int sample_size, double threshold,
                                                uint64_t seed, FitFn fit, ErrFn err) {
  const int n = static_cast<int>(a.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  constexpr int kMaxIterations = 1000;
  int best_count = -1;
  std::vector<char> best_mask(n, 0);
  Mat3 best_model = Mat3::Zero();
  std::vector<Vec2> sa(sample_size), sb(sample_size);
  std::vector<int> chosen(sample_size);
  int needed = kMaxIterations;
  for (int iter = 0; iter < needed; ++iter) {
    for (int k = 0; k < sample_size; ++k) {
      int candidate;
      bool fresh;
      do {
        candidate = pick(rng);
        fresh = true;
        for (int j = 0; j < k; ++j)
          if (chosen[j] == candidate) fresh = false;
      } while (!fresh);
      chosen[k] = candidate;
      sa[k] = a[candidate];
      sb[k] = b[candidate];
    }
    const Mat3 model = fit(sa, sb);
    std::vector<char> mask(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (err(model, a[i], b[i]) < threshold) {
        mask[i] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_mask = std::move(mask);
      best_model = model;
      // Adaptive iteration bound (99.9% confidence).
      const double w = static_cast<double>(count) / n;
      const double p_good = std::pow(w, sample_size);
      if (p_good > 1e-9) {
        const int est =
            static_cast<int>(std::ceil(std::log(1e-3) / std::log(1.0 - p_good)));
        needed = std::clamp(est, iter + 1, kMaxIterations);
      }
    }
  }
  // Least-squares refit on the consensus set, then re-evaluate the mask.
  if (best_count >= sample_size) {
    std::vector<Vec2> ia, ib;
    for (int i = 0; i < n; ++i)
      if (best_mask[i]) {
        ia.push_back(a[i]);
        ib.push_back(b[i]);
      }
    const Mat3 refit = fit(ia, ib);
    std::vector<char> mask(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i)
      if (err(refit, a[i], b[i]) < threshold) {
        mask[i] = 1;
        ++count;
      }
    if (count >= best_count) {
      best_mask = std::move(mask);
      best_model = refit;
      best_count = count;
    }
  }
  return {best_model, best_mask};
}

}  // namespace

GeometricFilter filter_geometric(const std::vector<std::pair<int, int>>& matches,
                                 const std::vector<Vec2>& a_positions,
                                 const std::vector<Vec2>& b_positions,
                                 double inlier_threshold_px, uint64_t seed) {
  if (matches.size() < 8)
    fail(ErrorCode::kInsufficientMatches,
         "geometric filtering needs >= 8 matches, got " + std::to_string(matches.size()));
  std::vector<Vec2> a, b;
  a.reserve(matches.size());
  b.reserve(matches.size());
  for (const auto& [ia, ib] : matches) {
    a.push_back(a_positions[ia]);
    b.push_back(b_positions[ib]);
  }

  auto [f_model, f_mask] =
      ransac_model(a, b, 8, inlier_threshold_px, seed, fit_fundamental, fundamental_error);
  int f_count = std::accumulate(f_mask.begin(), f_mask.end(), 0);

  auto h_err = [](const Mat3& h, const Vec2& pa, const Vec2& pb) {
    return homography_error(h, h.inverse(), pa, pb);
  };
  auto [h_model, h_mask] =
      ransac_model(a, b, 4, inlier_threshold_px, seed + 1, fit_homography, h_err);
  int h_count = std::accumulate(h_mask.begin(), h_mask.end(), 0);

  GeometricFilter result;
  // A homography explaining (almost) everything the fundamental matrix does
  // marks a planar scene, where the 8-point relation is degenerate.
  if (h_count >= static_cast<int>(0.8 * f_count) && h_count >= 4) {
    result.inlier_mask = h_mask;
    result.num_inliers = h_count;
    result.model = h_model;
    result.used_homography = true;
  } else {
    result.inlier_mask = f_mask;
    result.num_inliers = f_count;
    result.model = f_model;
    result.used_homography = false;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Track building

namespace {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<FeatureTrack> build_tracks(const std::vector<std::vector<Feature>>& features,
                                       const std::vector<int>& tripod_of_image,
                                       const std::vector<PairMatches>& pair_matches,
                                       const TrackBuildConfig& config) {
  const int num_images = static_cast<int>(features.size());
  std::vector<int> offset(num_images + 1, 0);
  for (int i = 0; i < num_images; ++i)
    offset[i + 1] = offset[i] + static_cast<int>(features[i].size());

  UnionFind uf(static_cast<size_t>(offset[num_images]));
  for (const auto& pm : pair_matches)
    for (const auto& [fa, fb] : pm.matches)
      uf.unite(offset[pm.image_a] + fa, offset[pm.image_b] + fb);

  // Group nodes by closure root; singleton groups are not tracks.
  std::map<int, std::vector<int>> groups;
  for (int node = 0; node < offset[num_images]; ++node) {
    const int root = uf.find(node);
    if (root != node) {
      groups[root].push_back(root);  // root inserted lazily, deduplicated below
      groups[root].push_back(node);
    }
  }
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
  }

  std::vector<FeatureTrack> tracks;
  int next_id = 0;
  for (const auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    FeatureTrack track;
    bool conflict = false;
    std::vector<char> seen(num_images, 0);
    for (int node : members) {
      const int image =
          static_cast<int>(std::upper_bound(offset.begin(), offset.end(), node) -
                           offset.begin()) - 1;
      if (seen[image]) {
        conflict = true;  // two features of one image in the same closure
        break;
      }
      seen[image] = 1;
      const int feature = node - offset[image];
      track.observations.push_back(
          TrackObservation{image, features[image][feature].position, feature});
      track.images_per_tripod[tripod_of_image[image] == 0 ? 0 : 1]++;
      track.score += features[image][feature].response;
    }
    if (conflict) continue;
    if (static_cast<int>(track.observations.size()) < config.min_track_length) continue;
    if (config.require_both_tripods &&
        (track.images_per_tripod[0] < 1 || track.images_per_tripod[1] < 1))
      continue;
    std::sort(track.observations.begin(), track.observations.end(),
              [](const TrackObservation& x, const TrackObservation& y) {
                return x.image < y.image;
              });
    track.track_id = next_id++;
    tracks.push_back(std::move(track));
  }
  return tracks;
}

}  // namespace trec
