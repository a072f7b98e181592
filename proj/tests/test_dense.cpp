#include "trec/dense.hpp"

#include <random>

#include "doctest.h"

using namespace trec;

namespace {

CameraIntrinsics test_intrinsics(int w = 400, int h = 300, double f = 600.0) {
  CameraIntrinsics intr;
  intr.focal_length = f;
  intr.width = w;
  intr.height = h;
  intr.principal_point = Vec2((w - 1) / 2.0, (h - 1) / 2.0);
  return intr;
}

// Smooth band-limited texture with per-channel articulation.
struct Texture {
  struct Wave {
    double wx, wy, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves;

  static Texture make(uint64_t seed, double chroma_only = 0.0) {
    Texture t;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(0, 2 * M_PI);
    std::uniform_real_distribution<double> freq(2.0, 18.0);
    std::uniform_real_distribution<double> amp(4.0, 12.0);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 12; ++k) {
        const double a = ang(rng), f = freq(rng);
        t.waves[c].push_back(Wave{f * std::cos(a), f * std::sin(a), ang(rng), amp(rng)});
      }
    if (chroma_only > 0) {
      // Luminance-flat texture: red and blue move in opposition, green flat.
      t.waves[1].clear();
      t.waves[2].clear();
      for (const auto& w : t.waves[0]) {
        Wave b = w;
        b.amp = -w.amp * (0.299 / 0.114);
        t.waves[2].push_back(b);
      }
    }
    return t;
  }

  double value(int c, double x, double y) const {
    double v = 0;
    for (const auto& w : waves[c]) v += w.amp * std::cos(w.wx * x + w.wy * y + w.phase);
    return v;
  }
};

// Two half-planes: z = z_left for x < 0, z = z_right for x >= 0.
struct SteppedScene {
  double z_left, z_right;
  Texture texture;

  // Ray from origin offset by camera center along +X; returns hit (x,y,z).
  bool cast(const Vec3& center, const Vec3& dir, Vec3* hit) const {
    // Nearer surface first.
    const double z_near = std::min(z_left, z_right), z_far = std::max(z_left, z_right);
    for (double z : {z_near, z_far}) {
      if (dir.z() <= 1e-9) continue;
      const double t = (z - center.z()) / dir.z();
      const Vec3 p = center + t * dir;
      const double surface_z = p.x() < 0 ? z_left : z_right;
      if (std::abs(surface_z - z) < 1e-9) {
        *hit = p;
        return true;
      }
    }
    return false;
  }
};

PreparedImage render_view(const SteppedScene& scene, const CameraPose& pose,
                          const CameraIntrinsics& intr, const std::string& id) {
  PreparedImage img;
  img.id = id;
  img.intrinsics = intr;
  img.rgb = Raster8(intr.width, intr.height, 3, 20);
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const Vec3 dir = pixel_ray(Vec2(x, y), pose, intr);
      Vec3 hit;
      if (!scene.cast(pose.center, dir, &hit)) continue;
      for (int c = 0; c < 3; ++c)
        img.rgb.at(x, y, c) = to_u8(128.0 + scene.texture.value(c, hit.x(), hit.y()));
    }
  img.gray_eq = to_gray(img.rgb);
  img.tiles = TileLayout::regular(intr.width, intr.height, 8, 8);
  return img;
}

struct StereoSetup {
  CameraIntrinsics intr;
  std::vector<CameraPose> poses;
  PreparedImage left, right;
  StereoPair pair;
  std::vector<std::pair<Vec2, Vec2>> seeds;
};

StereoSetup make_stereo(const SteppedScene& scene, double baseline, uint64_t seed) {
  StereoSetup s;
  s.intr = test_intrinsics();
  CameraPose a, b;
  a.center = Vec3(0, 0, 0);
  b.center = Vec3(baseline, 0, 0);
  s.poses = {a, b};
  s.left = render_view(scene, a, s.intr, "left");
  s.right = render_view(scene, b, s.intr, "right");
  s.pair = StereoPair{0, 1, 1.0};

  // Exact seed correspondences from the known geometry.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(30.0, s.intr.width - 31.0);
  std::uniform_real_distribution<double> uy(30.0, s.intr.height - 31.0);
  while (s.seeds.size() < 20) {
    const Vec2 pa(ux(rng), uy(rng));
    const Vec3 dir = pixel_ray(pa, a, s.intr);
    Vec3 hit;
    if (!scene.cast(a.center, dir, &hit)) continue;
    const auto pb = project(hit, b, s.intr);
    if (!pb) continue;
    if (pb->x() < 10 || pb->x() > s.intr.width - 11) continue;
    // Seeds only where the point is also visible (not occluded) in b.
    Vec3 hit_b;
    if (!scene.cast(b.center, pixel_ray(*pb, b, s.intr), &hit_b)) continue;
    if ((hit_b - hit).norm() > 1e-6) continue;
    s.seeds.emplace_back(pa, *pb);
  }
  return s;
}

}  // namespace

TEST_CASE("select_pairs: ideal 6+6 sweep pairs equal rotation indices") {
  CameraIntrinsics intr = test_intrinsics(1000, 800, 664.0);
  std::vector<CameraPose> poses;
  std::vector<SweepImageInfo> info;
  for (int tripod = 0; tripod < 2; ++tripod)
    for (int k = 0; k < 6; ++k) {
      CameraPose pose;
      pose.center = tripod == 0 ? Vec3(0, 0, 0) : Vec3(0.5, 0, 0);
      pose.rotation = sweep_rotation(k, 6);
      poses.push_back(pose);
      info.push_back(SweepImageInfo{tripod, k});
    }
  const PairSelection sel = select_pairs(poses, info, intr);
  CHECK(sel.warnings.empty());
  REQUIRE(sel.pairs.size() == 6);
  for (const auto& p : sel.pairs) {
    CHECK(info[p.reference_image].tripod_index == 0);
    CHECK(info[p.match_image].tripod_index == 1);
    CHECK(info[p.reference_image].rotation_index == info[p.match_image].rotation_index);
    CHECK(p.overlap > 0.9);
  }
}

TEST_CASE("select_pairs: out-of-phase sweep pairs by overlap, not index") {
  CameraIntrinsics intr = test_intrinsics(1000, 800, 664.0);
  std::vector<CameraPose> poses;
  std::vector<SweepImageInfo> info;
  for (int k = 0; k < 6; ++k) {
    CameraPose pose;
    pose.center = Vec3(0, 0, 0);
    pose.rotation = sweep_rotation(k, 6);
    poses.push_back(pose);
    info.push_back(SweepImageInfo{0, k});
  }
  // Tripod 1 physically rotated one step out of phase with its labels.
  for (int k = 0; k < 6; ++k) {
    CameraPose pose;
    pose.center = Vec3(0.5, 0, 0);
    pose.rotation = sweep_rotation((k + 1) % 6, 6);
    poses.push_back(pose);
    info.push_back(SweepImageInfo{1, k});
  }
  const PairSelection sel = select_pairs(poses, info, intr);
  REQUIRE(sel.pairs.size() == 6);
  for (const auto& p : sel.pairs) {
    const int k_ref = info[p.reference_image].rotation_index;
    const int k_match = info[p.match_image].rotation_index;
    CHECK((k_match + 1) % 6 == k_ref);  // physical orientation wins
  }
}

TEST_CASE("select_pairs: single tripod yields no pairs, only warnings") {
  CameraIntrinsics intr = test_intrinsics();
  std::vector<CameraPose> poses(6);
  std::vector<SweepImageInfo> info;
  for (int k = 0; k < 6; ++k) {
    poses[k].rotation = sweep_rotation(k, 6);
    info.push_back(SweepImageInfo{0, k});
  }
  const PairSelection sel = select_pairs(poses, info, intr);
  CHECK(sel.pairs.empty());
  CHECK(sel.warnings.size() == 6);
}

TEST_CASE("dense_match: fronto-parallel plane recovered to subpixel accuracy") {
  SteppedScene scene{5.02, 5.02, Texture::make(13)};
  StereoSetup s = make_stereo(scene, 0.5, 14);
  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);

  const double expected_dx = -s.intr.focal_length * 0.5 / 5.02;
  std::vector<double> errors;
  int valid = 0;
  for (int y = 20; y < s.intr.height - 20; ++y)
    for (int x = 20; x < s.intr.width - 20; ++x) {
      if (!map.valid_at(x, y)) continue;
      ++valid;
      errors.push_back(std::abs(map.offsets.at(x, y, 0) - expected_dx));
      CHECK(std::abs(map.offsets.at(x, y, 1)) < 1.0);
    }
  REQUIRE(valid > 20000);
  std::sort(errors.begin(), errors.end());
  const double median = errors[errors.size() / 2];
  CHECK(median < 0.25);
}

TEST_CASE("dense_match: confidence bounded and zero on invalid pixels") {
  SteppedScene scene{5.0, 5.0, Texture::make(23)};
  StereoSetup s = make_stereo(scene, 0.5, 24);
  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);
  for (int y = 0; y < map.confidence.height(); y += 3)
    for (int x = 0; x < map.confidence.width(); x += 3) {
      const float c = map.confidence.at(x, y);
      CHECK(c >= 0.f);
      CHECK(c <= 1.f);
      if (!map.valid_at(x, y)) CHECK(c == 0.f);
    }
}

TEST_CASE("dense_match: disparity at seed points matches the seeds") {
  SteppedScene scene{5.5, 5.5, Texture::make(33)};
  StereoSetup s = make_stereo(scene, 0.5, 34);
  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);
  int checked = 0;
  for (const auto& [pa, pb] : s.seeds) {
    const int x = static_cast<int>(std::lround(pa.x()));
    const int y = static_cast<int>(std::lround(pa.y()));
    if (!map.valid_at(x, y)) continue;
    const Vec2 offset(map.offsets.at(x, y, 0), map.offsets.at(x, y, 1));
    const Vec2 seed_offset = pb - pa;
    CHECK((offset - seed_offset).norm() < 2.0);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("dense_match: valid disparities respect epipolar geometry") {
  SteppedScene scene{4.8, 5.6, Texture::make(43)};
  StereoSetup s = make_stereo(scene, 0.5, 44);
  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);

  // Independent epipolar oracle from the known poses.
  const Mat3 r = s.poses[1].rotation * s.poses[0].rotation.transpose();
  const Vec3 t = s.poses[1].rotation * (s.poses[0].center - s.poses[1].center);
  Mat3 tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  Mat3 k;
  k << s.intr.focal_length, 0, s.intr.principal_point.x(), 0, s.intr.focal_length,
      s.intr.principal_point.y(), 0, 0, 1;
  const Mat3 f = k.inverse().transpose() * (tx * r) * k.inverse();

  int checked = 0;
  for (int y = 10; y < s.intr.height - 10; y += 2)
    for (int x = 10; x < s.intr.width - 10; x += 2) {
      if (!map.valid_at(x, y)) continue;
      const Vec2 match(x + map.offsets.at(x, y, 0), y + map.offsets.at(x, y, 1));
      const Vec3 line = f * Vec3(x, y, 1.0);
      const double d = std::abs(line.x() * match.x() + line.y() * match.y() + line.z()) /
                       std::hypot(line.x(), line.y());
      CHECK(d < 1.0);
      ++checked;
    }
  CHECK(checked > 5000);
}

TEST_CASE("dense_match: occluded pixels are invalidated by the left-right check") {
  // The depth step hides a band of the far surface from the right camera.
  SteppedScene scene{5.0, 3.6, Texture::make(53)};
  const double baseline = 0.5;
  StereoSetup s = make_stereo(scene, baseline, 54);
  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);

  // Occlusion oracle: left-camera pixels whose surface point is shadowed in
  // the right view.
  int occluded = 0, occluded_invalid = 0;
  for (int y = 15; y < s.intr.height - 15; ++y)
    for (int x = 15; x < s.intr.width - 15; ++x) {
      const Vec3 dir = pixel_ray(Vec2(x, y), s.poses[0], s.intr);
      Vec3 hit;
      if (!scene.cast(s.poses[0].center, dir, &hit)) continue;
      const auto pb = project(hit, s.poses[1], s.intr);
      if (!pb || pb->x() < 10 || pb->x() > s.intr.width - 11) continue;
      Vec3 hit_b;
      if (!scene.cast(s.poses[1].center, pixel_ray(*pb, s.poses[1], s.intr), &hit_b))
        continue;
      if ((hit_b - hit).norm() < 1e-6) continue;  // visible in both
      ++occluded;
      if (!map.valid_at(x, y)) ++occluded_invalid;
    }
  REQUIRE(occluded > 500);
  CHECK(occluded_invalid >= static_cast<int>(0.9 * occluded));
}

TEST_CASE("dense_match: chroma-only texture still localizes the depth boundary") {
  SteppedScene scene{5.0, 4.0, Texture::make(63, /*chroma_only=*/1.0)};
  StereoSetup s = make_stereo(scene, 0.5, 64);

  // Verify the texture really is luminance-flat.
  double lum_min = 255, lum_max = 0;
  for (int y = 50; y < 250; ++y)
    for (int x = 50; x < 350; ++x) {
      const double lum = 0.299 * s.left.rgb.at(x, y, 0) + 0.587 * s.left.rgb.at(x, y, 1) +
                         0.114 * s.left.rgb.at(x, y, 2);
      lum_min = std::min(lum_min, lum);
      lum_max = std::max(lum_max, lum);
    }
  // Rounding and clipping leave a few gray levels of residual luminance
  // texture, far below the +-70 chroma swing.
  CHECK(lum_max - lum_min < 10.0);

  const DisparityMap map = dense_match(s.pair, s.left, s.right, s.poses, s.seeds);
  const double d_far = -s.intr.focal_length * 0.5 / 5.0;   // -60
  const double d_near = -s.intr.focal_length * 0.5 / 4.0;  // -75
  const double mid = 0.5 * (d_far + d_near);
  // The boundary projects to the principal point column in the left view.
  std::vector<double> boundary_estimates;
  for (int y = 30; y < s.intr.height - 30; ++y) {
    int first_near = -1;
    for (int x = 30; x < s.intr.width - 30; ++x) {
      if (!map.valid_at(x, y)) continue;
      if (map.offsets.at(x, y, 0) < mid) {
        first_near = x;
        break;
      }
    }
    if (first_near >= 0) boundary_estimates.push_back(first_near);
  }
  REQUIRE(boundary_estimates.size() > 100);
  std::sort(boundary_estimates.begin(), boundary_estimates.end());
  const double median = boundary_estimates[boundary_estimates.size() / 2];
  CHECK(std::abs(median - s.intr.principal_point.x()) <= 2.0);
}

TEST_CASE("dense_match: too few seeds raises insufficient-matches") {
  SteppedScene scene{5.0, 5.0, Texture::make(73)};
  StereoSetup s = make_stereo(scene, 0.5, 74);
  s.seeds.resize(3);
  bool threw = false;
  try {
    (void)dense_match(s.pair, s.left, s.right, s.poses, s.seeds);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kInsufficientMatches);
  }
  CHECK(threw);
}
