#include "trec/image_prep.hpp"

#include <random>

#include "doctest.h"
#include "trec/geometry.hpp"

using namespace trec;

namespace {

CameraIntrinsics make_intrinsics(int w = 600, int h = 500, double focal = 700.0) {
  CameraIntrinsics intr;
  intr.focal_length = focal;
  intr.principal_point = Vec2((w - 1) / 2.0, (h - 1) / 2.0);
  intr.width = w;
  intr.height = h;
  return intr;
}

ImageRecord make_record(Raster8 pixels, const std::string& id = "t0_r0") {
  ImageRecord rec;
  rec.id = id;
  rec.pixels = std::move(pixels);
  return rec;
}

Raster8 noise_image(int w, int h, int lo, int hi, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(lo, hi);
  Raster8 img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<uint8_t>(dist(rng));
  return img;
}

double stddev_region(const Raster8& img, int x0, int x1) {
  double sum = 0, sq = 0;
  int n = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = x0; x < x1; ++x) {
      sum += img.at(x, y);
      sq += img.at(x, y) * img.at(x, y);
      ++n;
    }
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

// Least-squares fit of the even vignette polynomial to a sampled gain curve;
// this plays the calibration step for the flat-field oracle.
Eigen::Vector4d fit_vignette(const CameraIntrinsics& intr,
                             const std::function<double(double)>& gain_of_radius_px) {
  const double rmax = intr.max_corner_radius();
  const int n = 64;
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const double rho = (i + 0.5) / n;
    const double rho2 = rho * rho;
    a(i, 0) = rho2;
    a(i, 1) = rho2 * rho2;
    a(i, 2) = rho2 * rho2 * rho2;
    a(i, 3) = rho2 * rho2 * rho2 * rho2;
    b(i) = gain_of_radius_px(rho * rmax) - 1.0;
  }
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace

TEST_CASE("undistort: zero distortion and unit vignette is the identity") {
  const auto intr = make_intrinsics(320, 240);
  const Raster8 img = noise_image(320, 240, 0, 255, 5);
  Raster8 rgb(320, 240, 3);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y);
  const Raster8 out = undistort_and_devignette(make_record(rgb), intr);
  CHECK(out == rgb);
}

TEST_CASE("undistort: mismatched sensor size raises invalid-argument") {
  const auto intr = make_intrinsics(320, 240);
  Raster8 rgb(300, 240, 3);
  CHECK_THROWS_AS((void)undistort_and_devignette(make_record(std::move(rgb)), intr), Error);
}

TEST_CASE("undistort is idempotent: second pass with zero coefficients") {
  auto intr = make_intrinsics(320, 240);
  intr.radial_coeffs[0] = -0.08;
  const Raster8 src = noise_image(320, 240, 30, 220, 17);
  Raster8 rgb(320, 240, 3);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = src.at(x, y);
  const Raster8 once = undistort_and_devignette(make_record(rgb), intr);
  auto clean = intr;
  clean.radial_coeffs.setZero();
  ImageRecord rec = make_record(once);
  const Raster8 twice = undistort_and_devignette(rec, clean);
  CHECK(twice == once);
}

TEST_CASE("devignette: cos^4 falloff corrected to a flat field") {
  auto intr = make_intrinsics(400, 300, 350.0);
  const double flat = 180.0;
  // True falloff: cos^4 of the off-axis angle, not the calibration polynomial.
  auto cos4 = [&](double r_px) {
    const double t = r_px / intr.focal_length;
    return 1.0 / ((1.0 + t * t) * (1.0 + t * t));
  };
  Raster8 rgb(400, 300, 3);
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 400; ++x) {
      const double r = (Vec2(x, y) - intr.principal_point).norm();
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = to_u8(flat * cos4(r));
    }
  intr.vignette_coeffs = fit_vignette(intr, cos4);
  const Raster8 out = undistort_and_devignette(make_record(std::move(rgb)), intr);

  double sq = 0;
  size_t n = 0;
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 400; ++x) {
      const double d = out.at(x, y, 0) - flat;
      sq += d * d;
      ++n;
    }
  const double rms = std::sqrt(sq / n);
  CHECK(rms / flat < 0.02);
}

TEST_CASE("undistort: straight line becomes straight again") {
  auto intr = make_intrinsics(1000, 1000, 1000.0);
  intr.radial_coeffs[0] = -0.1;
  // Ideal line y = 250 + 0.05 x, drawn in the distorted (recorded) geometry:
  // each recorded pixel takes the intensity of its ideal-image location.
  auto line_y = [](double x) { return 250.0 + 0.05 * x; };
  Raster8 rgb(1000, 1000, 3);
  for (int y = 0; y < 1000; ++y)
    for (int x = 0; x < 1000; ++x) {
      const Vec2 ideal = remove_distortion(Vec2(x, y), intr);
      const double d = ideal.y() - line_y(ideal.x());
      const double v = 255.0 * std::exp(-d * d / (2.0 * 2.0 * 2.0));
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = to_u8(v);
    }
  const Raster8 out = undistort_and_devignette(make_record(std::move(rgb)), intr);

  // Column-wise intensity centroids, then a least-squares line through them.
  std::vector<double> xs, ys;
  for (int x = 50; x < 950; x += 4) {
    double wsum = 0, wy = 0;
    for (int y = 0; y < 1000; ++y) {
      const double w = out.at(x, y, 0);
      wsum += w;
      wy += w * y;
    }
    if (wsum < 1000) continue;
    xs.push_back(x);
    ys.push_back(wy / wsum);
  }
  REQUIRE(xs.size() > 100);
  const size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  double max_sag = 0;
  for (size_t i = 0; i < n; ++i)
    max_sag = std::max(max_sag, std::abs(ys[i] - (icept + slope * xs[i])));
  CHECK(max_sag < 0.5);
}

TEST_CASE("equalize_adaptive: constant image stays constant") {
  Raster8 img(200, 150, 1);
  for (int y = 0; y < 150; ++y)
    for (int x = 0; x < 200; ++x) img.at(x, y) = 97;
  const Raster8 out = equalize_adaptive(img, 8, 8, 2.0);
  const uint8_t v = out.at(0, 0);
  bool constant = true;
  for (int y = 0; y < 150 && constant; ++y)
    for (int x = 0; x < 200; ++x)
      if (out.at(x, y) != v) {
        constant = false;
        break;
      }
  CHECK(constant);
}

TEST_CASE("equalize_adaptive: contrast increases in both texture classes") {
  // Dark rock on the left, bright shotcrete on the right, each with low
  // local contrast.
  const int w = 320, h = 240;
  std::mt19937_64 rng(23);
  std::normal_distribution<double> jitter(0.0, 6.0);
  Raster8 img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double base = x < w / 2 ? 45.0 : 205.0;
      img.at(x, y) = to_u8(base + jitter(rng));
    }
  const Raster8 out = equalize_adaptive(img, 8, 8, 3.0);
  CHECK(stddev_region(out, 10, w / 2 - 10) > stddev_region(img, 10, w / 2 - 10));
  CHECK(stddev_region(out, w / 2 + 10, w - 10) > stddev_region(img, w / 2 + 10, w - 10));
}

TEST_CASE("equalize_adaptive: 1x1 grid with huge clip equals global equalization") {
  const Raster8 img = noise_image(160, 120, 40, 160, 31);
  const Raster8 out = equalize_adaptive(img, 1, 1, 1e9);

  // Independent global-equalization oracle.
  std::array<uint64_t, 256> hist{};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) hist[img.at(x, y)]++;
  std::array<uint8_t, 256> lut{};
  uint64_t cdf = 0;
  const uint64_t total = static_cast<uint64_t>(img.width()) * img.height();
  for (int i = 0; i < 256; ++i) {
    cdf += hist[i];
    lut[i] = to_u8(255.0 * static_cast<double>(cdf) / static_cast<double>(total));
  }
  int max_diff = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      max_diff = std::max(max_diff, std::abs(static_cast<int>(out.at(x, y)) -
                                             static_cast<int>(lut[img.at(x, y)])));
  CHECK(max_diff <= 1);
}

TEST_CASE("equalize_adaptive preserves local rank ordering") {
  const Raster8 img = noise_image(256, 256, 0, 255, 41);
  const Raster8 out = equalize_adaptive(img, 4, 4, 2.5);
  // Nearby pixels share almost identical blend weights, so the monotone
  // per-tile maps must preserve value order up to blending slack.
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> px(2, 253);
  std::uniform_int_distribution<int> step(-2, 2);
  for (int trial = 0; trial < 2000; ++trial) {
    const int x1 = px(rng), y1 = px(rng);
    const int x2 = std::clamp(x1 + step(rng), 0, 255);
    const int y2 = std::clamp(y1 + step(rng), 0, 255);
    const int g1 = img.at(x1, y1), g2 = img.at(x2, y2);
    const int o1 = out.at(x1, y1), o2 = out.at(x2, y2);
    if (g1 < g2) CHECK(o1 <= o2 + 2);
    if (g1 > g2) CHECK(o1 + 2 >= o2);
  }
}

TEST_CASE("downscale: factor 1 is the identity") {
  const Raster8 img = noise_image(123, 77, 0, 255, 51);
  CHECK(downscale(img, 1.0) == img);
}

TEST_CASE("downscale: 20-MPixel frame reduced to 1 MPixel within 1%") {
  const int w = 5472, h = 3648;  // 19.96 MPixel
  Raster8 img(w, h, 1, 128);
  const double factor = std::sqrt(1e6 / (static_cast<double>(w) * h));
  const Raster8 out = downscale(img, factor);
  const double pixels = static_cast<double>(out.width()) * out.height();
  CHECK(std::abs(pixels - 1e6) / 1e6 < 0.01);
  CHECK(static_cast<int>(out.at(out.width() / 2, out.height() / 2)) == 128);
}

TEST_CASE("downscale commutes with projection under scaled intrinsics") {
  const auto intr = make_intrinsics(1200, 900, 950.0);
  const double factor = 0.37;
  const auto scaled = intr.scaled(factor);
  const CameraPose pose;
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> c(-0.4, 0.4);
  std::uniform_real_distribution<double> depth(2.0, 9.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(c(rng), c(rng), depth(rng));
    const auto full = project(p, pose, intr);
    const auto work = project(p, pose, scaled);
    REQUIRE(full);
    REQUIRE(work);
    CHECK((*full * factor - *work).norm() < 0.01);
  }
}

TEST_CASE("tile layout partitions the raster exactly") {
  const TileLayout layout = TileLayout::regular(1155, 866, 8, 8);
  REQUIRE(layout.tiles.size() == 64);
  long long area = 0;
  for (const auto& t : layout.tiles) {
    CHECK(t.width() > 0);
    CHECK(t.height() > 0);
    area += static_cast<long long>(t.width()) * t.height();
  }
  CHECK(area == 1155LL * 866LL);
  // Every pixel falls in exactly one tile.
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<int> ux(0, 1154), uy(0, 865);
  for (int i = 0; i < 500; ++i) {
    const int x = ux(rng), y = uy(rng);
    int count = 0;
    for (const auto& t : layout.tiles)
      if (t.contains(x, y)) ++count;
    CHECK(count == 1);
  }
}

TEST_CASE("prepare_image produces consistent working-resolution data") {
  auto intr = make_intrinsics(400, 300, 380.0);
  intr.radial_coeffs[0] = -0.05;
  Raster8 rgb(400, 300, 3);
  std::mt19937_64 rng(81);
  std::uniform_int_distribution<int> dist(20, 230);
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 400; ++x) {
      const int v = dist(rng);
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = static_cast<uint8_t>(v);
    }
  ImageRecord rec = make_record(std::move(rgb), "t1_r3");
  rec.tripod_index = 1;
  rec.rotation_index = 3;
  PrepConfig cfg;
  cfg.scale_factor = 0.5;
  const PreparedImage prep = prepare_image(rec, intr, cfg);
  CHECK(prep.id == "t1_r3");
  CHECK(prep.tripod_index == 1);
  CHECK(prep.rotation_index == 3);
  CHECK(prep.rgb.width() == 200);
  CHECK(prep.rgb.height() == 150);
  CHECK(prep.gray_eq.width() == 200);
  CHECK(prep.intrinsics.width == 200);
  CHECK(prep.intrinsics.height == 150);
  CHECK(prep.intrinsics.focal_length == doctest::Approx(190.0));
  CHECK(prep.tiles.tiles.size() == 64);
}
