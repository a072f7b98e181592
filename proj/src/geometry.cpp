#include "trec/geometry.hpp"

#include <cmath>

#include "trec/keyvalue.hpp"

namespace trec {

void CameraIntrinsics::validate() const {
  if (!(focal_length > 0.0))
    fail(ErrorCode::kInvalidArgument, "focal_length must be > 0");
  if (width <= 0 || height <= 0)
    fail(ErrorCode::kInvalidArgument, "sensor dimensions must be > 0");
  if (!principal_point.allFinite() || !radial_coeffs.allFinite() ||
      !tangential_coeffs.allFinite() || !vignette_coeffs.allFinite())
    fail(ErrorCode::kInvalidArgument, "non-finite intrinsics");
  // The distortion mapping must stay monotone in radius over the whole
  // sensor field, otherwise undistortion is not well defined.
  const double rmax_n = max_corner_radius() / focal_length;
  const double k1 = radial_coeffs[0], k2 = radial_coeffs[1], k3 = radial_coeffs[2];
  for (int i = 1; i <= 64; ++i) {
    const double r = rmax_n * i / 64.0;
    const double r2 = r * r;
    // d(r * radial(r^2))/dr
    const double deriv = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 + 7.0 * k3 * r2 * r2 * r2;
    if (deriv <= 0.0)
      fail(ErrorCode::kInvalidArgument, "distortion model not monotone over sensor");
  }
}

double CameraIntrinsics::sensor_diagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

double CameraIntrinsics::max_corner_radius() const {
  double r = 0.0;
  for (const double cx : {0.0, static_cast<double>(width) - 1.0})
    for (const double cy : {0.0, static_cast<double>(height) - 1.0})
      r = std::max(r, (Vec2(cx, cy) - principal_point).norm());
  return r;
}

double CameraIntrinsics::vignette_gain(const Vec2& pixel) const {
  const double rmax = max_corner_radius();
  if (rmax <= 0.0) return 1.0;
  const double rho2 = (pixel - principal_point).squaredNorm() / (rmax * rmax);
  const double g = 1.0 + rho2 * (vignette_coeffs[0] +
                   rho2 * (vignette_coeffs[1] +
                   rho2 * (vignette_coeffs[2] + rho2 * vignette_coeffs[3])));
  return g;
}

CameraIntrinsics CameraIntrinsics::scaled(double factor) const {
  if (!(factor > 0.0 && factor <= 1.0))
    fail(ErrorCode::kInvalidArgument, "scale factor must be in (0,1]");
  CameraIntrinsics s = *this;
  s.focal_length = focal_length * factor;
  s.principal_point = principal_point * factor;
  s.width = std::max(1, static_cast<int>(std::lround(width * factor)));
  s.height = std::max(1, static_cast<int>(std::lround(height * factor)));
  return s;
}

CameraIntrinsics load_calibration(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  CameraIntrinsics intr;
  intr.focal_length = kv.require_double("focal_px");
  intr.principal_point = Vec2(kv.require_double("cx"), kv.require_double("cy"));
  intr.radial_coeffs = Eigen::Vector3d(kv.get_double("k1", 0.0), kv.get_double("k2", 0.0),
                                       kv.get_double("k3", 0.0));
  intr.tangential_coeffs = Eigen::Vector2d(kv.get_double("p1", 0.0), kv.get_double("p2", 0.0));
  intr.vignette_coeffs = Eigen::Vector4d(kv.get_double("v1", 0.0), kv.get_double("v2", 0.0),
                                         kv.get_double("v3", 0.0), kv.get_double("v4", 0.0));
  intr.width = kv.get_int("width", 0);
  intr.height = kv.get_int("height", 0);
  intr.validate();
  return intr;
}

void save_calibration(const std::filesystem::path& path, const CameraIntrinsics& intr) {
  KeyValueFile kv;
  kv.set_double("focal_px", intr.focal_length);
  kv.set_double("cx", intr.principal_point.x());
  kv.set_double("cy", intr.principal_point.y());
  kv.set_double("k1", intr.radial_coeffs[0]);
  kv.set_double("k2", intr.radial_coeffs[1]);
  kv.set_double("k3", intr.radial_coeffs[2]);
  kv.set_double("p1", intr.tangential_coeffs[0]);
  kv.set_double("p2", intr.tangential_coeffs[1]);
  kv.set_double("v1", intr.vignette_coeffs[0]);
  kv.set_double("v2", intr.vignette_coeffs[1]);
  kv.set_double("v3", intr.vignette_coeffs[2]);
  kv.set_double("v4", intr.vignette_coeffs[3]);
  kv.set_int("width", intr.width);
  kv.set_int("height", intr.height);
  kv.save(path);
}

void CameraPose::validate(double tol) const {
  const Mat3 should_be_identity = rotation * rotation.transpose();
  if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    fail(ErrorCode::kInvalidArgument, "rotation is not orthonormal");
  if (rotation.determinant() < 0.0)
    fail(ErrorCode::kInvalidArgument, "rotation has negative determinant");
  if (!center.allFinite()) fail(ErrorCode::kInvalidArgument, "non-finite center");
}

Mat3 rotation_exp(const Vec3& omega) {
  const double theta = omega.norm();
  Mat3 skew;
  skew << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
  if (theta < 1e-12) return Mat3::Identity() + skew;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * skew + b * skew * skew;
}

Mat3 orthonormalized(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

std::optional<Vec2> project(const Vec3& point, const CameraPose& pose,
                            const CameraIntrinsics& intr) {
  if (!point.allFinite()) fail(ErrorCode::kInvalidArgument, "non-finite point");
  const Vec3 pc = pose.to_camera(point);
  if (pc.z() <= 0.0) return std::nullopt;
  return Vec2(intr.focal_length * pc.x() / pc.z() + intr.principal_point.x(),
              intr.focal_length * pc.y() / pc.z() + intr.principal_point.y());
}

namespace {

Vec2 distort_normalized(const Vec2& xn, const CameraIntrinsics& intr) {
  const double x = xn.x(), y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (intr.radial_coeffs[0] +
                        r2 * (intr.radial_coeffs[1] + r2 * intr.radial_coeffs[2]));
  const double p1 = intr.tangential_coeffs[0], p2 = intr.tangential_coeffs[1];
  return Vec2(x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
              y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y);
}

void check_distortion_domain(const Vec2& pixel, const CameraIntrinsics& intr) {
  if (!pixel.allFinite()) fail(ErrorCode::kInvalidArgument, "non-finite pixel");
  const double limit = 2.0 * intr.sensor_diagonal();
  if ((pixel - intr.principal_point).norm() > limit)
    fail(ErrorCode::kInvalidArgument, "pixel outside distortion model domain");
}

}  // namespace

Vec2 apply_distortion(const Vec2& ideal, const CameraIntrinsics& intr) {
  check_distortion_domain(ideal, intr);
  const Vec2 xn = (ideal - intr.principal_point) / intr.focal_length;
  return intr.principal_point + intr.focal_length * distort_normalized(xn, intr);
}

Vec2 remove_distortion(const Vec2& observed, const CameraIntrinsics& intr) {
  check_distortion_domain(observed, intr);
  const Vec2 xd = (observed - intr.principal_point) / intr.focal_length;
  Vec2 x = xd;
  // Fixed point of x = xd - (distort(x) - x); tolerance well below 1e-3 px.
  const double tol = 1e-12;
  for (int iter = 0; iter < 50; ++iter) {
    const Vec2 err = distort_normalized(x, intr) - xd;
    x -= err;
    if (err.cwiseAbs().maxCoeff() < tol)
      return intr.principal_point + intr.focal_length * x;
  }
  fail(ErrorCode::kNonInvertibleDistortion,
       "distortion inverse did not converge in 50 iterations");
}

Vec3 pixel_ray(const Vec2& pixel, const CameraPose& pose, const CameraIntrinsics& intr) {
  const Vec3 dir_cam((pixel.x() - intr.principal_point.x()) / intr.focal_length,
                     (pixel.y() - intr.principal_point.y()) / intr.focal_length, 1.0);
  return (pose.rotation.transpose() * dir_cam).normalized();
}

TriangulationResult triangulate(const std::vector<RayObservation>& observations,
                                double min_ray_angle_deg) {
  if (observations.size() < 2)
    fail(ErrorCode::kInvalidArgument, "triangulation needs >= 2 observations");
  std::vector<Vec3> dirs;
  dirs.reserve(observations.size());
  for (const auto& obs : observations)
    dirs.push_back(pixel_ray(obs.pixel, obs.pose, obs.intr));

  const double cos_tol = std::cos(min_ray_angle_deg * M_PI / 180.0);
  bool has_base = false;
  for (size_t i = 0; i < dirs.size() && !has_base; ++i)
    for (size_t j = i + 1; j < dirs.size() && !has_base; ++j)
      if (std::abs(dirs[i].dot(dirs[j])) < cos_tol) has_base = true;
  if (!has_base)
    fail(ErrorCode::kDegenerateGeometry,
         "viewing rays parallel within tolerance; no usable stereo base");

  // Least-squares point minimizing summed squared distances to all rays.
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (size_t i = 0; i < dirs.size(); ++i) {
    const Mat3 proj = Mat3::Identity() - dirs[i] * dirs[i].transpose();
    a += proj;
    b += proj * observations[i].pose.center;
  }
  TriangulationResult result;
  result.point = a.ldlt().solve(b);

  double sq = 0.0;
  int n = 0;
  for (const auto& obs : observations) {
    const auto px = project(result.point, obs.pose, obs.intr);
    if (px) {
      sq += (*px - obs.pixel).squaredNorm();
      ++n;
    } else {
      sq += 1e12;  // behind a camera: treat as gross residual
      ++n;
    }
  }
  result.rms_px = std::sqrt(sq / std::max(1, n));
  return result;
}

}  // namespace trec
