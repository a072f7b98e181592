#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trec/error.hpp"
#include "trec/raster.hpp"

namespace trec {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Interior orientation: pinhole focal/principal point, Brown distortion
// (k1,k2,k3 radial + p1,p2 tangential) and an even vignette polynomial in
// the normalized corner radius.
struct CameraIntrinsics {
  double focal_length = 0.0;  // pixels
  Vec2 principal_point = Vec2::Zero();
  Eigen::Vector3d radial_coeffs = Eigen::Vector3d::Zero();     // k1,k2,k3
  Eigen::Vector2d tangential_coeffs = Eigen::Vector2d::Zero();  // p1,p2
  Eigen::Vector4d vignette_coeffs = Eigen::Vector4d::Zero();    // v1..v4
  int width = 0;
  int height = 0;

  void validate() const;
  double sensor_diagonal() const;
  // Pixel distance from the principal point to the farthest sensor corner;
  // the vignette polynomial argument is normalized by this.
  double max_corner_radius() const;
  double vignette_gain(const Vec2& pixel) const;
  // Intrinsics consistent with an area-resampled raster.
  CameraIntrinsics scaled(double factor) const;
};

CameraIntrinsics load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const CameraIntrinsics& intr);

// Exterior orientation, world -> camera. fixed_position marks centers that
// are gauge-constrained during local adjustment.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
  bool fixed_position = false;

  void validate(double tol = 1e-9) const;
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation * (world_point - center);
  }
  Vec3 view_direction() const { return rotation.row(2).transpose(); }
};

struct ImageRecord {
  std::string id;
  int tripod_index = 0;
  int rotation_index = 0;
  Raster8 pixels;  // 8-bit RGB
  std::string intrinsics_ref;
};

// SO(3) exponential; used to compose local rotation increments onto stored
// matrices (no Euler angles anywhere near the zenith image).
Mat3 rotation_exp(const Vec3& omega);
Mat3 orthonormalized(const Mat3& m);

// Ideal (distortion-free) collinearity projection. Returns nullopt when the
// camera-frame depth is <= 0 (behind-camera marker). Throws kInvalidArgument
// for non-finite input.
std::optional<Vec2> project(const Vec3& point, const CameraPose& pose,
                            const CameraIntrinsics& intr);

// Brown model, pixel coordinates in and out.
Vec2 apply_distortion(const Vec2& ideal, const CameraIntrinsics& intr);
// Fixed-point inverse of apply_distortion; kNonInvertibleDistortion after
// 50 iterations without convergence.
Vec2 remove_distortion(const Vec2& observed, const CameraIntrinsics& intr);

struct RayObservation {
  CameraPose pose;
  CameraIntrinsics intr;
  Vec2 pixel = Vec2::Zero();
};

struct TriangulationResult {
  Vec3 point = Vec3::Zero();
  double rms_px = 0.0;
};

// Least-squares intersection of the viewing rays. kDegenerateGeometry when
// all ray pairs are parallel within min_ray_angle_deg (no usable stereo base).
TriangulationResult triangulate(const std::vector<RayObservation>& observations,
                                double min_ray_angle_deg = 0.05);

// Viewing ray of a pixel in world coordinates (unit length).
Vec3 pixel_ray(const Vec2& pixel, const CameraPose& pose, const CameraIntrinsics& intr);

}  // namespace trec
