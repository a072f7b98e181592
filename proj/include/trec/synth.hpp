#pragma once

#include <filesystem>
#include <vector>

#include "trec/geometry.hpp"
#include "trec/georef.hpp"
#include "trec/surface.hpp"

namespace trec {

struct TargetPlacement {
  double azimuth = 0.0;  // radians, scene frame
  double axial = 0.0;    // meters along the tunnel axis
  double diameter = 0.15;  // meters
};

// Axis-aligned rectangle sprite floating in the scene, blocks rays.
struct OccluderSprite {
  Vec3 corner = Vec3::Zero();  // scene frame
  Vec3 edge_u = Vec3::Zero();
  Vec3 edge_v = Vec3::Zero();
};

// Fully known synthetic acquisition: a rough cylinder about the +X axis of
// the scene frame, two tripod positions, a vertical sweep per tripod, one
// lamp behind the cameras. The world (total station) frame is an arbitrary
// rigid placement of the scene frame.
struct SyntheticScene {
  double radius = 5.0;               // meters
  double length = 16.0;              // rendered tube length, centered on x=0
  double roughness_amplitude = 0.05;
  uint64_t roughness_seed = 11;
  uint64_t texture_seed = 12;
  Vec3 lamp = Vec3(-10.0, 0.0, -1.0);  // roughly one diameter behind the face
  double lamp_power = 160.0;

  int images_per_sweep = 6;
  double baseline = 0.5;             // tripod separation along the axis
  Vec3 tripod0 = Vec3(-0.25, 0.0, -1.5);
  double pose_jitter_deg = 1.0;
  double center_jitter = 0.02;       // meters
  uint64_t pose_seed = 21;

  double noise_sigma = 2.0;          // gray levels
  uint64_t noise_seed = 31;

  std::vector<TargetPlacement> targets;  // empty -> default 4, two per side
  std::vector<OccluderSprite> occluders;

  CameraIntrinsics intrinsics;       // zero-initialized -> defaults applied
  double fov_deg = 82.0;
  int image_width = 1155;
  int image_height = 866;

  Mat3 world_rotation = Mat3::Identity();
  Vec3 world_translation = Vec3::Zero();

  double grid_axial_extent = 6.0;
  double grid_bin = 0.01;            // meters at the nominal radius

  // Applies defaults for unset members (intrinsics, targets).
  void finalize();
  void validate() const;

  Vec3 to_world(const Vec3& scene_point) const {
    return world_rotation * scene_point + world_translation;
  }
  GridSpec grid_spec() const;
};

SyntheticScene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SyntheticScene& scene);

// Displaced surface radius and procedural albedo, shared between the
// renderer and the ground-truth grid.
double surface_radius(const SyntheticScene& scene, double azimuth, double axial);
void surface_albedo(const SyntheticScene& scene, double azimuth, double axial,
                    double rgb[3]);

struct SyntheticDataset {
  std::vector<ImageRecord> images;          // distorted, vignetted, noisy
  std::vector<RasterF> depth_maps;          // along-ray distance, meters
  std::vector<CameraPose> true_poses;       // world frame
  CameraIntrinsics intrinsics;
  // Per image, per target: distorted pixel position or NaN when not visible.
  std::vector<std::vector<Vec2>> target_pixels;
  std::vector<Vec3> target_points_world;
  std::vector<ControlPoint> control_points;
  SphericalGrid ground_truth;
};

// Ray-cast Lambertian rendering with applied distortion, vignetting, pixel
// noise and occluder sprites. kInvalidScene when a camera sits inside the
// surface or a target is visible in fewer than two images.
SyntheticDataset render(const SyntheticScene& scene, int workers = 1);

// Writes the dataset in the pipeline's input layout: images, calibration,
// control points and a ready-to-run pipeline configuration; ground truth
// under ground_truth/.
void write_dataset(const SyntheticDataset& dataset, const SyntheticScene& scene,
                   const std::filesystem::path& outdir, bool with_depth_maps = false);

}  // namespace trec
