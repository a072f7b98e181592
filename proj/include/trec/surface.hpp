#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trec/dense.hpp"
#include "trec/geometry.hpp"
#include "trec/raster.hpp"

namespace trec {

// Cylindrical-spherical hybrid parametrization: azimuth around the tunnel
// axis x axial position, storing radial distance from the axis per bin.
struct GridSpec {
  Vec3 origin = Vec3::Zero();   // global meters
  Mat3 frame = Mat3::Identity();  // rows: tunnel axis, azimuth reference, normal
  double axial_extent = 6.0;    // meters, centered on the origin
  double axial_bin = 0.01;      // meters
  int azimuth_bins = 3142;      // bins over 2*pi

  int axial_bins() const { return static_cast<int>(std::lround(axial_extent / axial_bin)); }
  double azimuth_bin() const { return 2.0 * M_PI / azimuth_bins; }
  bool compatible(const GridSpec& other) const;

  // Grid coordinates of a global point: azimuth bin (x), axial bin (y),
  // radial distance. Returns false outside the axial extent.
  bool locate(const Vec3& point, int* azimuth, int* axial, double* radius) const;
  Vec3 bin_center_direction(int azimuth, int axial, double radius) const;
  double azimuth_angle(int azimuth_bin_index) const;
  double axial_position(int axial_bin_index) const;
};

struct SphericalGrid {
  GridSpec spec;
  RasterF radius;   // meters; meaningful where weight > 0
  RasterF texture;  // RGB
  RasterF weight;

  bool has(int azimuth, int axial) const { return weight.at(azimuth, axial) > 0.f; }
  static SphericalGrid empty(const GridSpec& spec);
};

// Splat accumulator with per-bin robust aggregation: confidence-weighted
// mean after rejecting samples beyond mad_multiplier * MAD of the weighted
// median.
class GridAccumulator {
 public:
  explicit GridAccumulator(const GridSpec& spec) : spec_(spec) {}

  void add(const Vec3& global_point, double weight, float r, float g, float b);
  SphericalGrid finalize(double mad_multiplier = 3.0) const;

 private:
  struct Sample {
    int bin;
    float radius, weight;
    float rgb[3];
  };
  GridSpec spec_;
  std::vector<Sample> samples_;
};

struct PatchConfig {
  double mad_multiplier = 3.0;
  double min_confidence = 0.05;
  int pixel_stride = 1;
};

// Triangulates every valid disparity and splats the 3D points into the grid;
// texture carried from the reference image.
SphericalGrid reconstruct_patch(const DisparityMap& disparity,
                                const std::vector<CameraPose>& poses,
                                const CameraIntrinsics& intrinsics,
                                const Raster8& reference_rgb, const GridSpec& spec,
                                const PatchConfig& config = {});

struct MergeConfig {
  int feather_bins = 20;    // weight ramp toward patch boundaries
  int base_blur_bins = 8;   // low-frequency separation radius
};

// Seam treatment by base/detail decomposition: the low-frequency component
// cross-fades between patches over the overlap, the detail comes from the
// higher-weight patch.
SphericalGrid merge_patches(const std::vector<SphericalGrid>& patches,
                            const MergeConfig& config = {});

struct Profile {
  double station = 0.0;  // meters along the tunnel axis
  struct Sample {
    double angle;   // radians, strictly increasing
    double radius;  // meters
  };
  std::vector<Sample> samples;
};

// Interpolated cross-section at the station plane; gaps wider than
// max_fill_bins stay holes instead of being interpolated across.
Profile extract_profile(const SphericalGrid& model, double station,
                        int max_fill_bins = 3);

struct DeviationStats {
  double mean = 0.0;  // signed, meters
  double rms = 0.0;
  double p95_abs = 0.0;
  double max_abs = 0.0;
  size_t valid_bins = 0;
};

struct DeviationResult {
  RasterF deviation;  // signed model - reference, NaN where either is empty
  DeviationStats stats;
};

// Per-bin signed radial difference where both models have coverage.
DeviationResult compare_models(const SphericalGrid& model, const SphericalGrid& reference);

// Color-coded unwrapped deviation raster (diverging palette around zero).
Raster8 render_deviation(const RasterF& deviation, double range_m);

// Model persistence: <basename>_meta.txt, <basename>_radius.pfm,
// <basename>_weight.pfm, <basename>_texture.ppm.
void save_grid(const std::filesystem::path& basename, const SphericalGrid& grid);
SphericalGrid load_grid(const std::filesystem::path& basename);

// Triangulated surface with per-vertex color, ASCII polygon format.
void export_mesh_ply(const std::filesystem::path& path, const SphericalGrid& grid);

std::string format_deviation_report(const DeviationStats& stats);

}  // namespace trec
