#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "trec/geometry.hpp"
#include "trec/targets_types.hpp"

namespace trec {

struct ControlPoint {
  std::string name;
  Vec3 global_point = Vec3::Zero();  // meters
  double sigma = 0.002;              // meters
};

// `name x y z [sigma]` per line, '#' comments.
std::vector<ControlPoint> load_control_points(const std::filesystem::path& path);
void save_control_points(const std::filesystem::path& path,
                         const std::vector<ControlPoint>& points);

// Seven-parameter mapping x_global = scale * rotation * x_local + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& local) const { return scale * (rotation * local) + translation; }
  SimilarityTransform inverse() const;
  void validate() const;
};

struct SimilarityFit {
  SimilarityTransform transform;
  double rms = 0.0;  // meters, transformed-local vs global
};

// Closed-form weighted absolute orientation: centroid alignment, scale from
// the weighted RMS ratio, rotation from the cross-covariance SVD with
// reflection guard. Input order does not affect the result.
SimilarityFit fit_similarity(const std::vector<std::pair<Vec3, Vec3>>& local_global_pairs,
                             const std::vector<double>& weights = {});

struct AssignmentConfig {
  double inlier_radius = 0.02;       // meters
  double scale_ratio_tolerance = 0.2;  // prefilter on pairwise-distance ratios
  int max_exhaustive_targets = 6;
  int max_exhaustive_controls = 8;
  int sample_count = 2000;  // hypothesis samples above the exhaustive bounds
  uint64_t seed = 1;
};

struct AssignmentResult {
  // local target index -> control point index, injective.
  std::map<int, int> assignment;
  SimilarityTransform transform;
  double rms = 0.0;
  int num_inliers = 0;
};

// Resolves the unknown target-to-control correspondence by consensus over
// 3-element assignment hypotheses, then refits on all inliers.
// kGeoreferenceFailure when no hypothesis reaches 3 inliers.
AssignmentResult assign_and_estimate(const std::vector<LocalTarget>& local_targets,
                                     const std::vector<ControlPoint>& control,
                                     const AssignmentConfig& config = {});

}  // namespace trec
