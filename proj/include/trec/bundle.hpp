#pragma once

#include <functional>
#include <vector>

#include "trec/features.hpp"
#include "trec/geometry.hpp"

namespace trec {

enum class BundleMode { kLocal, kGlobal };

struct BundleObservation {
  int pose = 0;   // index into poses
  int track = 0;  // index into points
  Vec2 pixel = Vec2::Zero();
};

// A surveyed 3D observation of a target pseudo-track (global mode).
struct ControlObservation {
  int track = 0;
  Vec3 global_point = Vec3::Zero();
  double sigma = 0.002;  // meters
};

// Nonlinear least squares over collinearity residuals. Immutable during a
// solve; the solver returns updated copies.
struct AdjustmentProblem {
  std::vector<CameraPose> poses;
  std::vector<Vec3> points;         // initial tie-point coordinates
  std::vector<BundleObservation> observations;
  std::vector<ControlObservation> control;
  CameraIntrinsics intrinsics;      // shared interior orientation
  BundleMode mode = BundleMode::kLocal;
  double observation_sigma_px = 0.5;
  // Local-mode stochastic device: a soft penalty on the net rotation of the
  // track cloud about the baseline axis, relative to the initial cloud.
  double gauge_sigma = 1e-4;        // radians
  Vec3 baseline_axis = Vec3(1, 0, 0);
  std::vector<Vec3> gauge_reference;  // cloud the penalty is measured against
  // Tracks participating in the solve; empty means all.
  std::vector<char> initial_active;

  void validate() const;
};

struct ObservationWeights {
  double pixel_weight = 0.0;              // 1 / sigma_px^2
  double gauge_weight = 0.0;              // 1 / sigma_gauge^2, local mode only
  std::vector<double> control_weights;    // 1 / sigma_i^2
};

ObservationWeights weight_observations(const AdjustmentProblem& problem,
                                       BundleMode strategy);

// Whitened residual norms per residual class; doubling a sigma halves the
// matching norm at fixed parameters.
struct CostBreakdown {
  double pixel_norm = 0.0;
  double gauge_norm = 0.0;
  double control_norm = 0.0;
};

// One whitened pixel residual with its Jacobians; only the first
// pose_param_count columns of pose_jac are meaningful.
struct PixelBlock {
  int observation = 0;
  int pose = 0;
  int track = 0;
  Vec2 residual = Vec2::Zero();
  Eigen::Matrix<double, 2, 6> pose_jac = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 3> point_jac = Eigen::Matrix<double, 2, 3>::Zero();
  bool behind_camera = false;
};

struct ControlBlock {
  int index = 0;
  int track = 0;
  Vec3 residual = Vec3::Zero();  // whitened
  double sqrt_weight = 0.0;
};

struct Evaluation {
  std::vector<PixelBlock> pixel_blocks;
  bool has_gauge = false;
  double gauge_residual = 0.0;       // whitened
  std::vector<Vec3> gauge_gradient;  // whitened d r_gauge / d point, per track
  std::vector<ControlBlock> control_blocks;
  double cost = 0.0;        // sum of squared whitened residuals
  double pixel_rms_px = 0.0;
  CostBreakdown breakdown;
};

// Rotation increments are composed on the right: R <- R * exp([delta]x).
// Center increments are additive. Pose parameter order: 3 rotation, then
// 3 center when the center is free.
int pose_param_count(const AdjustmentProblem& problem, int pose);

Evaluation evaluate_problem(const AdjustmentProblem& problem,
                            const std::vector<CameraPose>& poses,
                            const std::vector<Vec3>& points,
                            const std::vector<char>& active_tracks);

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
  double initial_lambda = 1e-3;
  double degenerate_condition = 1e10;
  bool compute_covariances = false;
};

struct IterationRecord {
  int iteration = 0;
  double lambda = 0.0;
  double cost = 0.0;
  double rms_px = 0.0;
  bool accepted = false;
};

// Snapshot of one damped step, emitted before the accept/reject decision so
// independent solvers can replay the same linear system.
struct IterationSnapshot {
  const std::vector<CameraPose>* poses = nullptr;
  const std::vector<Vec3>* points = nullptr;
  const std::vector<char>* active_tracks = nullptr;
  double lambda = 0.0;
  Eigen::VectorXd pose_update;  // packed per pose_param_count layout
  int iteration = 0;
};

struct BundleReport {
  int iterations = 0;
  bool converged = false;
  double initial_rms_px = 0.0;
  double final_rms_px = 0.0;
  double final_cost = 0.0;
  CostBreakdown breakdown;
  std::vector<IterationRecord> steps;
  int degenerate_tracks_removed = 0;
};

struct BundleResult {
  std::vector<CameraPose> poses;
  std::vector<Vec3> points;
  std::vector<char> active_tracks;
  BundleReport report;
  // Diagonal 6x6 (or 3x3) pose covariances from the reduced system inverse,
  // only filled when requested.
  std::vector<Eigen::MatrixXd> pose_covariances;
};

using IterationObserver = std::function<void(const IterationSnapshot&)>;

// Damped Gauss-Newton with block-wise elimination of all tie-point
// parameters from the normal equations and exact back-substitution.
BundleResult solve(const AdjustmentProblem& problem, const SolveOptions& options = {},
                   const IterationObserver& observer = nullptr);

struct SweepImageInfo {
  int tripod_index = 0;
  int rotation_index = 0;
};

struct LocalInitialization {
  std::vector<CameraPose> poses;     // one per image, same order as input
  std::vector<Vec3> points;          // one per track
  std::vector<char> track_valid;     // triangulation succeeded
};

// Tripod 0 at the origin, tripod 1 exactly one unit along +X; image k of an
// n-image sweep pitched by k*(360/n) degrees about the baseline axis,
// starting from and ending in a horizontal view. All tracks triangulated
// from these initial poses.
LocalInitialization initialize_local(const std::vector<SweepImageInfo>& images,
                                     const std::vector<FeatureTrack>& tracks,
                                     const CameraIntrinsics& intrinsics);

// Initial rotation of sweep position k out of n (world -> camera).
Mat3 sweep_rotation(int rotation_index, int images_per_sweep);

struct SimilarityTransform;  // georef.hpp

// Transforms the local solution into the global frame and runs one bundle
// pass with free camera centers and weighted control observations.
BundleResult solve_global(const AdjustmentProblem& local_problem,
                          const BundleResult& local_result,
                          const SimilarityTransform& similarity,
                          const std::vector<ControlObservation>& control,
                          const SolveOptions& options = {},
                          const IterationObserver& observer = nullptr);

}  // namespace trec
