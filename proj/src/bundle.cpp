#include "trec/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "trec/georef.hpp"

namespace trec {

void AdjustmentProblem::validate() const {
  intrinsics.validate();
  for (const auto& obs : observations) {
    if (obs.pose < 0 || obs.pose >= static_cast<int>(poses.size()) || obs.track < 0 ||
        obs.track >= static_cast<int>(points.size()))
      fail(ErrorCode::kInvalidArgument, "observation references missing pose or track");
  }
  for (const auto& c : control)
    if (c.track < 0 || c.track >= static_cast<int>(points.size()))
      fail(ErrorCode::kInvalidArgument, "control observation references missing track");
  if (mode == BundleMode::kLocal) {
    bool any_fixed = false;
    for (const auto& pose : poses) any_fixed |= pose.fixed_position;
    if (!any_fixed)
      fail(ErrorCode::kInvalidArgument, "local mode requires gauge-fixed camera centers");
  }
}

ObservationWeights weight_observations(const AdjustmentProblem& problem,
                                       BundleMode strategy) {
  ObservationWeights w;
  const double s = problem.observation_sigma_px;
  w.pixel_weight = 1.0 / (s * s);
  if (strategy == BundleMode::kLocal && problem.gauge_sigma > 0.0)
    w.gauge_weight = 1.0 / (problem.gauge_sigma * problem.gauge_sigma);
  w.control_weights.reserve(problem.control.size());
  for (const auto& c : problem.control)
    w.control_weights.push_back(1.0 / (c.sigma * c.sigma));
  return w;
}

int pose_param_count(const AdjustmentProblem& problem, int pose) {
  return problem.poses[pose].fixed_position ? 3 : 6;
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

Evaluation evaluate_problem(const AdjustmentProblem& problem,
                            const std::vector<CameraPose>& poses,
                            const std::vector<Vec3>& points,
                            const std::vector<char>& active_tracks) {
  const ObservationWeights weights = weight_observations(problem, problem.mode);
  const double sqrt_wp = std::sqrt(weights.pixel_weight);
  const double f = problem.intrinsics.focal_length;

  Evaluation ev;
  ev.pixel_blocks.reserve(problem.observations.size());
  double pixel_sq_px = 0.0;
  size_t pixel_count = 0;

  for (size_t i = 0; i < problem.observations.size(); ++i) {
    const auto& obs = problem.observations[i];
    if (!active_tracks[obs.track]) continue;
    const CameraPose& pose = poses[obs.pose];
    const Vec3 v = points[obs.track] - pose.center;
    const Vec3 pc = pose.rotation * v;

    PixelBlock block;
    block.observation = static_cast<int>(i);
    block.pose = obs.pose;
    block.track = obs.track;
    if (pc.z() <= 1e-9) {
      // Behind the camera: constant barrier cost, no gradient. Steps that
      // push points behind cameras get rejected by the cost comparison.
      block.behind_camera = true;
      ev.cost += 1e12;
      ev.pixel_blocks.push_back(block);
      continue;
    }
    const double inv_z = 1.0 / pc.z();
    const Vec2 projected(f * pc.x() * inv_z + problem.intrinsics.principal_point.x(),
                         f * pc.y() * inv_z + problem.intrinsics.principal_point.y());
    const Vec2 r = projected - obs.pixel;
    pixel_sq_px += r.squaredNorm();
    ++pixel_count;

    Eigen::Matrix<double, 2, 3> proj_jac;
    proj_jac << f * inv_z, 0, -f * pc.x() * inv_z * inv_z, 0, f * inv_z,
        -f * pc.y() * inv_z * inv_z;

    block.residual = sqrt_wp * r;
    // R <- R exp([delta]x): d(pc)/d(delta) = -R [v]x.
    block.pose_jac.leftCols<3>() = sqrt_wp * proj_jac * (-pose.rotation * skew(v));
    if (!pose.fixed_position)
      block.pose_jac.rightCols<3>() = sqrt_wp * proj_jac * (-pose.rotation);
    block.point_jac = sqrt_wp * proj_jac * pose.rotation;
    ev.cost += block.residual.squaredNorm();
    ev.pixel_blocks.push_back(block);
  }
  ev.pixel_rms_px = pixel_count > 0 ? std::sqrt(pixel_sq_px / pixel_count) : 0.0;
  ev.breakdown.pixel_norm = std::sqrt(std::max(0.0, pixel_sq_px * weights.pixel_weight));

  if (weights.gauge_weight > 0.0 && problem.mode == BundleMode::kLocal &&
      !problem.gauge_reference.empty()) {
    const Vec3 axis = problem.baseline_axis.normalized();
    double denom = 0.0;
    for (size_t t = 0; t < problem.gauge_reference.size(); ++t) {
      if (!active_tracks[t]) continue;
      const Vec3& p0 = problem.gauge_reference[t];
      denom += (p0 - axis * axis.dot(p0)).squaredNorm();
    }
    if (denom > 1e-12) {
      const double sqrt_wg = std::sqrt(weights.gauge_weight);
      ev.has_gauge = true;
      ev.gauge_gradient.assign(points.size(), Vec3::Zero());
      // Net rotation of the cloud about the axis, to first order:
      // sum_t p_t . (axis x p0_t) / sum_t |p0_t x axis-perp|^2.
      double g = 0.0;
      for (size_t t = 0; t < points.size(); ++t) {
        if (!active_tracks[t]) continue;
        const Vec3 basis = axis.cross(problem.gauge_reference[t]);
        g += points[t].dot(basis);
        ev.gauge_gradient[t] = sqrt_wg * basis / denom;
      }
      ev.gauge_residual = sqrt_wg * g / denom;
      ev.cost += ev.gauge_residual * ev.gauge_residual;
      ev.breakdown.gauge_norm = std::abs(ev.gauge_residual);
    }
  }

  double control_sq = 0.0;
  for (size_t i = 0; i < problem.control.size(); ++i) {
    const auto& c = problem.control[i];
    if (!active_tracks[c.track]) continue;
    ControlBlock block;
    block.index = static_cast<int>(i);
    block.track = c.track;
    block.sqrt_weight = std::sqrt(weights.control_weights[i]);
    block.residual = block.sqrt_weight * (points[c.track] - c.global_point);
    ev.cost += block.residual.squaredNorm();
    control_sq += block.residual.squaredNorm();
    ev.control_blocks.push_back(block);
  }
  ev.breakdown.control_norm = std::sqrt(control_sq);
  return ev;
}

namespace {

struct ParamLayout {
  std::vector<int> offset;
  std::vector<int> size;
  int total = 0;

  static ParamLayout build(const AdjustmentProblem& problem) {
    ParamLayout layout;
    layout.offset.resize(problem.poses.size());
    layout.size.resize(problem.poses.size());
    int at = 0;
    for (size_t p = 0; p < problem.poses.size(); ++p) {
      layout.offset[p] = at;
      layout.size[p] = pose_param_count(problem, static_cast<int>(p));
      at += layout.size[p];
    }
    layout.total = at;
    return layout;
  }
};

// Per-track normal-equation pieces for the reduction.
struct TrackBlocks {
  Mat3 d = Mat3::Zero();            // point-point block (pixel + control)
  Vec3 b = Vec3::Zero();            // point rhs
  std::map<int, Eigen::Matrix<double, 6, 3>> w;  // pose -> coupling block
  bool observed = false;
};

struct Assembly {
  Eigen::MatrixXd u;        // pose-pose block
  Eigen::VectorXd b_pose;   // pose rhs
  std::vector<TrackBlocks> tracks;
  // Gauge penalty pieces (rank-1 coupling over all point parameters).
  bool has_gauge = false;
  double gauge_residual = 0.0;
  std::vector<Vec3> gauge_gradient;
};

Assembly assemble(const AdjustmentProblem& problem, const Evaluation& ev,
                  const ParamLayout& layout) {
  Assembly as;
  as.u = Eigen::MatrixXd::Zero(layout.total, layout.total);
  as.b_pose = Eigen::VectorXd::Zero(layout.total);
  as.tracks.resize(problem.points.size());

  for (const auto& block : ev.pixel_blocks) {
    if (block.behind_camera) continue;
    const int sz = layout.size[block.pose];
    const int at = layout.offset[block.pose];
    const auto jp = block.pose_jac.leftCols(sz);
    as.u.block(at, at, sz, sz) += jp.transpose() * jp;
    as.b_pose.segment(at, sz) -= jp.transpose() * block.residual;

    TrackBlocks& tb = as.tracks[block.track];
    tb.observed = true;
    tb.d += block.point_jac.transpose() * block.point_jac;
    tb.b -= block.point_jac.transpose() * block.residual;
    auto it = tb.w.find(block.pose);
    if (it == tb.w.end())
      it = tb.w.emplace(block.pose, Eigen::Matrix<double, 6, 3>::Zero()).first;
    it->second.block(0, 0, sz, 3) += jp.transpose() * block.point_jac;
  }
  for (const auto& block : ev.control_blocks) {
    TrackBlocks& tb = as.tracks[block.track];
    tb.observed = true;
    tb.d += block.sqrt_weight * block.sqrt_weight * Mat3::Identity();
    tb.b -= block.sqrt_weight * block.residual;
  }
  as.has_gauge = ev.has_gauge;
  as.gauge_residual = ev.gauge_residual;
  as.gauge_gradient = ev.gauge_gradient;
  if (as.has_gauge) {
    for (size_t t = 0; t < as.gauge_gradient.size(); ++t) {
      if (as.gauge_gradient[t].squaredNorm() == 0.0) continue;
      as.tracks[t].b -= as.gauge_gradient[t] * as.gauge_residual;
    }
  }
  return as;
}

struct ReducedSystem {
  Eigen::MatrixXd s;        // reduced pose system (undamped)
  Eigen::VectorXd rhs;
  // Cached per-track inverses and Sherman-Morrison pieces for back-substitution.
  std::vector<Mat3> d_inv;
  std::vector<Vec3> u_vec;  // D^-1 g per track
  double alpha = 1.0;
};

// Eliminates all point blocks. The gauge penalty couples every point through
// a rank-1 term g g^T; Sherman-Morrison keeps the reduction exact:
// (D + g g^T)^-1 = D^-1 - (D^-1 g)(g^T D^-1) / (1 + g^T D^-1 g).
ReducedSystem reduce(const Assembly& as, const ParamLayout& layout,
                     const std::vector<char>& active, double degenerate_condition,
                     std::vector<char>* flagged_degenerate) {
  ReducedSystem red;
  red.s = as.u;
  red.rhs = as.b_pose;
  red.d_inv.assign(as.tracks.size(), Mat3::Zero());
  red.u_vec.assign(as.tracks.size(), Vec3::Zero());

  for (size_t t = 0; t < as.tracks.size(); ++t) {
    if (!active[t] || !as.tracks[t].observed) continue;
    const Mat3& d = as.tracks[t].d;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(d);
    const double emin = eig.eigenvalues()(0), emax = eig.eigenvalues()(2);
    if (!(emin > 0.0) || emax / emin > degenerate_condition) {
      if (flagged_degenerate) (*flagged_degenerate)[t] = 1;
      continue;
    }
    red.d_inv[t] = d.inverse();
  }
  if (flagged_degenerate)
    for (size_t t = 0; t < as.tracks.size(); ++t)
      if ((*flagged_degenerate)[t]) return red;  // caller reassembles without them

  // q = sum_t W_t D_t^-1 g_t ; alpha = 1 + g^T D^-1 g.
  Eigen::VectorXd q = Eigen::VectorXd::Zero(layout.total);
  double gauge_dinv_b = 0.0;
  if (as.has_gauge) {
    for (size_t t = 0; t < as.tracks.size(); ++t) {
      if (!active[t] || !as.tracks[t].observed) continue;
      const Vec3 g = as.gauge_gradient[t];
      if (g.squaredNorm() == 0.0) continue;
      red.u_vec[t] = red.d_inv[t] * g;
      red.alpha += g.dot(red.u_vec[t]);
      gauge_dinv_b += red.u_vec[t].dot(as.tracks[t].b);
    }
  }

  for (size_t t = 0; t < as.tracks.size(); ++t) {
    if (!active[t] || !as.tracks[t].observed) continue;
    const TrackBlocks& tb = as.tracks[t];
    const Vec3 y = red.d_inv[t] * tb.b;
    for (const auto& [pose_a, w_a] : tb.w) {
      const int sa = layout.size[pose_a], oa = layout.offset[pose_a];
      const auto wa = w_a.block(0, 0, sa, 3);
      red.rhs.segment(oa, sa) -= wa * y;
      if (as.has_gauge && red.u_vec[t].squaredNorm() > 0.0)
        q.segment(oa, sa) += wa * red.u_vec[t];
      for (const auto& [pose_b, w_b] : tb.w) {
        if (pose_b < pose_a) continue;  // fill symmetric part once
        const int sb = layout.size[pose_b], ob = layout.offset[pose_b];
        const auto wb = w_b.block(0, 0, sb, 3);
        const Eigen::MatrixXd contrib = wa * red.d_inv[t] * wb.transpose();
        red.s.block(oa, ob, sa, sb) -= contrib;
        if (pose_b != pose_a)
          red.s.block(ob, oa, sb, sa) -= contrib.transpose();
      }
    }
  }
  if (as.has_gauge) {
    red.s += q * q.transpose() / red.alpha;
    red.rhs += q * (gauge_dinv_b / red.alpha);
  }
  return red;
}

std::vector<Vec3> back_substitute(const Assembly& as, const ReducedSystem& red,
                                  const ParamLayout& layout,
                                  const std::vector<char>& active,
                                  const Eigen::VectorXd& pose_update) {
  std::vector<Vec3> z(as.tracks.size(), Vec3::Zero());
  double s1 = 0.0;
  for (size_t t = 0; t < as.tracks.size(); ++t) {
    if (!active[t] || !as.tracks[t].observed) continue;
    Vec3 rhs = as.tracks[t].b;
    for (const auto& [pose, w] : as.tracks[t].w) {
      const int sz = layout.size[pose], at = layout.offset[pose];
      rhs -= w.block(0, 0, sz, 3).transpose() * pose_update.segment(at, sz);
    }
    z[t] = red.d_inv[t] * rhs;
    if (as.has_gauge) s1 += as.gauge_gradient[t].dot(z[t]);
  }
  if (as.has_gauge) {
    const double correction = s1 / red.alpha;
    for (size_t t = 0; t < as.tracks.size(); ++t)
      if (active[t] && as.tracks[t].observed) z[t] -= red.u_vec[t] * correction;
  }
  return z;
}

void apply_update(const AdjustmentProblem& problem, const ParamLayout& layout,
                  const Eigen::VectorXd& pose_update, const std::vector<Vec3>& point_update,
                  const std::vector<char>& active, std::vector<CameraPose>* poses,
                  std::vector<Vec3>* points) {
  for (size_t p = 0; p < poses->size(); ++p) {
    const int at = layout.offset[p];
    CameraPose& pose = (*poses)[p];
    pose.rotation = orthonormalized(pose.rotation * rotation_exp(pose_update.segment<3>(at)));
    if (!problem.poses[p].fixed_position) pose.center += pose_update.segment<3>(at + 3);
  }
  for (size_t t = 0; t < points->size(); ++t)
    if (active[t]) (*points)[t] += point_update[t];
}

}  // namespace

BundleResult solve(const AdjustmentProblem& problem, const SolveOptions& options,
                   const IterationObserver& observer) {
  problem.validate();
  const ParamLayout layout = ParamLayout::build(problem);

  BundleResult result;
  result.poses = problem.poses;
  result.points = problem.points;
  if (problem.initial_active.empty())
    result.active_tracks.assign(problem.points.size(), 1);
  else
    result.active_tracks = problem.initial_active;

  Evaluation ev = evaluate_problem(problem, result.poses, result.points, result.active_tracks);
  result.report.initial_rms_px = ev.pixel_rms_px;
  double cost = ev.cost;
  double rms = ev.pixel_rms_px;

  double lambda = options.initial_lambda;
  int consecutive_rejects = 0;
  bool converged = false;

  for (int iter = 0; iter < options.max_iterations && !converged; ++iter) {
    Assembly as = assemble(problem, ev, layout);

    // Degenerate point blocks are removed, not regularized; the reduction
    // stays exact for everything that remains.
    std::vector<char> flagged(problem.points.size(), 0);
    ReducedSystem red =
        reduce(as, layout, result.active_tracks, options.degenerate_condition, &flagged);
    int removed = 0;
    for (size_t t = 0; t < flagged.size(); ++t)
      if (flagged[t]) {
        result.active_tracks[t] = 0;
        ++removed;
      }
    if (removed > 0) {
      result.report.degenerate_tracks_removed += removed;
      ev = evaluate_problem(problem, result.poses, result.points, result.active_tracks);
      cost = ev.cost;
      rms = ev.pixel_rms_px;
      as = assemble(problem, ev, layout);
      red = reduce(as, layout, result.active_tracks, options.degenerate_condition, nullptr);
    }

    {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(red.s);
      const double emax = eig.eigenvalues().cwiseAbs().maxCoeff();
      if (!(emax > 0.0) || eig.eigenvalues().minCoeff() < 1e-12 * emax)
        fail(ErrorCode::kGaugeDeficiency, "reduced pose system is rank-deficient");
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = red.s;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd pose_update = damped.ldlt().solve(red.rhs);
      const std::vector<Vec3> point_update =
          back_substitute(as, red, layout, result.active_tracks, pose_update);

      if (observer) {
        IterationSnapshot snap;
        snap.poses = &result.poses;
        snap.points = &result.points;
        snap.active_tracks = &result.active_tracks;
        snap.lambda = lambda;
        snap.pose_update = pose_update;
        snap.iteration = iter;
        observer(snap);
      }

      std::vector<CameraPose> new_poses = result.poses;
      std::vector<Vec3> new_points = result.points;
      apply_update(problem, layout, pose_update, point_update, result.active_tracks,
                   &new_poses, &new_points);
      const Evaluation new_ev =
          evaluate_problem(problem, new_poses, new_points, result.active_tracks);

      IterationRecord record;
      record.iteration = iter;
      record.lambda = lambda;
      record.cost = new_ev.cost;
      record.rms_px = new_ev.pixel_rms_px;

      if (new_ev.cost <= cost * (1.0 + 1e-14)) {
        record.accepted = true;
        result.report.steps.push_back(record);
        const double prev_rms = rms;
        result.poses = std::move(new_poses);
        result.points = std::move(new_points);
        ev = new_ev;
        cost = new_ev.cost;
        rms = new_ev.pixel_rms_px;
        lambda = std::max(lambda / 10.0, 1e-12);
        consecutive_rejects = 0;
        accepted = true;

        const double rel_change = std::abs(prev_rms - rms) / std::max(prev_rms, 1e-15);
        const double update_norm = pose_update.norm();
        if (rel_change < options.tolerance || update_norm < options.tolerance ||
            rms < 1e-12)
          converged = true;
      } else {
        record.accepted = false;
        result.report.steps.push_back(record);
        lambda *= 10.0;
        ++consecutive_rejects;
        if (consecutive_rejects >= 5)
          fail(ErrorCode::kNonConvergence,
               "cost grew for 5 consecutive damped steps");
      }
    }
    result.report.iterations = iter + 1;
  }

  result.report.converged = converged;
  result.report.final_rms_px = rms;
  result.report.final_cost = cost;
  result.report.breakdown = ev.breakdown;

  if (options.compute_covariances) {
    const Assembly as = assemble(problem, ev, layout);
    const ReducedSystem red =
        reduce(as, layout, result.active_tracks, options.degenerate_condition, nullptr);
    const Eigen::MatrixXd s_inv = red.s.inverse();
    result.pose_covariances.resize(problem.poses.size());
    for (size_t p = 0; p < problem.poses.size(); ++p) {
      const int sz = layout.size[p], at = layout.offset[p];
      result.pose_covariances[p] = s_inv.block(at, at, sz, sz);
    }
  }
  return result;
}

Mat3 sweep_rotation(int rotation_index, int images_per_sweep) {
  const double pitch = 2.0 * M_PI * rotation_index / images_per_sweep;
  // Vertical sweep about the baseline (+X): the wide image axis stays in the
  // sweep plane, image y runs along -X, view starts horizontal at +Y.
  Mat3 r;
  r.row(0) = Eigen::RowVector3d(0.0, std::sin(pitch), -std::cos(pitch));
  r.row(1) = Eigen::RowVector3d(-1.0, 0.0, 0.0);
  r.row(2) = Eigen::RowVector3d(0.0, std::cos(pitch), std::sin(pitch));
  return r;
}

LocalInitialization initialize_local(const std::vector<SweepImageInfo>& images,
                                     const std::vector<FeatureTrack>& tracks,
                                     const CameraIntrinsics& intrinsics) {
  std::array<int, 2> per_tripod{0, 0};
  for (const auto& img : images) {
    if (img.tripod_index < 0 || img.tripod_index > 1)
      fail(ErrorCode::kInvalidDataset, "tripod index must be 0 or 1");
    per_tripod[img.tripod_index]++;
  }
  if (per_tripod[0] < 2 || per_tripod[1] < 2)
    fail(ErrorCode::kInvalidDataset,
         "both tripod positions need at least 2 images");

  LocalInitialization init;
  init.poses.resize(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    CameraPose pose;
    pose.center = images[i].tripod_index == 0 ? Vec3(0, 0, 0) : Vec3(1, 0, 0);
    pose.rotation = sweep_rotation(images[i].rotation_index, per_tripod[images[i].tripod_index]);
    pose.fixed_position = true;  // local adjustment keeps camera centers fixed
    init.poses[i] = pose;
  }

  init.points.assign(tracks.size(), Vec3::Zero());
  init.track_valid.assign(tracks.size(), 0);
  for (size_t t = 0; t < tracks.size(); ++t) {
    std::vector<RayObservation> rays;
    rays.reserve(tracks[t].observations.size());
    for (const auto& obs : tracks[t].observations)
      rays.push_back(RayObservation{init.poses[obs.image], intrinsics, obs.pixel});
    try {
      const auto tri = triangulate(rays);
      // Points must be in front of every observing camera to be usable.
      bool in_front = true;
      for (const auto& obs : tracks[t].observations)
        if (init.poses[obs.image].to_camera(tri.point).z() <= 0) in_front = false;
      if (in_front) {
        init.points[t] = tri.point;
        init.track_valid[t] = 1;
      }
    } catch (const Error&) {
      // parallel rays or behind-camera geometry: leave the track invalid
    }
  }
  return init;
}

BundleResult solve_global(const AdjustmentProblem& local_problem,
                          const BundleResult& local_result,
                          const SimilarityTransform& similarity,
                          const std::vector<ControlObservation>& control,
                          const SolveOptions& options, const IterationObserver& observer) {
  AdjustmentProblem global = local_problem;
  global.mode = BundleMode::kGlobal;
  global.control = control;
  global.poses = local_result.poses;
  global.points = local_result.points;
  for (auto& pose : global.poses) {
    pose.rotation = orthonormalized(pose.rotation * similarity.rotation.transpose());
    pose.center = similarity.apply(pose.center);
    pose.fixed_position = false;  // centers are free once control pins the frame
  }
  for (auto& point : global.points) point = similarity.apply(point);
  global.gauge_reference.clear();
  global.gauge_sigma = 0.0;  // control observations fix the gauge in global mode
  global.initial_active = local_result.active_tracks;
  return solve(global, options, observer);
}

}  // namespace trec
