#include "trec/bundle.hpp"

#include <random>

#include "doctest.h"
#include "trec/georef.hpp"

using namespace trec;

namespace {

struct Network {
  AdjustmentProblem problem;
  std::vector<CameraPose> true_poses;
  std::vector<Vec3> true_points;
  std::vector<FeatureTrack> tracks;
  std::vector<SweepImageInfo> images;
};

CameraIntrinsics network_intrinsics() {
  CameraIntrinsics intr;
  intr.focal_length = 600.0;
  intr.width = 1000;
  intr.height = 800;
  intr.principal_point = Vec2(499.5, 399.5);
  return intr;
}

// Synthetic two-tripod sweep network on a rough cylinder of radius ~10 units
// about the baseline axis. step_deg = 0 means a full 360/n sweep; a positive
// value builds a partial profile with that pitch step (still cross-linked
// when the step is below the field of view).
Network make_network(int per_tripod, int num_tracks, double noise_px,
                     double init_perturb_deg, uint64_t seed, double true_jitter_deg = 0.3,
                     double step_deg = 0.0) {
  Network net;
  net.problem.intrinsics = network_intrinsics();
  net.problem.mode = BundleMode::kLocal;
  net.problem.observation_sigma_px = 0.5;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, true_jitter_deg * M_PI / 180.0);
  std::uniform_real_distribution<double> perturb(-init_perturb_deg * M_PI / 180.0,
                                                 init_perturb_deg * M_PI / 180.0);
  const double step = step_deg > 0 ? step_deg * M_PI / 180.0 : 2.0 * M_PI / per_tripod;

  for (int tripod = 0; tripod < 2; ++tripod) {
    for (int k = 0; k < per_tripod; ++k) {
      net.images.push_back(SweepImageInfo{tripod, k});
      CameraPose truth;
      truth.center = tripod == 0 ? Vec3(0, 0, 0) : Vec3(1, 0, 0);
      truth.rotation = sweep_rotation(0, 1) * rotation_exp(Vec3(k * step, 0, 0)).transpose();
      truth.rotation = orthonormalized(
          truth.rotation * rotation_exp(Vec3(jitter(rng), jitter(rng), jitter(rng))));
      truth.fixed_position = true;
      net.true_poses.push_back(truth);

      CameraPose init = truth;
      init.rotation = orthonormalized(
          truth.rotation * rotation_exp(Vec3(perturb(rng), perturb(rng), perturb(rng))));
      net.problem.poses.push_back(init);
    }
  }

  std::uniform_real_distribution<double> azim_jit(-0.2, 0.2);
  std::uniform_real_distribution<double> rad(9.0, 11.0);
  std::uniform_real_distribution<double> axial(-4.0, 4.0);
  std::normal_distribution<double> pix_noise(0.0, noise_px);

  const double theta_lo = step_deg > 0 ? -0.5 : 0.0;
  const double theta_hi =
      step_deg > 0 ? (per_tripod - 1) * step + 0.5 : 2.0 * M_PI;
  int made = 0;
  for (int t = 0; made < num_tracks && t < num_tracks * 10; ++t) {
    const double theta =
        theta_lo + (theta_hi - theta_lo) * t / num_tracks + azim_jit(rng);
    const double r = rad(rng);
    const Vec3 p(axial(rng), r * std::cos(theta), r * std::sin(theta));
    FeatureTrack track;
    std::array<int, 2> per_tripod_count{0, 0};
    for (size_t i = 0; i < net.true_poses.size(); ++i) {
      const auto px = project(p, net.true_poses[i], net.problem.intrinsics);
      if (!px) continue;
      if (px->x() < 5 || px->x() > net.problem.intrinsics.width - 6 || px->y() < 5 ||
          px->y() > net.problem.intrinsics.height - 6)
        continue;
      const Vec2 noisy = *px + Vec2(pix_noise(rng), pix_noise(rng));
      track.observations.push_back(
          TrackObservation{static_cast<int>(i), noisy, 0});
      per_tripod_count[net.images[i].tripod_index]++;
    }
    if (track.observations.size() < 2 || per_tripod_count[0] < 1 || per_tripod_count[1] < 1)
      continue;
    track.images_per_tripod = per_tripod_count;
    track.track_id = made;
    net.tracks.push_back(track);
    net.true_points.push_back(p);
    ++made;
  }

  // Triangulate from the (perturbed) initial poses, like the pipeline does.
  for (size_t t = 0; t < net.tracks.size(); ++t) {
    std::vector<RayObservation> rays;
    for (const auto& obs : net.tracks[t].observations) {
      rays.push_back(
          RayObservation{net.problem.poses[obs.image], net.problem.intrinsics, obs.pixel});
      net.problem.observations.push_back(
          BundleObservation{obs.image, static_cast<int>(t), obs.pixel});
    }
    net.problem.points.push_back(triangulate(rays).point);
  }
  net.problem.gauge_reference = net.problem.points;
  return net;
}

// Best-fit roll about the +X axis aligning cloud a onto cloud b.
double best_roll(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                 const std::vector<char>& active) {
  double s = 0.0, c = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!active[i]) continue;
    s += a[i].y() * b[i].z() - a[i].z() * b[i].y();
    c += a[i].y() * b[i].y() + a[i].z() * b[i].z();
  }
  return std::atan2(s, c);
}

Mat3 roll_x(double angle) { return rotation_exp(Vec3(angle, 0, 0)); }

}  // namespace

TEST_CASE("sweep initialization: pitch sampling and unit baseline") {
  std::vector<SweepImageInfo> images;
  for (int tripod = 0; tripod < 2; ++tripod)
    for (int k = 0; k < 6; ++k) images.push_back(SweepImageInfo{tripod, k});
  const auto init = initialize_local(images, {}, network_intrinsics());
  REQUIRE(init.poses.size() == 12);
  CHECK((init.poses[0].center - Vec3(0, 0, 0)).norm() == 0.0);
  CHECK((init.poses[6].center - Vec3(1, 0, 0)).norm() == 0.0);
  CHECK((init.poses[6].center - init.poses[0].center).norm() == 1.0);
  // Pitch initializations 0, 60, ..., 300 degrees: view direction rotates
  // about +X starting horizontal at +Y.
  for (int k = 0; k < 6; ++k) {
    const double pitch = 2.0 * M_PI * k / 6.0;
    const Vec3 expected_view(0.0, std::cos(pitch), std::sin(pitch));
    CHECK((init.poses[k].view_direction() - expected_view).norm() < 1e-12);
    init.poses[k].validate();
    CHECK(init.poses[k].fixed_position);
  }
}

TEST_CASE("sweep initialization: self-consistent data reprojects to < 1e-6 px") {
  Network net = make_network(6, 40, 0.0, 0.0, 77, /*true_jitter_deg=*/0.0);
  const auto init = initialize_local(net.images, net.tracks, net.problem.intrinsics);
  int valid = 0;
  double max_err = 0.0;
  for (size_t t = 0; t < net.tracks.size(); ++t) {
    if (!init.track_valid[t]) continue;
    ++valid;
    for (const auto& obs : net.tracks[t].observations) {
      const auto px = project(init.points[t], init.poses[obs.image], net.problem.intrinsics);
      REQUIRE(px);
      max_err = std::max(max_err, (*px - obs.pixel).norm());
    }
  }
  CHECK(valid == static_cast<int>(net.tracks.size()));
  CHECK(max_err < 1e-6);
}

TEST_CASE("sweep initialization: missing tripod raises invalid-dataset") {
  std::vector<SweepImageInfo> images;
  for (int k = 0; k < 6; ++k) images.push_back(SweepImageInfo{0, k});
  bool threw = false;
  try {
    (void)initialize_local(images, {}, network_intrinsics());
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kInvalidDataset);
  }
  CHECK(threw);
}

TEST_CASE("jacobians match central finite differences") {
  std::mt19937_64 rng(301);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const CameraIntrinsics intr = network_intrinsics();
  for (int trial = 0; trial < 20; ++trial) {
    AdjustmentProblem problem;
    problem.intrinsics = intr;
    problem.mode = BundleMode::kGlobal;
    problem.gauge_sigma = 0.0;
    problem.observation_sigma_px = 0.7;
    CameraPose pose;
    pose.rotation = orthonormalized(
        rotation_exp(Vec3(gauss(rng), gauss(rng), gauss(rng)) * 0.5));
    pose.center = Vec3(gauss(rng), gauss(rng), gauss(rng));
    pose.fixed_position = false;
    problem.poses.push_back(pose);
    const Vec3 point =
        pose.center + pose.rotation.transpose() * Vec3(gauss(rng), gauss(rng), 8.0 + std::abs(gauss(rng)));
    problem.points.push_back(point);
    const auto px = project(point, pose, intr);
    REQUIRE(px);
    problem.observations.push_back(BundleObservation{0, 0, *px + Vec2(1.3, -0.8)});

    const std::vector<char> active = {1};
    const Evaluation ev = evaluate_problem(problem, problem.poses, problem.points, active);
    REQUIRE(ev.pixel_blocks.size() == 1);
    const auto& block = ev.pixel_blocks[0];

    const double eps = 1e-6;
    auto residual_at = [&](const CameraPose& p, const Vec3& x) {
      std::vector<CameraPose> poses = {p};
      std::vector<Vec3> points = {x};
      const Evaluation e = evaluate_problem(problem, poses, points, active);
      return e.pixel_blocks[0].residual;
    };
    // Rotation and center parameters.
    for (int k = 0; k < 6; ++k) {
      CameraPose pp = pose, pm = pose;
      if (k < 3) {
        Vec3 delta = Vec3::Zero();
        delta[k] = eps;
        pp.rotation = pose.rotation * rotation_exp(delta);
        pm.rotation = pose.rotation * rotation_exp(-delta);
      } else {
        pp.center[k - 3] += eps;
        pm.center[k - 3] -= eps;
      }
      const Vec2 fd = (residual_at(pp, point) - residual_at(pm, point)) / (2 * eps);
      const Vec2 an = block.pose_jac.col(k);
      CHECK((fd - an).norm() <= 1e-5 * std::max(1.0, an.norm()));
    }
    // Point parameters.
    for (int k = 0; k < 3; ++k) {
      Vec3 xp = point, xm = point;
      xp[k] += eps;
      xm[k] -= eps;
      const Vec2 fd = (residual_at(pose, xp) - residual_at(pose, xm)) / (2 * eps);
      const Vec2 an = block.point_jac.col(k);
      CHECK((fd - an).norm() <= 1e-5 * std::max(1.0, an.norm()));
    }
  }
}

TEST_CASE("local solve: noise-free network with perturbed angles recovers truth") {
  Network net = make_network(6, 60, 0.0, 2.0, 42);
  const BundleResult result = solve(net.problem);
  CHECK(result.report.converged);
  CHECK(result.report.final_rms_px < 1e-8);

  // Camera centers are untouched by the local adjustment.
  for (size_t p = 0; p < result.poses.size(); ++p)
    CHECK((result.poses[p].center - net.problem.poses[p].center).norm() == 0.0);

  // Pose rotations and points match ground truth up to the roll gauge.
  const double roll = best_roll(result.points, net.true_points, result.active_tracks);
  const Mat3 align = roll_x(roll);
  for (size_t t = 0; t < result.points.size(); ++t) {
    if (!result.active_tracks[t]) continue;
    CHECK((align * result.points[t] - net.true_points[t]).norm() < 1e-6);
  }
  for (size_t p = 0; p < result.poses.size(); ++p) {
    const Mat3 aligned = result.poses[p].rotation * align.transpose();
    CHECK((aligned - net.true_poses[p].rotation).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("cost is non-increasing across accepted steps") {
  Network net = make_network(5, 50, 0.4, 1.5, 51);
  const BundleResult result = solve(net.problem);
  double last = std::numeric_limits<double>::infinity();
  for (const auto& step : result.report.steps) {
    if (!step.accepted) continue;
    CHECK(step.cost <= last * (1.0 + 1e-14));
    last = step.cost;
  }
}

TEST_CASE("schur reduction equals dense normal-equation solve each iteration") {
  // 6 images, 50 tracks: 2 tripods x 3 rotations over a partial profile with
  // cross-linked sweep steps.
  Network net = make_network(3, 50, 0.3, 1.0, 61, 0.3, /*step_deg=*/45.0);
  REQUIRE(net.problem.points.size() >= 50);

  int checked = 0;
  auto observer = [&](const IterationSnapshot& snap) {
    // Independent dense assembly of the full (unreduced) normal equations.
    const auto& active = *snap.active_tracks;
    const Evaluation ev =
        evaluate_problem(net.problem, *snap.poses, *snap.points, active);

    std::vector<int> pose_offset(net.problem.poses.size());
    int pose_total = 0;
    for (size_t p = 0; p < net.problem.poses.size(); ++p) {
      pose_offset[p] = pose_total;
      pose_total += pose_param_count(net.problem, static_cast<int>(p));
    }
    std::vector<int> point_offset(net.problem.points.size(), -1);
    int total = pose_total;
    for (size_t t = 0; t < net.problem.points.size(); ++t)
      if (active[t]) {
        point_offset[t] = total;
        total += 3;
      }

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(total, total);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(total);
    for (const auto& blk : ev.pixel_blocks) {
      if (blk.behind_camera) continue;
      const int sp = pose_param_count(net.problem, blk.pose);
      const int op = pose_offset[blk.pose];
      const int ot = point_offset[blk.track];
      const auto jp = blk.pose_jac.leftCols(sp);
      h.block(op, op, sp, sp) += jp.transpose() * jp;
      h.block(op, ot, sp, 3) += jp.transpose() * blk.point_jac;
      h.block(ot, op, 3, sp) += blk.point_jac.transpose() * jp;
      h.block(ot, ot, 3, 3) += blk.point_jac.transpose() * blk.point_jac;
      b.segment(op, sp) -= jp.transpose() * blk.residual;
      b.segment(ot, 3) -= blk.point_jac.transpose() * blk.residual;
    }
    if (ev.has_gauge) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(total);
      for (size_t t = 0; t < net.problem.points.size(); ++t)
        if (active[t] && point_offset[t] >= 0)
          g.segment(point_offset[t], 3) = ev.gauge_gradient[t];
      h += g * g.transpose();
      b -= g * ev.gauge_residual;
    }
    // Levenberg damping acts on the pose parameters only.
    for (int i = 0; i < pose_total; ++i) h(i, i) += snap.lambda;

    const Eigen::VectorXd full = h.ldlt().solve(b);
    const Eigen::VectorXd dense_pose = full.head(pose_total);
    const double denom = std::max(dense_pose.norm(), 1e-30);
    CHECK((dense_pose - snap.pose_update).norm() / denom < 1e-9);
    ++checked;
  };

  const BundleResult result = solve(net.problem, SolveOptions{}, observer);
  CHECK(result.report.converged);
  CHECK(checked >= result.report.iterations);
}

TEST_CASE("weight_observations: equal sigmas give uniform pixel weights") {
  Network net = make_network(3, 20, 0.0, 0.5, 71);
  net.problem.observation_sigma_px = 0.5;
  const auto w = weight_observations(net.problem, BundleMode::kLocal);
  CHECK(w.pixel_weight == doctest::Approx(4.0));
  CHECK(w.gauge_weight > 0.0);
  const auto wg = weight_observations(net.problem, BundleMode::kGlobal);
  CHECK(wg.gauge_weight == 0.0);
}

TEST_CASE("gauge stability: baseline-rotated initializations agree after alignment") {
  Network base = make_network(6, 50, 0.0, 0.0, 81);

  auto rolled_solve = [&](double roll_deg) {
    AdjustmentProblem problem = base.problem;
    const Mat3 r = roll_x(roll_deg * M_PI / 180.0);
    for (auto& pose : problem.poses) pose.rotation = orthonormalized(pose.rotation * r.transpose());
    for (auto& p : problem.points) p = r * p;
    problem.gauge_reference = problem.points;
    return solve(problem);
  };

  const BundleResult plus = rolled_solve(10.0);
  const BundleResult minus = rolled_solve(-10.0);
  REQUIRE(plus.report.converged);
  REQUIRE(minus.report.converged);

  std::vector<char> both(base.problem.points.size(), 0);
  for (size_t t = 0; t < both.size(); ++t)
    both[t] = plus.active_tracks[t] && minus.active_tracks[t];
  // Remove each run's gauge frame (a roll about the baseline), then compare.
  const double roll = best_roll(minus.points, plus.points, both);
  const Mat3 align = roll_x(roll);
  double sq = 0.0;
  int n = 0;
  for (size_t t = 0; t < both.size(); ++t) {
    if (!both[t]) continue;
    sq += (align * minus.points[t] - plus.points[t]).squaredNorm();
    ++n;
  }
  REQUIRE(n > 40);
  CHECK(std::sqrt(sq / n) < 1e-6);
}

TEST_CASE("doubling control sigma halves the control residual norm") {
  Network net = make_network(3, 30, 0.0, 1.0, 91);
  net.problem.mode = BundleMode::kGlobal;
  net.problem.gauge_sigma = 0.0;
  for (auto& pose : net.problem.poses) pose.fixed_position = false;
  ControlObservation c;
  c.track = 0;
  c.global_point = net.problem.points[0] + Vec3(0.01, -0.02, 0.005);
  c.sigma = 0.002;
  net.problem.control = {c};

  std::vector<char> active(net.problem.points.size(), 1);
  const Evaluation e1 =
      evaluate_problem(net.problem, net.problem.poses, net.problem.points, active);
  net.problem.control[0].sigma *= 2.0;
  const Evaluation e2 =
      evaluate_problem(net.problem, net.problem.poses, net.problem.points, active);
  CHECK(e2.breakdown.control_norm ==
        doctest::Approx(0.5 * e1.breakdown.control_norm).epsilon(1e-12));
}

TEST_CASE("gauge invariance: similarity-transformed model re-solves to the same cost") {
  Network net = make_network(6, 50, 0.3, 1.0, 101);
  const BundleResult first = solve(net.problem);
  REQUIRE(first.report.converged);

  // Apply an arbitrary similarity to the converged model and re-run.
  SimilarityTransform sim;
  sim.scale = 3.7;
  sim.rotation = rotation_exp(Vec3(0.4, -0.2, 0.9));
  sim.translation = Vec3(5.0, -2.0, 1.0);
  AdjustmentProblem again = net.problem;
  again.poses = first.poses;
  again.points = first.points;
  for (auto& pose : again.poses) {
    pose.rotation = orthonormalized(pose.rotation * sim.rotation.transpose());
    pose.center = sim.apply(pose.center);
  }
  for (auto& p : again.points) p = sim.apply(p);
  again.gauge_reference = again.points;
  again.baseline_axis = sim.rotation * Vec3(1, 0, 0);
  again.initial_active = first.active_tracks;

  const BundleResult second = solve(again);
  CHECK(std::abs(second.report.final_cost - first.report.final_cost) <=
        1e-9 * std::max(first.report.final_cost, 1e-12));
}

TEST_CASE("local solve without any gauge penalty raises gauge-deficiency") {
  Network net = make_network(6, 50, 0.0, 1.0, 111);
  net.problem.gauge_sigma = 0.0;  // roll about the baseline left unconstrained
  bool threw = false;
  try {
    (void)solve(net.problem);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kGaugeDeficiency);
  }
  CHECK(threw);
}

TEST_CASE("divergent cost raises non-convergence") {
  // Two fixed cameras looking +Z with support tracks at their optimum, plus
  // one track whose observed rays intersect behind the cameras: every damped
  // step drives that point across the z=0 barrier and gets rejected.
  AdjustmentProblem problem;
  problem.intrinsics = network_intrinsics();
  problem.mode = BundleMode::kLocal;
  problem.observation_sigma_px = 0.5;
  for (int i = 0; i < 2; ++i) {
    CameraPose pose;
    pose.center = Vec3(i, 0, 0);
    pose.fixed_position = true;
    problem.poses.push_back(pose);
  }
  std::mt19937_64 rng(121);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int t = 0; t < 12; ++t) {
    const Vec3 p(u(rng), u(rng), 8.0 + u(rng));
    const int id = static_cast<int>(problem.points.size());
    problem.points.push_back(p);
    for (int i = 0; i < 2; ++i) {
      const auto px = project(p, problem.poses[i], problem.intrinsics);
      REQUIRE(px);
      problem.observations.push_back(BundleObservation{i, id, *px});
    }
  }
  // Observations of a very close point, but the estimate starts far away:
  // the Gauss-Newton depth step overshoots across the z=0 barrier, and pose
  // damping does not shrink the point update.
  const int bad = static_cast<int>(problem.points.size());
  const Vec3 close_point(0.02, 0.02, 0.2);
  problem.points.push_back(Vec3(0.02, 0.02, 10.0));
  for (int i = 0; i < 2; ++i) {
    const auto px = project(close_point, problem.poses[i], problem.intrinsics);
    REQUIRE(px);
    problem.observations.push_back(BundleObservation{i, bad, *px});
  }
  problem.gauge_reference = problem.points;

  bool threw = false;
  try {
    (void)solve(problem);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kNonConvergence);
  }
  CHECK(threw);
}

TEST_CASE("degenerate tracks are removed between iterations") {
  Network net = make_network(3, 30, 0.2, 1.0, 131, 0.3, /*step_deg=*/45.0);
  // Append a track observed twice from the same center: its point block is
  // near-singular along the ray.
  const int t = static_cast<int>(net.problem.points.size());
  const Vec3 p(0.5, 9.0, 0.5);
  const auto px0 = project(p, net.problem.poses[0], net.problem.intrinsics);
  REQUIRE(px0);
  net.problem.points.push_back(p);
  net.problem.gauge_reference.push_back(p);
  net.problem.observations.push_back(BundleObservation{0, t, *px0});
  net.problem.observations.push_back(BundleObservation{0, t, *px0 + Vec2(0.01, 0.0)});

  const BundleResult result = solve(net.problem);
  CHECK(result.report.degenerate_tracks_removed >= 1);
  CHECK(result.active_tracks[t] == 0);
  CHECK(result.report.converged);
}

TEST_CASE("global solve reproduces a known similarity exactly") {
  Network net = make_network(6, 50, 0.0, 1.0, 141);
  const BundleResult local = solve(net.problem);
  REQUIRE(local.report.converged);

  SimilarityTransform sim;
  sim.scale = 0.021;
  sim.rotation = rotation_exp(Vec3(0.3, 0.7, -0.4));
  sim.translation = Vec3(120.0, -45.0, 8.0);

  // Four targets, two per tunnel side, exact control coordinates.
  std::vector<int> target_tracks;
  for (size_t t = 0; t < local.points.size() && target_tracks.size() < 4; ++t) {
    if (!local.active_tracks[t]) continue;
    const bool left = local.points[t].y() > 0;
    int count_left = 0, count_right = 0;
    for (int id : target_tracks)
      (local.points[id].y() > 0 ? count_left : count_right)++;
    if ((left && count_left < 2) || (!left && count_right < 2))
      target_tracks.push_back(static_cast<int>(t));
  }
  REQUIRE(target_tracks.size() == 4);
  std::vector<ControlObservation> control;
  for (int t : target_tracks) {
    ControlObservation c;
    c.track = t;
    c.global_point = sim.apply(local.points[t]);
    c.sigma = 0.002;
    control.push_back(c);
  }

  const BundleResult global = solve_global(net.problem, local, sim, control);
  CHECK(global.report.converged);
  CHECK(global.report.iterations <= 5);
  for (size_t p = 0; p < global.poses.size(); ++p) {
    CHECK((global.poses[p].center - sim.apply(local.poses[p].center)).norm() < 1e-6);
    const Mat3 expected = local.poses[p].rotation * sim.rotation.transpose();
    CHECK((global.poses[p].rotation - expected).cwiseAbs().maxCoeff() < 1e-6);
  }
  // No information removed: pixel RMS does not grow.
  CHECK(global.report.final_rms_px <= local.report.final_rms_px + 1e-9);
}
