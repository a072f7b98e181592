#include "trec/georef.hpp"

#include <fstream>
#include <random>
#include <set>

#include "doctest.h"

using namespace trec;

namespace {

SimilarityTransform random_similarity(uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SimilarityTransform t;
  t.scale = scale;
  t.rotation = rotation_exp(Vec3(n(rng), n(rng), n(rng)));
  t.translation = Vec3(100.0 * n(rng), 100.0 * n(rng), 100.0 * n(rng));
  return t;
}

std::vector<std::pair<Vec3, Vec3>> transformed_pairs(const SimilarityTransform& t,
                                                     int count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (int i = 0; i < count; ++i) {
    const Vec3 local(u(rng), u(rng), u(rng));
    pairs.emplace_back(local, t.apply(local));
  }
  return pairs;
}

LocalTarget make_target(const Vec3& p) {
  LocalTarget t;
  t.local_point = p;
  t.observations.resize(2);
  return t;
}

}  // namespace

TEST_CASE("fit_similarity recovers a known transform to 1e-10") {
  const SimilarityTransform truth = random_similarity(3, 0.021);
  const auto pairs = transformed_pairs(truth, 8, 4);
  const SimilarityFit fit = fit_similarity(pairs);
  CHECK(std::abs(fit.transform.scale - truth.scale) < 1e-10);
  CHECK((fit.transform.rotation - truth.rotation).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.transform.translation - truth.translation).norm() < 1e-8);
  CHECK(fit.rms < 1e-9);
}

TEST_CASE("fit_similarity: identity pairs give the identity transform") {
  std::vector<std::pair<Vec3, Vec3>> pairs;
  pairs.emplace_back(Vec3(1, 0, 0), Vec3(1, 0, 0));
  pairs.emplace_back(Vec3(0, 2, 0), Vec3(0, 2, 0));
  pairs.emplace_back(Vec3(0, 0, 3), Vec3(0, 0, 3));
  pairs.emplace_back(Vec3(1, 1, 1), Vec3(1, 1, 1));
  const SimilarityFit fit = fit_similarity(pairs);
  CHECK(fit.transform.scale == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((fit.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(fit.transform.translation.norm() < 1e-14);
}

TEST_CASE("fit_similarity: exactly three points interpolate with zero rms") {
  const SimilarityTransform truth = random_similarity(7, 2.5);
  const auto pairs = transformed_pairs(truth, 3, 8);
  const SimilarityFit fit = fit_similarity(pairs);
  CHECK(fit.rms < 1e-10);
}

TEST_CASE("fit_similarity is bitwise invariant to pair ordering") {
  const SimilarityTransform truth = random_similarity(11, 0.5);
  auto pairs = transformed_pairs(truth, 7, 12);
  // Add noise so the fit is not exact and summation order would matter.
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 0.01);
  for (auto& [l, g] : pairs) g += Vec3(n(rng), n(rng), n(rng));

  const SimilarityFit a = fit_similarity(pairs);
  std::reverse(pairs.begin(), pairs.end());
  const SimilarityFit b = fit_similarity(pairs);
  std::mt19937_64 shuffle_rng(14);
  std::shuffle(pairs.begin(), pairs.end(), shuffle_rng);
  const SimilarityFit c = fit_similarity(pairs);

  CHECK(a.transform.scale == b.transform.scale);
  CHECK(a.transform.scale == c.transform.scale);
  CHECK((a.transform.rotation - b.transform.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.transform.rotation - c.transform.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.transform.translation - b.transform.translation).norm() == 0.0);
  CHECK((a.transform.translation - c.transform.translation).norm() == 0.0);
}

TEST_CASE("fit_similarity preserves scaled distances") {
  const SimilarityTransform truth = random_similarity(17, 3.7);
  const auto pairs = transformed_pairs(truth, 10, 18);
  const SimilarityFit fit = fit_similarity(pairs);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 q(u(rng), u(rng), u(rng));
    const double local_d = (p - q).norm();
    const double global_d = (fit.transform.apply(p) - fit.transform.apply(q)).norm();
    CHECK(std::abs(global_d - fit.transform.scale * local_d) <
          1e-9 * fit.transform.scale * std::max(1.0, local_d));
  }
}

TEST_CASE("fit_similarity: collinear input raises rank-deficiency") {
  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (int i = 0; i < 5; ++i)
    pairs.emplace_back(Vec3(i, 0, 0), Vec3(2.0 * i, 0, 0));
  bool threw = false;
  try {
    (void)fit_similarity(pairs);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kRankDeficiency);
  }
  CHECK(threw);
}

TEST_CASE("fit_similarity: composing with the inverse gives identity") {
  const SimilarityTransform truth = random_similarity(23, 0.08);
  const auto pairs = transformed_pairs(truth, 6, 24);
  const SimilarityFit fit = fit_similarity(pairs);
  const SimilarityTransform inv = fit.transform.inverse();
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK((inv.apply(fit.transform.apply(p)) - p).norm() < 1e-9);
  }
}

TEST_CASE("assign_and_estimate: shuffled control list is recovered bijectively") {
  const SimilarityTransform truth = random_similarity(31, 0.5);
  std::vector<LocalTarget> targets;
  targets.push_back(make_target(Vec3(2.0, 9.5, 1.0)));
  targets.push_back(make_target(Vec3(-1.5, 9.8, -0.8)));
  targets.push_back(make_target(Vec3(1.8, -9.6, 0.4)));
  targets.push_back(make_target(Vec3(-2.2, -9.4, -1.2)));
  std::vector<ControlPoint> control;
  const std::vector<int> shuffle = {2, 0, 3, 1};
  for (int i : shuffle) {
    ControlPoint cp;
    cp.name = "T" + std::to_string(i);
    cp.global_point = truth.apply(targets[i].local_point);
    control.push_back(cp);
  }
  const AssignmentResult result = assign_and_estimate(targets, control);
  REQUIRE(result.assignment.size() == 4);
  for (const auto& [local, ctrl] : result.assignment)
    CHECK(control[ctrl].name == "T" + std::to_string(local));
  CHECK(std::abs(result.transform.scale - truth.scale) < 1e-9);
  CHECK(result.rms < 1e-9);
}

TEST_CASE("assign_and_estimate: extra control points stay unused") {
  const SimilarityTransform truth = random_similarity(41, 1.2);
  std::vector<LocalTarget> targets;
  targets.push_back(make_target(Vec3(2.0, 9.5, 1.0)));
  targets.push_back(make_target(Vec3(-1.5, 9.8, -0.8)));
  targets.push_back(make_target(Vec3(1.8, -9.6, 0.4)));
  targets.push_back(make_target(Vec3(-2.2, -9.4, -1.2)));
  std::vector<ControlPoint> control;
  for (size_t i = 0; i < targets.size(); ++i) {
    ControlPoint cp;
    cp.name = "T" + std::to_string(i);
    cp.global_point = truth.apply(targets[i].local_point);
    control.push_back(cp);
  }
  // Two surveyed points whose targets were never detected.
  ControlPoint extra1{"X1", truth.apply(Vec3(0.0, 9.0, 3.0)), 0.002};
  ControlPoint extra2{"X2", truth.apply(Vec3(0.5, -9.0, -3.0)), 0.002};
  control.push_back(extra1);
  control.push_back(extra2);

  const AssignmentResult result = assign_and_estimate(targets, control);
  CHECK(result.assignment.size() == 4);
  std::set<int> used;
  for (const auto& [local, ctrl] : result.assignment) {
    CHECK(control[ctrl].name[0] == 'T');
    used.insert(ctrl);
  }
  CHECK(used.size() == 4);
}

TEST_CASE("assign_and_estimate: spurious target is excluded and transform unchanged") {
  const SimilarityTransform truth = random_similarity(51, 0.33);
  std::vector<LocalTarget> targets;
  targets.push_back(make_target(Vec3(2.0, 9.5, 1.0)));
  targets.push_back(make_target(Vec3(-1.5, 9.8, -0.8)));
  targets.push_back(make_target(Vec3(1.8, -9.6, 0.4)));
  targets.push_back(make_target(Vec3(-2.2, -9.4, -1.2)));
  std::vector<ControlPoint> control;
  for (size_t i = 0; i < targets.size(); ++i) {
    ControlPoint cp;
    cp.name = "T" + std::to_string(i);
    cp.global_point = truth.apply(targets[i].local_point);
    control.push_back(cp);
  }
  const AssignmentResult clean = assign_and_estimate(targets, control);

  auto with_spurious = targets;
  with_spurious.push_back(make_target(Vec3(0.3, 4.0, 2.0)));  // false detection
  const AssignmentResult result = assign_and_estimate(with_spurious, control);
  CHECK(result.assignment.size() == 4);
  CHECK(result.assignment.count(4) == 0);
  CHECK(std::abs(result.transform.scale - clean.transform.scale) < 1e-9);
  CHECK((result.transform.rotation - clean.transform.rotation).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((result.transform.translation - clean.transform.translation).norm() < 1e-9);
}

TEST_CASE("assign_and_estimate: too few inliers raises georeference-failure") {
  std::vector<LocalTarget> targets;
  targets.push_back(make_target(Vec3(1, 0, 0)));
  targets.push_back(make_target(Vec3(0, 1, 0)));
  targets.push_back(make_target(Vec3(0, 0, 1)));
  std::vector<ControlPoint> control;
  // Control distances are mutually inconsistent with any similarity of the
  // target triangle.
  control.push_back(ControlPoint{"A", Vec3(0, 0, 0), 0.002});
  control.push_back(ControlPoint{"B", Vec3(1, 0, 0), 0.002});
  control.push_back(ControlPoint{"C", Vec3(97.0, 55.0, 31.0), 0.002});
  bool threw = false;
  try {
    (void)assign_and_estimate(targets, control);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kGeoreferenceFailure);
  }
  CHECK(threw);
}

TEST_CASE("assign_and_estimate is deterministic in sampling mode") {
  const SimilarityTransform truth = random_similarity(61, 0.7);
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-9.0, 9.0);
  std::vector<LocalTarget> targets;
  std::vector<ControlPoint> control;
  for (int i = 0; i < 9; ++i) {  // above the exhaustive bound
    const Vec3 p(u(rng), u(rng), u(rng));
    targets.push_back(make_target(p));
    ControlPoint cp;
    cp.name = "P" + std::to_string(i);
    cp.global_point = truth.apply(p);
    control.push_back(cp);
  }
  AssignmentConfig cfg;
  cfg.seed = 99;
  const AssignmentResult a = assign_and_estimate(targets, control, cfg);
  const AssignmentResult b = assign_and_estimate(targets, control, cfg);
  CHECK(a.assignment == b.assignment);
  CHECK(a.transform.scale == b.transform.scale);
  CHECK((a.transform.translation - b.transform.translation).norm() == 0.0);
  CHECK(a.assignment.size() == 9);
}

TEST_CASE("control point file round trip and validation") {
  const auto path = std::filesystem::temp_directory_path() / "trec_control_test.txt";
  std::vector<ControlPoint> points;
  points.push_back(ControlPoint{"T1", Vec3(120.25, -45.5, 8.125), 0.002});
  points.push_back(ControlPoint{"T2", Vec3(121.5, -44.25, 9.5), 0.003});
  save_control_points(path, points);
  const auto loaded = load_control_points(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "T1");
  CHECK((loaded[0].global_point - points[0].global_point).norm() == 0.0);
  CHECK(loaded[1].sigma == 0.003);
  std::filesystem::remove(path);

  const auto bad = std::filesystem::temp_directory_path() / "trec_control_bad.txt";
  {
    std::ofstream out(bad);
    out << "T1 1 2 3\nT1 4 5 6\n";
  }
  CHECK_THROWS_AS((void)load_control_points(bad), Error);
  std::filesystem::remove(bad);
}
