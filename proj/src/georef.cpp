#include "trec/georef.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace trec {

std::vector<ControlPoint> load_control_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<ControlPoint> points;
  std::set<std::string> names;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    ControlPoint cp;
    if (!(ls >> cp.name)) continue;  // blank line
    if (!(ls >> cp.global_point.x() >> cp.global_point.y() >> cp.global_point.z()))
      fail(ErrorCode::kIoError,
           path.string() + ":" + std::to_string(lineno) + ": expected name x y z [sigma]");
    double sigma;
    if (ls >> sigma) cp.sigma = sigma;
    if (!(cp.sigma > 0.0))
      fail(ErrorCode::kIoError, "control point " + cp.name + ": sigma must be > 0");
    if (!names.insert(cp.name).second)
      fail(ErrorCode::kIoError, "duplicate control point name: " + cp.name);
    points.push_back(cp);
  }
  return points;
}

void save_control_points(const std::filesystem::path& path,
                         const std::vector<ControlPoint>& points) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << "# name x y z sigma\n";
  char buf[256];
  for (const auto& cp : points) {
    std::snprintf(buf, sizeof(buf), "%s %.17g %.17g %.17g %.17g\n", cp.name.c_str(),
                  cp.global_point.x(), cp.global_point.y(), cp.global_point.z(), cp.sigma);
    out << buf;
  }
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

void SimilarityTransform::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorCode::kInvalidArgument, "similarity scale must be finite positive");
  if (((rotation * rotation.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      rotation.determinant() < 0.0)
    fail(ErrorCode::kInvalidArgument, "similarity rotation must be a proper rotation");
}

SimilarityFit fit_similarity(const std::vector<std::pair<Vec3, Vec3>>& pairs,
                             const std::vector<double>& weights) {
  if (pairs.size() < 3)
    fail(ErrorCode::kInvalidArgument, "similarity fit needs >= 3 point pairs");
  if (!weights.empty() && weights.size() != pairs.size())
    fail(ErrorCode::kInvalidArgument, "weights must match pairs");

  // Canonical input ordering makes the result independent of caller order,
  // bit for bit.
  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& pa = pairs[a];
    const auto& pb = pairs[b];
    for (int k = 0; k < 3; ++k) {
      if (pa.first[k] != pb.first[k]) return pa.first[k] < pb.first[k];
    }
    for (int k = 0; k < 3; ++k) {
      if (pa.second[k] != pb.second[k]) return pa.second[k] < pb.second[k];
    }
    return a < b;
  });

  double wsum = 0.0;
  Vec3 centroid_local = Vec3::Zero(), centroid_global = Vec3::Zero();
  for (int i : order) {
    const double w = weights.empty() ? 1.0 : weights[i];
    wsum += w;
    centroid_local += w * pairs[i].first;
    centroid_global += w * pairs[i].second;
  }
  if (!(wsum > 0.0)) fail(ErrorCode::kInvalidArgument, "weights sum to zero");
  centroid_local /= wsum;
  centroid_global /= wsum;

  Mat3 cross = Mat3::Zero();
  double var_local = 0.0, var_global = 0.0;
  for (int i : order) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Vec3 l = pairs[i].first - centroid_local;
    const Vec3 g = pairs[i].second - centroid_global;
    cross += w * g * l.transpose();
    var_local += w * l.squaredNorm();
    var_global += w * g.squaredNorm();
  }
  if (var_local <= 0.0 || var_global <= 0.0)
    fail(ErrorCode::kRankDeficiency, "degenerate (coincident) point configuration");

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Collinear points leave the rotation about the line unconstrained.
  if (svd.singularValues()(1) < 1e-12 * svd.singularValues()(0))
    fail(ErrorCode::kRankDeficiency, "collinear point configuration");
  Mat3 flip = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) flip(2, 2) = -1.0;

  SimilarityFit fit;
  fit.transform.rotation = svd.matrixU() * flip * svd.matrixV().transpose();
  fit.transform.scale = std::sqrt(var_global / var_local);
  fit.transform.translation =
      centroid_global - fit.transform.scale * (fit.transform.rotation * centroid_local);

  double sq = 0.0;
  for (const auto& [local, global] : pairs)
    sq += (fit.transform.apply(local) - global).squaredNorm();
  fit.rms = std::sqrt(sq / pairs.size());
  return fit;
}

namespace {

struct Hypothesis {
  std::array<int, 3> locals;
  std::array<int, 3> controls;
};

// Pairwise-distance ratio prefilter: all three implied scales must agree.
bool scale_consistent(const std::vector<LocalTarget>& targets,
                      const std::vector<ControlPoint>& control, const Hypothesis& h,
                      double tolerance) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3;
    const double dl =
        (targets[h.locals[a]].local_point - targets[h.locals[b]].local_point).norm();
    const double dg =
        (control[h.controls[a]].global_point - control[h.controls[b]].global_point).norm();
    if (dl < 1e-12 || dg < 1e-12) return false;
    const double s = dg / dl;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi / lo < 1.0 + tolerance;
}

struct Consensus {
  std::map<int, int> assignment;  // local -> control
  int count = 0;
  double rms = std::numeric_limits<double>::infinity();
};

// Injective nearest-control assignment under the inlier radius.
Consensus evaluate_transform(const SimilarityTransform& transform,
                             const std::vector<LocalTarget>& targets,
                             const std::vector<ControlPoint>& control,
                             double inlier_radius) {
  struct Candidate {
    double dist;
    int local, ctrl;
  };
  std::vector<Candidate> candidates;
  for (size_t t = 0; t < targets.size(); ++t) {
    const Vec3 mapped = transform.apply(targets[t].local_point);
    for (size_t c = 0; c < control.size(); ++c) {
      const double d = (mapped - control[c].global_point).norm();
      if (d < inlier_radius)
        candidates.push_back(Candidate{d, static_cast<int>(t), static_cast<int>(c)});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.local != b.local) return a.local < b.local;
    return a.ctrl < b.ctrl;
  });
  Consensus consensus;
  std::set<int> used_local, used_ctrl;
  double sq = 0.0;
  for (const auto& c : candidates) {
    if (used_local.count(c.local) || used_ctrl.count(c.ctrl)) continue;
    used_local.insert(c.local);
    used_ctrl.insert(c.ctrl);
    consensus.assignment[c.local] = c.ctrl;
    sq += c.dist * c.dist;
  }
  consensus.count = static_cast<int>(consensus.assignment.size());
  if (consensus.count > 0) consensus.rms = std::sqrt(sq / consensus.count);
  return consensus;
}

bool better(const Consensus& a, const Consensus& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.rms != b.rms) return a.rms < b.rms;
  return a.assignment < b.assignment;  // deterministic lexicographic tie-break
}

}  // namespace

AssignmentResult assign_and_estimate(const std::vector<LocalTarget>& local_targets,
                                     const std::vector<ControlPoint>& control,
                                     const AssignmentConfig& config) {
  const int nt = static_cast<int>(local_targets.size());
  const int nc = static_cast<int>(control.size());
  if (nt < 3 || nc < 3)
    fail(ErrorCode::kGeoreferenceFailure,
         "need >= 3 local targets and >= 3 control points, got " + std::to_string(nt) +
             "/" + std::to_string(nc));

  std::vector<Hypothesis> hypotheses;
  const bool exhaustive =
      nt <= config.max_exhaustive_targets && nc <= config.max_exhaustive_controls;
  if (exhaustive) {
    for (int a = 0; a < nt; ++a)
      for (int b = a + 1; b < nt; ++b)
        for (int c = b + 1; c < nt; ++c) {
          // All ordered control triples against the fixed local triple.
          for (int x = 0; x < nc; ++x)
            for (int y = 0; y < nc; ++y)
              for (int z = 0; z < nc; ++z) {
                if (x == y || y == z || x == z) continue;
                hypotheses.push_back(Hypothesis{{a, b, c}, {x, y, z}});
              }
        }
  } else {
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<int> pick_t(0, nt - 1), pick_c(0, nc - 1);
    for (int s = 0; s < config.sample_count; ++s) {
      Hypothesis h;
      do {
        for (int k = 0; k < 3; ++k) h.locals[k] = pick_t(rng);
      } while (h.locals[0] == h.locals[1] || h.locals[1] == h.locals[2] ||
               h.locals[0] == h.locals[2]);
      do {
        for (int k = 0; k < 3; ++k) h.controls[k] = pick_c(rng);
      } while (h.controls[0] == h.controls[1] || h.controls[1] == h.controls[2] ||
               h.controls[0] == h.controls[2]);
      hypotheses.push_back(h);
    }
  }

  Consensus best;
  SimilarityTransform best_transform;
  for (const auto& h : hypotheses) {
    if (!scale_consistent(local_targets, control, h, config.scale_ratio_tolerance))
      continue;
    std::vector<std::pair<Vec3, Vec3>> pairs;
    for (int k = 0; k < 3; ++k)
      pairs.emplace_back(local_targets[h.locals[k]].local_point,
                         control[h.controls[k]].global_point);
    SimilarityFit fit;
    try {
      fit = fit_similarity(pairs);
    } catch (const Error&) {
      continue;  // collinear or coincident sample
    }
    const Consensus consensus =
        evaluate_transform(fit.transform, local_targets, control, config.inlier_radius);
    if (consensus.count >= 3 && better(consensus, best)) {
      best = consensus;
      best_transform = fit.transform;
    }
  }

  if (best.count < 3)
    fail(ErrorCode::kGeoreferenceFailure,
         "no assignment hypothesis reached 3 inliers");

  // Refit on the full consensus set, then refresh the assignment once.
  for (int round = 0; round < 2; ++round) {
    std::vector<std::pair<Vec3, Vec3>> pairs;
    std::vector<double> weights;
    for (const auto& [local, ctrl] : best.assignment) {
      pairs.emplace_back(local_targets[local].local_point, control[ctrl].global_point);
      weights.push_back(1.0 / (control[ctrl].sigma * control[ctrl].sigma));
    }
    const SimilarityFit fit = fit_similarity(pairs, weights);
    best_transform = fit.transform;
    const Consensus refreshed =
        evaluate_transform(best_transform, local_targets, control, config.inlier_radius);
    if (refreshed.count < 3) break;
    if (refreshed.assignment == best.assignment) {
      best = refreshed;
      break;
    }
    best = refreshed;
  }

  AssignmentResult result;
  result.assignment = best.assignment;
  result.transform = best_transform;
  result.num_inliers = best.count;
  double sq = 0.0;
  for (const auto& [local, ctrl] : best.assignment)
    sq += (best_transform.apply(local_targets[local].local_point) -
           control[ctrl].global_point)
              .squaredNorm();
  result.rms = best.count > 0 ? std::sqrt(sq / best.count) : 0.0;
  return result;
}

}  // namespace trec
