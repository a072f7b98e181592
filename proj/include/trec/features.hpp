#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trec/geometry.hpp"
#include "trec/image_prep.hpp"

namespace trec {

// Scale-space blob feature with a 64-dimensional gradient-statistics
// descriptor over a scale-adapted oriented patch.
struct Feature {
  Vec2 position = Vec2::Zero();  // subpixel, working-resolution coordinates
  double scale = 0.0;            // pixels
  double orientation = 0.0;      // radians
  double response = 0.0;
  std::array<float, 64> descriptor{};
};

struct DetectorConfig {
  int octaves = 4;
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double response_threshold = 1e-7;  // on det-of-Hessian of a [0,1] image
  int max_per_tile = 15;
  int border_margin = 8;  // px at the octave resolution
};

std::vector<Feature> detect(const PreparedImage& image, const DetectorConfig& config);

struct MatchConfig {
  double ratio = 0.8;
  // Single-candidate acceptance when no second-best exists.
  double absolute_threshold = 0.25;
  // Brute-force search below this many descriptors, kd-tree above.
  int exact_below = 2000;
  int tree_checks = 96;
};

// Injective partial mapping a->b: ratio test against the second-best
// candidate plus mutual-best verification.
std::vector<std::pair<int, int>> match_pair(const std::vector<Feature>& a,
                                            const std::vector<Feature>& b,
                                            const MatchConfig& config = {});

struct GeometricFilter {
  std::vector<char> inlier_mask;  // parallel to the input matches
  int num_inliers = 0;
  Mat3 model = Mat3::Zero();      // fundamental matrix or homography
  bool used_homography = false;
};

// Robust epipolar-geometry consensus over the 8-point relation, with a
// homography fallback for planar scenes. kInsufficientMatches below 8.
GeometricFilter filter_geometric(const std::vector<std::pair<int, int>>& matches,
                                 const std::vector<Vec2>& a_positions,
                                 const std::vector<Vec2>& b_positions,
                                 double inlier_threshold_px, uint64_t seed);

struct TrackObservation {
  int image = 0;  // index into the dataset image list
  Vec2 pixel = Vec2::Zero();
  int feature = 0;
};

struct FeatureTrack {
  int track_id = 0;
  std::vector<TrackObservation> observations;
  std::optional<Vec3> latent_point;
  std::array<int, 2> images_per_tripod{0, 0};
  double score = 0.0;  // summed detector response
};

struct PairMatches {
  int image_a = 0;
  int image_b = 0;
  std::vector<std::pair<int, int>> matches;  // feature index in a, in b
};

struct TrackBuildConfig {
  int min_track_length = 2;
  bool require_both_tripods = true;
};

// Union-find transitive closure of the pairwise matches. Tracks touching the
// same image twice are dropped; tracks confined to one tripod are excluded.
std::vector<FeatureTrack> build_tracks(const std::vector<std::vector<Feature>>& features,
                                       const std::vector<int>& tripod_of_image,
                                       const std::vector<PairMatches>& pair_matches,
                                       const TrackBuildConfig& config = {});

}  // namespace trec
