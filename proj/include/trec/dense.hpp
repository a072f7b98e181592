#pragma once

#include <string>
#include <vector>

#include "trec/bundle.hpp"
#include "trec/geometry.hpp"
#include "trec/image_prep.hpp"

namespace trec {

struct StereoPair {
  int reference_image = -1;  // tripod 0
  int match_image = -1;      // tripod 1
  double overlap = 0.0;      // fraction of reference view directions seen by match
};

struct PairSelection {
  std::vector<StereoPair> pairs;
  std::vector<std::string> warnings;  // coverage gaps per rotation step
};

// One pair per tripod-0 rotation step: the tripod-1 image of maximal view
// overlap (estimated from the pose frusta); pairs under min_overlap are
// rejected with a coverage-gap warning.
PairSelection select_pairs(const std::vector<CameraPose>& poses,
                           const std::vector<SweepImageInfo>& info,
                           const CameraIntrinsics& intrinsics, double min_overlap = 0.3);

// Offsets point from each reference pixel to its correspondence in the match
// image; NaN marks invalid. Valid offsets stay on the pair's epipolar
// geometry by construction of the rectified search.
struct DisparityMap {
  int reference_image = -1;
  int match_image = -1;
  RasterF offsets;     // 2 channels
  RasterF confidence;  // 1 channel, [0,1], 0 where invalid

  bool valid_at(int x, int y) const {
    return std::isfinite(offsets.at(x, y, 0)) && std::isfinite(offsets.at(x, y, 1));
  }
};

struct DenseMatchConfig {
  int window_radius = 5;        // correlation window 11x11
  int search_margin_px = 12;    // around the tie-point prediction
  int prior_cell_px = 48;       // seed interpolation cell size
  double lr_threshold_px = 1.0;
  double min_ncc = 0.35;        // mean per-channel NCC acceptance
  int min_seeds = 5;
  bool refine_subpixel_flow = true;  // 1D photometric refinement pass
  int workers = 1;
};

// Correlation matching along rectified epipolar scanlines, search range
// seeded from the pair's tie-point disparities. The RGB channels contribute
// individual correlation cues. kInsufficientMatches below min_seeds.
DisparityMap dense_match(const StereoPair& pair, const PreparedImage& reference,
                         const PreparedImage& match,
                         const std::vector<CameraPose>& poses,
                         const std::vector<std::pair<Vec2, Vec2>>& seed_correspondences,
                         const DenseMatchConfig& config = {});

}  // namespace trec
