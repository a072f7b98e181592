#pragma once

#include <vector>

#include "trec/image_prep.hpp"
#include "trec/targets_types.hpp"

namespace trec {

struct TargetDetectConfig {
  // Radius search range at working resolution; the pipeline derives this
  // from target diameter, expected distance range and focal length.
  double min_radius_px = 4.0;
  double max_radius_px = 30.0;
  double circularity_tolerance = 0.85;
  // Bright disk on darker background by default (retro target under lamp
  // light); flip for dark-on-bright prints.
  bool bright_on_dark = true;
  int threshold_window = 31;       // local adaptive threshold window, odd
  double threshold_offset = 12.0;  // gray levels above the local mean
  double min_hough_score = 0.33;   // fraction of perimeter supported by edges
  double border_margin_factor = 1.5;  // times radius, position plausibility
};

// Local thresholding -> morphological open/close -> circle Hough voting over
// the radius range -> circularity/radius/position filtering -> subpixel
// refinement by intensity-weighted centroid.
std::vector<TargetObservation> detect_targets(const PreparedImage& image,
                                              const TargetDetectConfig& config);

struct TargetCorrespondConfig {
  double epipolar_threshold_px = 2.0;
  double max_triangulation_rms_px = 1.0;
};

// Groups per-image detections by epipolar consistency and triangulates each
// group of >= 2 observations into a local 3D target. Ambiguous detections
// (consistent with two groups) are dropped from both.
std::vector<LocalTarget> correspond_targets(
    const std::vector<std::vector<TargetObservation>>& detections_per_image,
    const std::vector<CameraPose>& poses, const CameraIntrinsics& intrinsics,
    const TargetCorrespondConfig& config = {});

}  // namespace trec
