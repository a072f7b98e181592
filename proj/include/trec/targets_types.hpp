#pragma once

#include <string>
#include <vector>

#include "trec/geometry.hpp"

namespace trec {

// Detected circular signalized target in one image.
struct TargetObservation {
  int image = 0;  // index into the dataset image list
  Vec2 center = Vec2::Zero();  // subpixel
  double radius = 0.0;         // px
  double circularity = 0.0;    // isoperimetric ratio, [0,1]
  double score = 0.0;
};

// A target triangulated in the local model frame, not yet assigned to a
// surveyed control point.
struct LocalTarget {
  int target_id = -1;  // unassigned until georeferencing
  Vec3 local_point = Vec3::Zero();
  std::vector<TargetObservation> observations;  // >= 2
  double triangulation_rms_px = 0.0;
};

}  // namespace trec
