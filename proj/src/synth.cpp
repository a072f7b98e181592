#include "trec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "trec/bundle.hpp"
#include "trec/image_io.hpp"
#include "trec/keyvalue.hpp"
#include "trec/parallel.hpp"

namespace trec {

namespace {

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double hash01(uint64_t seed, int64_t ix, int64_t iy) {
  const uint64_t h = splitmix(seed ^ splitmix(static_cast<uint64_t>(ix)) ^
                              (splitmix(static_cast<uint64_t>(iy)) << 1));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

// Deterministic per-pixel Gaussian (Box-Muller on counter hashes), safe for
// any parallel schedule.
double hash_gaussian(uint64_t seed, int64_t key) {
  const double u1 = std::max(1e-12, static_cast<double>(splitmix(seed ^ splitmix(key)) >> 11) *
                                        (1.0 / 9007199254740992.0));
  const double u2 = static_cast<double>(splitmix(seed ^ splitmix(key + 0x51ED27)) >> 11) *
                    (1.0 / 9007199254740992.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Bilinear value noise on a lattice.
double value_noise(uint64_t seed, double u, double v) {
  const double fu = std::floor(u), fv = std::floor(v);
  const int64_t iu = static_cast<int64_t>(fu), iv = static_cast<int64_t>(fv);
  const double tu = u - fu, tv = v - fv;
  const double su = tu * tu * (3 - 2 * tu), sv = tv * tv * (3 - 2 * tv);
  const double v00 = hash01(seed, iu, iv), v10 = hash01(seed, iu + 1, iv);
  const double v01 = hash01(seed, iu, iv + 1), v11 = hash01(seed, iu + 1, iv + 1);
  return (v00 * (1 - su) + v10 * su) * (1 - sv) + (v01 * (1 - su) + v11 * su) * sv;
}

struct Wave {
  double m;      // integer azimuthal wavenumber (periodic around the tube)
  double w;      // axial angular frequency
  double phase;
  double amp;
};

std::vector<Wave> displacement_waves(const SyntheticScene& scene) {
  std::vector<Wave> waves;
  std::mt19937_64 rng(scene.roughness_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> axial_wavelength(0.5, 2.5);
  std::uniform_int_distribution<int> m_low(2, 12);
  std::uniform_int_distribution<int> m_high(13, 60);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  double total = 0.0;
  for (int i = 0; i < 24; ++i) {
    Wave wv;
    wv.m = i < 8 ? m_low(rng) : m_high(rng);
    wv.w = 2.0 * M_PI / axial_wavelength(rng);
    wv.phase = phase(rng);
    wv.amp = amp(rng);
    total += wv.amp;
    waves.push_back(wv);
  }
  for (auto& wv : waves) wv.amp *= scene.roughness_amplitude / total;
  return waves;
}

struct SurfaceModel {
  const SyntheticScene* scene;
  std::vector<Wave> waves;

  double displacement(double azimuth, double axial) const {
    double d = 0.0;
    for (const auto& wv : waves)
      d += wv.amp * std::cos(wv.m * azimuth + wv.w * axial + wv.phase);
    return d;
  }

  void displacement_gradient(double azimuth, double axial, double* d_theta,
                             double* d_axial) const {
    *d_theta = 0.0;
    *d_axial = 0.0;
    for (const auto& wv : waves) {
      const double s = std::sin(wv.m * azimuth + wv.w * axial + wv.phase);
      *d_theta -= wv.amp * wv.m * s;
      *d_axial -= wv.amp * wv.w * s;
    }
  }

  double radius(double azimuth, double axial) const {
    return scene->radius + displacement(azimuth, axial);
  }
};

struct TargetGeometry {
  Vec3 center_scene;
  double radius;         // meters on the surface
  double feather;        // soft edge width
};

// A ray in the scene frame hitting the displaced cylinder.
struct Hit {
  double t = 0.0;    // along-ray distance
  Vec3 point;        // scene frame
  double azimuth = 0.0, axial = 0.0;
};

bool cast_surface(const SurfaceModel& surface, const Vec3& origin, const Vec3& dir,
                  Hit* hit) {
  const SyntheticScene& scene = *surface.scene;
  // Base cylinder about the +X axis.
  const double qa = dir.y() * dir.y() + dir.z() * dir.z();
  if (qa < 1e-14) return false;
  const double qb = 2.0 * (origin.y() * dir.y() + origin.z() * dir.z());
  const double qc =
      origin.y() * origin.y() + origin.z() * origin.z() - scene.radius * scene.radius;
  const double disc = qb * qb - 4 * qa * qc;
  if (disc <= 0.0) return false;
  double t = (-qb + std::sqrt(disc)) / (2 * qa);
  if (t <= 0.0) return false;
  // Newton refinement against the displaced radius.
  for (int iter = 0; iter < 25; ++iter) {
    const Vec3 p = origin + t * dir;
    const double rho = std::hypot(p.y(), p.z());
    const double theta = std::atan2(p.z(), p.y());
    const double target = surface.radius(theta, p.x());
    const double g = rho - target;
    // d rho / dt along the ray; displacement gradients are second order.
    const double drho = (p.y() * dir.y() + p.z() * dir.z()) / std::max(rho, 1e-9);
    if (std::abs(drho) < 1e-12) break;
    const double step = g / drho;
    t -= step;
    if (std::abs(step) < 1e-12) break;
  }
  if (t <= 0.0) return false;
  hit->t = t;
  hit->point = origin + t * dir;
  hit->azimuth = std::atan2(hit->point.z(), hit->point.y());
  hit->axial = hit->point.x();
  if (std::abs(hit->axial) > scene.length / 2.0) return false;
  return true;
}

bool cast_occluder(const OccluderSprite& occluder, const Vec3& origin, const Vec3& dir,
                   double* t_out) {
  const Vec3 normal = occluder.edge_u.cross(occluder.edge_v);
  const double denom = normal.dot(dir);
  if (std::abs(denom) < 1e-12) return false;
  const double t = normal.dot(occluder.corner - origin) / denom;
  if (t <= 0.0) return false;
  const Vec3 p = origin + t * dir - occluder.corner;
  const double u = p.dot(occluder.edge_u) / occluder.edge_u.squaredNorm();
  const double v = p.dot(occluder.edge_v) / occluder.edge_v.squaredNorm();
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return false;
  *t_out = t;
  return true;
}

}  // namespace

void SyntheticScene::finalize() {
  if (intrinsics.focal_length <= 0.0) {
    intrinsics.width = image_width;
    intrinsics.height = image_height;
    intrinsics.focal_length =
        (image_width / 2.0) / std::tan(fov_deg * M_PI / 180.0 / 2.0);
    intrinsics.principal_point =
        Vec2((image_width - 1) / 2.0 + 1.7, (image_height - 1) / 2.0 - 2.3);
    intrinsics.radial_coeffs = Eigen::Vector3d(-0.06, 0.004, 0.0);
    intrinsics.tangential_coeffs = Eigen::Vector2d(2e-4, -1.5e-4);
    intrinsics.vignette_coeffs = Eigen::Vector4d(-0.25, -0.08, 0.0, 0.0);
  }
  if (targets.empty()) {
    // Two per tunnel side, staggered along the axis.
    targets.push_back(TargetPlacement{-0.18, -0.9, 0.15});
    targets.push_back(TargetPlacement{0.22, 1.1, 0.15});
    targets.push_back(TargetPlacement{M_PI - 0.2, -1.2, 0.15});
    targets.push_back(TargetPlacement{-M_PI + 0.15, 0.8, 0.15});
  }
}

void SyntheticScene::validate() const {
  intrinsics.validate();
  if (!(radius > 0.5) || !(length > 2.0))
    fail(ErrorCode::kInvalidScene, "tunnel geometry too small");
  if (images_per_sweep < 2) fail(ErrorCode::kInvalidScene, "need >= 2 images per sweep");
  if (roughness_amplitude < 0 || roughness_amplitude > 0.2 * radius)
    fail(ErrorCode::kInvalidScene, "roughness amplitude out of range");
}

GridSpec SyntheticScene::grid_spec() const {
  GridSpec spec;
  spec.origin = world_translation;  // scene origin in world coordinates
  spec.frame = world_rotation.transpose();
  spec.axial_extent = grid_axial_extent;
  spec.axial_bin = grid_bin;
  spec.azimuth_bins = static_cast<int>(std::lround(2.0 * M_PI * radius / grid_bin));
  return spec;
}

double surface_radius(const SyntheticScene& scene, double azimuth, double axial) {
  SurfaceModel surface{&scene, displacement_waves(scene)};
  return surface.radius(azimuth, axial);
}

void surface_albedo(const SyntheticScene& scene, double azimuth, double axial,
                    double rgb[3]) {
  // Multi-octave value noise in surface coordinates, plus chroma variation.
  const double u = azimuth * scene.radius, v = axial;
  double lum = 0.0, norm = 0.0;
  double scale = 0.06, weight = 1.0;
  for (int octave = 0; octave < 4; ++octave) {
    lum += weight * value_noise(scene.texture_seed + octave, u / scale, v / scale);
    norm += weight;
    scale *= 2.7;
    weight *= 1.6;
  }
  lum = 0.25 + 0.5 * (lum / norm);
  const double chroma_r =
      value_noise(scene.texture_seed ^ 0xC0FFEE, u / 0.35, v / 0.35) - 0.5;
  const double chroma_b =
      value_noise(scene.texture_seed ^ 0xBEEF, u / 0.22, v / 0.22) - 0.5;
  rgb[0] = std::clamp(lum * (1.0 + 0.55 * chroma_r), 0.0, 1.0);
  rgb[1] = std::clamp(lum * (1.0 - 0.18 * chroma_r - 0.15 * chroma_b), 0.0, 1.0);
  rgb[2] = std::clamp(lum * (1.0 + 0.5 * chroma_b), 0.0, 1.0);
}

SyntheticDataset render(const SyntheticScene& scene_in, int workers) {
  SyntheticScene scene = scene_in;
  scene.finalize();
  scene.validate();
  const SurfaceModel surface{&scene, displacement_waves(scene)};

  // Camera script: two tripods, a vertical sweep each, rough leveling only.
  std::mt19937_64 pose_rng(scene.pose_seed);
  std::normal_distribution<double> rot_jitter(0.0, scene.pose_jitter_deg * M_PI / 180.0);
  std::normal_distribution<double> pos_jitter(0.0, scene.center_jitter);
  std::vector<CameraPose> scene_poses;
  std::vector<std::pair<int, int>> script;  // tripod, rotation
  for (int tripod = 0; tripod < 2; ++tripod) {
    // Tripod placement is only roughly known; the jitter is shared by the
    // whole sweep (one camera position per tripod) and absorbed by the
    // similarity registration.
    Vec3 base = scene.tripod0 + Vec3(tripod * scene.baseline, 0, 0);
    if (tripod > 0)
      base += Vec3(pos_jitter(pose_rng), pos_jitter(pose_rng), pos_jitter(pose_rng));
    for (int k = 0; k < scene.images_per_sweep; ++k) {
      CameraPose pose;
      pose.center = base;
      pose.rotation = orthonormalized(
          sweep_rotation(k, scene.images_per_sweep) *
          rotation_exp(Vec3(rot_jitter(pose_rng), rot_jitter(pose_rng), rot_jitter(pose_rng))));
      scene_poses.push_back(pose);
      script.emplace_back(tripod, k);
    }
  }
  for (const auto& pose : scene_poses) {
    const double rho = std::hypot(pose.center.y(), pose.center.z());
    if (rho >= surface.radius(std::atan2(pose.center.z(), pose.center.y()),
                              pose.center.x()) -
                   0.1 ||
        std::abs(pose.center.x()) > scene.length / 2.0)
      fail(ErrorCode::kInvalidScene, "camera center inside or outside the surface");
  }

  // Targets sit on the displaced surface.
  std::vector<TargetGeometry> target_geo;
  for (const auto& t : scene.targets) {
    TargetGeometry g;
    const double rho = surface.radius(t.azimuth, t.axial);
    g.center_scene =
        Vec3(t.axial, rho * std::cos(t.azimuth), rho * std::sin(t.azimuth));
    g.radius = t.diameter / 2.0;
    g.feather = 0.006;
    target_geo.push_back(g);
  }

  SyntheticDataset out;
  out.intrinsics = scene.intrinsics;
  out.images.resize(scene_poses.size());
  out.depth_maps.resize(scene_poses.size());
  out.target_pixels.assign(scene_poses.size(),
                           std::vector<Vec2>(target_geo.size(),
                                             Vec2(std::nan(""), std::nan(""))));

  const int w = scene.intrinsics.width, h = scene.intrinsics.height;
  // Undistortion lookup is the slow part; precompute per pixel once.
  std::vector<Vec2> ideal_px(static_cast<size_t>(w) * h);
  parallel_for(0, h, workers, [&](int y) {
    for (int x = 0; x < w; ++x)
      ideal_px[static_cast<size_t>(y) * w + x] =
          remove_distortion(Vec2(x, y), scene.intrinsics);
  });

  for (size_t img = 0; img < scene_poses.size(); ++img) {
    const CameraPose& pose = scene_poses[img];
    Raster8 rgb(w, h, 3, 0);
    RasterF depth(w, h, 1, 0.f);
    parallel_for(0, h, workers, [&](int y) {
      for (int x = 0; x < w; ++x) {
        // The recorded pixel sees the scene along its ideal (undistorted) ray.
        const Vec2 ideal = ideal_px[static_cast<size_t>(y) * w + x];
        const Vec3 dir_cam((ideal.x() - scene.intrinsics.principal_point.x()) /
                               scene.intrinsics.focal_length,
                           (ideal.y() - scene.intrinsics.principal_point.y()) /
                               scene.intrinsics.focal_length,
                           1.0);
        const Vec3 dir = (pose.rotation.transpose() * dir_cam).normalized();

        double color[3] = {0, 0, 0};
        double ray_depth = 0.0;
        Hit hit;
        const bool on_surface = cast_surface(surface, pose.center, dir, &hit);
        double occ_t = std::numeric_limits<double>::infinity();
        for (const auto& occluder : scene.occluders) {
          double t;
          if (cast_occluder(occluder, pose.center, dir, &t)) occ_t = std::min(occ_t, t);
        }
        if (on_surface && hit.t < occ_t) {
          ray_depth = hit.t;
          double albedo[3];
          surface_albedo(scene, hit.azimuth, hit.axial, albedo);
          // Signalized targets: bright disk with a dark ring, soft edges.
          for (const auto& target : target_geo) {
            const double d = (hit.point - target.center_scene).norm();
            auto smooth = [&](double edge) {
              return std::clamp((edge - d) / target.feather, 0.0, 1.0);
            };
            const double disk = smooth(target.radius * 0.62);
            const double ring = smooth(target.radius) * (1.0 - disk);
            for (int c = 0; c < 3; ++c)
              albedo[c] = albedo[c] * (1.0 - disk - ring) + 0.95 * disk + 0.04 * ring;
          }
          // Lambertian with the single lamp.
          double d_theta, d_axial;
          surface.displacement_gradient(hit.azimuth, hit.axial, &d_theta, &d_axial);
          const double rho = std::hypot(hit.point.y(), hit.point.z());
          const Vec3 radial(0.0, hit.point.y() / rho, hit.point.z() / rho);
          const Vec3 tangent(0.0, -hit.point.z() / rho, hit.point.y() / rho);
          const Vec3 axis(1.0, 0.0, 0.0);
          // Inward normal of the displaced tube.
          const Vec3 normal =
              (-radial + tangent * (d_theta / rho) + axis * d_axial).normalized();
          const Vec3 to_lamp = scene.lamp - hit.point;
          const double dist2 = to_lamp.squaredNorm();
          const double lambert = std::max(0.0, normal.dot(to_lamp.normalized()));
          const double light = 0.18 + scene.lamp_power * lambert / (1.0 + dist2);
          for (int c = 0; c < 3; ++c) color[c] = albedo[c] * light;
        } else if (occ_t < std::numeric_limits<double>::infinity()) {
          ray_depth = occ_t;
          color[0] = color[1] = color[2] = 0.08;  // unlit equipment silhouette
        }

        const double gain =
            std::clamp(scene.intrinsics.vignette_gain(Vec2(x, y)), 0.0, 1.0);
        const int64_t noise_key =
            (static_cast<int64_t>(img) * h + y) * w + x;
        for (int c = 0; c < 3; ++c) {
          const double noisy =
              255.0 * color[c] * gain +
              scene.noise_sigma * hash_gaussian(scene.noise_seed, noise_key * 3 + c);
          rgb.at(x, y, c) = to_u8(noisy);
        }
        depth.at(x, y) = static_cast<float>(ray_depth);
      }
    });

    ImageRecord record;
    record.tripod_index = script[img].first;
    record.rotation_index = script[img].second;
    record.id = "t" + std::to_string(record.tripod_index) + "_r" +
                std::to_string(record.rotation_index);
    record.pixels = std::move(rgb);
    record.intrinsics_ref = "calibration.txt";
    out.images[img] = std::move(record);
    out.depth_maps[img] = std::move(depth);

    // Ground-truth target pixels (distorted geometry), occlusion-checked.
    for (size_t t = 0; t < target_geo.size(); ++t) {
      const auto px = project(target_geo[t].center_scene, pose, scene.intrinsics);
      if (!px) continue;
      const Vec2 distorted = apply_distortion(*px, scene.intrinsics);
      if (distorted.x() < 8 || distorted.y() < 8 || distorted.x() > w - 9 ||
          distorted.y() > h - 9)
        continue;
      Hit check;
      const Vec3 dir = (target_geo[t].center_scene - pose.center).normalized();
      if (!cast_surface(surface, pose.center, dir, &check)) continue;
      if ((check.point - target_geo[t].center_scene).norm() > 0.01) continue;
      out.target_pixels[img][t] = distorted;
    }
  }

  // World-frame outputs.
  for (size_t img = 0; img < scene_poses.size(); ++img) {
    CameraPose world = scene_poses[img];
    world.rotation = scene_poses[img].rotation * scene.world_rotation.transpose();
    world.center = scene.to_world(scene_poses[img].center);
    out.true_poses.push_back(world);
  }
  for (size_t t = 0; t < target_geo.size(); ++t) {
    const Vec3 world_point = scene.to_world(target_geo[t].center_scene);
    out.target_points_world.push_back(world_point);
    int visible = 0;
    for (size_t img = 0; img < out.target_pixels.size(); ++img)
      if (std::isfinite(out.target_pixels[img][t].x())) ++visible;
    if (visible < 2)
      fail(ErrorCode::kInvalidScene,
           "target " + std::to_string(t) + " visible in fewer than 2 images");
    ControlPoint cp;
    cp.name = "T" + std::to_string(t + 1);
    cp.global_point = world_point;
    cp.sigma = 0.002;
    out.control_points.push_back(cp);
  }

  // Ground-truth grid sampled from the analytic surface.
  const GridSpec spec = scene.grid_spec();
  out.ground_truth = SphericalGrid::empty(spec);
  parallel_for(0, spec.axial_bins(), workers, [&](int yb) {
    const double axial = spec.axial_position(yb);
    for (int xb = 0; xb < spec.azimuth_bins; ++xb) {
      const double theta = spec.azimuth_angle(xb);
      const double rho = surface.radius(theta, axial);
      out.ground_truth.radius.at(xb, yb) = static_cast<float>(rho);
      out.ground_truth.weight.at(xb, yb) = 1.f;
      double albedo[3];
      surface_albedo(scene, theta, axial, albedo);
      for (int c = 0; c < 3; ++c)
        out.ground_truth.texture.at(xb, yb, c) = static_cast<float>(255.0 * albedo[c]);
    }
  });
  return out;
}

SyntheticScene load_scene(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  SyntheticScene scene;
  scene.radius = kv.get_double("radius", scene.radius);
  scene.length = kv.get_double("length", scene.length);
  scene.roughness_amplitude = kv.get_double("roughness_amplitude", scene.roughness_amplitude);
  scene.roughness_seed = static_cast<uint64_t>(kv.get_double("roughness_seed", scene.roughness_seed));
  scene.texture_seed = static_cast<uint64_t>(kv.get_double("texture_seed", scene.texture_seed));
  const auto lamp = kv.get_doubles("lamp", {scene.lamp.x(), scene.lamp.y(), scene.lamp.z()});
  if (lamp.size() == 3) scene.lamp = Vec3(lamp[0], lamp[1], lamp[2]);
  scene.lamp_power = kv.get_double("lamp_power", scene.lamp_power);
  scene.images_per_sweep = kv.get_int("images_per_sweep", scene.images_per_sweep);
  scene.baseline = kv.get_double("baseline", scene.baseline);
  const auto tripod =
      kv.get_doubles("tripod0", {scene.tripod0.x(), scene.tripod0.y(), scene.tripod0.z()});
  if (tripod.size() == 3) scene.tripod0 = Vec3(tripod[0], tripod[1], tripod[2]);
  scene.pose_jitter_deg = kv.get_double("pose_jitter_deg", scene.pose_jitter_deg);
  scene.center_jitter = kv.get_double("center_jitter", scene.center_jitter);
  scene.pose_seed = static_cast<uint64_t>(kv.get_double("pose_seed", scene.pose_seed));
  scene.noise_sigma = kv.get_double("noise_sigma", scene.noise_sigma);
  scene.noise_seed = static_cast<uint64_t>(kv.get_double("noise_seed", scene.noise_seed));
  scene.fov_deg = kv.get_double("fov_deg", scene.fov_deg);
  scene.image_width = kv.get_int("image_width", scene.image_width);
  scene.image_height = kv.get_int("image_height", scene.image_height);
  scene.grid_axial_extent = kv.get_double("grid_axial_extent", scene.grid_axial_extent);
  scene.grid_bin = kv.get_double("grid_bin", scene.grid_bin);

  const int target_count = kv.get_int("target_count", -1);
  if (target_count == 0) {
    scene.targets.push_back(TargetPlacement{0, 0, 0.15});  // placeholder; cleared below
    scene.targets.clear();
  }
  for (int t = 1; t <= 16; ++t) {
    const std::string key = "target" + std::to_string(t);
    if (!kv.has(key)) continue;
    const auto vals = kv.get_doubles(key, {});
    if (vals.size() >= 2) {
      TargetPlacement tp;
      tp.azimuth = vals[0];
      tp.axial = vals[1];
      tp.diameter = vals.size() > 2 ? vals[2] : 0.15;
      scene.targets.push_back(tp);
    }
  }
  for (int o = 1; o <= 8; ++o) {
    const std::string key = "occluder" + std::to_string(o);
    if (!kv.has(key)) continue;
    const auto vals = kv.get_doubles(key, {});
    if (vals.size() == 9) {
      OccluderSprite sprite;
      sprite.corner = Vec3(vals[0], vals[1], vals[2]);
      sprite.edge_u = Vec3(vals[3], vals[4], vals[5]);
      sprite.edge_v = Vec3(vals[6], vals[7], vals[8]);
      scene.occluders.push_back(sprite);
    }
  }
  const auto world_rpy = kv.get_doubles("world_rotation_rpy_deg", {});
  if (world_rpy.size() == 3)
    scene.world_rotation = rotation_exp(Vec3(world_rpy[0], world_rpy[1], world_rpy[2]) *
                                        (M_PI / 180.0));
  const auto world_t = kv.get_doubles("world_translation", {});
  if (world_t.size() == 3)
    scene.world_translation = Vec3(world_t[0], world_t[1], world_t[2]);
  return scene;
}

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  KeyValueFile kv;
  kv.set_double("radius", scene.radius);
  kv.set_double("length", scene.length);
  kv.set_double("roughness_amplitude", scene.roughness_amplitude);
  kv.set_int("roughness_seed", static_cast<int>(scene.roughness_seed));
  kv.set_int("texture_seed", static_cast<int>(scene.texture_seed));
  kv.set("lamp", std::to_string(scene.lamp.x()) + " " + std::to_string(scene.lamp.y()) +
                     " " + std::to_string(scene.lamp.z()));
  kv.set_double("lamp_power", scene.lamp_power);
  kv.set_int("images_per_sweep", scene.images_per_sweep);
  kv.set_double("baseline", scene.baseline);
  kv.set("tripod0", std::to_string(scene.tripod0.x()) + " " +
                        std::to_string(scene.tripod0.y()) + " " +
                        std::to_string(scene.tripod0.z()));
  kv.set_double("pose_jitter_deg", scene.pose_jitter_deg);
  kv.set_double("center_jitter", scene.center_jitter);
  kv.set_int("pose_seed", static_cast<int>(scene.pose_seed));
  kv.set_double("noise_sigma", scene.noise_sigma);
  kv.set_int("noise_seed", static_cast<int>(scene.noise_seed));
  kv.set_double("fov_deg", scene.fov_deg);
  kv.set_int("image_width", scene.image_width);
  kv.set_int("image_height", scene.image_height);
  kv.set_double("grid_axial_extent", scene.grid_axial_extent);
  kv.set_double("grid_bin", scene.grid_bin);
  for (size_t t = 0; t < scene.targets.size(); ++t)
    kv.set("target" + std::to_string(t + 1),
           std::to_string(scene.targets[t].azimuth) + " " +
               std::to_string(scene.targets[t].axial) + " " +
               std::to_string(scene.targets[t].diameter));
  kv.save(path);
}

void write_dataset(const SyntheticDataset& dataset, const SyntheticScene& scene_in,
                   const std::filesystem::path& outdir, bool with_depth_maps) {
  SyntheticScene scene = scene_in;
  scene.finalize();
  std::filesystem::create_directories(outdir);
  for (const auto& image : dataset.images)
    write_pnm(outdir / (image.id + ".ppm"), image.pixels);
  save_calibration(outdir / "calibration.txt", dataset.intrinsics);
  save_control_points(outdir / "control_points.txt", dataset.control_points);

  const GridSpec spec = scene.grid_spec();
  KeyValueFile config;
  config.set("images", ".");
  config.set("calibration", "calibration.txt");
  config.set("control_points", "control_points.txt");
  config.set("output", "out");
  config.set_double("working_scale", 1.0);
  config.set_int("seed", 1);
  config.set_double("grid_origin_x", spec.origin.x());
  config.set_double("grid_origin_y", spec.origin.y());
  config.set_double("grid_origin_z", spec.origin.z());
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      config.set_double("grid_frame_" + std::to_string(r) + std::to_string(c),
                        spec.frame(r, c));
  config.set_double("grid_axial_extent", spec.axial_extent);
  config.set_double("grid_axial_bin", spec.axial_bin);
  config.set_int("grid_azimuth_bins", spec.azimuth_bins);
  config.set_double("target_diameter", scene.targets.empty() ? 0.15 : scene.targets[0].diameter);
  config.set_double("min_target_distance", scene.radius - 2.0);
  config.set_double("max_target_distance", scene.radius + 3.0);
  config.save(outdir / "config.txt");

  const auto gt_dir = outdir / "ground_truth";
  std::filesystem::create_directories(gt_dir);
  save_grid(gt_dir / "model", dataset.ground_truth);
  {
    std::ofstream out(gt_dir / "target_pixels.txt");
    out << "# image_id target_index x y\n";
    char buf[256];
    for (size_t img = 0; img < dataset.images.size(); ++img)
      for (size_t t = 0; t < dataset.target_pixels[img].size(); ++t) {
        const Vec2& px = dataset.target_pixels[img][t];
        if (!std::isfinite(px.x())) continue;
        std::snprintf(buf, sizeof(buf), "%s %zu %.17g %.17g\n",
                      dataset.images[img].id.c_str(), t, px.x(), px.y());
        out << buf;
      }
  }
  if (with_depth_maps)
    for (size_t img = 0; img < dataset.depth_maps.size(); ++img)
      write_pfm(gt_dir / ("depth_" + dataset.images[img].id + ".pfm"),
                dataset.depth_maps[img]);
}

}  // namespace trec
