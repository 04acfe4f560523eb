#include "rumpl/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <exception>
#include <numbers>

#include <Eigen/Geometry>
#include "json.hpp"

#include "rumpl/errors.hpp"

namespace rumpl {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double uniform(Rng& rng, const double (&range)[2]) { return uniform(rng, range[0], range[1]); }

double gaussian(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()) * v; }

}  // namespace

Rng make_stream(uint64_t seed, uint64_t index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                    static_cast<uint32_t>(index >> 32), 0x52554dU};
  return Rng(seq);
}

void SceneConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(camera_box.min(a)) || !std::isfinite(camera_box.max(a)) || camera_box.min(a) > camera_box.max(a)) {
      throw ConfigError("scene.camera_box: min must not exceed max on any axis");
    }
  }
  for (int a = 0; a < 2; ++a) {
    if (!(person_area_min(a) <= person_area_max(a))) throw ConfigError("scene.person_area: min exceeds max");
  }
  if (!(height_range(0) <= height_range(1))) throw ConfigError("scene.height_range: min exceeds max");
  if (!(focal_range(0) > 0.0 && focal_range(0) <= focal_range(1))) {
    throw ConfigError("scene.focal_range must be positive and ordered");
  }
  if (!(image_size(0) > 0.0 && image_size(1) > 0.0)) throw ConfigError("scene.image_size must be positive");
  if (!(look_at_jitter >= 0.0)) throw ConfigError("scene.look_at_jitter must be >= 0");
  if (!(min_camera_distance >= 0.0)) throw ConfigError("scene.min_camera_distance must be >= 0");
  if (min_views < 1 || max_views < min_views) throw ConfigError("scene: need 1 <= min_views <= max_views");
}

void NoiseModel::validate() const {
  if (!(sigma_px >= 0.0) || !(occlusion_sigma_px >= 0.0)) throw ConfigError("noise: scales must be >= 0");
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) throw ConfigError("noise.occlusion_prob outside [0, 1]");
  if (!(conf_floor >= 0.0 && conf_floor < 1.0)) throw ConfigError("noise.conf_floor outside [0, 1)");
}

const std::vector<std::pair<int, int>>& h36m_bones() {
  using namespace h36m;
  static const std::vector<std::pair<int, int>> bones = {
      {kPelvis, kRightHip},       {kRightHip, kRightKnee},         {kRightKnee, kRightAnkle},
      {kPelvis, kLeftHip},        {kLeftHip, kLeftKnee},           {kLeftKnee, kLeftAnkle},
      {kPelvis, kTorso},          {kTorso, kNeck},                 {kNeck, kNose},
      {kNose, kHead},             {kNeck, kLeftShoulder},          {kLeftShoulder, kLeftElbow},
      {kLeftElbow, kLeftWrist},   {kNeck, kRightShoulder},         {kRightShoulder, kRightElbow},
      {kRightElbow, kRightWrist},
  };
  return bones;
}

PoseLibrary PoseLibrary::procedural(BoneLimits limits) {
  PoseLibrary lib;
  lib.procedural_ = true;
  lib.limits_ = limits;
  return lib;
}

PoseLibrary PoseLibrary::from_poses(std::vector<Pose3D> poses) {
  if (poses.empty()) throw InvalidInput("pose library is empty");
  for (const auto& p : poses) {
    if (p.size() != h36m::kNumJoints) throw InvalidInput("pose library entries must have 17 joints");
    p.validate();
  }
  PoseLibrary lib;
  lib.procedural_ = false;
  lib.poses_ = std::move(poses);
  return lib;
}

PoseLibrary PoseLibrary::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open pose library " + path.string());
  std::vector<Pose3D> poses;
  std::string line;
  long index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Points3 joints(static_cast<Eigen::Index>(j.size()), 3);
      for (size_t r = 0; r < j.size(); ++r) {
        for (int c = 0; c < 3; ++c) joints(r, c) = j.at(r).at(c).get<double>();
      }
      poses.emplace_back(std::move(joints));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("pose library record " + std::to_string(index) + ": " + e.what(), index);
    }
    ++index;
  }
  return from_poses(std::move(poses));
}

Pose3D PoseLibrary::sample(Rng& rng) const {
  if (!procedural_) {
    if (poses_.empty()) throw InvalidInput("pose library is empty");
    const auto k = std::uniform_int_distribution<size_t>(0, poses_.size() - 1)(rng);
    Pose3D p = poses_[k];
    const Eigen::RowVector3d root = p.joints.row(h36m::kPelvis);
    p.joints.rowwise() -= root;
    return p;
  }

  using namespace h36m;
  const BoneLimits& L = limits_;
  Points3 J = Points3::Zero(kNumJoints, 3);
  auto set = [&J](int joint, const Vec3& v) { J.row(joint) = v.transpose(); };
  auto at = [&J](int joint) -> Vec3 { return J.row(joint).transpose(); };

  // Body frame: forward, left, up.
  const double yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const Vec3 up = Vec3::UnitZ();
  const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 left = up.cross(fwd);

  set(kPelvis, Vec3::Zero());
  set(kLeftHip, left * uniform(rng, L.pelvis_hip));
  set(kRightHip, -left * uniform(rng, L.pelvis_hip));

  for (int side = 0; side < 2; ++side) {
    const int hip = side == 0 ? kLeftHip : kRightHip;
    const int knee = side == 0 ? kLeftKnee : kRightKnee;
    const int ankle = side == 0 ? kLeftAnkle : kRightAnkle;
    const double outward = side == 0 ? 1.0 : -1.0;
    const double flex = uniform(rng, -30.0, 80.0) * kDeg;
    const double abduct = uniform(rng, -8.0, 30.0) * kDeg;
    Vec3 thigh = (-up * std::cos(flex) + fwd * std::sin(flex)).normalized();
    thigh = rotate(thigh, fwd, -outward * abduct);
    const double bend = uniform(rng, 0.0, 110.0) * kDeg;
    const Vec3 shin = rotate(thigh, left, bend);
    set(knee, at(hip) + thigh * uniform(rng, L.thigh));
    set(ankle, at(knee) + shin * uniform(rng, L.shin));
  }

  // Torso frame after forward lean and sideways roll.
  const Eigen::Matrix3d lean = (Eigen::AngleAxisd(uniform(rng, -10.0, 10.0) * kDeg, fwd) *
                                Eigen::AngleAxisd(uniform(rng, -10.0, 35.0) * kDeg, -left))
                                   .toRotationMatrix();
  const Vec3 t_up = lean * up, t_fwd = lean * fwd, t_left = lean * left;
  const Vec3 upper_dir = rotate(t_up, -t_left, uniform(rng, -5.0, 15.0) * kDeg);
  set(kTorso, t_up * uniform(rng, L.lower_spine));
  set(kNeck, at(kTorso) + upper_dir * uniform(rng, L.upper_spine));

  const double head_yaw = uniform(rng, -45.0, 45.0) * kDeg;
  const double head_pitch = uniform(rng, -20.0, 30.0) * kDeg;
  const Vec3 h_fwd = rotate(t_fwd, upper_dir, head_yaw);
  const Vec3 h_left = upper_dir.cross(h_fwd).normalized();
  const Vec3 nose_dir = rotate((upper_dir + 0.6 * h_fwd).normalized(), -h_left, head_pitch);
  set(kNose, at(kNeck) + nose_dir * uniform(rng, L.neck_nose));
  const Vec3 head_dir = rotate((upper_dir + 0.15 * h_fwd).normalized(), -h_left, head_pitch);
  set(kHead, at(kNose) + head_dir * uniform(rng, L.nose_head));

  for (int side = 0; side < 2; ++side) {
    const int shoulder = side == 0 ? kLeftShoulder : kRightShoulder;
    const int elbow = side == 0 ? kLeftElbow : kRightElbow;
    const int wrist = side == 0 ? kLeftWrist : kRightWrist;
    const double outward = side == 0 ? 1.0 : -1.0;
    const Vec3 lateral = outward * t_left;
    const Vec3 clav_dir = rotate(lateral, t_fwd, -outward * uniform(rng, -10.0, 15.0) * kDeg);
    set(shoulder, at(kNeck) + clav_dir * uniform(rng, L.clavicle));
    const double flex = uniform(rng, -40.0, 150.0) * kDeg;
    const double abduct = uniform(rng, 0.0, 100.0) * kDeg;
    Vec3 arm = (-t_up * std::cos(flex) + t_fwd * std::sin(flex)).normalized();
    arm = rotate(arm, t_fwd, -outward * abduct);
    const double elbow_flex = uniform(rng, 0.0, 140.0) * kDeg;
    Vec3 hinge = arm.cross(lateral);
    if (hinge.norm() < 1e-6) hinge = t_up;
    const Vec3 forearm = rotate(arm, hinge, elbow_flex);
    set(elbow, at(shoulder) + arm * uniform(rng, L.upper_arm));
    set(wrist, at(elbow) + forearm * uniform(rng, L.forearm));
  }
  return Pose3D(std::move(J));
}

Pose3D sample_pose(const PoseLibrary& library, Rng& rng) { return library.sample(rng); }

CameraCalib sample_camera(const SceneConfig& config, const Vec3& target, Rng& rng) {
  config.validate();
  CameraCalib calib;
  const Box3& box = config.camera_box;
  int attempts = 0;
  do {
    if (++attempts > 10000) {
      throw ConfigError("sample_camera: camera_box holds no center farther than min_camera_distance from the target");
    }
    for (int a = 0; a < 3; ++a) calib.T(a) = uniform(rng, box.min(a), box.max(a));
  } while ((calib.T - target).norm() < config.min_camera_distance);

  Vec3 look = target;
  const double j = config.look_at_jitter;
  for (int a = 0; a < 3; ++a) look(a) += uniform(rng, -j, j);
  if ((look - calib.T).norm() < 1e-9) throw ConfigError("sample_camera: camera center coincides with target");
  calib.R = look_at_rotation(calib.T, look);

  const double f = uniform(rng, config.focal_range(0), config.focal_range(1));
  calib.K << f, 0.0, config.image_size(0) / 2.0, 0.0, f, config.image_size(1) / 2.0, 0.0, 0.0, 1.0;
  return calib;
}

Pose2D corrupt_2d(const Pixels& pixels, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  const Eigen::Index m = pixels.rows();
  Pose2D out(pixels, Eigen::VectorXd::Ones(m));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < m; ++j) {
    const bool occluded = noise.occlusion_prob > 0.0 && unit(rng) < noise.occlusion_prob;
    const double scale = occluded ? noise.occlusion_sigma_px : noise.sigma_px;
    const Vec2 delta(scale * gaussian(rng), scale * gaussian(rng));
    out.pixels.row(j) += delta.transpose();
    double c;
    if (occluded) {
      c = noise.conf_floor + NoiseModel::kOcclusionConfJitter * unit(rng);
    } else if (noise.sigma_px > 0.0) {
      c = std::exp(-delta.norm() / noise.sigma_px);
    } else {
      c = 1.0;
    }
    out.conf(j) = std::clamp(c, noise.conf_floor, 1.0);
  }
  return out;
}

Pose2D observe(const Pose3D& gt, const CameraCalib& calib, const NoiseModel& noise, Rng& rng) {
  const int m = gt.size();
  Pixels clean = Pixels::Zero(m, 2);
  std::vector<bool> behind(m, false);
  for (int j = 0; j < m; ++j) {
    const Vec3 X = gt.joints.row(j).transpose();
    if (camera_depth(X, calib) > 1e-9) {
      clean.row(j) = project(X, calib).transpose();
    } else {
      behind[j] = true;
    }
  }
  Pose2D pose = corrupt_2d(clean, noise, rng);
  for (int j = 0; j < m; ++j) {
    if (!behind[j]) continue;
    pose.pixels.row(j).setZero();
    pose.conf(j) = 0.0;
  }
  return pose;
}

Sample generate_sample(const SceneConfig& config, const PoseLibrary& library, const NoiseModel& noise, Rng& rng) {
  config.validate();
  noise.validate();
  Sample s;
  s.gt = sample_pose(library, rng);
  const Vec3 root(uniform(rng, config.person_area_min.x(), config.person_area_max.x()),
                  uniform(rng, config.person_area_min.y(), config.person_area_max.y()),
                  uniform(rng, config.height_range(0), config.height_range(1)));
  s.gt.joints.rowwise() += root.transpose();
  const int n = std::uniform_int_distribution<int>(config.min_views, config.max_views)(rng);
  s.views.reserve(n);
  for (int v = 0; v < n; ++v) {
    View view;
    view.calib = sample_camera(config, root, rng);
    view.pose = observe(s.gt, view.calib, noise, rng);
    s.views.push_back(std::move(view));
  }
  return s;
}

std::vector<Sample> generate_dataset(const SceneConfig& config, const PoseLibrary& library, const NoiseModel& noise,
                                     int num_samples, uint64_t seed, const std::string& id_prefix) {
  config.validate();
  noise.validate();
  if (num_samples < 0) throw InvalidInput("generate_dataset: negative sample count");
  std::vector<Sample> out(static_cast<size_t>(num_samples));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < num_samples; ++i) {
    try {
      Rng rng = make_stream(seed, static_cast<uint64_t>(i));
      out[i] = generate_sample(config, library, noise, rng);
      char id[32];
      std::snprintf(id, sizeof id, "_%06d", i);
      out[i].scene_id = id_prefix + id;
    } catch (...) {
#pragma omp critical(rumpl_generate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace rumpl
