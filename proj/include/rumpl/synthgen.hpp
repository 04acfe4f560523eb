#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rumpl/geometry.hpp"
#include "rumpl/skeleton.hpp"

namespace rumpl {

using Rng = std::mt19937_64;

/// Independent stream for item `index` of a run seeded with `seed`.
Rng make_stream(uint64_t seed, uint64_t index);

struct Box3 {
  Vec3 min;
  Vec3 max;
};

struct SceneConfig {
  Box3 camera_box{Vec3(-6.0, -6.0, 2.2), Vec3(6.0, 6.0, 4.0)};
  Vec2 person_area_min{-1.0, -1.0};
  Vec2 person_area_max{1.0, 1.0};
  Vec2 height_range{0.85, 1.0};
  Vec2 focal_range{700.0, 1300.0};
  Vec2 image_size{1000.0, 1000.0};
  double look_at_jitter = 0.3;
  /// Camera centers closer than this to the look-at target are redrawn.
  double min_camera_distance = 3.0;
  int min_views = 2;
  int max_views = 5;

  void validate() const;
};

struct NoiseModel {
  double sigma_px = 3.0;
  double occlusion_prob = 0.05;
  double occlusion_sigma_px = 40.0;
  double conf_floor = 0.05;

  static constexpr double kOcclusionConfJitter = 0.05;

  void validate() const;
  static NoiseModel noiseless() { return {0.0, 0.0, 0.0, 0.05}; }
};

struct View {
  CameraCalib calib;
  Pose2D pose;
};

struct Sample {
  std::string scene_id;
  Pose3D gt;
  std::vector<View> views;

  int num_views() const { return static_cast<int>(views.size()); }
  int num_joints() const { return gt.size(); }
};

/// Bone length limits of the procedural H36M-17 skeleton, meters.
struct BoneLimits {
  double pelvis_hip[2] = {0.10, 0.15};
  double thigh[2] = {0.38, 0.48};
  double shin[2] = {0.37, 0.46};
  double lower_spine[2] = {0.20, 0.26};
  double upper_spine[2] = {0.20, 0.26};
  double neck_nose[2] = {0.08, 0.14};
  double nose_head[2] = {0.09, 0.14};
  double clavicle[2] = {0.13, 0.19};
  double upper_arm[2] = {0.25, 0.32};
  double forearm[2] = {0.22, 0.28};
};

/// (parent, child) for the 16 bones of the procedural tree.
const std::vector<std::pair<int, int>>& h36m_bones();

/// Pose source: the procedural generator or a fixed list of H36M-17 poses.
class PoseLibrary {
 public:
  static PoseLibrary procedural(BoneLimits limits = {});
  /// JSON-lines, one [[x,y,z]×17] array per line. Throws InvalidInput when
  /// the file holds no pose.
  static PoseLibrary from_file(const std::filesystem::path& path);
  static PoseLibrary from_poses(std::vector<Pose3D> poses);

  bool is_procedural() const { return procedural_; }
  const BoneLimits& limits() const { return limits_; }
  size_t size() const { return poses_.size(); }

  /// Pelvis-centered pose.
  Pose3D sample(Rng& rng) const;

 private:
  bool procedural_ = true;
  BoneLimits limits_;
  std::vector<Pose3D> poses_;
};

CameraCalib sample_camera(const SceneConfig& config, const Vec3& target, Rng& rng);

Pose3D sample_pose(const PoseLibrary& library, Rng& rng);

Pose2D corrupt_2d(const Pixels& pixels, const NoiseModel& noise, Rng& rng);

/// Projects gt into `calib`; joints behind the camera get confidence 0 and
/// the sentinel pixel (0, 0).
Pose2D observe(const Pose3D& gt, const CameraCalib& calib, const NoiseModel& noise, Rng& rng);

Sample generate_sample(const SceneConfig& config, const PoseLibrary& library, const NoiseModel& noise, Rng& rng);

/// Sample `i` uses stream make_stream(seed, i); generation is parallel over
/// samples and the result does not depend on the thread count.
std::vector<Sample> generate_dataset(const SceneConfig& config, const PoseLibrary& library, const NoiseModel& noise,
                                     int num_samples, uint64_t seed, const std::string& id_prefix = "scene");

}  // namespace rumpl
