#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rumpl/eval.hpp"

namespace rumpl {

struct ViewDetections {
  CameraCalib calib;
  std::vector<Pose2D> people;
  /// Ground-truth identity of each detection when known (synthetic scenes).
  std::vector<int> person_index;

  void validate(int num_joints) const;
};

struct MatchConfig {
  /// Mean epipolar error (px) above which a detection is not attached to a
  /// track.
  double threshold_px = 20.0;
};

/// One person across views: (view index, detection index), sorted by view.
struct PersonGroup {
  std::vector<std::pair<int, int>> members;

  int num_views() const { return static_cast<int>(members.size()); }
  bool singleton() const { return members.size() < 2; }
};

/// Tracks start from the detections of the view with the most people. Every
/// other view, in index order, is assigned to the tracks by the Hungarian
/// method on the mean epipolar error against each track's members; rejected
/// and surplus detections open new tracks.
std::vector<PersonGroup> match_people(std::span<const ViewDetections> views, const MatchConfig& config = {});

struct LiftedPerson {
  PersonGroup group;
  Pose3D pose;
  /// Mean keypoint confidence over the group's detections.
  double score = 0.0;
};

/// Lifts every group seen in at least two views, always with recentering.
/// Singleton groups are left out.
std::vector<LiftedPerson> lift_scene(std::span<const ViewDetections> views, std::span<const PersonGroup> groups,
                                     const Lifter& lifter);

struct MultiPersonScene {
  std::string scene_id;
  std::vector<Pose3D> people;
  std::vector<ViewDetections> views;
};

struct MultiPersonConfig {
  SceneConfig scene{Box3{Vec3(-5.0, -5.0, 2.2), Vec3(5.0, 5.0, 4.0)}};
  NoiseModel noise = NoiseModel::noiseless();
  int num_people = 2;
  /// People are placed in the square [-area, area]² with pelvis distance at
  /// least `min_separation`.
  double area = 1.5;
  double min_separation = 1.0;
  /// Cameras are redrawn until every person's pelvis is at most this deep.
  double max_depth = 8.0;
  int num_views = 3;
  MatchConfig match;

  void validate() const;
};

MultiPersonScene generate_multiperson_scene(const MultiPersonConfig& config, const PoseLibrary& library, Rng& rng);
std::vector<MultiPersonScene> generate_multiperson_dataset(const MultiPersonConfig& config, const PoseLibrary& library,
                                                           int num_scenes, std::uint64_t seed);

/// True when every group holds detections of a single person and every
/// person's detections form exactly one group. Needs person_index.
bool grouping_correct(const MultiPersonScene& scene, std::span<const PersonGroup> groups);

inline constexpr int kMultiPersonSchemaVersion = 2;

nlohmann::json scene_to_json(const MultiPersonScene& scene);
MultiPersonScene scene_from_json(const nlohmann::json& j);
void write_scenes(std::span<const MultiPersonScene> scenes, const std::filesystem::path& path);
std::vector<MultiPersonScene> read_scenes(const std::filesystem::path& path);

/// Detection AP: predictions ranked by score are greedily matched to the
/// nearest free ground-truth person and count as hits below `threshold_mm`
/// MPJPE; the area under the all-point interpolated precision–recall curve.
/// `predictions` pools (scene, pose, score) over scenes.
struct ScoredPose {
  int scene = 0;
  Pose3D pose;
  double score = 0.0;
};
double average_precision(std::span<const ScoredPose> predictions, std::span<const std::vector<Pose3D>> gt_per_scene,
                         double threshold_mm = 100.0);

}  // namespace rumpl
