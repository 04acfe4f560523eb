#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rumpl/geometry.hpp"

namespace rumpl {

/// 2D keypoints with per-keypoint confidence in [0, 1]. A confidence of 0
/// marks a missing keypoint.
struct Pose2D {
  Pixels pixels;
  Eigen::VectorXd conf;

  Pose2D() = default;
  explicit Pose2D(int num_joints) : pixels(Pixels::Zero(num_joints, 2)), conf(Eigen::VectorXd::Ones(num_joints)) {}
  Pose2D(Pixels p, Eigen::VectorXd c) : pixels(std::move(p)), conf(std::move(c)) {}

  int size() const { return static_cast<int>(pixels.rows()); }
  void validate() const;
};

/// World joints in meters.
struct Pose3D {
  Points3 joints;

  Pose3D() = default;
  explicit Pose3D(Points3 j) : joints(std::move(j)) {}

  int size() const { return static_cast<int>(joints.rows()); }
  void validate() const;
};

using JointMask = std::vector<bool>;

struct MergeRule {
  std::string target;
  std::vector<std::string> sources;
};

struct SkeletonFormat {
  std::string id;
  std::vector<std::string> names;
  JointMask kp_star;
  /// Non-empty only for formats that are derived from another one.
  std::vector<MergeRule> merge_rules;

  int size() const { return static_cast<int>(names.size()); }
  int index_of(std::string_view name) const;
};

namespace h36m {
enum Joint : int {
  kPelvis = 0,
  kRightHip,
  kRightKnee,
  kRightAnkle,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kTorso,
  kNeck,
  kNose,
  kHead,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kRightShoulder,
  kRightElbow,
  kRightWrist,
  kNumJoints
};
}  // namespace h36m

namespace coco {
enum Joint : int {
  kNose = 0,
  kLeftEye,
  kRightEye,
  kLeftEar,
  kRightEar,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
  kNumJoints
};
}  // namespace coco

const SkeletonFormat& coco17();
const SkeletonFormat& h36m17();

/// Looks up "coco17" or "h36m17"; throws InvalidInput otherwise.
const SkeletonFormat& skeleton_format(std::string_view id);

JointMask kp_star_mask(const SkeletonFormat& format);
JointMask kp_star_mask(std::string_view format_id);

/// Mean per-joint Euclidean distance in millimeters over the joints selected
/// by `mask` (all joints when absent).
double mpjpe(const Pose3D& q, const Pose3D& q_hat, const std::optional<JointMask>& mask = std::nullopt);

Pose2D coco_to_h36m_merge(const Pose2D& coco_pose);
Pose3D coco_to_h36m_merge(const Pose3D& coco_pose);

}  // namespace rumpl
