#include "rumpl/skeleton.hpp"

#include <algorithm>
#include <cmath>

#include "rumpl/errors.hpp"

namespace rumpl {

void Pose2D::validate() const {
  if (conf.size() != pixels.rows()) throw InvalidInput("Pose2D: confidence count differs from keypoint count");
  if (!pixels.allFinite()) throw InvalidInput("Pose2D: non-finite pixel coordinates");
  for (Eigen::Index j = 0; j < conf.size(); ++j) {
    if (!(conf(j) >= 0.0 && conf(j) <= 1.0)) throw InvalidInput("Pose2D: confidence outside [0, 1]");
  }
}

void Pose3D::validate() const {
  if (!joints.allFinite()) throw InvalidInput("Pose3D: non-finite joint coordinates");
}

int SkeletonFormat::index_of(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidInput("unknown joint '" + std::string(name) + "' in format " + id);
  return static_cast<int>(it - names.begin());
}

const SkeletonFormat& coco17() {
  static const SkeletonFormat format = [] {
    SkeletonFormat f;
    f.id = "coco17";
    f.names = {"nose",           "left_eye",    "right_eye",   "left_ear",   "right_ear",  "left_shoulder",
               "right_shoulder", "left_elbow",  "right_elbow", "left_wrist", "right_wrist", "left_hip",
               "right_hip",      "left_knee",   "right_knee",  "left_ankle", "right_ankle"};
    f.kp_star.assign(f.names.size(), false);
    for (int j : {coco::kLeftShoulder, coco::kRightShoulder, coco::kLeftElbow, coco::kRightElbow, coco::kLeftWrist,
                  coco::kRightWrist, coco::kLeftKnee, coco::kRightKnee, coco::kLeftAnkle, coco::kRightAnkle}) {
      f.kp_star[j] = true;
    }
    return f;
  }();
  return format;
}

const SkeletonFormat& h36m17() {
  static const SkeletonFormat format = [] {
    SkeletonFormat f;
    f.id = "h36m17";
    f.names = {"pelvis",     "right_hip",  "right_knee",    "right_ankle", "left_hip",       "left_knee",
               "left_ankle", "torso",      "neck",          "nose",        "head",           "left_shoulder",
               "left_elbow", "left_wrist", "right_shoulder", "right_elbow", "right_wrist"};
    f.kp_star.assign(f.names.size(), false);
    for (int j : {h36m::kLeftShoulder, h36m::kRightShoulder, h36m::kLeftElbow, h36m::kRightElbow, h36m::kLeftWrist,
                  h36m::kRightWrist, h36m::kLeftKnee, h36m::kRightKnee, h36m::kLeftAnkle, h36m::kRightAnkle}) {
      f.kp_star[j] = true;
    }
    // COCO has no neck; it is synthesized from the shoulders first.
    f.merge_rules = {
        {"pelvis", {"left_hip", "right_hip"}},
        {"neck", {"left_shoulder", "right_shoulder"}},
        {"torso", {"left_shoulder", "right_shoulder", "left_hip", "right_hip"}},
        {"head", {"left_ear", "right_ear", "left_eye", "right_eye"}},
    };
    return f;
  }();
  return format;
}

const SkeletonFormat& skeleton_format(std::string_view id) {
  if (id == "coco17") return coco17();
  if (id == "h36m17") return h36m17();
  throw InvalidInput("unknown skeleton format '" + std::string(id) + "'");
}

JointMask kp_star_mask(const SkeletonFormat& format) {
  if (&format != &coco17() && &format != &h36m17()) {
    throw InvalidInput("kp_star_mask: format '" + format.id + "' is not built in");
  }
  return format.kp_star;
}

JointMask kp_star_mask(std::string_view format_id) { return kp_star_mask(skeleton_format(format_id)); }

double mpjpe(const Pose3D& q, const Pose3D& q_hat, const std::optional<JointMask>& mask) {
  if (q.size() != q_hat.size()) throw InvalidInput("mpjpe: joint counts differ");
  if (mask && static_cast<int>(mask->size()) != q.size()) throw InvalidInput("mpjpe: mask length differs");
  double sum = 0.0;
  int count = 0;
  for (int j = 0; j < q.size(); ++j) {
    if (mask && !(*mask)[j]) continue;
    sum += (q.joints.row(j) - q_hat.joints.row(j)).norm();
    ++count;
  }
  if (count == 0) throw InvalidInput("mpjpe: mask selects no joint");
  return 1000.0 * sum / count;
}

namespace {

// Row copy/merge plan from COCO-17 to H36M-17. Torso averages the neck and
// pelvis, which equals the mean of the four shoulder/hip sources.
struct Plan {
  int target;
  std::vector<int> sources;
  std::vector<double> coeffs;
};

const std::vector<Plan>& merge_plan() {
  static const std::vector<Plan> plan = [] {
    using namespace h36m;
    namespace c = coco;
    std::vector<Plan> p = {
        {kPelvis, {c::kLeftHip, c::kRightHip}, {0.5, 0.5}},
        {kRightHip, {c::kRightHip}, {1.0}},
        {kRightKnee, {c::kRightKnee}, {1.0}},
        {kRightAnkle, {c::kRightAnkle}, {1.0}},
        {kLeftHip, {c::kLeftHip}, {1.0}},
        {kLeftKnee, {c::kLeftKnee}, {1.0}},
        {kLeftAnkle, {c::kLeftAnkle}, {1.0}},
        {kTorso, {c::kLeftShoulder, c::kRightShoulder, c::kLeftHip, c::kRightHip}, {0.25, 0.25, 0.25, 0.25}},
        {kNeck, {c::kLeftShoulder, c::kRightShoulder}, {0.5, 0.5}},
        {kNose, {c::kNose}, {1.0}},
        {kHead, {c::kLeftEar, c::kRightEar, c::kLeftEye, c::kRightEye}, {0.25, 0.25, 0.25, 0.25}},
        {kLeftShoulder, {c::kLeftShoulder}, {1.0}},
        {kLeftElbow, {c::kLeftElbow}, {1.0}},
        {kLeftWrist, {c::kLeftWrist}, {1.0}},
        {kRightShoulder, {c::kRightShoulder}, {1.0}},
        {kRightElbow, {c::kRightElbow}, {1.0}},
        {kRightWrist, {c::kRightWrist}, {1.0}},
    };
    return p;
  }();
  return plan;
}

template <typename Rows>
Rows merge_rows(const Rows& in) {
  Rows out = Rows::Zero(h36m::kNumJoints, in.cols());
  for (const Plan& p : merge_plan()) {
    for (size_t s = 0; s < p.sources.size(); ++s) out.row(p.target) += p.coeffs[s] * in.row(p.sources[s]);
  }
  return out;
}

}  // namespace

Pose2D coco_to_h36m_merge(const Pose2D& coco_pose) {
  if (coco_pose.size() != coco::kNumJoints || coco_pose.conf.size() != coco::kNumJoints) {
    throw InvalidInput("coco_to_h36m_merge: expected 17 COCO keypoints");
  }
  Pose2D out;
  out.pixels = merge_rows(coco_pose.pixels);
  out.conf.resize(h36m::kNumJoints);
  for (const Plan& p : merge_plan()) {
    double c = 1.0;
    for (int s : p.sources) c = std::min(c, coco_pose.conf(s));
    out.conf(p.target) = c;
  }
  return out;
}

Pose3D coco_to_h36m_merge(const Pose3D& coco_pose) {
  if (coco_pose.size() != coco::kNumJoints) throw InvalidInput("coco_to_h36m_merge: expected 17 COCO joints");
  return Pose3D(merge_rows(coco_pose.joints));
}

}  // namespace rumpl
