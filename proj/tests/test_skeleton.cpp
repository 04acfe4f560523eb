#include <cmath>

#include "doctest.h"
#include "rumpl/errors.hpp"
#include "rumpl/geometry.hpp"
#include "rumpl/skeleton.hpp"
#include "rumpl/synthgen.hpp"
#include "test_util.hpp"

using namespace rumpl;

namespace {

Pose3D random_pose(Rng& rng, int m = 17) {
  std::uniform_real_distribution<double> u(-1, 1);
  Points3 p(m, 3);
  for (int j = 0; j < m; ++j) p.row(j) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
  return Pose3D(p);
}

}  // namespace

TEST_CASE("built-in formats") {
  CHECK(coco17().size() == 17);
  CHECK(h36m17().size() == 17);
  CHECK(&skeleton_format("coco17") == &coco17());
  CHECK(&skeleton_format("h36m17") == &h36m17());
  CHECK_THROWS_AS(skeleton_format("mpii"), InvalidInput);
  CHECK(h36m17().names[h36m::kHead] == "head");
}

TEST_CASE("KP* selects the ten limb joints") {
  const JointMask m = kp_star_mask(h36m17());
  CHECK(std::count(m.begin(), m.end(), true) == 10);
  for (int j : {h36m::kLeftKnee, h36m::kRightKnee, h36m::kLeftAnkle, h36m::kRightAnkle, h36m::kLeftShoulder,
                h36m::kRightShoulder, h36m::kLeftElbow, h36m::kRightElbow, h36m::kLeftWrist, h36m::kRightWrist}) {
    CHECK(m[j]);
  }
  for (int j : {h36m::kPelvis, h36m::kTorso, h36m::kHead, h36m::kNeck, h36m::kNose}) CHECK_FALSE(m[j]);
  CHECK(kp_star_mask("h36m17") == m);
  SkeletonFormat custom = h36m17();
  custom.id = "custom";
  CHECK_THROWS_AS(kp_star_mask(custom), InvalidInput);
}

TEST_CASE("mpjpe basics") {
  Rng rng(1);
  const Pose3D q = random_pose(rng);
  CHECK(mpjpe(q, q) == 0.0);
  Pose3D shifted = q;
  shifted.joints.col(0).array() += 0.1;
  CHECK(mpjpe(q, shifted) == doctest::Approx(100.0).epsilon(1e-12));
  // Identical per-joint errors: the KP* value equals the full one.
  CHECK(mpjpe(q, shifted, kp_star_mask(h36m17())) == doctest::Approx(100.0).epsilon(1e-12));

  CHECK_THROWS_AS(mpjpe(q, random_pose(rng, 4)), InvalidInput);
  CHECK_THROWS_AS(mpjpe(q, q, JointMask(17, false)), InvalidInput);
  CHECK_THROWS_AS(mpjpe(q, q, JointMask(3, true)), InvalidInput);
}

TEST_CASE("mpjpe properties") {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const Pose3D a = random_pose(rng), b = random_pose(rng);
    double loop = 0.0;
    for (int j = 0; j < 17; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (a.joints(j, k) - b.joints(j, k)) * (a.joints(j, k) - b.joints(j, k));
      loop += std::sqrt(s);
    }
    loop = loop / 17 * 1000.0;
    const double e = mpjpe(a, b);
    CHECK(std::abs(e - loop) <= 1e-9 * loop);
    CHECK(e >= 0.0);
    CHECK(std::abs(mpjpe(b, a) - e) <= 1e-9 * e);
    const Eigen::RowVector3d t3 = Eigen::RowVector3d::Random() * 10;
    Pose3D at = a, bt = b;
    at.joints.rowwise() += t3;
    bt.joints.rowwise() += t3;
    CHECK(std::abs(mpjpe(at, bt) - e) <= 1e-9 * e);
  }
}

TEST_CASE("COCO to H36M merge examples") {
  Pose2D c(17);
  c.pixels.row(coco::kLeftEar) << 0, 0;
  c.pixels.row(coco::kRightEar) << 4, 0;
  c.pixels.row(coco::kLeftEye) << 1, 1;
  c.pixels.row(coco::kRightEye) << 3, 1;
  c.pixels.row(coco::kLeftHip) << -1, 2;
  c.pixels.row(coco::kRightHip) << 3, 2;
  c.pixels.row(coco::kLeftShoulder) << -1, -2;
  c.pixels.row(coco::kRightShoulder) << 3, -2;
  c.pixels.row(coco::kLeftWrist) << 7, 8;
  c.conf(coco::kLeftEar) = 0.9;
  c.conf(coco::kRightEar) = 0.2;
  c.conf(coco::kLeftEye) = 0.8;
  c.conf(coco::kRightEye) = 0.7;
  const Pose2D h = coco_to_h36m_merge(c);
  CHECK(h.pixels.row(h36m::kHead) == Eigen::RowVector2d(2, 0.5));
  CHECK(h.pixels.row(h36m::kPelvis) == Eigen::RowVector2d(1, 2));
  CHECK(h.pixels.row(h36m::kNeck) == Eigen::RowVector2d(1, -2));
  CHECK(h.pixels.row(h36m::kTorso) == Eigen::RowVector2d(1, 0));
  CHECK(h.pixels.row(h36m::kLeftWrist) == Eigen::RowVector2d(7, 8));
  CHECK(h.conf(h36m::kHead) == 0.2);
  CHECK(h.conf(h36m::kLeftWrist) == 1.0);
  CHECK_THROWS_AS(coco_to_h36m_merge(Pose2D(16)), InvalidInput);
}

TEST_CASE("merged projections match projected merges at depth") {
  // Perspective division breaks linearity; the discrepancy falls with the
  // square of depth. "Far" means at least 4 m and at least ten times the
  // widest spread of any merge's source joints (the torso's hip-to-shoulder
  // span for a leaning body needs a little more than 4 m).
  Rng rng(3);
  const auto lib = PoseLibrary::procedural();
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * M_PI);
  // Returns {discrepancy at the far depth, discrepancy at twice that}.
  auto discrepancy = [&]() {
    // COCO body built from an H36M pose: shared limbs copied, face points
    // placed around the head.
    const Pose3D h = lib.sample(rng);
    const Vec3 head = h.joints.row(h36m::kHead).transpose();
    const Vec3 side = (h.joints.row(h36m::kLeftShoulder) - h.joints.row(h36m::kRightShoulder)).transpose().normalized();
    Points3 p(17, 3);
    p.row(coco::kNose) = h.joints.row(h36m::kNose);
    p.row(coco::kLeftEye) = (head + 0.03 * side).transpose();
    p.row(coco::kRightEye) = (head - 0.03 * side).transpose();
    p.row(coco::kLeftEar) = (head + 0.07 * side).transpose();
    p.row(coco::kRightEar) = (head - 0.07 * side).transpose();
    const std::pair<int, int> shared[] = {
        {coco::kLeftShoulder, h36m::kLeftShoulder}, {coco::kRightShoulder, h36m::kRightShoulder},
        {coco::kLeftElbow, h36m::kLeftElbow},       {coco::kRightElbow, h36m::kRightElbow},
        {coco::kLeftWrist, h36m::kLeftWrist},       {coco::kRightWrist, h36m::kRightWrist},
        {coco::kLeftHip, h36m::kLeftHip},           {coco::kRightHip, h36m::kRightHip},
        {coco::kLeftKnee, h36m::kLeftKnee},         {coco::kRightKnee, h36m::kRightKnee},
        {coco::kLeftAnkle, h36m::kLeftAnkle},       {coco::kRightAnkle, h36m::kRightAnkle}};
    for (const auto& [c, j] : shared) p.row(c) = h.joints.row(j);

    double spread = 0.0;
    for (const MergeRule& rule : h36m17().merge_rules) {
      for (const auto& a : rule.sources) {
        for (const auto& b : rule.sources) {
          spread = std::max(spread, (p.row(coco17().index_of(a)) - p.row(coco17().index_of(b))).norm());
        }
      }
    }
    const double far = std::max(4.0, 10.0 * spread);

    const double a = azimuth(rng);
    const Pose3D coco3(p);
    const Pose3D merged3 = coco_to_h36m_merge(coco3);
    auto at = [&](double depth) {
      CameraCalib cam;
      cam.K << 450, 0, 500, 0, 450, 500, 0, 0, 1;
      cam.T = Vec3(depth * std::cos(a), depth * std::sin(a), 0.0);
      cam.R = look_at_rotation(cam.T, Vec3::Zero());
      Pose2D proj(17);
      for (int j = 0; j < 17; ++j) proj.pixels.row(j) = project(p.row(j).transpose(), cam).transpose();
      const Pose2D merged2 = coco_to_h36m_merge(proj);
      double worst = 0.0;
      for (int j = 0; j < 17; ++j) {
        worst = std::max(worst, (merged2.pixels.row(j).transpose() - project(merged3.joints.row(j).transpose(), cam)).norm());
      }
      return worst;
    };
    return std::pair{at(far), at(2.0 * far)};
  };
  double near_sum = 0, far_sum = 0;
  for (int t = 0; t < 200; ++t) {
    const auto [d1, d2] = discrepancy();
    CHECK(d1 < 0.5);
    near_sum += d1;
    far_sum += d2;
  }
  CHECK(far_sum < 0.5 * near_sum);
}
