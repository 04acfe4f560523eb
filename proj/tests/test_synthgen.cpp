#include <Eigen/LU>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "rumpl/dataset.hpp"
#include "rumpl/errors.hpp"
#include "rumpl/stats.hpp"
#include "rumpl/synthgen.hpp"

using namespace rumpl;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rumpl_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("collapsed camera box gives a deterministic centered camera") {
  SceneConfig cfg;
  cfg.camera_box = {Vec3(4, 0, 3), Vec3(4, 0, 3)};
  cfg.look_at_jitter = 0.0;
  Rng a(1), b(2);
  const Vec3 target(0, 0, 1);
  const CameraCalib ca = sample_camera(cfg, target, a);
  cfg.focal_range = Vec2(900, 900);
  const CameraCalib c1 = sample_camera(cfg, target, a), c2 = sample_camera(cfg, target, b);
  CHECK((c1.R - c2.R).norm() == 0.0);
  CHECK((c1.K - c2.K).norm() == 0.0);
  CHECK((c1.T - Vec3(4, 0, 3)).norm() == 0.0);
  CHECK((project(target, ca) - Vec2(500, 500)).norm() < 1e-6);
}

TEST_CASE("camera draws stay in the box with proper rotations") {
  SceneConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const CameraCalib c = sample_camera(cfg, Vec3(0.2, -0.3, 1.0), rng);
    CHECK((c.T.array() >= cfg.camera_box.min.array()).all());
    CHECK((c.T.array() <= cfg.camera_box.max.array()).all());
    CHECK(std::abs(c.R.determinant() - 1.0) < 1e-9);
    CHECK((c.R.transpose() * c.R - Mat3::Identity()).norm() < 1e-9);
    CHECK(c.K(0, 0) >= cfg.focal_range(0));
    CHECK(c.K(0, 0) <= cfg.focal_range(1));
  }
  SceneConfig bad;
  bad.camera_box.max.x() = -7;
  CHECK_THROWS_AS(sample_camera(bad, Vec3::Zero(), rng), ConfigError);
}

TEST_CASE("procedural poses") {
  const PoseLibrary lib = PoseLibrary::procedural();
  Rng a(5), b(5);
  const Pose3D p = lib.sample(a);
  CHECK(p.joints == lib.sample(b).joints);
  CHECK(p.joints.row(h36m::kPelvis).norm() == 0.0);

  const BoneLimits L;
  const std::map<std::pair<int, int>, const double*> ranges = {
      {{h36m::kPelvis, h36m::kLeftHip}, L.pelvis_hip},     {{h36m::kPelvis, h36m::kRightHip}, L.pelvis_hip},
      {{h36m::kLeftHip, h36m::kLeftKnee}, L.thigh},        {{h36m::kRightHip, h36m::kRightKnee}, L.thigh},
      {{h36m::kLeftKnee, h36m::kLeftAnkle}, L.shin},       {{h36m::kRightKnee, h36m::kRightAnkle}, L.shin},
      {{h36m::kPelvis, h36m::kTorso}, L.lower_spine},      {{h36m::kTorso, h36m::kNeck}, L.upper_spine},
      {{h36m::kNeck, h36m::kNose}, L.neck_nose},           {{h36m::kNose, h36m::kHead}, L.nose_head},
      {{h36m::kNeck, h36m::kLeftShoulder}, L.clavicle},    {{h36m::kNeck, h36m::kRightShoulder}, L.clavicle},
      {{h36m::kLeftShoulder, h36m::kLeftElbow}, L.upper_arm}, {{h36m::kRightShoulder, h36m::kRightElbow}, L.upper_arm},
      {{h36m::kLeftElbow, h36m::kLeftWrist}, L.forearm},   {{h36m::kRightElbow, h36m::kRightWrist}, L.forearm},
  };
  REQUIRE(h36m_bones().size() == 16);
  Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    const Pose3D q = lib.sample(rng);
    for (const auto& [bone, range] : ranges) {
      const double len = (q.joints.row(bone.first) - q.joints.row(bone.second)).norm();
      CHECK(len >= range[0] - 1e-12);
      CHECK(len <= range[1] + 1e-12);
    }
  }
}

TEST_CASE("external pose library") {
  const fs::path path = temp_path("one_pose.jsonl");
  {
    std::ofstream out(path);
    out << "[";
    for (int j = 0; j < 17; ++j) out << (j ? "," : "") << "[" << j + 1 << ", 2, 3]";
    out << "]\n";
  }
  const PoseLibrary lib = PoseLibrary::from_file(path);
  CHECK(lib.size() == 1);
  Rng rng(1);
  const Pose3D p = lib.sample(rng);
  CHECK(p.joints.row(0).norm() == 0.0);
  CHECK(p.joints(5, 0) == 5.0);
  CHECK_THROWS_AS(PoseLibrary::from_poses({}), InvalidInput);
  const fs::path empty = temp_path("empty_poses.jsonl");
  std::ofstream(empty).close();
  CHECK_THROWS_AS(PoseLibrary::from_file(empty), InvalidInput);
}

TEST_CASE("corrupt_2d") {
  Rng rng(7);
  const Pixels clean = Pixels::Random(17, 2) * 400;
  SUBCASE("noiseless limit") {
    const Pose2D p = corrupt_2d(clean, NoiseModel::noiseless(), rng);
    CHECK(p.pixels == clean);
    CHECK((p.conf.array() == 1.0).all());
  }
  SUBCASE("full occlusion") {
    NoiseModel n;
    n.occlusion_prob = 1.0;
    const Pose2D p = corrupt_2d(clean, n, rng);
    CHECK((p.conf.array() <= n.conf_floor + NoiseModel::kOcclusionConfJitter).all());
  }
  SUBCASE("confidence tracks the error") {
    // The confidence rule alone; occlusion outliers are a separate branch.
    NoiseModel n;
    n.sigma_px = 5.0;
    n.occlusion_prob = 0.0;
    std::vector<double> conf, neg_err;
    Pixels one = Pixels::Zero(1, 2);
    for (int t = 0; t < 10000; ++t) {
      const Pose2D p = corrupt_2d(one, n, rng);
      conf.push_back(p.conf(0));
      neg_err.push_back(-p.pixels.row(0).norm());
    }
    CHECK(stats::pearson(conf, neg_err) > 0.5);
  }
}

TEST_CASE("noiseless samples reproject and triangulate exactly") {
  SceneConfig cfg;
  Rng rng(9);
  const PoseLibrary lib = PoseLibrary::procedural();
  for (int t = 0; t < 50; ++t) {
    const Sample s = generate_sample(cfg, lib, NoiseModel::noiseless(), rng);
    REQUIRE(s.num_views() >= 2);
    for (const View& v : s.views) {
      for (int j = 0; j < 17; ++j) {
        if (v.pose.conf(j) == 0.0) continue;
        CHECK((v.pose.pixels.row(j).transpose() - project(s.gt.joints.row(j).transpose(), v.calib)).norm() < 1e-9);
      }
    }
    for (int j = 0; j < 17; ++j) {
      const Vec2 px[2] = {s.views[0].pose.pixels.row(j).transpose(), s.views[1].pose.pixels.row(j).transpose()};
      const CameraCalib cams[2] = {s.views[0].calib, s.views[1].calib};
      const double w[2] = {1, 1};
      CHECK((triangulate_dlt(px, cams, w) - s.gt.joints.row(j).transpose()).norm() < 1e-6);
    }
  }
}

TEST_CASE("behind-camera joints are marked missing") {
  CameraCalib cam;
  cam.K << 800, 0, 500, 0, 800, 500, 0, 0, 1;
  cam.R.setIdentity();
  cam.T.setZero();
  Points3 p = Points3::Zero(17, 3);
  p.col(2).setConstant(3.0);
  p(4, 2) = -1.0;
  Rng rng(1);
  const Pose2D o = observe(Pose3D(p), cam, NoiseModel{}, rng);
  CHECK(o.conf(4) == 0.0);
  CHECK(o.pixels.row(4).norm() == 0.0);
  CHECK(o.conf(3) > 0.0);
}

TEST_CASE("view count distribution") {
  SceneConfig cfg;
  cfg.min_views = 2;
  cfg.max_views = 5;
  const auto data = generate_dataset(cfg, PoseLibrary::procedural(), NoiseModel{}, 10000, 3);
  std::map<int, int> counts;
  for (const auto& s : data) counts[s.num_views()]++;
  CHECK(counts.size() == 4);
  const double p = 0.25, n = 10000, sd = std::sqrt(n * p * (1 - p));
  for (const auto& [k, c] : counts) CHECK(std::abs(c - n * p) < 5 * sd);

  SceneConfig two = cfg;
  two.min_views = two.max_views = 2;
  for (const auto& s : generate_dataset(two, PoseLibrary::procedural(), NoiseModel{}, 50, 1)) CHECK(s.num_views() == 2);
}

TEST_CASE("generation is deterministic and thread-count independent") {
  SceneConfig cfg;
  const auto lib = PoseLibrary::procedural();
  const auto a = generate_dataset(cfg, lib, NoiseModel{}, 40, 17);
  const auto b = generate_dataset(cfg, lib, NoiseModel{}, 40, 17);
  for (size_t i = 0; i < a.size(); ++i) CHECK(serialize_sample(a[i]) == serialize_sample(b[i]));
  CHECK(a[3].scene_id == "scene_000003");
}

TEST_CASE("dataset roundtrip and corruption") {
  const auto data = generate_dataset(SceneConfig{}, PoseLibrary::procedural(), NoiseModel{}, 25, 2);
  const fs::path path = temp_path("roundtrip.jsonl");
  write_dataset(data, path);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].scene_id == data[i].scene_id);
    CHECK(back[i].gt.joints == data[i].gt.joints);
    REQUIRE(back[i].views.size() == data[i].views.size());
    for (size_t v = 0; v < data[i].views.size(); ++v) {
      CHECK(back[i].views[v].calib.K == data[i].views[v].calib.K);
      CHECK(back[i].views[v].calib.R == data[i].views[v].calib.R);
      CHECK(back[i].views[v].calib.T == data[i].views[v].calib.T);
      CHECK(back[i].views[v].pose.pixels == data[i].views[v].pose.pixels);
      CHECK(back[i].views[v].pose.conf == data[i].views[v].pose.conf);
    }
  }

  // Cut the file in the middle of record 10.
  std::string text;
  {
    std::ifstream in(path, std::ios::binary);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  size_t pos = 0;
  for (int line = 0; line < 10; ++line) pos = text.find('\n', pos) + 1;
  const fs::path cut = temp_path("truncated.jsonl");
  {
    std::ofstream out(cut, std::ios::binary);
    out << text.substr(0, pos + 100);
  }
  DatasetReader reader(cut);
  int ok = 0;
  try {
    while (reader.next()) ++ok;
    FAIL("truncated dataset was accepted");
  } catch (const ParseError& e) {
    CHECK(ok == 10);
    CHECK(e.record() == 10);
    CHECK(std::string(e.what()).find("last complete record: 9") != std::string::npos);
  }

  const fs::path empty = temp_path("empty.jsonl");
  std::ofstream(empty).close();
  CHECK(read_dataset(empty).empty());
}
