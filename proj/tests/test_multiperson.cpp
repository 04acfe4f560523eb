#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "rumpl/errors.hpp"
#include "rumpl/hungarian.hpp"
#include "rumpl/multiperson.hpp"

using namespace rumpl;

TEST_CASE("assignment matches brute force") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int t = 0; t < 300; ++t) {
    const int r = size(rng), c = size(rng);
    Eigen::MatrixXd cost(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) cost(i, j) = u(rng);
    const Assignment fast = solve_assignment(cost);
    const Assignment slow = brute_force_assignment(cost);
    CHECK(fast.cost == doctest::Approx(slow.cost).epsilon(1e-12));
    REQUIRE(fast.row_to_col.size() == static_cast<size_t>(r));
    double recomputed = 0.0;
    int pairs = 0;
    std::vector<int> used;
    for (int i = 0; i < r; ++i) {
      const int j = fast.row_to_col[i];
      if (j < 0) continue;
      recomputed += cost(i, j);
      ++pairs;
      used.push_back(j);
    }
    CHECK(pairs == std::min(r, c));
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    CHECK(recomputed == doctest::Approx(fast.cost).epsilon(1e-12));
  }
  Eigen::MatrixXd bad(1, 1);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(solve_assignment(bad), InvalidInput);
  CHECK(solve_assignment(Eigen::MatrixXd(0, 3)).row_to_col.empty());
}

TEST_CASE("two people, three noiseless views") {
  MultiPersonConfig cfg;
  const auto lib = PoseLibrary::procedural();
  const auto scenes = generate_multiperson_dataset(cfg, lib, 10, 4);
  const TriangulationLifter tri(TriangulationWeights::kConfidence);
  for (const auto& scene : scenes) {
    REQUIRE(scene.people.size() == 2);
    REQUIRE(scene.views.size() == 3);
    const auto groups = match_people(scene.views, cfg.match);
    CHECK(groups.size() == 2);
    CHECK(grouping_correct(scene, groups));
    const auto lifted = lift_scene(scene.views, groups, tri);
    REQUIRE(lifted.size() == 2);
    for (const auto& person : lifted) {
      const auto [v, d] = person.group.members.front();
      const Pose3D& gt = scene.people[scene.views[v].person_index[d]];
      CHECK(mpjpe(gt, person.pose) < 1e-3);
    }
  }
}

TEST_CASE("matching edge cases") {
  MultiPersonConfig cfg;
  Rng rng(5);
  const auto lib = PoseLibrary::procedural();
  auto scene = generate_multiperson_scene(cfg, lib, rng);

  // A person seen in a single view stays a singleton and is not lifted.
  auto partial = scene.views;
  const int keep = partial[0].person_index[0];
  for (size_t v = 1; v < partial.size(); ++v) {
    for (size_t d = 0; d < partial[v].people.size(); ++d) {
      if (partial[v].person_index[d] == keep) {
        partial[v].people.erase(partial[v].people.begin() + d);
        partial[v].person_index.erase(partial[v].person_index.begin() + d);
        break;
      }
    }
  }
  const auto groups = match_people(partial, cfg.match);
  CHECK(groups.size() == 2);
  CHECK(std::count_if(groups.begin(), groups.end(), [](const PersonGroup& g) { return g.singleton(); }) == 1);
  CHECK(lift_scene(partial, groups, TriangulationLifter(TriangulationWeights::kUniform)).size() == 1);

  // A duplicated detection cannot join the same track twice.
  auto dup = scene.views;
  dup[1].people.push_back(dup[1].people[0]);
  dup[1].person_index.push_back(dup[1].person_index[0]);
  const auto dup_groups = match_people(dup, cfg.match);
  CHECK(dup_groups.size() == 3);
  for (const auto& g : dup_groups) {
    for (size_t i = 1; i < g.members.size(); ++i) CHECK(g.members[i].first != g.members[i - 1].first);
  }

  // Views without detections contribute nothing.
  auto empty = scene.views;
  empty[2].people.clear();
  empty[2].person_index.clear();
  const auto eg = match_people(empty, cfg.match);
  CHECK(eg.size() == 2);
  for (const auto& g : eg) CHECK(g.num_views() == 2);

  std::vector<ViewDetections> none(2, ViewDetections{scene.views[0].calib, {}, {}});
  CHECK(match_people(none, cfg.match).empty());
}

TEST_CASE("scene JSON roundtrip") {
  MultiPersonConfig cfg;
  cfg.noise = NoiseModel{};
  const auto scenes = generate_multiperson_dataset(cfg, PoseLibrary::procedural(), 3, 9);
  const auto dir = std::filesystem::temp_directory_path() / "rumpl_tests";
  std::filesystem::create_directories(dir);
  write_scenes(scenes, dir / "scenes.jsonl");
  const auto back = read_scenes(dir / "scenes.jsonl");
  REQUIRE(back.size() == scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    CHECK(back[i].scene_id == scenes[i].scene_id);
    CHECK(back[i].people[1].joints == scenes[i].people[1].joints);
    CHECK(back[i].views[2].calib.R == scenes[i].views[2].calib.R);
    CHECK(back[i].views[2].people[0].conf == scenes[i].views[2].people[0].conf);
    CHECK(back[i].views[0].person_index == scenes[i].views[0].person_index);
  }
  auto j = scene_to_json(scenes[0]);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(scene_from_json(j), InvalidInput);
}

TEST_CASE("average precision") {
  Points3 base = Points3::Zero(17, 3);
  const Pose3D a(base), b(Points3(base.array() + 2.0));
  const std::vector<std::vector<Pose3D>> gt{{a, b}};
  std::vector<ScoredPose> preds{{0, a, 0.9}, {0, b, 0.8}};
  CHECK(average_precision(preds, gt) == doctest::Approx(1.0));
  // A confident miss ranked first: the precision envelope is 2/3 throughout.
  preds.push_back({0, Pose3D(Points3(base.array() + 9.0)), 0.95});
  CHECK(average_precision(preds, gt) == doctest::Approx(2.0 / 3.0));
  // Two predictions of the same person: the second is a false positive.
  const std::vector<ScoredPose> twice{{0, a, 0.9}, {0, a, 0.8}};
  CHECK(average_precision(twice, gt) == doctest::Approx(0.5));
  CHECK(average_precision({}, gt) == 0.0);
}
