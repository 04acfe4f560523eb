#include "rumpl/multiperson.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "rumpl/dataset.hpp"
#include "rumpl/errors.hpp"
#include "rumpl/hungarian.hpp"

namespace rumpl {

void ViewDetections::validate(int num_joints) const {
  calib.validate();
  for (const Pose2D& p : people) {
    p.validate();
    if (p.size() != num_joints) throw InvalidInput("detection keypoint count differs from the skeleton");
  }
  if (!person_index.empty() && person_index.size() != people.size()) {
    throw InvalidInput("person_index must have one entry per detection");
  }
}

std::vector<PersonGroup> match_people(std::span<const ViewDetections> views, const MatchConfig& config) {
  std::vector<PersonGroup> tracks;
  if (views.empty()) return tracks;
  int anchor = 0;
  for (int v = 1; v < static_cast<int>(views.size()); ++v) {
    if (views[v].people.size() > views[anchor].people.size()) anchor = v;
  }
  for (int d = 0; d < static_cast<int>(views[anchor].people.size()); ++d) tracks.push_back({{{anchor, d}}});

  for (int v = 0; v < static_cast<int>(views.size()); ++v) {
    if (v == anchor) continue;
    const ViewDetections& view = views[v];
    const int n_tracks = static_cast<int>(tracks.size());
    const int n_det = static_cast<int>(view.people.size());
    if (n_det == 0) continue;
    Eigen::MatrixXd cost(n_tracks, n_det);
    for (int t = 0; t < n_tracks; ++t) {
      for (int d = 0; d < n_det; ++d) {
        double sum = 0.0;
        for (const auto& [mv, md] : tracks[t].members) {
          sum += epipolar_error(views[mv].people[md], views[mv].calib, view.people[d], view.calib);
        }
        cost(t, d) = sum / static_cast<double>(tracks[t].members.size());
      }
    }
    std::vector<bool> taken(n_det, false);
    if (n_tracks > 0) {
      const Assignment a = solve_assignment(cost);
      for (int t = 0; t < n_tracks; ++t) {
        const int d = a.row_to_col[t];
        if (d < 0 || !(cost(t, d) <= config.threshold_px)) continue;
        tracks[t].members.push_back({v, d});
        taken[d] = true;
      }
    }
    for (int d = 0; d < n_det; ++d) {
      if (!taken[d]) tracks.push_back({{{v, d}}});
    }
  }
  for (PersonGroup& g : tracks) std::sort(g.members.begin(), g.members.end());
  return tracks;
}

std::vector<LiftedPerson> lift_scene(std::span<const ViewDetections> views, std::span<const PersonGroup> groups,
                                     const Lifter& lifter) {
  std::vector<LiftedPerson> out;
  std::vector<ViewList> items;
  for (const PersonGroup& g : groups) {
    if (g.singleton()) continue;
    ViewList list;
    double conf = 0.0;
    long count = 0;
    for (const auto& [v, d] : g.members) {
      if (v < 0 || v >= static_cast<int>(views.size()) || d < 0 ||
          d >= static_cast<int>(views[v].people.size())) {
        throw InvalidInput("lift_scene: group refers to a missing detection");
      }
      list.push_back({views[v].calib, views[v].people[d]});
      conf += views[v].people[d].conf.sum();
      count += views[v].people[d].size();
    }
    items.push_back(std::move(list));
    out.push_back({g, Pose3D(), count > 0 ? conf / count : 0.0});
  }
  std::vector<Pose3D> poses = recenter_and_lift_batch(lifter, items);
  for (size_t i = 0; i < out.size(); ++i) out[i].pose = std::move(poses[i]);
  return out;
}

void MultiPersonConfig::validate() const {
  scene.validate();
  noise.validate();
  if (num_people < 1) throw ConfigError("multiperson.num_people must be >= 1");
  if (num_views < 2) throw ConfigError("multiperson.num_views must be >= 2");
  if (!(area > 0.0) || !(min_separation >= 0.0) || !(max_depth > 0.0)) {
    throw ConfigError("multiperson.area, min_separation and max_depth must be positive");
  }
  if (!(match.threshold_px > 0.0)) throw ConfigError("multiperson.threshold_px must be positive");
}

MultiPersonScene generate_multiperson_scene(const MultiPersonConfig& config, const PoseLibrary& library, Rng& rng) {
  MultiPersonScene scene;
  std::uniform_real_distribution<double> xy(-config.area, config.area);
  std::uniform_real_distribution<double> height(config.scene.height_range(0), config.scene.height_range(1));
  std::vector<Vec3> roots;
  for (int p = 0; p < config.num_people; ++p) {
    Vec3 root;
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      root = Vec3(xy(rng), xy(rng), height(rng));
      ok = std::all_of(roots.begin(), roots.end(), [&](const Vec3& r) {
        return (r - root).head<2>().norm() >= config.min_separation;
      });
    }
    if (!ok) throw ConfigError("multiperson: cannot place people with the requested separation");
    roots.push_back(root);
    Pose3D pose = library.sample(rng);
    pose.joints.rowwise() += root.transpose();
    scene.people.push_back(std::move(pose));
  }
  Vec3 center = Vec3::Zero();
  for (const Vec3& r : roots) center += r;
  center /= static_cast<double>(roots.size());

  for (int v = 0; v < config.num_views; ++v) {
    CameraCalib calib;
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      calib = sample_camera(config.scene, center, rng);
      ok = true;
      for (const Pose3D& person : scene.people) {
        if (camera_depth(person.joints.row(h36m::kPelvis).transpose(), calib) > config.max_depth) ok = false;
        for (int j = 0; j < person.size() && ok; ++j) {
          if (camera_depth(person.joints.row(j).transpose(), calib) <= 0.1) ok = false;
        }
      }
    }
    if (!ok) throw ConfigError("multiperson: no camera satisfies the depth limits");
    ViewDetections det;
    det.calib = calib;
    std::vector<int> order(scene.people.size());
    for (size_t p = 0; p < order.size(); ++p) order[p] = static_cast<int>(p);
    std::shuffle(order.begin(), order.end(), rng);
    for (int p : order) {
      det.people.push_back(observe(scene.people[p], calib, config.noise, rng));
      det.person_index.push_back(p);
    }
    scene.views.push_back(std::move(det));
  }
  return scene;
}

std::vector<MultiPersonScene> generate_multiperson_dataset(const MultiPersonConfig& config, const PoseLibrary& library,
                                                           int num_scenes, std::uint64_t seed) {
  config.validate();
  if (num_scenes < 0) throw InvalidInput("num_scenes must be >= 0");
  std::vector<MultiPersonScene> out(static_cast<size_t>(num_scenes));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < num_scenes; ++i) {
    try {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
      out[i] = generate_multiperson_scene(config, library, rng);
      char id[32];
      std::snprintf(id, sizeof id, "mp_%06d", i);
      out[i].scene_id = id;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

bool grouping_correct(const MultiPersonScene& scene, std::span<const PersonGroup> groups) {
  std::map<int, int> group_of_person;
  size_t detections = 0;
  for (const ViewDetections& v : scene.views) {
    if (v.person_index.size() != v.people.size()) throw InvalidInput("grouping_correct: scene lacks person_index");
    detections += v.people.size();
  }
  size_t seen = 0;
  for (size_t g = 0; g < groups.size(); ++g) {
    std::set<int> ids;
    for (const auto& [v, d] : groups[g].members) {
      ids.insert(scene.views[v].person_index[d]);
      ++seen;
    }
    if (ids.size() != 1) return false;
    if (!group_of_person.emplace(*ids.begin(), static_cast<int>(g)).second) return false;
  }
  return seen == detections;
}

nlohmann::json scene_to_json(const MultiPersonScene& scene) {
  Json people = Json::array();
  for (const Pose3D& p : scene.people) people.push_back(points_to_json(p.joints));
  Json views = Json::array();
  for (const ViewDetections& v : scene.views) {
    Json jv = calib_to_json(v.calib);
    Json dets = Json::array();
    for (size_t d = 0; d < v.people.size(); ++d) {
      const Pose2D& pose = v.people[d];
      Json px = Json::array();
      for (int r = 0; r < pose.size(); ++r) px.push_back({pose.pixels(r, 0), pose.pixels(r, 1)});
      Json jd = {{"pose2d", std::move(px)},
                 {"conf", std::vector<double>(pose.conf.data(), pose.conf.data() + pose.conf.size())}};
      if (!v.person_index.empty()) jd["person_index"] = v.person_index[d];
      dets.push_back(std::move(jd));
    }
    jv["detections"] = std::move(dets);
    views.push_back(std::move(jv));
  }
  return {{"schema_version", kMultiPersonSchemaVersion},
          {"scene_id", scene.scene_id},
          {"people", std::move(people)},
          {"views", std::move(views)}};
}

MultiPersonScene scene_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 1) != kMultiPersonSchemaVersion) {
    throw InvalidInput("multi-person scene needs schema_version 2");
  }
  MultiPersonScene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  int m = -1;
  for (const Json& p : j.at("people")) {
    s.people.emplace_back(points_from_json(p));
    s.people.back().validate();
    m = s.people.back().size();
  }
  for (const Json& jv : j.at("views")) {
    ViewDetections v;
    v.calib = calib_from_json(jv);
    bool all_indexed = true;
    std::vector<int> index;
    for (const Json& jd : jv.at("detections")) {
      const Json& px = jd.at("pose2d");
      const Json& conf = jd.at("conf");
      if (px.size() != conf.size()) throw InvalidInput("pose2d and conf lengths differ");
      Pose2D pose(static_cast<int>(px.size()));
      for (size_t r = 0; r < px.size(); ++r) {
        if (!px[r].is_array() || px[r].size() != 2) throw InvalidInput("pose2d entries must be [u, v]");
        pose.pixels(r, 0) = px[r][0].get<double>();
        pose.pixels(r, 1) = px[r][1].get<double>();
        pose.conf(r) = conf[r].get<double>();
      }
      if (m < 0) m = pose.size();
      v.people.push_back(std::move(pose));
      if (jd.contains("person_index")) {
        index.push_back(jd["person_index"].get<int>());
      } else {
        all_indexed = false;
      }
    }
    if (all_indexed) v.person_index = std::move(index);
    v.validate(m);
    s.views.push_back(std::move(v));
  }
  return s;
}

void write_scenes(std::span<const MultiPersonScene> scenes, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const MultiPersonScene& s : scenes) out << scene_to_json(s).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<MultiPersonScene> read_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenes " + path.string());
  std::vector<MultiPersonScene> out;
  std::string line;
  long index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scene_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": record " + std::to_string(index) + ": " + e.what(), index);
    }
    ++index;
  }
  return out;
}

double average_precision(std::span<const ScoredPose> predictions, std::span<const std::vector<Pose3D>> gt_per_scene,
                         double threshold_mm) {
  long total_gt = 0;
  for (const auto& g : gt_per_scene) total_gt += static_cast<long>(g.size());
  if (total_gt == 0) return 0.0;
  std::vector<size_t> order(predictions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<std::vector<bool>> used(gt_per_scene.size());
  for (size_t s = 0; s < gt_per_scene.size(); ++s) used[s].assign(gt_per_scene[s].size(), false);

  std::vector<double> precision, recall;
  long tp = 0, fp = 0;
  for (size_t i : order) {
    const ScoredPose& p = predictions[i];
    if (p.scene < 0 || p.scene >= static_cast<int>(gt_per_scene.size())) {
      throw InvalidInput("average_precision: prediction refers to an unknown scene");
    }
    const auto& gts = gt_per_scene[p.scene];
    double best = std::numeric_limits<double>::infinity();
    int best_k = -1;
    for (size_t k = 0; k < gts.size(); ++k) {
      if (used[p.scene][k]) continue;
      const double e = mpjpe(gts[k], p.pose);
      if (e < best) {
        best = e;
        best_k = static_cast<int>(k);
      }
    }
    if (best_k >= 0 && best < threshold_mm) {
      used[p.scene][best_k] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  // All-point interpolation: precision envelope integrated over recall.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace rumpl
