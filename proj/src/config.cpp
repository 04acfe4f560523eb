#include "rumpl/config.hpp"

#include <fstream>
#include <set>

#include "rumpl/errors.hpp"

namespace rumpl {

namespace {

void read(const Json& j, double& out) { out = j.get<double>(); }
void read(const Json& j, int& out) { out = j.get<int>(); }
void read(const Json& j, bool& out) { out = j.get<bool>(); }
void read(const Json& j, std::uint64_t& out) { out = j.get<std::uint64_t>(); }
void read(const Json& j, std::string& out) { out = j.get<std::string>(); }
void read(const Json& j, std::vector<int>& out) { out = j.get<std::vector<int>>(); }
void read(const Json& j, std::vector<double>& out) { out = j.get<std::vector<double>>(); }
void read(const Json& j, std::vector<std::vector<int>>& out) { out = j.get<std::vector<std::vector<int>>>(); }

template <int N>
void read(const Json& j, Eigen::Matrix<double, N, 1>& out) {
  if (!j.is_array() || static_cast<int>(j.size()) != N) {
    throw ConfigError("expected an array of " + std::to_string(N) + " numbers");
  }
  for (int i = 0; i < N; ++i) out(i) = j[i].get<double>();
}

void read(const Json& j, std::optional<double>& out) {
  if (j.is_null()) {
    out.reset();
  } else {
    out = j.get<double>();
  }
}

template <int N>
Json vec_json(const Eigen::Matrix<double, N, 1>& v) {
  Json a = Json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

// Reads the keys of one section and rejects any it does not know.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    try {
      read(j_.at(key), out);
    } catch (const Json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const Json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const SceneConfig& c) {
  return {{"camera_box_min", vec_json(c.camera_box.min)},
          {"camera_box_max", vec_json(c.camera_box.max)},
          {"person_area_min", vec_json(c.person_area_min)},
          {"person_area_max", vec_json(c.person_area_max)},
          {"height_range", vec_json(c.height_range)},
          {"focal_range", vec_json(c.focal_range)},
          {"image_size", vec_json(c.image_size)},
          {"look_at_jitter", c.look_at_jitter},
          {"min_camera_distance", c.min_camera_distance},
          {"min_views", c.min_views},
          {"max_views", c.max_views}};
}

SceneConfig scene_config_from_json(const Json& j, SceneConfig c) {
  Section s(j, "scene");
  s.get("camera_box_min", c.camera_box.min);
  s.get("camera_box_max", c.camera_box.max);
  s.get("person_area_min", c.person_area_min);
  s.get("person_area_max", c.person_area_max);
  s.get("height_range", c.height_range);
  s.get("focal_range", c.focal_range);
  s.get("image_size", c.image_size);
  s.get("look_at_jitter", c.look_at_jitter);
  s.get("min_camera_distance", c.min_camera_distance);
  s.get("min_views", c.min_views);
  s.get("max_views", c.max_views);
  s.finish();
  return c;
}

Json to_json(const NoiseModel& c) {
  return {{"sigma_px", c.sigma_px},
          {"occlusion_prob", c.occlusion_prob},
          {"occlusion_sigma_px", c.occlusion_sigma_px},
          {"conf_floor", c.conf_floor}};
}

NoiseModel noise_model_from_json(const Json& j, NoiseModel c) {
  Section s(j, "noise");
  s.get("sigma_px", c.sigma_px);
  s.get("occlusion_prob", c.occlusion_prob);
  s.get("occlusion_sigma_px", c.occlusion_sigma_px);
  s.get("conf_floor", c.conf_floor);
  s.finish();
  return c;
}

Json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"num_joints", c.num_joints},
          {"dim", c.dim},
          {"layers", c.layers},
          {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},
          {"max_views", c.max_views},
          {"input", to_string(c.input)},
          {"use_confidence", c.use_confidence},
          {"attention_mask", c.attention_mask},
          {"normalize_rays", c.normalize_rays},
          {"scene_scale", c.scene_scale},
          {"pixel_scale", c.pixel_scale},
          {"fc_num_views", c.fc_num_views}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  Section s(j, "model");
  std::string arch = to_string(c.arch), input = to_string(c.input);
  s.get("arch", arch);
  s.get("input", input);
  c.arch = arch_from_string(arch);
  c.input = input_mode_from_string(input);
  s.get("num_joints", c.num_joints);
  s.get("dim", c.dim);
  s.get("layers", c.layers);
  s.get("heads", c.heads);
  s.get("mlp_ratio", c.mlp_ratio);
  s.get("max_views", c.max_views);
  s.get("use_confidence", c.use_confidence);
  s.get("attention_mask", c.attention_mask);
  s.get("normalize_rays", c.normalize_rays);
  s.get("scene_scale", c.scene_scale);
  s.get("pixel_scale", c.pixel_scale);
  s.get("fc_num_views", c.fc_num_views);
  s.finish();
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"lr_decay_epochs", c.lr_decay_epochs},
          {"lr_decay_factor", c.lr_decay_factor},
          {"min_views", c.min_views},
          {"max_views", c.max_views},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"val_views", c.val_views},
          {"save_every_epoch", c.save_every_epoch}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  Section s(j, "train");
  s.get("batch_size", c.batch_size);
  s.get("epochs", c.epochs);
  s.get("lr", c.lr);
  s.get("lr_decay_epochs", c.lr_decay_epochs);
  s.get("lr_decay_factor", c.lr_decay_factor);
  s.get("min_views", c.min_views);
  s.get("max_views", c.max_views);
  s.get("seed", c.seed);
  s.get("adam_beta1", c.adam_beta1);
  s.get("adam_beta2", c.adam_beta2);
  s.get("adam_eps", c.adam_eps);
  s.get("val_views", c.val_views);
  s.get("save_every_epoch", c.save_every_epoch);
  s.finish();
  return c;
}

Json to_json(const EvalPolicy& c) {
  return {{"policy", to_string(c.policy)}, {"num_views", c.num_views}, {"fixed", c.fixed}, {"recenter", c.recenter}};
}

EvalPolicy eval_policy_from_json(const Json& j, EvalPolicy c) {
  Section s(j, "eval");
  std::string policy = to_string(c.policy);
  s.get("policy", policy);
  c.policy = subset_policy_from_string(policy);
  s.get("num_views", c.num_views);
  s.get("fixed", c.fixed);
  s.get("recenter", c.recenter);
  s.finish();
  if (c.num_views < 1) throw ConfigError("eval.num_views must be >= 1");
  return c;
}

Json to_json(const SweepConfig& c) {
  return {{"radius", c.radius},
          {"heights", c.heights},
          {"angles_deg", c.angles_deg},
          {"focal", c.focal},
          {"image_size", vec_json(c.image_size)},
          {"root_height", vec_json(c.root_height)},
          {"num_poses", c.num_poses},
          {"noise", to_json(c.noise)},
          {"seed", c.seed}};
}

SweepConfig sweep_config_from_json(const Json& j, SweepConfig c) {
  Section s(j, "sweep");
  s.get("radius", c.radius);
  s.get("heights", c.heights);
  s.get("angles_deg", c.angles_deg);
  s.get("focal", c.focal);
  s.get("image_size", c.image_size);
  s.get("root_height", c.root_height);
  s.get("num_poses", c.num_poses);
  if (s.has("noise")) c.noise = noise_model_from_json(s.at("noise"), c.noise);
  s.get("seed", c.seed);
  s.finish();
  if (!(c.radius > 0.0) || c.num_poses < 1) throw ConfigError("sweep.radius and sweep.num_poses must be positive");
  return c;
}

Json to_json(const BenchConfig& c) {
  return {{"views", c.views},
          {"batches", c.batches},
          {"repetitions", c.repetitions},
          {"warmup", c.warmup},
          {"seed", c.seed}};
}

BenchConfig bench_config_from_json(const Json& j, BenchConfig c) {
  Section s(j, "bench");
  s.get("views", c.views);
  s.get("batches", c.batches);
  s.get("repetitions", c.repetitions);
  s.get("warmup", c.warmup);
  s.get("seed", c.seed);
  s.finish();
  if (c.views.empty() || c.batches.empty() || c.repetitions < 1 || c.warmup < 0) {
    throw ConfigError("bench needs views, batches and repetitions >= 1");
  }
  return c;
}

Json to_json(const MultiPersonConfig& c) {
  return {{"scene", to_json(c.scene)},
          {"noise", to_json(c.noise)},
          {"num_people", c.num_people},
          {"area", c.area},
          {"min_separation", c.min_separation},
          {"max_depth", c.max_depth},
          {"num_views", c.num_views},
          {"threshold_px", c.match.threshold_px}};
}

MultiPersonConfig multiperson_config_from_json(const Json& j, MultiPersonConfig c) {
  Section s(j, "multiperson");
  if (s.has("scene")) c.scene = scene_config_from_json(s.at("scene"), c.scene);
  if (s.has("noise")) c.noise = noise_model_from_json(s.at("noise"), c.noise);
  s.get("num_people", c.num_people);
  s.get("area", c.area);
  s.get("min_separation", c.min_separation);
  s.get("max_depth", c.max_depth);
  s.get("num_views", c.num_views);
  s.get("threshold_px", c.match.threshold_px);
  s.finish();
  return c;
}

void RunConfig::validate() const {
  scene.validate();
  noise.validate();
  model.validate();
  train.validate();
  multiperson.validate();
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
}

Json to_json(const RunConfig& c) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"scene", to_json(c.scene)},
          {"noise", to_json(c.noise)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"eval", to_json(c.eval)},
          {"sweep", to_json(c.sweep)},
          {"bench", to_json(c.bench)},
          {"multiperson", to_json(c.multiperson)},
          {"thresholds",
           {{"max_mpjpe_mm", opt(c.thresholds.max_mpjpe_mm)},
            {"max_kpstar_mm", opt(c.thresholds.max_kpstar_mm)},
            {"min_ap100", opt(c.thresholds.min_ap100)}}}};
}

RunConfig run_config_from_json(const Json& j, RunConfig c) {
  Section s(j, "config");
  s.get("seed", c.seed);
  s.get("jobs", c.jobs);
  if (s.has("scene")) c.scene = scene_config_from_json(s.at("scene"), c.scene);
  if (s.has("noise")) c.noise = noise_model_from_json(s.at("noise"), c.noise);
  if (s.has("model")) c.model = model_config_from_json(s.at("model"), c.model);
  if (s.has("train")) c.train = train_config_from_json(s.at("train"), c.train);
  if (s.has("eval")) c.eval = eval_policy_from_json(s.at("eval"), c.eval);
  if (s.has("sweep")) c.sweep = sweep_config_from_json(s.at("sweep"), c.sweep);
  if (s.has("bench")) c.bench = bench_config_from_json(s.at("bench"), c.bench);
  if (s.has("multiperson")) c.multiperson = multiperson_config_from_json(s.at("multiperson"), c.multiperson);
  if (s.has("thresholds")) {
    Section t(s.at("thresholds"), "thresholds");
    t.get("max_mpjpe_mm", c.thresholds.max_mpjpe_mm);
    t.get("max_kpstar_mm", c.thresholds.max_kpstar_mm);
    t.get("min_ap100", c.thresholds.min_ap100);
    t.finish();
  }
  s.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = run_config_from_json(j);
  c.validate();
  return c;
}

}  // namespace rumpl
