#include "rumpl/cli.hpp"

#include <omp.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rumpl/checkpoint.hpp"
#include "rumpl/config.hpp"
#include "rumpl/dataset.hpp"
#include "rumpl/errors.hpp"

namespace rumpl::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out_dir;
  bool force = false;
  int verbosity = 0;
};

struct Options {
  Common common;
  // gen
  int num_samples = 1000;
  std::string kind = "single";
  std::string poses_file;
  // train
  std::string train_path, val_path;
  // eval / triangulate / ablate / sweep / bench / match
  std::string checkpoint, dataset, scenes;
  std::string policy, fixed;
  std::optional<int> num_views;
  bool recenter = false;
  std::string weights = "uniform";
  std::string pixels_ckpt, pixels_calib_ckpt, rays_ckpt;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "JSON run config")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override a config key: section.key=<json value>");
  app->add_option("--seed", c.seed, "Master seed for every random stream");
  app->add_option("--jobs", c.jobs, "Maximum worker threads")->check(CLI::NonNegativeNumber);
  app->add_option("-o,--out", c.out_dir, "Output directory (created atomically)");
  app->add_flag("--force", c.force, "Replace an existing output directory");
  app->add_flag("-v,--verbose", c.verbosity, "More progress output");
}

// Applies "a.b.c=value" onto the config JSON; value is parsed as JSON and
// falls back to a plain string.
void apply_override(Json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + spec + "'");
  const std::string key = spec.substr(0, eq), text = spec.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  Json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = Json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = std::move(value);
}

RunConfig resolve_config(const Common& c) {
  Json j = Json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw Error("config file not found: " + c.config_path);
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      throw ConfigError(c.config_path + ": " + e.what());
    }
  }
  for (const auto& o : c.overrides) apply_override(j, o);
  if (c.seed) j["seed"] = *c.seed;
  if (c.jobs) j["jobs"] = *c.jobs;
  RunConfig cfg = run_config_from_json(j);
  // The master seed drives every stage.
  cfg.train.seed = cfg.seed;
  cfg.sweep.seed = cfg.seed;
  cfg.bench.seed = cfg.seed;
  cfg.validate();
  if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
  return cfg;
}

// Everything is written into a sibling temp directory that is renamed into
// place once the command succeeded.
class OutputDir {
 public:
  OutputDir(const std::string& target, bool force) : target_(target), force_(force) {
    if (target_.empty()) throw ConfigError("missing --out directory");
    if (fs::exists(target_) && !force_) {
      throw ConfigError("output directory " + target_.string() + " already exists (use --force to replace)");
    }
    tmp_ = target_;
    tmp_ += ".tmp-" + std::to_string(::getpid());
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  ~OutputDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }
  const fs::path& path() const { return tmp_; }
  fs::path operator/(const std::string& name) const { return tmp_ / name; }

  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_, tmp_;
  bool force_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_snapshot(const OutputDir& out, const RunConfig& cfg, const std::string& command) {
  Json j = to_json(cfg);
  j["command"] = command;
  write_text(out / "config.json", j.dump(2) + "\n");
}

PoseLibrary pose_library(const Options& o) {
  return o.poses_file.empty() ? PoseLibrary::procedural() : PoseLibrary::from_file(o.poses_file);
}

std::vector<std::vector<int>> parse_fixed(const std::string& text) {
  std::vector<std::vector<int>> out;
  std::stringstream subsets(text);
  std::string subset;
  while (std::getline(subsets, subset, ',')) {
    std::vector<int> idx;
    std::stringstream views(subset);
    std::string v;
    while (std::getline(views, v, '-')) {
      try {
        idx.push_back(std::stoi(v));
      } catch (const std::exception&) {
        throw ConfigError("--fixed expects view subsets like 0-1,1-2");
      }
    }
    out.push_back(std::move(idx));
  }
  return out;
}

EvalPolicy eval_policy(const Options& o, EvalPolicy p) {
  if (!o.policy.empty()) p.policy = subset_policy_from_string(o.policy);
  if (o.num_views) p.num_views = *o.num_views;
  if (!o.fixed.empty()) {
    p.fixed = parse_fixed(o.fixed);
    if (o.policy.empty()) p.policy = SubsetPolicy::kFixed;
  }
  if (o.recenter) p.recenter = true;
  return p;
}

std::shared_ptr<const LiftNet<float>> load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("missing --checkpoint");
  return std::shared_ptr<const LiftNet<float>>(load_checkpoint<float>(path));
}

int check_mpjpe(const Thresholds& t, double all_mm, double kp_mm) {
  int code = kExitOk;
  if (t.max_mpjpe_mm && !(all_mm <= *t.max_mpjpe_mm)) {
    std::cerr << "threshold violated: mpjpe " << all_mm << " mm > " << *t.max_mpjpe_mm << " mm\n";
    code = kExitThreshold;
  }
  if (t.max_kpstar_mm && !(kp_mm <= *t.max_kpstar_mm)) {
    std::cerr << "threshold violated: KP* mpjpe " << kp_mm << " mm > " << *t.max_kpstar_mm << " mm\n";
    code = kExitThreshold;
  }
  return code;
}

int cmd_gen(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  OutputDir out(o.common.out_dir, o.common.force);
  const PoseLibrary library = pose_library(o);
  if (o.kind == "single") {
    const auto samples = generate_dataset(cfg.scene, library, cfg.noise, o.num_samples, cfg.seed);
    write_dataset(samples, out / "dataset.jsonl");
  } else if (o.kind == "multi") {
    const auto scenes = generate_multiperson_dataset(cfg.multiperson, library, o.num_samples, cfg.seed);
    write_scenes(scenes, out / "scenes.jsonl");
  } else {
    throw ConfigError("--kind must be single or multi");
  }
  write_snapshot(out, cfg, "gen");
  out.commit();
  if (o.common.verbosity) std::cerr << "wrote " << o.num_samples << " records to " << o.common.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.train_path.empty() || o.val_path.empty()) throw ConfigError("train needs --train and --val datasets");
  OutputDir out(o.common.out_dir, o.common.force);
  write_snapshot(out, cfg, "train");
  TrainOptions opts;
  opts.out_dir = out.path();
  opts.verbose = o.common.verbosity > 0;
  const TrainResult r = train(cfg.model, cfg.train, fs::path(o.train_path), fs::path(o.val_path), opts);
  out.commit();
  std::cout << "best val MPJPE " << r.best_val_mpjpe_mm << " mm\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  const auto model = load_model(o.checkpoint);
  if (o.dataset.empty()) throw ConfigError("eval needs --dataset");
  const auto samples = read_dataset(o.dataset);
  cfg.eval = eval_policy(o, cfg.eval);
  OutputDir out(o.common.out_dir, o.common.force);
  const EvalReport report = evaluate(ModelLifter(model), samples, cfg.eval);
  write_text(out / "report.json", report.to_json().dump(2) + "\n");
  write_text(out / "report.csv", report.to_csv());
  write_snapshot(out, cfg, "eval");
  out.commit();
  std::cout << "MPJPE " << report.mean_all_mm << " mm, KP* " << report.mean_kpstar_mm << " mm over "
            << report.evaluated << " subsets (" << report.skipped << " samples skipped)\n";
  return check_mpjpe(cfg.thresholds, report.mean_all_mm, report.mean_kpstar_mm);
}

int cmd_triangulate(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.dataset.empty()) throw ConfigError("triangulate needs --dataset");
  TriangulationWeights w;
  if (o.weights == "confidence") {
    w = TriangulationWeights::kConfidence;
  } else if (o.weights == "uniform") {
    w = TriangulationWeights::kUniform;
  } else {
    throw ConfigError("--weights must be confidence or uniform");
  }
  const auto samples = read_dataset(o.dataset);
  OutputDir out(o.common.out_dir, o.common.force);
  const JointMask kp = kp_star_mask(h36m17());
  std::ostringstream csv;
  csv.precision(10);
  csv << "sample,scene_id,views,mpjpe_all_mm,mpjpe_kpstar_mm\n";
  double sum_all = 0.0, sum_kp = 0.0;
  long n = 0, skipped = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.num_views() < 2) {
      ++skipped;
      continue;
    }
    const Pose3D pred = triangulate_pose(s.views, w);
    const double all = mpjpe(s.gt, pred);
    const double kps = s.num_joints() == h36m::kNumJoints ? mpjpe(s.gt, pred, kp) : all;
    csv << i << ',' << s.scene_id << ',' << s.num_views() << ',' << all << ',' << kps << '\n';
    sum_all += all;
    sum_kp += kps;
    ++n;
  }
  const double mean_all = n ? sum_all / n : std::nan(""), mean_kp = n ? sum_kp / n : std::nan("");
  write_text(out / "triangulation.csv", csv.str());
  write_text(out / "summary.json", Json{{"weights", o.weights},
                                        {"samples", n},
                                        {"skipped", skipped},
                                        {"mean_all_mm", mean_all},
                                        {"mean_kpstar_mm", mean_kp}}
                                           .dump(2) +
                                       "\n");
  write_snapshot(out, cfg, "triangulate");
  out.commit();
  std::cout << "triangulation MPJPE " << mean_all << " mm, KP* " << mean_kp << " mm over " << n << " samples\n";
  return check_mpjpe(cfg.thresholds, mean_all, mean_kp);
}

int cmd_ablate(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.dataset.empty()) throw ConfigError("ablate needs --dataset");
  const auto pixels = load_model(o.pixels_ckpt);
  const auto pixels_calib = load_model(o.pixels_calib_ckpt);
  const auto rays = load_model(o.rays_ckpt);
  const auto samples = read_dataset(o.dataset);
  cfg.eval = eval_policy(o, cfg.eval);
  OutputDir out(o.common.out_dir, o.common.force);
  const auto rows = ablate_input_modality(samples, pixels, pixels_calib, rays, cfg.eval);
  write_text(out / "ablation.csv", ablation_csv(rows));
  write_snapshot(out, cfg, "ablate");
  out.commit();
  std::cout << ablation_csv(rows);
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  std::unique_ptr<Lifter> lifter;
  if (o.checkpoint.empty()) {
    lifter = std::make_unique<TriangulationLifter>(TriangulationWeights::kConfidence);
  } else {
    lifter = std::make_unique<ModelLifter>(load_model(o.checkpoint));
  }
  OutputDir out(o.common.out_dir, o.common.force);
  const auto rows = angle_sweep(*lifter, cfg.sweep, pose_library(o));
  write_text(out / "sweep.csv", sweep_csv(rows));
  write_text(out / "sweep.svg", sweep_svg(rows, "MPJPE vs camera angle (" + lifter->name() + ")"));
  write_snapshot(out, cfg, "sweep");
  out.commit();
  std::cout << sweep_csv(rows);
  return kExitOk;
}

int cmd_bench(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  std::shared_ptr<const LiftNet<float>> model;
  if (o.checkpoint.empty()) {
    auto fresh = make_model<float>(cfg.model);
    fresh->init(cfg.seed);
    model = std::move(fresh);
  } else {
    model = load_model(o.checkpoint);
  }
  OutputDir out(o.common.out_dir, o.common.force);
  const auto cells = bench_speed(*model, cfg.bench);
  write_text(out / "bench.csv", bench_csv(cells));
  write_snapshot(out, cfg, "bench");
  out.commit();
  std::cout << bench_csv(cells);
  return kExitOk;
}

int cmd_match(const Options& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.scenes.empty()) throw ConfigError("match needs --scenes");
  const auto scenes = read_scenes(o.scenes);
  std::unique_ptr<Lifter> lifter;
  if (o.checkpoint.empty()) {
    lifter = std::make_unique<TriangulationLifter>(TriangulationWeights::kConfidence);
  } else {
    lifter = std::make_unique<ModelLifter>(load_model(o.checkpoint));
  }
  OutputDir out(o.common.out_dir, o.common.force);
  std::ofstream groups_out(out / "groups.jsonl");
  std::vector<ScoredPose> predictions;
  std::vector<std::vector<Pose3D>> gts;
  long labelled = 0, correct = 0, singletons = 0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const MultiPersonScene& s = scenes[i];
    const auto groups = match_people(s.views, cfg.multiperson.match);
    const auto lifted = lift_scene(s.views, groups, *lifter);
    Json jg = Json::array();
    for (const PersonGroup& g : groups) {
      Json members = Json::array();
      for (const auto& [v, d] : g.members) members.push_back({v, d});
      jg.push_back(members);
      singletons += g.singleton();
    }
    Json people = Json::array();
    for (const LiftedPerson& p : lifted) {
      people.push_back({{"score", p.score}, {"pose", points_to_json(p.pose.joints)}});
      predictions.push_back({static_cast<int>(i), p.pose, p.score});
    }
    groups_out << Json{{"scene_id", s.scene_id}, {"groups", jg}, {"people", people}}.dump() << '\n';
    gts.push_back(s.people);
    const bool has_labels = std::all_of(s.views.begin(), s.views.end(),
                                        [](const ViewDetections& v) { return v.person_index.size() == v.people.size(); });
    if (has_labels) {
      ++labelled;
      correct += grouping_correct(s, groups);
    }
  }
  groups_out.close();
  const double ap = average_precision(predictions, gts, 100.0);
  Json summary = {{"scenes", scenes.size()}, {"ap100", ap}, {"singleton_groups", singletons}, {"lifter", lifter->name()}};
  if (labelled) summary["grouping_accuracy"] = static_cast<double>(correct) / labelled;
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_snapshot(out, cfg, "match");
  out.commit();
  std::cout << summary.dump() << "\n";
  if (cfg.thresholds.min_ap100 && !(ap >= *cfg.thresholds.min_ap100)) {
    std::cerr << "threshold violated: AP100 " << ap << " < " << *cfg.thresholds.min_ap100 << "\n";
    return kExitThreshold;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-view 2D-to-3D pose lifting with keypoint rays"};
  app.name("rumpl");
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, o.common);
  gen->add_option("-n,--num-samples", o.num_samples, "Number of samples or scenes")->check(CLI::NonNegativeNumber);
  gen->add_option("--kind", o.kind, "single (one person per sample) or multi (scenes)");
  gen->add_option("--poses", o.poses_file, "JSON-lines pose library instead of the procedural generator");

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, o.common);
  tr->add_option("--train", o.train_path, "Training dataset")->required();
  tr->add_option("--val", o.val_path, "Validation dataset")->required();

  auto add_eval_flags = [&](CLI::App* a) {
    a->add_option("--policy", o.policy, "all-pairs, fixed or n-subsets");
    a->add_option("--num-views", o.num_views, "Views per subset for n-subsets");
    a->add_option("--fixed", o.fixed, "Fixed view subsets, e.g. 0-1,2-3");
    a->add_flag("--recenter", o.recenter, "Recenter before lifting");
  };

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, o.common);
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  ev->add_option("--dataset", o.dataset, "Dataset")->required();
  add_eval_flags(ev);

  auto* tri = app.add_subcommand("triangulate", "Triangulation baseline over every view of each sample");
  add_common(tri, o.common);
  tri->add_option("--dataset", o.dataset, "Dataset")->required();
  tri->add_option("--weights", o.weights, "confidence or uniform");

  auto* ab = app.add_subcommand("ablate", "Compare pixel, pixel+calibration and ray inputs");
  add_common(ab, o.common);
  ab->add_option("--dataset", o.dataset, "Dataset")->required();
  ab->add_option("--pixels", o.pixels_ckpt, "Checkpoint trained on pixels")->required();
  ab->add_option("--pixels-calib", o.pixels_calib_ckpt, "Checkpoint trained on pixels and calibration")->required();
  ab->add_option("--rays", o.rays_ckpt, "Checkpoint trained on rays")->required();
  add_eval_flags(ab);

  auto* sw = app.add_subcommand("sweep", "Two-camera angle sweep");
  add_common(sw, o.common);
  sw->add_option("--checkpoint", o.checkpoint, "Model checkpoint (triangulation when omitted)");
  sw->add_option("--poses", o.poses_file, "JSON-lines pose library");

  auto* be = app.add_subcommand("bench", "Inference throughput");
  add_common(be, o.common);
  be->add_option("--checkpoint", o.checkpoint, "Model checkpoint (random weights from the config when omitted)");

  auto* ma = app.add_subcommand("match", "Multi-person association and lifting");
  add_common(ma, o.common);
  ma->add_option("--scenes", o.scenes, "Multi-person scenes (JSON lines)")->required();
  ma->add_option("--checkpoint", o.checkpoint, "Model checkpoint (triangulation when omitted)");

  std::vector<std::string> argv_store{"rumpl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*tri) return cmd_triangulate(o);
    if (*ab) return cmd_ablate(o);
    if (*sw) return cmd_sweep(o);
    if (*be) return cmd_bench(o);
    if (*ma) return cmd_match(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }

}  // namespace rumpl::cli
