// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance [--only 1,4,8] [--cache DIR]
//
// With --cache, trained models are stored as checkpoints in DIR and reused by
// later runs with the same recipe.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "../test_util.hpp"
#include "CLI11.hpp"
#include "rumpl/checkpoint.hpp"
#include "rumpl/eval.hpp"
#include "rumpl/hungarian.hpp"
#include "rumpl/multiperson.hpp"
#include "rumpl/stats.hpp"
#include "rumpl/training.hpp"

using namespace rumpl;

namespace {

using Clock = std::chrono::steady_clock;
using ModelPtr = std::shared_ptr<const LiftNet<float>>;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

void note(const std::string& line) { std::printf("    %s\n", line.c_str()); std::fflush(stdout); }

// ---------------------------------------------------------------------------
// Shared data and models.

const PoseLibrary& library() {
  static const PoseLibrary lib = PoseLibrary::procedural();
  return lib;
}

NoiseModel acceptance_noise() {
  NoiseModel n;
  n.sigma_px = 5.0;
  n.occlusion_prob = 0.1;
  return n;
}

SceneConfig views_exactly(int n) {
  SceneConfig s;
  s.min_views = s.max_views = n;
  return s;
}

class Models {
 public:
  explicit Models(std::filesystem::path cache) : cache_(std::move(cache)) {
    if (!cache_.empty()) std::filesystem::create_directories(cache_);
  }

  ModelPtr get(const std::string& name, const std::function<ModelPtr()>& make) {
    if (auto it = memo_.find(name); it != memo_.end()) return it->second;
    const auto path = cache_ / (name + ".ckpt");
    ModelPtr model;
    if (!cache_.empty() && std::filesystem::exists(path)) {
      model = load_checkpoint<float>(path);
      note("loaded " + path.string());
    } else {
      const auto t0 = Clock::now();
      model = make();
      note(fmt("trained %s in %.0f s", name.c_str(), seconds_since(t0)));
      if (!cache_.empty()) save_checkpoint(path, const_cast<LiftNet<float>&>(*model));
    }
    memo_[name] = model;
    return model;
  }

 private:
  std::filesystem::path cache_;
  std::map<std::string, ModelPtr> memo_;
};

// D=64 model of the end-to-end check, also used by the sweep and the benchmark.
ModelPtr main_model(Models& models) {
  return models.get("main_d64", [] {
    const auto train_set = generate_dataset(views_exactly(5), library(), acceptance_noise(), 10000, 4001, "train");
    const auto val_set = generate_dataset(views_exactly(5), library(), acceptance_noise(), 500, 4002, "val");
    ModelConfig mc;
    mc.dim = 64;
    mc.layers = 2;
    mc.heads = 4;
    mc.max_views = 5;
    TrainConfig tc;
    tc.lr = 2e-3;
    tc.batch_size = 32;
    tc.epochs = 40;
    tc.lr_decay_epochs = {28, 36};
    tc.max_views = 5;
    tc.seed = 4;
    tc.save_every_epoch = false;
    TrainResult r = train(mc, tc, train_set, val_set);
    return ModelPtr(std::move(r.best_model));
  });
}

struct ToySpec {
  InputMode input = InputMode::kRays;
  bool confidence = true;
  int max_views = 5;
  int seed = 1;

  std::string name() const {
    return fmt("toy10k_%s_%s_mv%d_s%d", to_string(input).c_str(), confidence ? "conf" : "noconf", max_views, seed);
  }
};

// Matched budget for every ablation model: D=32, L=2, H=4, 10k five-view
// samples, 30 epochs.
ModelPtr toy_model(Models& models, const ToySpec& spec) {
  return models.get(spec.name(), [&] {
    const auto train_set = generate_dataset(views_exactly(5), library(), acceptance_noise(), 10000,
                                            5000 + static_cast<uint64_t>(spec.seed), "toy");
    ModelConfig mc;
    mc.dim = 32;
    mc.layers = 2;
    mc.heads = 4;
    mc.input = spec.input;
    mc.use_confidence = spec.confidence;
    mc.max_views = spec.max_views;
    TrainConfig tc;
    tc.lr = 2e-3;
    tc.batch_size = 32;
    tc.epochs = 30;
    tc.lr_decay_epochs = {21, 27};
    tc.min_views = std::min(2, spec.max_views);
    tc.max_views = spec.max_views;
    tc.seed = static_cast<uint64_t>(spec.seed);
    tc.save_every_epoch = false;
    TrainResult r = train(mc, tc, train_set, {});
    return ModelPtr(std::move(r.model));
  });
}

const std::vector<Sample>& toy_test_set() {
  static const auto set = generate_dataset(views_exactly(5), library(), acceptance_noise(), 1000, 5999, "toytest");
  return set;
}

double eval_pairs(const ModelPtr& model, std::span<const Sample> samples, bool recenter = false) {
  EvalPolicy p;
  p.recenter = recenter;
  return evaluate(ModelLifter(model), samples, p).mean_all_mm;
}

double eval_views(const ModelPtr& model, std::span<const Sample> samples, int n) {
  EvalPolicy p;
  p.policy = SubsetPolicy::kSubsets;
  p.num_views = n;
  return evaluate(ModelLifter(model), samples, p).mean_all_mm;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome geometry_suite() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double ray_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CameraCalib c = test::random_calib(rng);
    const Vec3 X = test::random_point(rng);
    Pixels p(1, 2);
    p.row(0) = project(X, c).transpose();
    ray_worst = std::max(ray_worst, point_ray_distance(X, pixels_to_rays(p, c)[0]));
  }

  double dlt_worst = 0.0;
  int done = 0;
  while (done < 500) {
    const int n = 2 + done % 4;
    const Vec3 X = test::random_point(rng);
    std::vector<CameraCalib> cams;
    for (int v = 0; v < n; ++v) cams.push_back(test::random_calib(rng));
    double max_angle = 0.0;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const Vec3 da = (X - cams[a].T).normalized(), db = (X - cams[b].T).normalized();
        max_angle = std::max(max_angle, std::acos(std::clamp(da.dot(db), -1.0, 1.0)));
      }
    }
    if (max_angle < 10.0 * M_PI / 180.0) continue;
    std::vector<Vec2> px;
    for (const auto& c : cams) px.push_back(project(X, c));
    const std::vector<double> w(n, 1.0);
    dlt_worst = std::max(dlt_worst, (triangulate_dlt(px, cams, w) - X).norm());
    ++done;
  }

  double epi_worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const CameraCalib a = test::random_calib(rng), b = test::random_calib(rng);
    Pose2D pa(17), pb(17);
    for (int j = 0; j < 17; ++j) {
      const Vec3 X = test::random_point(rng, 0.5);
      pa.pixels.row(j) = project(X, a).transpose();
      pb.pixels.row(j) = project(X, b).transpose();
    }
    epi_worst = std::max(epi_worst, epipolar_error(pa, a, pb, b));
  }
  const double secs = seconds_since(t0);
  const bool pass = ray_worst < 1e-9 && dlt_worst < 1e-6 && epi_worst < 1e-6 && secs < 10.0;
  return {pass, fmt("ray %.2e m, DLT %.2e m, epipolar %.2e px, %.2f s", ray_worst, dlt_worst, epi_worst, secs)};
}

Outcome metric_suite() {
  Rng rng(202);
  std::normal_distribution<double> g(0.0, 0.05);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double identity = 0.0, translation = 0.0, symmetry = 0.0, resum = 0.0, masked = 0.0;
  const JointMask kp = kp_star_mask("h36m17");
  for (int t = 0; t < 1000; ++t) {
    const Pose3D q = sample_pose(library(), rng);
    Pose3D qh = q;
    for (Eigen::Index i = 0; i < qh.joints.size(); ++i) qh.joints.data()[i] += g(rng);
    const double base = mpjpe(q, qh);
    identity = std::max(identity, std::abs(mpjpe(q, q)));
    const Eigen::RowVector3d shift(u(rng), u(rng), u(rng));
    Pose3D qs = q, qhs = qh;
    qs.joints.rowwise() += shift;
    qhs.joints.rowwise() += shift;
    translation = std::max(translation, std::abs(mpjpe(qs, qhs) - base) / base);
    symmetry = std::max(symmetry, std::abs(mpjpe(qh, q) - base) / base);
    double sum = 0.0;
    for (int j = 0; j < q.size(); ++j) sum += (q.joints.row(j) - qh.joints.row(j)).norm();
    resum = std::max(resum, std::abs(1000.0 * sum / q.size() - base) / base);
    // Identical error at every joint: the KP* subset sees the same mean.
    Pose3D qc = q;
    qc.joints.rowwise() += Eigen::RowVector3d(0.03, -0.04, 0.0);
    masked = std::max(masked, std::abs(mpjpe(q, qc, kp) - mpjpe(q, qc)) / mpjpe(q, qc));
  }

  // Aggregate re-summation: the report mean over all (sample, pair) instances
  // equals the sample-weighted mean of its per-pair rows and a direct recount.
  const auto samples = generate_dataset(SceneConfig{}, library(), acceptance_noise(), 200, 203);
  const TriangulationLifter tri(TriangulationWeights::kConfidence);
  const EvalReport report = evaluate(tri, samples, EvalPolicy{});
  double weighted = 0.0, direct = 0.0;
  long rows = 0, instances = 0;
  for (const auto& r : report.rows) {
    weighted += r.mpjpe_all_mm * static_cast<double>(r.samples);
    rows += r.samples;
  }
  for (const auto& s : samples) {
    for (int a = 0; a < s.num_views(); ++a) {
      for (int b = a + 1; b < s.num_views(); ++b) {
        direct += mpjpe(s.gt, triangulate_pose({s.views[a], s.views[b]}, TriangulationWeights::kConfidence));
        ++instances;
      }
    }
  }
  const double agg = std::max(std::abs(weighted / rows - report.mean_all_mm),
                              std::abs(direct / instances - report.mean_all_mm)) / report.mean_all_mm;

  // Training loss in meters against the reported metric in millimeters.
  double units = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int b = 8, m = 17;
    Mat<double> pred(b * m, 3), gt(b * m, 3);
    double metric = 0.0;
    for (int i = 0; i < b; ++i) {
      const Pose3D q = sample_pose(library(), rng);
      Pose3D qh = q;
      for (Eigen::Index k = 0; k < qh.joints.size(); ++k) qh.joints.data()[k] += g(rng);
      gt.middleRows(i * m, m) = q.joints;
      pred.middleRows(i * m, m) = qh.joints;
      metric += mpjpe(q, qh) / b;
    }
    units = std::max(units, std::abs(1000.0 * mpjpe_loss<double>(pred, gt, m) - metric) / metric);
  }

  const double worst = std::max({translation, symmetry, resum, masked, agg, units});
  const bool pass = identity == 0.0 && worst <= 1e-9;
  return {pass, fmt("identity %.1e, translation %.1e, symmetry %.1e, re-summation %.1e, KP* %.1e, aggregate %.1e, "
                    "loss/metric %.1e",
                    identity, translation, symmetry, resum, masked, agg, units)};
}

ViewList random_views(int views, int m, Rng& rng) {
  SceneConfig scene;
  ViewList out;
  std::uniform_real_distribution<double> px(100, 900), conf(0.05, 1.0);
  for (int v = 0; v < views; ++v) {
    View view;
    view.calib = sample_camera(scene, Vec3(0, 0, 1), rng);
    view.pose = Pose2D(m);
    for (int j = 0; j < m; ++j) {
      view.pose.pixels(j, 0) = px(rng);
      view.pose.pixels(j, 1) = px(rng);
      view.pose.conf(j) = conf(rng);
    }
    out.push_back(view);
  }
  return out;
}

Outcome model_invariants() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.num_joints = 4;
  cfg.dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  Rumpl<double> model(cfg);
  model.init(31);
  Rng rng(303);

  double perm = 0.0;
  for (int t = 0; t < 50; ++t) {
    ViewList v = random_views(2 + t % 4, 4, rng);
    const ViewList one[1] = {v};
    const Mat<double> a = model.forward(encode_batch<double>(one, cfg));
    std::shuffle(v.begin(), v.end(), rng);
    const ViewList two[1] = {v};
    const Mat<double> b = model.forward(encode_batch<double>(two, cfg));
    perm = std::max(perm, (a - b).cwiseAbs().maxCoeff());
  }

  double isolation = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 4, j = t % 4;
    const ViewList one[1] = {random_views(n, 4, rng)};
    const InputBatch<double> batch = encode_batch<double>(one, cfg);
    InputBatch<double> other = batch;
    for (int v = 0; v < n; ++v) {
      other.features.row(j * n + v).setRandom();
      other.conf(j * n + v, 0) = 0.5;
    }
    const Mat<double> y = model.vft_forward(batch), y2 = model.vft_forward(other);
    for (int k = 0; k < 4; ++k) {
      if (k != j) isolation = std::max(isolation, (y.row(k) - y2.row(k)).cwiseAbs().maxCoeff());
    }
  }

  std::vector<ViewList> items{random_views(3, 4, rng), random_views(3, 4, rng)};
  const InputBatch<double> batch = encode_batch<double>(items, cfg);
  Mat<double> gt = Mat<double>::Random(8, 3);
  Mat<double> grad;
  model.zero_grad();
  mpjpe_loss(model.forward_train(batch), gt, 4, &grad);
  model.backward(grad);
  const double step = 1e-4;
  long total = 0, good = 0;
  for (Param<double>* p : model.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + step;
      const double lp = mpjpe_loss(model.forward(batch), gt, 4);
      w = saved - step;
      const double lm = mpjpe_loss(model.forward(batch), gt, 4);
      w = saved;
      const double numeric = (lp - lm) / (2 * step), analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
      ++total;
      if (std::abs(numeric - analytic) / denom <= 1e-3) ++good;
    }
  }
  const double frac = static_cast<double>(good) / total;
  const double secs = seconds_since(t0);
  const bool pass = perm <= 1e-6 && isolation <= 1e-9 && frac >= 0.95 && secs < 120.0;
  return {pass, fmt("permutation %.1e, isolation %.1e, gradient %ld/%ld (%.1f%%) within 1e-3, %.1f s", perm, isolation,
                    good, total, 100.0 * frac, secs)};
}

Outcome end_to_end(Models& models) {
  const auto t0 = Clock::now();
  const ModelPtr model = main_model(models);
  const auto holdout = generate_dataset(views_exactly(2), library(), acceptance_noise(), 1000, 4003, "holdout");
  const double net = eval_pairs(model, holdout);
  const double tri = evaluate(TriangulationLifter(TriangulationWeights::kConfidence), holdout, EvalPolicy{}).mean_all_mm;
  const double secs = seconds_since(t0);
  const bool pass = net <= 0.8 * tri && secs <= 3 * 3600.0;
  return {pass, fmt("RUMPL %.1f mm, weighted triangulation %.1f mm, ratio %.3f (gate 0.8), %.0f s", net, tri, net / tri,
                    secs)};
}

Outcome ray_ablation(Models& models) {
  std::map<InputMode, std::vector<double>> err;
  for (InputMode mode : {InputMode::kRays, InputMode::kPixelsCalib, InputMode::kPixels}) {
    for (int seed = 1; seed <= 3; ++seed) {
      err[mode].push_back(eval_pairs(toy_model(models, {mode, true, 5, seed}), toy_test_set()));
    }
    note(fmt("%-12s %s", to_string(mode).c_str(),
             fmt("%.1f %.1f %.1f mm", err[mode][0], err[mode][1], err[mode][2]).c_str()));
  }
  const auto a = stats::welch_t_test(err[InputMode::kRays], err[InputMode::kPixelsCalib]);
  const auto b = stats::welch_t_test(err[InputMode::kPixelsCalib], err[InputMode::kPixels]);
  const bool pass = a.p_less < 0.05 && b.p_less < 0.05;
  return {pass, fmt("rays %.1f < pixels+calib %.1f (p=%.2g) < pixels %.1f (p=%.2g) mm",
                    stats::mean(err[InputMode::kRays]), stats::mean(err[InputMode::kPixelsCalib]), a.p_less,
                    stats::mean(err[InputMode::kPixels]), b.p_less)};
}

Outcome confidence_ablation(Models& models) {
  std::vector<double> with, without;
  for (int seed = 1; seed <= 3; ++seed) {
    with.push_back(eval_pairs(toy_model(models, {InputMode::kRays, true, 5, seed}), toy_test_set()));
    without.push_back(eval_pairs(toy_model(models, {InputMode::kRays, false, 5, seed}), toy_test_set()));
    note(fmt("seed %d: with %.1f mm, without %.1f mm", seed, with.back(), without.back()));
  }
  const double a = stats::mean(with), b = stats::mean(without);
  return {a < b, fmt("mean with confidence %.1f mm, without %.1f mm", a, b)};
}

Outcome max_views(Models& models) {
  const ModelPtr mv5 = toy_model(models, {InputMode::kRays, true, 5, 1});
  std::string per_n;
  bool finite = true;
  for (int n = 1; n <= 5; ++n) {
    const double e = eval_views(mv5, toy_test_set(), n);
    finite = finite && std::isfinite(e);
    per_n += fmt("%sN=%d %.1f", n > 1 ? ", " : "", n, e);
  }
  note("max_views=5 model: " + per_n + " mm");
  std::vector<double> at2;
  std::string per_mv;
  for (int mv = 2; mv <= 5; ++mv) {
    at2.push_back(eval_views(toy_model(models, {InputMode::kRays, true, mv, 1}), toy_test_set(), 2));
    per_mv += fmt("%smv=%d %.1f", mv > 2 ? ", " : "", mv, at2.back());
  }
  const auto [lo, hi] = std::minmax_element(at2.begin(), at2.end());
  const double spread = (*hi - *lo) / *lo;
  return {finite && spread <= 0.25, fmt("N=2: %s mm, spread %.1f%% (gate 25%%)", per_mv.c_str(), 100.0 * spread)};
}

Outcome angle_sweep_shape(Models& models) {
  SweepConfig cfg;
  cfg.noise = acceptance_noise();
  cfg.seed = 8;
  const auto rows = angle_sweep(ModelLifter(main_model(models)), cfg, library());
  std::map<double, std::vector<double>> by_angle;
  for (const auto& r : rows) by_angle[r.angle_deg].push_back(r.mpjpe_all_mm);
  std::string curve;
  for (const auto& [angle, v] : by_angle) curve += fmt("%s%.0f:%.1f", curve.empty() ? "" : " ", angle, stats::mean(v));
  note("mean MPJPE by angle (mm): " + curve);
  const double m15 = stats::mean(by_angle.at(15)), m90 = stats::mean(by_angle.at(90)),
               m165 = stats::mean(by_angle.at(165));

  SweepConfig exact = cfg;
  exact.noise = NoiseModel::noiseless();
  double control = 0.0;
  for (const auto& r : angle_sweep(TriangulationLifter(TriangulationWeights::kUniform), exact, library())) {
    control = std::max(control, r.mpjpe_all_mm);
  }
  const bool pass = m15 >= 1.1 * m90 && m165 >= 1.1 * m90 && control < 1e-3;
  return {pass, fmt("15 deg %.1f, 90 deg %.1f, 165 deg %.1f mm (ratios %.2f, %.2f; gate 1.10); noiseless "
                    "triangulation max %.1e mm",
                    m15, m90, m165, m15 / m90, m165 / m90, control)};
}

Outcome recentering(Models& models) {
  // Whole scenes, cameras included, moved 3-8 m away from the origin.
  std::vector<Sample> moved = toy_test_set();
  Rng rng(909);
  std::uniform_real_distribution<double> dist(3.0, 8.0), angle(0.0, 2.0 * M_PI);
  for (Sample& s : moved) {
    const double r = dist(rng), a = angle(rng);
    const Vec3 shift(r * std::cos(a), r * std::sin(a), 0.0);
    s.gt.joints.rowwise() += shift.transpose();
    for (View& v : s.views) v.calib.T += shift;
  }
  bool pass = true;
  std::string detail;
  for (int seed = 1; seed <= 3; ++seed) {
    const ModelPtr m = toy_model(models, {InputMode::kRays, true, 5, seed});
    const double plain = eval_pairs(m, moved), centered = eval_pairs(m, moved, true);
    pass = pass && centered < plain;
    detail += fmt("%sseed %d: %.1f -> %.1f mm", seed > 1 ? ", " : "", seed, plain, centered);
  }
  return {pass, detail};
}

Outcome multiperson() {
  MultiPersonConfig cfg;
  const auto scenes = generate_multiperson_dataset(cfg, library(), 250, 1010);
  int correct = 0;
  for (const auto& s : scenes) correct += grouping_correct(s, match_people(s.views, cfg.match)) ? 1 : 0;

  Rng rng(1011);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  int agree = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXd cost(size(rng), size(rng));
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = u(rng);
    const double fast = solve_assignment(cost).cost, slow = brute_force_assignment(cost).cost;
    agree += std::abs(fast - slow) <= 1e-9 * std::max(1.0, slow) ? 1 : 0;
  }
  const bool pass = correct == static_cast<int>(scenes.size()) && agree == trials;
  return {pass, fmt("grouping %d/%zu scenes, Hungarian = brute force on %d/%d cost matrices", correct, scenes.size(),
                    agree, trials)};
}

Outcome throughput(Models& models) {
  const auto cells = bench_speed(*main_model(models), BenchConfig{});
  bool pass = true;
  std::map<int, std::string> lines;
  std::map<int, double> last;
  for (const auto& c : cells) {
    if (last.count(c.views) && c.fps < last[c.views]) pass = false;
    last[c.views] = c.fps;
    lines[c.views] += fmt(" b%d:%.0f", c.batch, c.fps);
  }
  for (const auto& [views, line] : lines) note(fmt("%d views, fps%s", views, line.c_str()));
  return {pass, pass ? "fps non-decreasing in batch size at every view count"
                     : "fps decreases with batch size at some view count"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RUMPL acceptance run"};
  std::vector<int> only;
  std::string cache;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--cache", cache, "Directory for trained-model checkpoints");
  CLI11_PARSE(app, argc, argv);

  Models models(cache);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry oracle suite", geometry_suite},
      {"metric suite", metric_suite},
      {"model invariants (D=16, L=1, H=2, M=4)", model_invariants},
      {"end-to-end learning vs weighted triangulation", [&] { return end_to_end(models); }},
      {"ray-ablation ordering", [&] { return ray_ablation(models); }},
      {"confidence-ablation ordering", [&] { return confidence_ablation(models); }},
      {"max-views flexibility", [&] { return max_views(models); }},
      {"angle-sweep U-shape", [&] { return angle_sweep_shape(models); }},
      {"recentering gain", [&] { return recentering(models); }},
      {"multi-person association", multiperson},
      {"throughput trend", [&] { return throughput(models); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
