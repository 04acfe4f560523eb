#include "rumpl/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "rumpl/errors.hpp"

namespace rumpl {

Pose3D Lifter::lift(const ViewList& views) const {
  const ViewList items[1] = {views};
  return lift_batch(items).front();
}

ModelLifter::ModelLifter(std::shared_ptr<const LiftNet<float>> model, size_t max_batch)
    : model_(std::move(model)), max_batch_(std::max<size_t>(1, max_batch)) {
  if (!model_) throw InvalidInput("ModelLifter: null model");
  kernels::tune_allocator();
}

std::string ModelLifter::name() const {
  const ModelConfig& c = model_->config();
  return to_string(c.arch) + "/" + to_string(c.input) + (c.use_confidence ? "" : "/noconf");
}

std::vector<Pose3D> ModelLifter::lift_batch(std::span<const ViewList> items) const {
  const int m = model_->config().num_joints;
  std::vector<Pose3D> out(items.size());
  std::map<size_t, std::vector<size_t>> by_views;
  for (size_t i = 0; i < items.size(); ++i) by_views[items[i].size()].push_back(i);
  for (const auto& [n, idx] : by_views) {
    for (size_t start = 0; start < idx.size(); start += max_batch_) {
      const size_t stop = std::min(idx.size(), start + max_batch_);
      std::vector<ViewList> chunk;
      for (size_t k = start; k < stop; ++k) chunk.push_back(items[idx[k]]);
      const Mat<float> pred = model_->forward(encode_batch<float>(chunk, model_->config()));
      for (size_t k = start; k < stop; ++k) {
        out[idx[k]] = Pose3D(pred.middleRows(static_cast<Eigen::Index>(k - start) * m, m).cast<double>());
      }
    }
  }
  return out;
}

namespace {

// DLT of joint j; nullopt when fewer than two views carry weight or the rays
// are degenerate.
std::optional<Vec3> triangulate_joint(const ViewList& views, int j, TriangulationWeights weights) {
  std::vector<Vec2> px;
  std::vector<CameraCalib> calibs;
  std::vector<double> w;
  for (const View& v : views) {
    const double c = v.pose.conf(j);
    if (!(c > 0.0)) continue;
    px.push_back(v.pose.pixels.row(j).transpose());
    calibs.push_back(v.calib);
    w.push_back(weights == TriangulationWeights::kConfidence ? c : 1.0);
  }
  try {
    return triangulate_dlt(px, calibs, w);
  } catch (const InsufficientViews&) {
    return std::nullopt;
  } catch (const DegenerateGeometry&) {
    return std::nullopt;
  }
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string subset_name(const std::vector<int>& subset) {
  std::string s;
  for (size_t i = 0; i < subset.size(); ++i) s += (i ? "-" : "") + std::to_string(subset[i]);
  return s;
}

}  // namespace

Pose3D triangulate_pose(const ViewList& views, TriangulationWeights weights) {
  if (views.empty()) throw InsufficientViews("triangulate_pose: no views");
  const int m = views.front().pose.size();
  Points3 joints = Points3::Zero(m, 3);
  std::vector<bool> ok(m, false);
  for (int j = 0; j < m; ++j) {
    auto x = triangulate_joint(views, j, weights);
    if (!x) {
      // Retry ignoring confidence before giving up on the joint.
      ViewList all = views;
      for (View& v : all) v.pose.conf(j) = 1.0;
      x = triangulate_joint(all, j, TriangulationWeights::kUniform);
    }
    if (x) {
      joints.row(j) = x->transpose();
      ok[j] = true;
    }
  }
  // Joints without a solution take the centroid of the solved ones.
  Vec3 centroid = Vec3::Zero();
  int solved = 0;
  for (int j = 0; j < m; ++j) {
    if (ok[j]) {
      centroid += joints.row(j).transpose();
      ++solved;
    }
  }
  if (solved == 0) throw DegenerateGeometry("triangulate_pose: no joint could be triangulated");
  centroid /= solved;
  for (int j = 0; j < m; ++j) {
    if (!ok[j]) joints.row(j) = centroid.transpose();
  }
  return Pose3D(std::move(joints));
}

std::vector<Pose3D> TriangulationLifter::lift_batch(std::span<const ViewList> items) const {
  std::vector<Pose3D> out(items.size());
  for (size_t i = 0; i < items.size(); ++i) out[i] = triangulate_pose(items[i], weights_);
  return out;
}

std::string TriangulationLifter::name() const {
  return weights_ == TriangulationWeights::kConfidence ? "triangulation/confidence" : "triangulation/uniform";
}

RecenterShift recenter_translation(const ViewList& views) {
  RecenterShift shift;
  if (views.size() < 2) {
    shift.source = RecenterShift::Source::kSingleView;
    return shift;
  }
  const int m = views.front().pose.size();
  Vec3 weighted = Vec3::Zero(), plain = Vec3::Zero();
  double weight_sum = 0.0;
  int solved = 0;
  for (int j = 0; j < m; ++j) {
    const auto x = triangulate_joint(views, j, TriangulationWeights::kConfidence);
    if (!x) continue;
    double w = 1.0;
    for (const View& v : views) w = std::min(w, v.pose.conf(j));
    weighted += w * *x;
    weight_sum += w;
    plain += *x;
    ++solved;
  }
  if (weight_sum > 0.0) {
    shift.t = weighted / weight_sum;
    shift.source = RecenterShift::Source::kWeighted;
  } else if (solved > 0) {
    shift.t = plain / solved;
    shift.source = RecenterShift::Source::kUnweighted;
  } else {
    std::cerr << "warning: recentering found no triangulable joint; using t = 0\n";
    shift.source = RecenterShift::Source::kZero;
  }
  return shift;
}

std::vector<Pose3D> recenter_and_lift_batch(const Lifter& lifter, std::span<const ViewList> items) {
  std::vector<ViewList> shifted(items.begin(), items.end());
  std::vector<Vec3> t(items.size(), Vec3::Zero());
  for (size_t i = 0; i < items.size(); ++i) {
    t[i] = recenter_translation(items[i]).t;
    for (View& v : shifted[i]) v.calib.T -= t[i];
  }
  std::vector<Pose3D> out = lifter.lift_batch(shifted);
  for (size_t i = 0; i < out.size(); ++i) out[i].joints.rowwise() += t[i].transpose();
  return out;
}

Pose3D recenter_and_lift(const Lifter& lifter, const ViewList& views) {
  const ViewList items[1] = {views};
  return recenter_and_lift_batch(lifter, items).front();
}

Pose3D rumpl_forward(const ViewList& views, const LiftNet<float>& model, bool recenter) {
  if (views.empty()) throw InsufficientViews("rumpl_forward: need at least one view");
  const ModelLifter lifter(std::shared_ptr<const LiftNet<float>>(&model, [](const LiftNet<float>*) {}));
  return recenter ? recenter_and_lift(lifter, views) : lifter.lift(views);
}

std::string to_string(SubsetPolicy policy) {
  switch (policy) {
    case SubsetPolicy::kAllPairs: return "all-pairs";
    case SubsetPolicy::kFixed: return "fixed";
    case SubsetPolicy::kSubsets: return "n-subsets";
  }
  return "all-pairs";
}

SubsetPolicy subset_policy_from_string(const std::string& s) {
  if (s == "all-pairs") return SubsetPolicy::kAllPairs;
  if (s == "fixed") return SubsetPolicy::kFixed;
  if (s == "n-subsets") return SubsetPolicy::kSubsets;
  throw ConfigError("unknown subset policy '" + s + "' (expected all-pairs, fixed or n-subsets)");
}

std::vector<std::vector<int>> enumerate_subsets(const EvalPolicy& policy, int available) {
  std::vector<std::vector<int>> out;
  if (policy.policy == SubsetPolicy::kFixed) {
    for (const auto& s : policy.fixed) {
      if (s.empty()) continue;
      if (std::all_of(s.begin(), s.end(), [&](int v) { return v >= 0 && v < available; })) out.push_back(s);
    }
    return out;
  }
  const int k = policy.policy == SubsetPolicy::kAllPairs ? 2 : policy.num_views;
  if (k < 1 || k > available) return out;
  // Lexicographic k-combinations of [0, available).
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == available - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int r = i + 1; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"subset", r.subset},
                         {"samples", r.samples},
                         {"mpjpe_all_mm", r.mpjpe_all_mm},
                         {"mpjpe_kpstar_mm", r.mpjpe_kpstar_mm}});
  }
  return {{"lifter", lifter},
          {"rows", rows_json},
          {"mean_all_mm", mean_all_mm},
          {"mean_kpstar_mm", mean_kpstar_mm},
          {"samples", samples},
          {"evaluated", evaluated},
          {"skipped", skipped},
          {"aggregate_weighting", "sample-count"},
          {"config_digest", config_digest}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "subset,samples,mpjpe_all_mm,mpjpe_kpstar_mm\n";
  for (const auto& r : rows) os << r.subset << ',' << r.samples << ',' << r.mpjpe_all_mm << ',' << r.mpjpe_kpstar_mm << '\n';
  os << "mean," << evaluated << ',' << mean_all_mm << ',' << mean_kpstar_mm << '\n';
  return os.str();
}

EvalReport evaluate(const Lifter& lifter, std::span<const Sample> samples, const EvalPolicy& policy) {
  EvalReport report;
  report.lifter = lifter.name();
  report.samples = static_cast<long>(samples.size());

  std::vector<ViewList> items;
  std::vector<const Sample*> refs;
  std::vector<std::string> keys;
  for (const Sample& s : samples) {
    const auto subsets = enumerate_subsets(policy, s.num_views());
    if (subsets.empty()) {
      ++report.skipped;
      continue;
    }
    for (const auto& subset : subsets) {
      ViewList views;
      for (int v : subset) views.push_back(s.views[v]);
      items.push_back(std::move(views));
      refs.push_back(&s);
      keys.push_back(subset_name(subset));
    }
  }

  const auto preds = policy.recenter ? recenter_and_lift_batch(lifter, items) : lifter.lift_batch(items);
  std::optional<JointMask> kp_star;
  if (!samples.empty() && samples.front().num_joints() == h36m::kNumJoints) kp_star = kp_star_mask(h36m17());

  std::map<std::string, SubsetRow> rows;
  double sum_all = 0.0, sum_kp = 0.0;
  for (size_t i = 0; i < items.size(); ++i) {
    const double all = mpjpe(refs[i]->gt, preds[i]);
    const double kp = kp_star ? mpjpe(refs[i]->gt, preds[i], kp_star) : all;
    SubsetRow& row = rows[keys[i]];
    row.subset = keys[i];
    row.samples += 1;
    row.mpjpe_all_mm += all;
    row.mpjpe_kpstar_mm += kp;
    sum_all += all;
    sum_kp += kp;
  }
  for (auto& [key, row] : rows) {
    row.mpjpe_all_mm /= row.samples;
    row.mpjpe_kpstar_mm /= row.samples;
    report.rows.push_back(row);
  }
  report.evaluated = static_cast<long>(items.size());
  if (report.evaluated > 0) {
    report.mean_all_mm = sum_all / report.evaluated;
    report.mean_kpstar_mm = sum_kp / report.evaluated;
  } else {
    report.mean_all_mm = report.mean_kpstar_mm = std::nan("");
  }
  std::ostringstream digest;
  digest << lifter.name() << '|' << to_string(policy.policy) << '|' << policy.num_views << '|' << policy.recenter
         << '|' << samples.size() << "|sample-count";
  for (const auto& s : policy.fixed) digest << '|' << subset_name(s);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(digest.str())));
  report.config_digest = hex;
  return report;
}

std::vector<AblationRow> ablate_input_modality(std::span<const Sample> samples,
                                               std::shared_ptr<const LiftNet<float>> pixels,
                                               std::shared_ptr<const LiftNet<float>> pixels_calib,
                                               std::shared_ptr<const LiftNet<float>> rays, const EvalPolicy& policy) {
  if (!pixels || !pixels_calib || !rays) throw InvalidInput("ablate_input_modality: missing model");
  const std::pair<const char*, std::shared_ptr<const LiftNet<float>>> variants[3] = {
      {"pixels", pixels}, {"pixels_calib", pixels_calib}, {"rays", rays}};
  const InputMode expected[3] = {InputMode::kPixels, InputMode::kPixelsCalib, InputMode::kRays};
  const ModelConfig& ref = rays->config();
  for (int i = 0; i < 3; ++i) {
    const ModelConfig& c = variants[i].second->config();
    if (c.input != expected[i]) {
      throw InvalidInput(std::string("ablate_input_modality: variant '") + variants[i].first + "' has input " +
                         to_string(c.input));
    }
    if (c.arch != ref.arch || c.dim != ref.dim || c.layers != ref.layers || c.heads != ref.heads ||
        c.mlp_ratio != ref.mlp_ratio || c.num_joints != ref.num_joints || c.use_confidence != ref.use_confidence) {
      throw InvalidInput("ablate_input_modality: variants differ in more than the input mode");
    }
  }
  std::vector<AblationRow> out;
  for (const auto& [name, model] : variants) {
    const EvalReport r = evaluate(ModelLifter(model), samples, policy);
    out.push_back({name, r.mean_all_mm, r.mean_kpstar_mm});
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "variant,mpjpe_all_mm,mpjpe_kpstar_mm\n";
  for (const auto& r : rows) os << r.variant << ',' << r.mpjpe_all_mm << ',' << r.mpjpe_kpstar_mm << '\n';
  return os.str();
}

std::vector<Sample> sweep_scenes(const SweepConfig& config, double height, double angle_deg,
                                 const PoseLibrary& library) {
  if (!(angle_deg > 0.0 && angle_deg <= 180.0)) {
    throw InvalidInput("angle_sweep: angle must lie in (0, 180] degrees");
  }
  if (!(std::abs(height) < config.radius)) throw InvalidInput("angle_sweep: height must be inside the sphere");
  const double r = std::sqrt(config.radius * config.radius - height * height);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const Vec3 centers[2] = {Vec3(r, 0.0, height), Vec3(r * std::cos(a), r * std::sin(a), height)};

  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(config.num_poses));
  for (int i = 0; i < config.num_poses; ++i) {
    Rng rng = make_stream(config.seed, static_cast<uint64_t>(i));
    Sample s;
    s.scene_id = "sweep_" + std::to_string(i);
    s.gt = library.sample(rng);
    const Vec3 root(0.0, 0.0, std::uniform_real_distribution<double>(config.root_height(0), config.root_height(1))(rng));
    s.gt.joints.rowwise() += root.transpose();
    for (const Vec3& c : centers) {
      View v;
      v.calib.T = c;
      v.calib.R = look_at_rotation(c, root);
      v.calib.K << config.focal, 0.0, config.image_size(0) / 2, 0.0, config.focal, config.image_size(1) / 2, 0.0, 0.0,
          1.0;
      v.pose = observe(s.gt, v.calib, config.noise, rng);
      s.views.push_back(std::move(v));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SweepRow> angle_sweep(const Lifter& lifter, const SweepConfig& config, const PoseLibrary& library) {
  for (double a : config.angles_deg) {
    if (!(a > 0.0 && a <= 180.0)) throw InvalidInput("angle_sweep: angle must lie in (0, 180] degrees");
  }
  EvalPolicy policy;
  policy.policy = SubsetPolicy::kSubsets;
  policy.num_views = 2;
  std::vector<SweepRow> rows;
  for (double h : config.heights) {
    for (double a : config.angles_deg) {
      const auto scenes = sweep_scenes(config, h, a, library);
      const EvalReport r = evaluate(lifter, scenes, policy);
      rows.push_back({h, a, r.mean_all_mm, r.mean_kpstar_mm});
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "height_m,angle_deg,mpjpe_all_mm,mpjpe_kpstar_mm\n";
  for (const auto& r : rows) os << r.height << ',' << r.angle_deg << ',' << r.mpjpe_all_mm << ',' << r.mpjpe_kpstar_mm << '\n';
  return os.str();
}

std::string sweep_svg(std::span<const SweepRow> rows, const std::string& title) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  double y_max = 0.0;
  for (const auto& r : rows) y_max = std::max(y_max, r.mpjpe_all_mm);
  y_max = y_max > 0.0 ? y_max * 1.1 : 1.0;
  auto px = [&](double angle) { return L + (W - L - R) * angle / 180.0; };
  auto py = [&](double mm) { return H - B - (H - T - B) * mm / y_max; };

  std::map<double, std::vector<const SweepRow*>> series;
  for (const auto& r : rows) series[r.height].push_back(&r);
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int a = 0; a <= 180; a += 30) {
    os << "<text x=\"" << px(a) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << a
       << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = y_max * k / 4;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">angle between cameras (deg)</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">MPJPE (mm)</text>\n";
  int k = 0;
  for (const auto& [height, pts] : series) {
    const char* color = colors[k % 5];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const SweepRow* r : pts) os << px(r->angle_deg) << ',' << py(r->mpjpe_all_mm) << ' ';
    os << "\"/>\n";
    char label[32];
    std::snprintf(label, sizeof label, "h = %.1f m", height);
    os << "<text x=\"" << W - R + 12 << "\" y=\"" << T + 20 + 18 * k << "\" fill=\"" << color
       << "\" font-size=\"12\">" << label << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<BenchCell> bench_speed(const LiftNet<float>& model, const BenchConfig& config) {
  if (config.repetitions < 1) throw InvalidInput("bench_speed: repetitions must be >= 1");
  kernels::tune_allocator();
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(1);
  SceneConfig scene;
  scene.min_views = scene.max_views = *std::max_element(config.views.begin(), config.views.end());
  const auto library = PoseLibrary::procedural();
  const int max_batch = *std::max_element(config.batches.begin(), config.batches.end());
  const auto samples = generate_dataset(scene, library, NoiseModel{}, max_batch, config.seed, "bench");

  // Repetitions are interleaved across cells so slow drifts of the host
  // clock hit every cell alike.
  std::vector<InputBatch<float>> batches;
  std::vector<BenchCell> cells;
  for (int n : config.views) {
    for (int b : config.batches) {
      std::vector<ViewList> items;
      for (int i = 0; i < b; ++i) items.emplace_back(samples[i].views.begin(), samples[i].views.begin() + n);
      batches.push_back(encode_batch<float>(items, model.config()));
      cells.push_back({n, b, 0.0, 0.0});
    }
  }
  auto once = [&](size_t c) {
    const Mat<float> pred = model.forward(batches[c]);
    if (!pred.allFinite()) throw Error("bench_speed: non-finite prediction");
  };
  for (int w = 0; w < config.warmup; ++w) {
    for (size_t c = 0; c < cells.size(); ++c) once(c);
  }
  std::vector<std::vector<double>> times(cells.size());
  for (int r = 0; r < config.repetitions; ++r) {
    for (size_t c = 0; c < cells.size(); ++c) {
      const auto t0 = std::chrono::steady_clock::now();
      once(c);
      times[c].push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  for (size_t c = 0; c < cells.size(); ++c) {
    auto& t = times[c];
    std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
    cells[c].median_seconds = t[t.size() / 2];
    cells[c].fps = cells[c].batch / cells[c].median_seconds;
  }
  omp_set_num_threads(saved_threads);
  return cells;
}

std::string bench_csv(std::span<const BenchCell> cells) {
  std::ostringstream os;
  os.precision(8);
  os << "views,batch,median_seconds,fps\n";
  for (const auto& c : cells) os << c.views << ',' << c.batch << ',' << c.median_seconds << ',' << c.fps << '\n';
  return os.str();
}

}  // namespace rumpl
