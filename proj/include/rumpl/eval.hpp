#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rumpl/model.hpp"

namespace rumpl {

/// Anything that turns a list of calibrated 2D views into a world pose.
class Lifter {
 public:
  virtual ~Lifter() = default;
  virtual std::vector<Pose3D> lift_batch(std::span<const ViewList> items) const = 0;
  virtual std::string name() const = 0;
  Pose3D lift(const ViewList& views) const;
};

/// Runs a trained network; items are grouped by view count internally.
class ModelLifter final : public Lifter {
 public:
  explicit ModelLifter(std::shared_ptr<const LiftNet<float>> model, size_t max_batch = 64);
  std::vector<Pose3D> lift_batch(std::span<const ViewList> items) const override;
  std::string name() const override;
  const LiftNet<float>& model() const { return *model_; }

 private:
  std::shared_ptr<const LiftNet<float>> model_;
  size_t max_batch_;
};

enum class TriangulationWeights { kUniform, kConfidence };

/// Per-joint DLT. Uniform weighting still ignores conf = 0 keypoints.
Pose3D triangulate_pose(const ViewList& views, TriangulationWeights weights);

class TriangulationLifter final : public Lifter {
 public:
  explicit TriangulationLifter(TriangulationWeights weights) : weights_(weights) {}
  std::vector<Pose3D> lift_batch(std::span<const ViewList> items) const override;
  std::string name() const override;

 private:
  TriangulationWeights weights_;
};

struct RecenterShift {
  enum class Source { kWeighted, kUnweighted, kZero, kSingleView };
  Vec3 t = Vec3::Zero();
  Source source = Source::kZero;
};

/// Confidence-weighted centroid of the triangulated joints; each joint is
/// weighted by its minimum confidence across views.
RecenterShift recenter_translation(const ViewList& views);

/// Shifts the camera centers by −t, lifts, and adds t back.
Pose3D recenter_and_lift(const Lifter& lifter, const ViewList& views);
std::vector<Pose3D> recenter_and_lift_batch(const Lifter& lifter, std::span<const ViewList> items);

/// Single-sample network inference, optionally with recentering.
Pose3D rumpl_forward(const ViewList& views, const LiftNet<float>& model, bool recenter);

enum class SubsetPolicy { kAllPairs, kFixed, kSubsets };

std::string to_string(SubsetPolicy policy);
SubsetPolicy subset_policy_from_string(const std::string& s);

struct EvalPolicy {
  SubsetPolicy policy = SubsetPolicy::kAllPairs;
  /// View count for kSubsets.
  int num_views = 2;
  /// Explicit view-index subsets for kFixed.
  std::vector<std::vector<int>> fixed;
  bool recenter = false;
};

/// View-index subsets a sample with `available` views contributes.
std::vector<std::vector<int>> enumerate_subsets(const EvalPolicy& policy, int available);

struct SubsetRow {
  std::string subset;  // e.g. "0-2"
  long samples = 0;
  double mpjpe_all_mm = 0.0;
  double mpjpe_kpstar_mm = 0.0;
};

/// Aggregates are the sample-weighted means of the per-subset rows.
struct EvalReport {
  std::string lifter;
  std::vector<SubsetRow> rows;
  double mean_all_mm = 0.0;
  double mean_kpstar_mm = 0.0;
  long samples = 0;
  long evaluated = 0;
  long skipped = 0;
  std::string config_digest;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

EvalReport evaluate(const Lifter& lifter, std::span<const Sample> samples, const EvalPolicy& policy);

struct AblationRow {
  std::string variant;
  double mpjpe_all_mm = 0.0;
  double mpjpe_kpstar_mm = 0.0;
};

/// Compares networks fed raw pixels, pixels plus calibration, and rays. The
/// three configs must agree on everything but the input mode.
std::vector<AblationRow> ablate_input_modality(std::span<const Sample> samples,
                                               std::shared_ptr<const LiftNet<float>> pixels,
                                               std::shared_ptr<const LiftNet<float>> pixels_calib,
                                               std::shared_ptr<const LiftNet<float>> rays, const EvalPolicy& policy);

std::string ablation_csv(std::span<const AblationRow> rows);

struct SweepConfig {
  double radius = 6.0;
  std::vector<double> heights{2.2, 3.2, 4.0};
  std::vector<double> angles_deg{15, 30, 45, 60, 75, 90, 105, 120, 135, 150, 165, 180};
  double focal = 1000.0;
  Vec2 image_size{1000.0, 1000.0};
  Vec2 root_height{0.85, 1.0};
  int num_poses = 200;
  NoiseModel noise;
  std::uint64_t seed = 1;
};

struct SweepRow {
  double height = 0.0;
  double angle_deg = 0.0;
  double mpjpe_all_mm = 0.0;
  double mpjpe_kpstar_mm = 0.0;
};

/// Two cameras on the circle at `height` of a sphere centered at the origin,
/// the first at azimuth 0 and the second at `angle_deg`, both aimed at the
/// person. Every (height, angle) cell reuses the same poses and noise draws.
std::vector<Sample> sweep_scenes(const SweepConfig& config, double height, double angle_deg,
                                 const PoseLibrary& library);

std::vector<SweepRow> angle_sweep(const Lifter& lifter, const SweepConfig& config, const PoseLibrary& library);

std::string sweep_csv(std::span<const SweepRow> rows);
/// Line plot of MPJPE against angle, one series per height.
std::string sweep_svg(std::span<const SweepRow> rows, const std::string& title);

struct BenchCell {
  int views = 0;
  int batch = 0;
  double median_seconds = 0.0;
  double fps = 0.0;
};

struct BenchConfig {
  std::vector<int> views{2, 3, 4, 5};
  std::vector<int> batches{1, 2, 4, 8};
  int repetitions = 30;
  int warmup = 5;
  std::uint64_t seed = 3;
};

/// Frames per second (one frame = one person with all its views) from the
/// median of timed forward passes; runs on a single thread.
std::vector<BenchCell> bench_speed(const LiftNet<float>& model, const BenchConfig& config);

std::string bench_csv(std::span<const BenchCell> cells);

}  // namespace rumpl
