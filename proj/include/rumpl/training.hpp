#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "rumpl/model.hpp"

namespace rumpl {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 20;
  double lr = 1e-4;
  std::vector<int> lr_decay_epochs{10, 15};
  double lr_decay_factor = 0.1;
  int min_views = 2;
  int max_views = 5;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Views per validation sample (the first ones stored).
  int val_views = 2;
  /// Write epoch_%03d.ckpt every epoch; best.ckpt is always written.
  bool save_every_epoch = true;

  void validate() const;
};

/// Step schedule: lr · factor^k where k counts decay epochs strictly before
/// `epoch` (1-based), so epochs 1–10 use lr and 11–15 use lr·factor for the
/// default milestones.
double learning_rate(const TrainConfig& config, int epoch);

/// Batch mean of the per-sample mean joint distance, in meters. `pred` and
/// `gt` are (B·M)×3. When `grad` is given it receives d loss / d pred, with a
/// zero subgradient at exactly coincident joints.
template <typename S>
double mpjpe_loss(const Mat<S>& pred, const Mat<S>& gt, int num_joints, Mat<S>* grad = nullptr);

int sample_num_views(Rng& rng, int min_views, int max_views);

/// Uniform subset of `count` distinct view indices, kept in stored order.
std::vector<int> select_views(Rng& rng, int available, int count);

template <typename S>
class Adam {
 public:
  Adam(ParamRefs<S> params, double beta1, double beta2, double eps);
  void step(double lr);
  long steps() const { return t_; }

 private:
  ParamRefs<S> params_;
  std::vector<Mat<S>> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss_m = 0.0;
  double val_mpjpe_mm = 0.0;
};

struct TrainResult {
  std::unique_ptr<LiftNet<float>> model;
  std::unique_ptr<LiftNet<float>> best_model;
  std::vector<EpochMetrics> history;
  double best_val_mpjpe_mm = 0.0;
  long skipped_samples = 0;
};

struct TrainOptions {
  /// Checkpoints and metrics.csv go here; empty keeps everything in memory.
  std::filesystem::path out_dir;
  std::function<void(const EpochMetrics&)> on_epoch;
  bool verbose = false;
};

/// Trains a freshly initialized model. Each batch draws one view count in
/// [min_views, min(max_views, model.max_views)] and a random view subset per
/// sample; samples with too few views are skipped. Throws TrainingDiverged on
/// a non-finite loss and InvalidInput on an empty training set.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOptions& options = {});

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::filesystem::path& train_path, const std::filesystem::path& val_path,
                  const TrainOptions& options = {});

/// Mean MPJPE (mm) of `model` over `samples` using their first `views` views.
double validation_mpjpe(const LiftNet<float>& model, std::span<const Sample> samples, int views);

}  // namespace rumpl
