#include "rumpl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "rumpl/checkpoint.hpp"
#include "rumpl/dataset.hpp"
#include "rumpl/errors.hpp"

namespace rumpl {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  for (int d : lr_decay_epochs) {
    if (d < 1 || d >= epochs) throw ConfigError("train.lr_decay_epochs must lie in [1, epochs)");
  }
  if (!(lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor must be > 0");
  if (min_views < 1 || max_views < min_views) throw ConfigError("train: need 1 <= min_views <= max_views");
  if (val_views < 1) throw ConfigError("train.val_views must be >= 1");
}

double learning_rate(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (int d : config.lr_decay_epochs) {
    if (epoch > d) lr *= config.lr_decay_factor;
  }
  return lr;
}

template <typename S>
double mpjpe_loss(const Mat<S>& pred, const Mat<S>& gt, int num_joints, Mat<S>* grad) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3) throw InvalidInput("mpjpe_loss: shape mismatch");
  if (num_joints < 1 || pred.rows() % num_joints != 0 || pred.rows() == 0) {
    throw InvalidInput("mpjpe_loss: rows must be a positive multiple of the joint count");
  }
  const Eigen::Index batch = pred.rows() / num_joints;
  if (grad) grad->setZero(pred.rows(), 3);
  const double scale = 1.0 / (static_cast<double>(batch) * num_joints);
  double total = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    const Eigen::Matrix<double, 1, 3> diff = (pred.row(r) - gt.row(r)).template cast<double>();
    const double d = diff.norm();
    total += d;
    if (grad && d > 0.0) grad->row(r) = (diff * (scale / d)).template cast<S>();
  }
  return total * scale;
}

int sample_num_views(Rng& rng, int min_views, int max_views) {
  if (max_views < min_views) throw InvalidInput("sample_num_views: max < min");
  return std::uniform_int_distribution<int>(min_views, max_views)(rng);
}

std::vector<int> select_views(Rng& rng, int available, int count) {
  if (count > available || count < 0) throw InvalidInput("select_views: not enough views");
  std::vector<int> idx(available);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < count; ++i) {
    const int k = std::uniform_int_distribution<int>(i, available - 1)(rng);
    std::swap(idx[i], idx[k]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename S>
Adam<S>::Adam(ParamRefs<S> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Param<S>* p : params_) {
    m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename S>
void Adam<S>::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
  const S step = static_cast<S>(lr / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(eps_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Param<S>& p = *params_[i];
    m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;
template double mpjpe_loss<float>(const Mat<float>&, const Mat<float>&, int, Mat<float>*);
template double mpjpe_loss<double>(const Mat<double>&, const Mat<double>&, int, Mat<double>*);

namespace {

Mat<float> stack_gt(std::span<const Sample* const> samples) {
  const int m = samples.front()->num_joints();
  Mat<float> gt(static_cast<Eigen::Index>(samples.size()) * m, 3);
  for (size_t b = 0; b < samples.size(); ++b) {
    gt.middleRows(static_cast<Eigen::Index>(b) * m, m) = samples[b]->gt.joints.cast<float>();
  }
  return gt;
}

constexpr uint64_t kShuffleSalt = 0x5348554646ULL;

// Flushes denormals to zero while training; tiny Adam moments otherwise
// slow every epoch down as training converges.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | _MM_FLUSH_ZERO_ON | _MM_DENORMALS_ZERO_ON); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

double validation_mpjpe(const LiftNet<float>& model, std::span<const Sample> samples, int views) {
  const int m = model.config().num_joints;
  constexpr size_t kChunk = 64;
  double total = 0.0;
  long count = 0;
  std::vector<ViewList> items;
  std::vector<const Sample*> refs;
  auto flush = [&] {
    if (items.empty()) return;
    const Mat<float> pred = model.forward(encode_batch<float>(items, model.config()));
    for (size_t b = 0; b < refs.size(); ++b) {
      const Pose3D p(pred.middleRows(static_cast<Eigen::Index>(b) * m, m).cast<double>());
      total += mpjpe(refs[b]->gt, p);
      ++count;
    }
    items.clear();
    refs.clear();
  };
  for (const Sample& s : samples) {
    if (s.num_views() < views) continue;
    items.emplace_back(s.views.begin(), s.views.begin() + views);
    refs.push_back(&s);
    if (items.size() == kChunk) flush();
  }
  flush();
  if (count == 0) return std::nan("");
  return total / count;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& tc, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOptions& options) {
  model_config.validate();
  tc.validate();
  const FlushDenormals ftz;
  kernels::tune_allocator();
  if (train_set.empty()) throw InvalidInput("train: empty training set");
  for (const Sample& s : train_set) {
    if (s.num_joints() != model_config.num_joints) throw InvalidInput("train: sample joint count differs from model");
  }

  int lo = tc.min_views, hi = std::min(tc.max_views, model_config.max_views);
  if (model_config.arch == Arch::kFullyConnected) lo = hi = model_config.fc_num_views;
  if (hi < lo) throw ConfigError("train: view range is empty for this model");
  const int val_views = model_config.arch == Arch::kFullyConnected ? model_config.fc_num_views : tc.val_views;

  TrainResult result;
  result.model = make_model<float>(model_config);
  result.model->init(tc.seed);
  result.best_model = make_model<float>(model_config);
  LiftNet<float>& model = *result.model;
  Adam<float> adam(model.parameters(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps);

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(options.out_dir / "metrics.csv", std::ios::trunc);
    metrics << "epoch,lr,train_loss_m,val_mpjpe_mm\n";
  }

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  const int m = model_config.num_joints;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng rng = make_stream(tc.seed ^ kShuffleSalt, static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(tc, epoch);
    double loss_sum = 0.0;
    long loss_count = 0;
    long batch_id = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size), ++batch_id) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
      const int n = sample_num_views(rng, lo, hi);
      std::vector<ViewList> items;
      std::vector<const Sample*> refs;
      for (size_t i = start; i < stop; ++i) {
        const Sample& s = train_set[order[i]];
        if (s.num_views() < n) {
          ++result.skipped_samples;
          continue;
        }
        ViewList views;
        for (int v : select_views(rng, s.num_views(), n)) views.push_back(s.views[v]);
        items.push_back(std::move(views));
        refs.push_back(&s);
      }
      if (items.empty()) continue;

      const auto batch = encode_batch<float>(items, model_config);
      const Mat<float> pred = model.forward_train(batch);
      Mat<float> grad;
      const double loss = mpjpe_loss<float>(pred, stack_gt(refs), m, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_id) + " (lr " + std::to_string(lr) + ")");
      }
      model.zero_grad();
      model.backward(grad);
      adam.step(lr);
      loss_sum += loss * static_cast<double>(items.size());
      loss_count += static_cast<long>(items.size());
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss_m = loss_count > 0 ? loss_sum / loss_count : std::nan("");
    em.val_mpjpe_mm = val_set.empty() ? 1000.0 * em.train_loss_m : validation_mpjpe(model, val_set, val_views);
    result.history.push_back(em);

    if (em.val_mpjpe_mm < best) {
      best = em.val_mpjpe_mm;
      copy_parameters(model, *result.best_model);
      if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "best.ckpt", model);
    }
    if (!options.out_dir.empty()) {
      if (tc.save_every_epoch) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
        save_checkpoint(options.out_dir / name, model);
      }
      metrics << em.epoch << ',' << em.lr << ',' << em.train_loss_m << ',' << em.val_mpjpe_mm << '\n' << std::flush;
    }
    if (options.verbose) {
      std::fprintf(stderr, "epoch %3d  lr %.2e  train %.4f m  val %.1f mm\n", epoch, lr, em.train_loss_m,
                   em.val_mpjpe_mm);
    }
    if (options.on_epoch) options.on_epoch(em);
  }
  if (result.skipped_samples > 0) {
    std::fprintf(stderr, "warning: %ld sample draws skipped for having too few views\n", result.skipped_samples);
  }
  result.best_val_mpjpe_mm = best;
  return result;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::filesystem::path& train_path, const std::filesystem::path& val_path,
                  const TrainOptions& options) {
  const auto train_set = read_dataset(train_path);
  std::vector<Sample> val_set;
  if (!val_path.empty()) val_set = read_dataset(val_path);
  return train(model_config, train_config, train_set, val_set, options);
}

}  // namespace rumpl
