#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rumpl/layers.hpp"
#include "rumpl/synthgen.hpp"

namespace rumpl {

enum class Arch { kRumpl, kFullyConnected };

/// Per-view keypoint encoding fed to the network.
enum class InputMode {
  kRays,         ///< world ray: origin / scene_scale, direction
  kPixels,       ///< normalized pixel coordinates only
  kPixelsCalib,  ///< pixels plus flattened K, R and T
};

std::string to_string(Arch arch);
std::string to_string(InputMode mode);
Arch arch_from_string(const std::string& s);
InputMode input_mode_from_string(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::kRumpl;
  int num_joints = 17;
  int dim = 256;
  int layers = 12;
  int heads = 8;
  int mlp_ratio = 4;
  int max_views = 5;
  InputMode input = InputMode::kRays;
  bool use_confidence = true;
  /// Drop conf = 0 view tokens from VFT attention instead of keeping them.
  bool attention_mask = false;
  bool normalize_rays = false;
  /// Metres per unit for ray origins and camera translations.
  double scene_scale = 6.0;
  double pixel_scale = 1000.0;
  /// View count the fully-connected baseline is built for.
  int fc_num_views = 2;

  void validate() const;
  int feature_dim() const;
};

using ViewList = std::vector<View>;

/// B items of N views and M joints, rows ordered ((b·M + j)·N + v).
template <typename S>
struct InputBatch {
  int batch = 0;
  int views = 0;
  int joints = 0;
  Mat<S> features;
  Mat<S> conf;  // one column
  std::vector<std::uint8_t> present;  // raw confidence > 0
};

/// Encodes items that all have the same view count. `shifts`, when given,
/// is subtracted from every camera center of the matching item first.
template <typename S>
InputBatch<S> encode_batch(std::span<const ViewList> items, const ModelConfig& config,
                           std::span<const Vec3> shifts = {});

/// Network mapping an input batch to B·M×3 world joints (meters).
template <typename S>
class LiftNet {
 public:
  virtual ~LiftNet() = default;

  virtual const ModelConfig& config() const = 0;
  /// Inference; does not touch internal state, safe to call concurrently.
  virtual Mat<S> forward(const InputBatch<S>& batch) const = 0;
  /// Forward that keeps activations for the following backward().
  virtual Mat<S> forward_train(const InputBatch<S>& batch) = 0;
  /// Accumulates parameter gradients for d loss / d prediction.
  virtual void backward(const Mat<S>& d_pred) = 0;
  virtual ParamRefs<S> parameters() = 0;
  virtual void init(std::uint64_t seed) = 0;

  void zero_grad();
  size_t num_parameters();
};

template <typename S>
class Rumpl final : public LiftNet<S> {
 public:
  explicit Rumpl(const ModelConfig& config);

  const ModelConfig& config() const override { return config_; }
  Mat<S> forward(const InputBatch<S>& batch) const override;
  Mat<S> forward_train(const InputBatch<S>& batch) override;
  void backward(const Mat<S>& d_pred) override;
  ParamRefs<S> parameters() override;
  void init(std::uint64_t seed) override;

  /// Tokens of every keypoint group: fusion token first, then one token per
  /// view in input order; (B·M·(N+1))×D.
  Mat<S> embed(const InputBatch<S>& batch) const;
  /// Fused keypoint features, (B·M)×D.
  Mat<S> vft_forward(const InputBatch<S>& batch) const;
  /// Joints from fused features: (B·M)×D in, (B·M)×3 out.
  Mat<S> pft_forward(const Mat<S>& fused) const;

  kernels::Exec exec = kernels::Exec::kParallel;

  Linear<S> ray_projection;
  Linear<S> conf_projection;
  Param<S> fusion_token;
  Encoder<S> vft;
  Param<S> anatomical_embeddings;
  Encoder<S> pft;
  Linear<S> head;

 private:
  struct Cache {
    int batch = 0, views = 0;
    Mat<S> features, conf;
    typename Encoder<S>::Cache vft, pft;
    Mat<S> pft_out;
  };
  Mat<S> run(const InputBatch<S>& batch, Cache* cache) const;
  std::vector<std::uint8_t> key_mask(const InputBatch<S>& batch) const;

  ModelConfig config_;
  Cache cache_;
};

/// Flattens all joints of all N views into one vector and regresses the
/// pose with a three-layer MLP; only accepts its configured view count.
template <typename S>
class FullyConnected final : public LiftNet<S> {
 public:
  explicit FullyConnected(const ModelConfig& config);

  const ModelConfig& config() const override { return config_; }
  Mat<S> forward(const InputBatch<S>& batch) const override;
  Mat<S> forward_train(const InputBatch<S>& batch) override;
  void backward(const Mat<S>& d_pred) override;
  ParamRefs<S> parameters() override;
  void init(std::uint64_t seed) override;

  kernels::Exec exec = kernels::Exec::kParallel;
  Linear<S> fc1, fc2, fc3;

 private:
  struct Cache {
    Mat<S> x, u1, h1, u2, h2;
  };
  Mat<S> flatten(const InputBatch<S>& batch) const;
  Mat<S> run(const InputBatch<S>& batch, Cache* cache) const;

  ModelConfig config_;
  Cache cache_;
};

template <typename S>
std::unique_ptr<LiftNet<S>> make_model(const ModelConfig& config);

/// Copies parameter values between models of identical configuration.
template <typename To, typename From>
void copy_parameters(LiftNet<From>& from, LiftNet<To>& to);

}  // namespace rumpl
