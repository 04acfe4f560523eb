#include "rumpl/model.hpp"

#include <cmath>

#include "rumpl/errors.hpp"

namespace rumpl {

std::string to_string(Arch arch) { return arch == Arch::kRumpl ? "rumpl" : "fc"; }

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::kRays: return "rays";
    case InputMode::kPixels: return "pixels";
    case InputMode::kPixelsCalib: return "pixels_calib";
  }
  return "rays";
}

Arch arch_from_string(const std::string& s) {
  if (s == "rumpl") return Arch::kRumpl;
  if (s == "fc") return Arch::kFullyConnected;
  throw ConfigError("unknown model arch '" + s + "' (expected rumpl or fc)");
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "rays") return InputMode::kRays;
  if (s == "pixels") return InputMode::kPixels;
  if (s == "pixels_calib") return InputMode::kPixelsCalib;
  throw ConfigError("unknown input mode '" + s + "' (expected rays, pixels or pixels_calib)");
}

void ModelConfig::validate() const {
  if (num_joints < 1 || layers < 1 || heads < 1 || dim < 2 || mlp_ratio < 1) {
    throw ConfigError("model: joints, layers, heads and mlp_ratio must be >= 1");
  }
  if (dim % 2 != 0) throw ConfigError("model.dim must be even");
  if (dim % heads != 0) throw ConfigError("model.dim must be divisible by model.heads");
  if (max_views < 1) throw ConfigError("model.max_views must be >= 1");
  if (!(scene_scale > 0.0) || !(pixel_scale > 0.0)) throw ConfigError("model scales must be positive");
  if (arch == Arch::kFullyConnected && fc_num_views < 1) throw ConfigError("model.fc_num_views must be >= 1");
}

int ModelConfig::feature_dim() const {
  switch (input) {
    case InputMode::kRays: return 6;
    case InputMode::kPixels: return 2;
    case InputMode::kPixelsCalib: return 2 + 5 + 9 + 3;
  }
  return 6;
}

template <typename S>
InputBatch<S> encode_batch(std::span<const ViewList> items, const ModelConfig& config, std::span<const Vec3> shifts) {
  if (items.empty()) throw InvalidInput("encode_batch: empty batch");
  if (!shifts.empty() && shifts.size() != items.size()) throw InvalidInput("encode_batch: one shift per item");
  const int n = static_cast<int>(items.front().size());
  const int m = config.num_joints;
  if (n == 0) throw InvalidInput("encode_batch: items need at least one view");
  const int f = config.feature_dim();

  InputBatch<S> batch;
  batch.batch = static_cast<int>(items.size());
  batch.views = n;
  batch.joints = m;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch.batch) * m * n;
  batch.features.resize(rows, f);
  batch.conf.resize(rows, 1);
  batch.present.resize(static_cast<size_t>(rows));

  for (int b = 0; b < batch.batch; ++b) {
    const ViewList& views = items[b];
    if (static_cast<int>(views.size()) != n) throw InvalidInput("encode_batch: items differ in view count");
    for (int v = 0; v < n; ++v) {
      const View& view = views[v];
      if (view.pose.size() != m) throw InvalidInput("encode_batch: keypoint count differs from model joints");
      CameraCalib calib = view.calib;
      if (!shifts.empty()) calib.T -= shifts[b];
      RaySet rays;
      if (config.input == InputMode::kRays) rays = pixels_to_rays(view.pose.pixels, calib, config.normalize_rays);
      for (int j = 0; j < m; ++j) {
        const Eigen::Index r = (static_cast<Eigen::Index>(b) * m + j) * n + v;
        auto row = batch.features.row(r);
        const double u = view.pose.pixels(j, 0), w = view.pose.pixels(j, 1);
        switch (config.input) {
          case InputMode::kRays:
            for (int a = 0; a < 3; ++a) {
              row(a) = static_cast<S>(rays[j].origin(a) / config.scene_scale);
              row(3 + a) = static_cast<S>(rays[j].direction(a));
            }
            break;
          case InputMode::kPixels:
            row(0) = static_cast<S>(u / config.pixel_scale - 0.5);
            row(1) = static_cast<S>(w / config.pixel_scale - 0.5);
            break;
          case InputMode::kPixelsCalib: {
            row(0) = static_cast<S>(u / config.pixel_scale - 0.5);
            row(1) = static_cast<S>(w / config.pixel_scale - 0.5);
            const Mat3& K = calib.K;
            const double k[5] = {K(0, 0), K(0, 1), K(0, 2), K(1, 1), K(1, 2)};
            for (int a = 0; a < 5; ++a) row(2 + a) = static_cast<S>(k[a] / config.pixel_scale);
            for (int a = 0; a < 9; ++a) row(7 + a) = static_cast<S>(calib.R(a / 3, a % 3));
            for (int a = 0; a < 3; ++a) row(16 + a) = static_cast<S>(calib.T(a) / config.scene_scale);
            break;
          }
        }
        const double c = view.pose.conf(j);
        batch.present[r] = c > 0.0 ? 1 : 0;
        batch.conf(r, 0) = static_cast<S>(config.use_confidence ? c : 1.0);
      }
    }
  }
  return batch;
}

template <typename S>
void LiftNet<S>::zero_grad() {
  for (Param<S>* p : parameters()) p->zero_grad();
}

template <typename S>
size_t LiftNet<S>::num_parameters() {
  size_t n = 0;
  for (Param<S>* p : parameters()) n += static_cast<size_t>(p->value.size());
  return n;
}

namespace {

template <typename S>
void truncated_normal(Mat<S>& m, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double x;
    do x = g(rng);
    while (std::abs(x) > 2.0 * sigma);
    m.data()[i] = static_cast<S>(x);
  }
}

template <typename S>
void check_batch(const InputBatch<S>& batch, const ModelConfig& config) {
  if (batch.joints != config.num_joints) throw InvalidInput("model: batch joint count differs from config");
  if (batch.features.cols() != config.feature_dim()) throw InvalidInput("model: feature width differs from config");
  if (batch.views < 1) throw InvalidInput("model: need at least one view");
  if (batch.features.rows() != static_cast<Eigen::Index>(batch.batch) * batch.joints * batch.views) {
    throw InvalidInput("model: malformed batch");
  }
}

}  // namespace

template <typename S>
Rumpl<S>::Rumpl(const ModelConfig& config)
    : ray_projection("ray_projection", config.feature_dim(), config.dim / 2),
      conf_projection("conf_projection", 1, config.dim / 2),
      vft("vft", config.dim, config.layers, config.heads, config.mlp_ratio),
      pft("pft", config.dim, config.layers, config.heads, config.mlp_ratio),
      head("head", config.dim, 3),
      config_(config) {
  config.validate();
  fusion_token.init_shape("fusion_token", 1, config.dim);
  anatomical_embeddings.init_shape("anatomical_embeddings", config.num_joints, config.dim);
}

template <typename S>
void Rumpl<S>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ray_projection.init_fan_in(rng);
  conf_projection.init_fan_in(rng);
  truncated_normal(fusion_token.value, 0.02, rng);
  vft.init(rng);
  truncated_normal(anatomical_embeddings.value, 0.02, rng);
  pft.init(rng);
  head.init_fan_in(rng);
}

template <typename S>
ParamRefs<S> Rumpl<S>::parameters() {
  ParamRefs<S> out;
  ray_projection.collect(out);
  conf_projection.collect(out);
  out.push_back(&fusion_token);
  vft.collect(out);
  out.push_back(&anatomical_embeddings);
  pft.collect(out);
  head.collect(out);
  return out;
}

template <typename S>
Mat<S> Rumpl<S>::embed(const InputBatch<S>& batch) const {
  check_batch(batch, config_);
  const int n = batch.views, seq = n + 1, half = config_.dim / 2;
  const Eigen::Index groups = static_cast<Eigen::Index>(batch.batch) * batch.joints;
  Mat<S> ray_tokens, conf_tokens;
  ray_projection.forward(batch.features, ray_tokens);
  conf_projection.forward(batch.conf, conf_tokens);
  Mat<S> tokens(groups * seq, config_.dim);
  for (Eigen::Index g = 0; g < groups; ++g) {
    tokens.row(g * seq) = fusion_token.value.row(0);
    tokens.block(g * seq + 1, 0, n, half) = ray_tokens.middleRows(g * n, n);
    tokens.block(g * seq + 1, half, n, half) = conf_tokens.middleRows(g * n, n);
  }
  return tokens;
}

template <typename S>
std::vector<std::uint8_t> Rumpl<S>::key_mask(const InputBatch<S>& batch) const {
  if (!config_.attention_mask) return {};
  const int n = batch.views, seq = n + 1;
  const size_t groups = static_cast<size_t>(batch.batch) * batch.joints;
  std::vector<std::uint8_t> mask(groups * seq, 1);
  for (size_t g = 0; g < groups; ++g) {
    for (int v = 0; v < n; ++v) mask[g * seq + 1 + v] = batch.present[g * n + v];
  }
  return mask;
}

template <typename S>
Mat<S> Rumpl<S>::vft_forward(const InputBatch<S>& batch) const {
  const int seq = batch.views + 1;
  const Eigen::Index groups = static_cast<Eigen::Index>(batch.batch) * batch.joints;
  const auto mask = key_mask(batch);
  Mat<S> out;
  vft.forward(exec, embed(batch), seq, mask.empty() ? nullptr : mask.data(), out, nullptr);
  Mat<S> fused(groups, config_.dim);
  for (Eigen::Index g = 0; g < groups; ++g) fused.row(g) = out.row(g * seq);
  return fused;
}

template <typename S>
Mat<S> Rumpl<S>::pft_forward(const Mat<S>& fused) const {
  const int m = config_.num_joints;
  if (fused.cols() != config_.dim || fused.rows() % m != 0) throw InvalidInput("pft_forward: expected (B·M)×D input");
  Mat<S> tokens = fused;
  for (Eigen::Index g = 0; g < tokens.rows(); ++g) tokens.row(g) += anatomical_embeddings.value.row(g % m);
  Mat<S> out, pred;
  pft.forward(exec, tokens, m, nullptr, out, nullptr);
  head.forward(out, pred);
  return pred;
}

template <typename S>
Mat<S> Rumpl<S>::run(const InputBatch<S>& batch, Cache* cache) const {
  const int n = batch.views, seq = n + 1, m = config_.num_joints;
  const Eigen::Index groups = static_cast<Eigen::Index>(batch.batch) * batch.joints;
  const auto mask = key_mask(batch);
  Mat<S> vft_out;
  vft.forward(exec, embed(batch), seq, mask.empty() ? nullptr : mask.data(), vft_out, cache ? &cache->vft : nullptr);
  Mat<S> tokens(groups, config_.dim);
  for (Eigen::Index g = 0; g < groups; ++g) {
    tokens.row(g) = vft_out.row(g * seq) + anatomical_embeddings.value.row(g % m);
  }
  Mat<S> pft_out, pred;
  pft.forward(exec, tokens, m, nullptr, pft_out, cache ? &cache->pft : nullptr);
  head.forward(pft_out, pred);
  if (cache) {
    cache->batch = batch.batch;
    cache->views = n;
    cache->features = batch.features;
    cache->conf = batch.conf;
    cache->pft_out = std::move(pft_out);
  }
  return pred;
}

template <typename S>
Mat<S> Rumpl<S>::forward(const InputBatch<S>& batch) const {
  return run(batch, nullptr);
}

template <typename S>
Mat<S> Rumpl<S>::forward_train(const InputBatch<S>& batch) {
  return run(batch, &cache_);
}

template <typename S>
void Rumpl<S>::backward(const Mat<S>& d_pred) {
  const Cache& c = cache_;
  const int n = c.views, seq = n + 1, m = config_.num_joints, half = config_.dim / 2;
  const Eigen::Index groups = static_cast<Eigen::Index>(c.batch) * m;
  if (d_pred.rows() != groups || d_pred.cols() != 3) throw InvalidInput("backward: gradient shape mismatch");

  Mat<S> d_pft_out, d_tokens;
  head.backward(c.pft_out, d_pred, &d_pft_out);
  pft.backward(exec, c.pft, d_pft_out, m, d_tokens);
  for (Eigen::Index g = 0; g < groups; ++g) anatomical_embeddings.grad.row(g % m) += d_tokens.row(g);

  Mat<S> d_vft_out = Mat<S>::Zero(groups * seq, config_.dim);
  for (Eigen::Index g = 0; g < groups; ++g) d_vft_out.row(g * seq) = d_tokens.row(g);
  Mat<S> d_embed;
  vft.backward(exec, c.vft, d_vft_out, seq, d_embed);

  Mat<S> d_ray(groups * n, half), d_conf(groups * n, half);
  for (Eigen::Index g = 0; g < groups; ++g) {
    fusion_token.grad.row(0) += d_embed.row(g * seq);
    d_ray.middleRows(g * n, n) = d_embed.block(g * seq + 1, 0, n, half);
    d_conf.middleRows(g * n, n) = d_embed.block(g * seq + 1, half, n, half);
  }
  ray_projection.backward(c.features, d_ray, nullptr);
  conf_projection.backward(c.conf, d_conf, nullptr);
}

template <typename S>
FullyConnected<S>::FullyConnected(const ModelConfig& config)
    : fc1("fc1", config.num_joints * config.fc_num_views * (config.feature_dim() + 1), config.dim),
      fc2("fc2", config.dim, config.dim),
      fc3("fc3", config.dim, 3 * config.num_joints),
      config_(config) {
  config.validate();
}

template <typename S>
void FullyConnected<S>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fc1.init_fan_in(rng);
  fc2.init_fan_in(rng);
  fc3.init_fan_in(rng);
}

template <typename S>
ParamRefs<S> FullyConnected<S>::parameters() {
  ParamRefs<S> out;
  fc1.collect(out);
  fc2.collect(out);
  fc3.collect(out);
  return out;
}

template <typename S>
Mat<S> FullyConnected<S>::flatten(const InputBatch<S>& batch) const {
  check_batch(batch, config_);
  if (batch.views != config_.fc_num_views) {
    throw InvalidInput("fully-connected baseline expects exactly " + std::to_string(config_.fc_num_views) +
                       " views, got " + std::to_string(batch.views));
  }
  const int f = config_.feature_dim();
  const Eigen::Index per_item = static_cast<Eigen::Index>(batch.joints) * batch.views;
  Mat<S> x(batch.batch, per_item * (f + 1));
  for (int b = 0; b < batch.batch; ++b) {
    for (Eigen::Index t = 0; t < per_item; ++t) {
      const Eigen::Index r = b * per_item + t;
      x.block(b, t * (f + 1), 1, f) = batch.features.row(r);
      x(b, t * (f + 1) + f) = batch.conf(r, 0);
    }
  }
  return x;
}

template <typename S>
Mat<S> FullyConnected<S>::run(const InputBatch<S>& batch, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = flatten(batch);
  fc1.forward(c.x, c.u1);
  kernels::gelu_forward<S>(exec, c.u1, c.h1);
  fc2.forward(c.h1, c.u2);
  kernels::gelu_forward<S>(exec, c.u2, c.h2);
  Mat<S> out;
  fc3.forward(c.h2, out);
  // B×3M and (B·M)×3 share the row-major layout.
  return Eigen::Map<Mat<S>>(out.data(), out.rows() * config_.num_joints, 3);
}

template <typename S>
Mat<S> FullyConnected<S>::forward(const InputBatch<S>& batch) const {
  return run(batch, nullptr);
}

template <typename S>
Mat<S> FullyConnected<S>::forward_train(const InputBatch<S>& batch) {
  return run(batch, &cache_);
}

template <typename S>
void FullyConnected<S>::backward(const Mat<S>& d_pred) {
  const Cache& c = cache_;
  const Eigen::Index b = c.x.rows();
  if (d_pred.rows() != b * config_.num_joints || d_pred.cols() != 3) {
    throw InvalidInput("backward: gradient shape mismatch");
  }
  const Mat<S> d_out = Eigen::Map<const Mat<S>>(d_pred.data(), b, 3 * config_.num_joints);
  Mat<S> dh2, du2, dh1, du1;
  fc3.backward(c.h2, d_out, &dh2);
  kernels::gelu_backward<S>(exec, c.u2, dh2, du2);
  fc2.backward(c.h1, du2, &dh1);
  kernels::gelu_backward<S>(exec, c.u1, dh1, du1);
  fc1.backward(c.x, du1, nullptr);
}

template <typename S>
std::unique_ptr<LiftNet<S>> make_model(const ModelConfig& config) {
  config.validate();
  if (config.arch == Arch::kFullyConnected) return std::make_unique<FullyConnected<S>>(config);
  return std::make_unique<Rumpl<S>>(config);
}

template <typename To, typename From>
void copy_parameters(LiftNet<From>& from, LiftNet<To>& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw InvalidInput("copy_parameters: parameter lists differ");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name || src[i]->value.rows() != dst[i]->value.rows() ||
        src[i]->value.cols() != dst[i]->value.cols()) {
      throw InvalidInput("copy_parameters: mismatch at " + src[i]->name);
    }
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

template InputBatch<float> encode_batch<float>(std::span<const ViewList>, const ModelConfig&, std::span<const Vec3>);
template InputBatch<double> encode_batch<double>(std::span<const ViewList>, const ModelConfig&,
                                                 std::span<const Vec3>);
template class LiftNet<float>;
template class LiftNet<double>;
template class Rumpl<float>;
template class Rumpl<double>;
template class FullyConnected<float>;
template class FullyConnected<double>;
template std::unique_ptr<LiftNet<float>> make_model<float>(const ModelConfig&);
template std::unique_ptr<LiftNet<double>> make_model<double>(const ModelConfig&);
template void copy_parameters<float, float>(LiftNet<float>&, LiftNet<float>&);
template void copy_parameters<double, float>(LiftNet<float>&, LiftNet<double>&);
template void copy_parameters<float, double>(LiftNet<double>&, LiftNet<float>&);
template void copy_parameters<double, double>(LiftNet<double>&, LiftNet<double>&);

}  // namespace rumpl
