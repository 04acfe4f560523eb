#include "rumpl/layers.hpp"

#include <algorithm>
#include <cmath>

#include "rumpl/errors.hpp"

namespace rumpl {

template <typename S>
Linear<S>::Linear(const std::string& name, int in, int out) {
  weight.init_shape(name + ".weight", in, out);
  bias.init_shape(name + ".bias", 1, out);
}

template <typename S>
void Linear<S>::init_fan_in(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<S>(u(rng));
  for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = static_cast<S>(u(rng));
}

template <typename S>
void Linear<S>::forward(const Mat<S>& x, Mat<S>& y) const {
  if (x.cols() != weight.value.rows()) throw InvalidInput(weight.name + ": input width mismatch");
  y.noalias() = x * weight.value;
  y.rowwise() += bias.value.row(0);
}

template <typename S>
void Linear<S>::backward(const Mat<S>& x, const Mat<S>& dy, Mat<S>* dx) {
  weight.grad.noalias() += x.transpose() * dy;
  bias.grad.row(0) += dy.colwise().sum();
  if (dx) dx->noalias() = dy * weight.value.transpose();
}

template <typename S>
LayerNorm<S>::LayerNorm(const std::string& name, int dim) {
  gamma.init_shape(name + ".gamma", 1, dim);
  gamma.value.setOnes();
  beta.init_shape(name + ".beta", 1, dim);
}

template <typename S>
void LayerNorm<S>::forward(kernels::Exec exec, const Mat<S>& x, Mat<S>& y, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  kernels::layer_norm_forward<S>(exec, x, gamma.value.row(0), beta.value.row(0), static_cast<S>(kEps), y, c.xhat,
                                 c.rstd);
}

template <typename S>
void LayerNorm<S>::backward(kernels::Exec exec, const Cache& cache, const Mat<S>& dy, Mat<S>& dx) {
  RowVec<S> dgamma, dbeta;
  kernels::layer_norm_backward<S>(exec, dy, cache.xhat, cache.rstd, gamma.value.row(0), dx, dgamma, dbeta);
  gamma.grad.row(0) += dgamma;
  beta.grad.row(0) += dbeta;
}

template <typename S>
EncoderLayer<S>::EncoderLayer(const std::string& name, int dim, int heads, int mlp_ratio)
    : norm1(name + ".norm1", dim),
      qkv(name + ".attn.qkv", dim, 3 * dim),
      proj(name + ".attn.proj", dim, dim),
      norm2(name + ".norm2", dim),
      fc1(name + ".mlp.fc1", dim, mlp_ratio * dim),
      fc2(name + ".mlp.fc2", mlp_ratio * dim, dim),
      heads_(heads) {
  if (dim % heads != 0) throw InvalidInput("encoder layer: dim must be divisible by heads");
}

template <typename S>
void EncoderLayer<S>::init(std::mt19937_64& rng) {
  qkv.init_fan_in(rng);
  proj.init_fan_in(rng);
  fc1.init_fan_in(rng);
  fc2.init_fan_in(rng);
}

template <typename S>
void EncoderLayer<S>::forward(kernels::Exec exec, const Mat<S>& x, int group, const std::uint8_t* key_valid,
                              Mat<S>& y, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  Mat<S> tmp;
  norm1.forward(exec, x, c.h1, &c.ln1);
  qkv.forward(c.h1, c.qkv);
  kernels::attention_forward<S>(exec, c.qkv, group, heads_, key_valid, c.attn, c.probs);
  proj.forward(c.attn, tmp);
  c.x2 = x + tmp;
  norm2.forward(exec, c.x2, c.h2, &c.ln2);
  fc1.forward(c.h2, c.u);
  kernels::gelu_forward<S>(exec, c.u, c.g);
  fc2.forward(c.g, tmp);
  y = c.x2 + tmp;
}

template <typename S>
void EncoderLayer<S>::backward(kernels::Exec exec, const Cache& c, const Mat<S>& dy, int group, Mat<S>& dx) {
  Mat<S> dg, du, dh2, dx2, dattn, dqkv, dh1, tmp;
  fc2.backward(c.g, dy, &dg);
  kernels::gelu_backward<S>(exec, c.u, dg, du);
  fc1.backward(c.h2, du, &dh2);
  norm2.backward(exec, c.ln2, dh2, tmp);
  dx2 = dy + tmp;
  proj.backward(c.attn, dx2, &dattn);
  kernels::attention_backward<S>(exec, c.qkv, c.probs, dattn, group, heads_, dqkv);
  qkv.backward(c.h1, dqkv, &dh1);
  norm1.backward(exec, c.ln1, dh1, tmp);
  dx = dx2 + tmp;
}

template <typename S>
void EncoderLayer<S>::collect(ParamRefs<S>& out) {
  norm1.collect(out);
  qkv.collect(out);
  proj.collect(out);
  norm2.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

template <typename S>
Encoder<S>::Encoder(const std::string& name, int dim, int num_layers, int heads, int mlp_ratio)
    : norm(name + ".norm", dim) {
  for (int l = 0; l < num_layers; ++l) {
    layers.emplace_back(name + ".blocks." + std::to_string(l), dim, heads, mlp_ratio);
  }
}

template <typename S>
void Encoder<S>::init(std::mt19937_64& rng) {
  for (auto& layer : layers) layer.init(rng);
}

constexpr Eigen::Index kInferenceTileRows = 256;

template <typename S>
void Encoder<S>::forward(kernels::Exec exec, const Mat<S>& x, int group, const std::uint8_t* key_valid, Mat<S>& y,
                         Cache* cache) const {
  if (!cache && x.rows() > kInferenceTileRows) {
    // Groups never interact, so inference runs the whole stack tile by tile
    // to keep activations cache-resident.
    const Eigen::Index groups = x.rows() / group;
    const Eigen::Index tiles = (x.rows() + kInferenceTileRows - 1) / kInferenceTileRows;
    const Eigen::Index tile = (groups + tiles - 1) / tiles * group;
    y.resize(x.rows(), x.cols());
    Mat<S> part;
    for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += tile) {
      const Eigen::Index rows = std::min(tile, x.rows() - r0);
      forward(exec, x.middleRows(r0, rows), group, key_valid ? key_valid + r0 : nullptr, part, nullptr);
      y.middleRows(r0, rows) = part;
    }
    return;
  }
  if (cache) cache->layers.resize(layers.size());
  Mat<S> cur = x, next;
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].forward(exec, cur, group, key_valid, next, cache ? &cache->layers[l] : nullptr);
    cur.swap(next);
  }
  norm.forward(exec, cur, y, cache ? &cache->final_norm : nullptr);
}

template <typename S>
void Encoder<S>::backward(kernels::Exec exec, const Cache& cache, const Mat<S>& dy, int group, Mat<S>& dx) {
  Mat<S> cur, next;
  norm.backward(exec, cache.final_norm, dy, cur);
  for (size_t l = layers.size(); l-- > 0;) {
    layers[l].backward(exec, cache.layers[l], cur, group, next);
    cur.swap(next);
  }
  dx = std::move(cur);
}

template <typename S>
void Encoder<S>::collect(ParamRefs<S>& out) {
  for (auto& layer : layers) layer.collect(out);
  norm.collect(out);
}

template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class EncoderLayer<float>;
template class EncoderLayer<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace rumpl
