#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rumpl/kernels.hpp"
#include "rumpl/tensor.hpp"

namespace rumpl {

/// Named trainable tensor with its accumulated gradient.
template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void init_shape(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

template <typename S>
using ParamRefs = std::vector<Param<S>*>;

/// y = x·W + b with W stored in×out.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  void init_fan_in(std::mt19937_64& rng);
  void forward(const Mat<S>& x, Mat<S>& y) const;
  /// Accumulates dW, db; writes dx unless it is null.
  void backward(const Mat<S>& x, const Mat<S>& dy, Mat<S>* dx);
  void collect(ParamRefs<S>& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_dim() const { return static_cast<int>(weight.value.rows()); }
  int out_dim() const { return static_cast<int>(weight.value.cols()); }

  Param<S> weight;
  Param<S> bias;
};

template <typename S>
class LayerNorm {
 public:
  struct Cache {
    Mat<S> xhat;
    Vec<S> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  void forward(kernels::Exec exec, const Mat<S>& x, Mat<S>& y, Cache* cache) const;
  void backward(kernels::Exec exec, const Cache& cache, const Mat<S>& dy, Mat<S>& dx);
  void collect(ParamRefs<S>& out) { out.push_back(&gamma); out.push_back(&beta); }

  static constexpr double kEps = 1e-6;
  Param<S> gamma;
  Param<S> beta;
};

/// Pre-normalization block: x + MHSA(LN(x)), then + MLP(LN(·)). Attention is
/// restricted to consecutive groups of `group` rows; there is no positional
/// encoding, so the block is equivariant to row permutations within a group.
template <typename S>
class EncoderLayer {
 public:
  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2;
    Mat<S> h1, qkv, attn, x2, h2, u, g;
    std::vector<S> probs;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int dim, int heads, int mlp_ratio);

  void init(std::mt19937_64& rng);
  void forward(kernels::Exec exec, const Mat<S>& x, int group, const std::uint8_t* key_valid, Mat<S>& y,
               Cache* cache) const;
  void backward(kernels::Exec exec, const Cache& cache, const Mat<S>& dy, int group, Mat<S>& dx);
  void collect(ParamRefs<S>& out);

  int heads() const { return heads_; }

  LayerNorm<S> norm1;
  Linear<S> qkv;
  Linear<S> proj;
  LayerNorm<S> norm2;
  Linear<S> fc1;
  Linear<S> fc2;

 private:
  int heads_ = 1;
};

/// L encoder layers followed by a final LayerNorm.
template <typename S>
class Encoder {
 public:
  struct Cache {
    std::vector<typename EncoderLayer<S>::Cache> layers;
    typename LayerNorm<S>::Cache final_norm;
  };

  Encoder() = default;
  Encoder(const std::string& name, int dim, int layers, int heads, int mlp_ratio);

  void init(std::mt19937_64& rng);
  void forward(kernels::Exec exec, const Mat<S>& x, int group, const std::uint8_t* key_valid, Mat<S>& y,
               Cache* cache) const;
  void backward(kernels::Exec exec, const Cache& cache, const Mat<S>& dy, int group, Mat<S>& dx);
  void collect(ParamRefs<S>& out);

  std::vector<EncoderLayer<S>> layers;
  LayerNorm<S> norm;
};

}  // namespace rumpl
