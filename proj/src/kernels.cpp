#include "rumpl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <unsupported/Eigen/SpecialFunctions>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rumpl/errors.hpp"

namespace rumpl::kernels {

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    constexpr int kBytes = 256 << 20;
    mallopt(M_MMAP_THRESHOLD, kBytes);
    mallopt(M_TRIM_THRESHOLD, kBytes);
    return true;
  }();
  (void)done;
#endif
}

namespace {

template <typename S>
void check_attention_shape(const Mat<S>& qkv, int group, int heads) {
  if (group < 1 || heads < 1) throw InvalidInput("attention: group and heads must be positive");
  if (qkv.cols() % 3 != 0 || (qkv.cols() / 3) % heads != 0) throw InvalidInput("attention: D must divide by heads");
  if (qkv.rows() % group != 0) throw InvalidInput("attention: token count is not a multiple of the group size");
}

// ---------------------------------------------------------------------------
// Reference versions: straight loops, no Eigen expressions, single thread.

template <typename S>
void attention_forward_ref(const Mat<S>& qkv, int group, int heads, const std::uint8_t* key_valid, Mat<S>& out,
                           std::vector<S>& probs) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const int groups = static_cast<int>(qkv.rows() / group);
  const S scale = S(1) / std::sqrt(S(dh));
  out.setZero(qkv.rows(), d);
  probs.assign(static_cast<size_t>(groups) * heads * group * group, S(0));
  for (int g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      S* p = probs.data() + (static_cast<size_t>(g) * heads + h) * group * group;
      for (int i = 0; i < group; ++i) {
        const int qi = g * group + i;
        S max_score = -std::numeric_limits<S>::infinity();
        for (int k = 0; k < group; ++k) {
          const int kk = g * group + k;
          if (key_valid && !key_valid[kk]) continue;
          S s = 0;
          for (int c = 0; c < dh; ++c) s += qkv(qi, h * dh + c) * qkv(kk, d + h * dh + c);
          p[i * group + k] = s * scale;
          max_score = std::max(max_score, s * scale);
        }
        S total = 0;
        for (int k = 0; k < group; ++k) {
          const int kk = g * group + k;
          if (key_valid && !key_valid[kk]) {
            p[i * group + k] = 0;
            continue;
          }
          p[i * group + k] = std::exp(p[i * group + k] - max_score);
          total += p[i * group + k];
        }
        for (int k = 0; k < group; ++k) p[i * group + k] /= total;
        for (int c = 0; c < dh; ++c) {
          S acc = 0;
          for (int k = 0; k < group; ++k) acc += p[i * group + k] * qkv(g * group + k, 2 * d + h * dh + c);
          out(qi, h * dh + c) = acc;
        }
      }
    }
  }
}

template <typename S>
void attention_backward_ref(const Mat<S>& qkv, const std::vector<S>& probs, const Mat<S>& d_out, int group, int heads,
                            Mat<S>& d_qkv) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const int groups = static_cast<int>(qkv.rows() / group);
  const S scale = S(1) / std::sqrt(S(dh));
  d_qkv.setZero(qkv.rows(), qkv.cols());
  std::vector<S> dp(static_cast<size_t>(group) * group), ds(static_cast<size_t>(group) * group);
  for (int g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      const S* p = probs.data() + (static_cast<size_t>(g) * heads + h) * group * group;
      for (int i = 0; i < group; ++i) {
        for (int k = 0; k < group; ++k) {
          S acc = 0;
          for (int c = 0; c < dh; ++c) acc += d_out(g * group + i, h * dh + c) * qkv(g * group + k, 2 * d + h * dh + c);
          dp[i * group + k] = acc;
        }
      }
      // dV = Pᵀ·dO
      for (int k = 0; k < group; ++k) {
        for (int c = 0; c < dh; ++c) {
          S acc = 0;
          for (int i = 0; i < group; ++i) acc += p[i * group + k] * d_out(g * group + i, h * dh + c);
          d_qkv(g * group + k, 2 * d + h * dh + c) = acc;
        }
      }
      for (int i = 0; i < group; ++i) {
        S dot = 0;
        for (int k = 0; k < group; ++k) dot += dp[i * group + k] * p[i * group + k];
        for (int k = 0; k < group; ++k) ds[i * group + k] = p[i * group + k] * (dp[i * group + k] - dot) * scale;
      }
      for (int i = 0; i < group; ++i) {
        for (int c = 0; c < dh; ++c) {
          S dq = 0, dk = 0;
          for (int k = 0; k < group; ++k) {
            dq += ds[i * group + k] * qkv(g * group + k, d + h * dh + c);
            dk += ds[k * group + i] * qkv(g * group + k, h * dh + c);
          }
          d_qkv(g * group + i, h * dh + c) = dq;
          d_qkv(g * group + i, d + h * dh + c) = dk;
        }
      }
    }
  }
}

template <typename S>
void layer_norm_forward_ref(const Mat<S>& x, const RowVec<S>& gamma, const RowVec<S>& beta, S eps, Mat<S>& y,
                            Mat<S>& xhat, Vec<S>& rstd) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    S mean = 0;
    for (Eigen::Index c = 0; c < d; ++c) mean += x(r, c);
    mean /= S(d);
    S var = 0;
    for (Eigen::Index c = 0; c < d; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= S(d);
    rstd(r) = S(1) / std::sqrt(var + eps);
    for (Eigen::Index c = 0; c < d; ++c) {
      xhat(r, c) = (x(r, c) - mean) * rstd(r);
      y(r, c) = xhat(r, c) * gamma(c) + beta(c);
    }
  }
}

template <typename S>
void layer_norm_backward_ref(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd, const RowVec<S>& gamma,
                             Mat<S>& dx, RowVec<S>& dgamma, RowVec<S>& dbeta) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  dx.resize(n, d);
  dgamma.setZero(d);
  dbeta.setZero(d);
  for (Eigen::Index r = 0; r < n; ++r) {
    S mean_g = 0, mean_gx = 0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const S g = dy(r, c) * gamma(c);
      mean_g += g;
      mean_gx += g * xhat(r, c);
      dgamma(c) += dy(r, c) * xhat(r, c);
      dbeta(c) += dy(r, c);
    }
    mean_g /= S(d);
    mean_gx /= S(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      dx(r, c) = rstd(r) * (dy(r, c) * gamma(c) - mean_g - xhat(r, c) * mean_gx);
    }
  }
}

template <typename S>
S gelu(S u) {
  return S(0.5) * u * (S(1) + std::erf(u * S(std::numbers::sqrt2 / 2)));
}

template <typename S>
S gelu_grad(S u) {
  const S cdf = S(0.5) * (S(1) + std::erf(u * S(std::numbers::sqrt2 / 2)));
  const S pdf = std::exp(S(-0.5) * u * u) * S(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + u * pdf;
}

// ---------------------------------------------------------------------------
// Parallel versions: Eigen blocks per attention group, OpenMP over groups/rows.

template <typename S>
void attention_forward_par(const Mat<S>& qkv, int group, int heads, const std::uint8_t* key_valid, Mat<S>& out,
                           std::vector<S>& probs) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const int groups = static_cast<int>(qkv.rows() / group);
  const Eigen::Index stride = qkv.cols();
  const Eigen::Index block = static_cast<Eigen::Index>(heads) * group * group;
  const S scale = S(1) / std::sqrt(S(dh));
  const S lowest = std::numeric_limits<S>::lowest();
  out.resize(qkv.rows(), d);
  probs.resize(static_cast<size_t>(groups) * block);
#pragma omp parallel for schedule(static)
  for (int g = 0; g < groups; ++g) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group;
    S* pg = probs.data() + g * block;
    // Max-shifted scores for every head first, so the exponentials run as one
    // vectorized pass over the group.
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < group; ++i) {
        const S* q = qkv.data() + (r0 + i) * stride + h * dh;
        S* row = pg + (static_cast<Eigen::Index>(h) * group + i) * group;
        S max_score = lowest;
        for (int k = 0; k < group; ++k) {
          if (key_valid && !key_valid[r0 + k]) {
            row[k] = lowest;
            continue;
          }
          const S* key = qkv.data() + (r0 + k) * stride + d + h * dh;
          S dot = 0;
#pragma omp simd reduction(+ : dot)
          for (int c = 0; c < dh; ++c) dot += q[c] * key[c];
          row[k] = dot * scale;
          max_score = std::max(max_score, row[k]);
        }
        for (int k = 0; k < group; ++k) row[k] = std::max(row[k] - max_score, S(-100));
      }
    }
    // Copy through an aligned buffer: on a heap-offset map Eigen peels a
    // scalar head whose length depends on the address.
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> all(pg, block);
    Eigen::Array<S, Eigen::Dynamic, 1> e = all;
    e = e.exp();
    all = e;
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < group; ++i) {
        S* row = pg + (static_cast<Eigen::Index>(h) * group + i) * group;
        S total = 0;
        for (int k = 0; k < group; ++k) {
          if (key_valid && !key_valid[r0 + k]) row[k] = 0;
          total += row[k];
        }
        const S inv = S(1) / total;
        S* o = out.data() + (r0 + i) * d + h * dh;
        std::fill(o, o + dh, S(0));
        for (int k = 0; k < group; ++k) {
          row[k] *= inv;
          const S w = row[k];
          const S* v = qkv.data() + (r0 + k) * stride + 2 * d + h * dh;
#pragma omp simd
          for (int c = 0; c < dh; ++c) o[c] += w * v[c];
        }
      }
    }
  }
}

template <typename S>
void attention_backward_par(const Mat<S>& qkv, const std::vector<S>& probs, const Mat<S>& d_out, int group, int heads,
                            Mat<S>& d_qkv) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const int groups = static_cast<int>(qkv.rows() / group);
  const Eigen::Index stride = qkv.cols();
  const S scale = S(1) / std::sqrt(S(dh));
  d_qkv.setZero(qkv.rows(), qkv.cols());
#pragma omp parallel
  {
    std::vector<S> ds(static_cast<size_t>(group) * group);
#pragma omp for schedule(static)
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group;
      for (int h = 0; h < heads; ++h) {
        const S* p = probs.data() + (static_cast<size_t>(g) * heads + h) * group * group;
        for (int i = 0; i < group; ++i) {
          const S* dout = d_out.data() + (r0 + i) * d + h * dh;
          const S* prow = p + static_cast<size_t>(i) * group;
          S* dsrow = ds.data() + static_cast<size_t>(i) * group;
          S weighted = 0;
          for (int k = 0; k < group; ++k) {
            const S* v = qkv.data() + (r0 + k) * stride + 2 * d + h * dh;
            S* dv = d_qkv.data() + (r0 + k) * stride + 2 * d + h * dh;
            S dot = 0;
            const S w = prow[k];
#pragma omp simd reduction(+ : dot)
            for (int c = 0; c < dh; ++c) {
              dot += dout[c] * v[c];
              dv[c] += w * dout[c];
            }
            dsrow[k] = dot;
            weighted += w * dot;
          }
          for (int k = 0; k < group; ++k) dsrow[k] = prow[k] * (dsrow[k] - weighted) * scale;
        }
        for (int i = 0; i < group; ++i) {
          const S* q = qkv.data() + (r0 + i) * stride + h * dh;
          S* dq = d_qkv.data() + (r0 + i) * stride + h * dh;
          for (int k = 0; k < group; ++k) {
            const S w = ds[static_cast<size_t>(i) * group + k];
            if (w == S(0)) continue;
            const S* key = qkv.data() + (r0 + k) * stride + d + h * dh;
            S* dk = d_qkv.data() + (r0 + k) * stride + d + h * dh;
#pragma omp simd
            for (int c = 0; c < dh; ++c) {
              dq[c] += w * key[c];
              dk[c] += w * q[c];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void layer_norm_forward_par(const Mat<S>& x, const RowVec<S>& gamma, const RowVec<S>& beta, S eps, Mat<S>& y,
                            Mat<S>& xhat, Vec<S>& rstd) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  rstd.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mean = x.row(r).mean();
    const S var = (x.row(r).array() - mean).square().mean();
    rstd(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
    y.row(r) = xhat.row(r).cwiseProduct(gamma) + beta;
  }
}

template <typename S>
void layer_norm_backward_par(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd, const RowVec<S>& gamma,
                             Mat<S>& dx, RowVec<S>& dgamma, RowVec<S>& dbeta) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  dx.resize(n, d);
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < n; ++r) {
    const RowVec<S> g = dy.row(r).cwiseProduct(gamma);
    const S mean_g = g.mean();
    const S mean_gx = g.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) = rstd(r) * (g.array() - mean_g - xhat.row(r).array() * mean_gx);
  }
  // Column reductions stay serial so results do not depend on thread count.
  dgamma = dy.cwiseProduct(xhat).colwise().sum();
  dbeta = dy.colwise().sum();
}

}  // namespace

template <typename S>
void attention_forward(Exec exec, const Mat<S>& qkv, int group, int heads, const std::uint8_t* key_valid, Mat<S>& out,
                       std::vector<S>& probs) {
  check_attention_shape(qkv, group, heads);
  if (exec == Exec::kReference) {
    attention_forward_ref(qkv, group, heads, key_valid, out, probs);
  } else {
    attention_forward_par(qkv, group, heads, key_valid, out, probs);
  }
}

template <typename S>
void attention_backward(Exec exec, const Mat<S>& qkv, const std::vector<S>& probs, const Mat<S>& d_out, int group,
                        int heads, Mat<S>& d_qkv) {
  check_attention_shape(qkv, group, heads);
  if (exec == Exec::kReference) {
    attention_backward_ref(qkv, probs, d_out, group, heads, d_qkv);
  } else {
    attention_backward_par(qkv, probs, d_out, group, heads, d_qkv);
  }
}

template <typename S>
void layer_norm_forward(Exec exec, const Mat<S>& x, const RowVec<S>& gamma, const RowVec<S>& beta, S eps, Mat<S>& y,
                        Mat<S>& xhat, Vec<S>& rstd) {
  if (exec == Exec::kReference) {
    layer_norm_forward_ref(x, gamma, beta, eps, y, xhat, rstd);
  } else {
    layer_norm_forward_par(x, gamma, beta, eps, y, xhat, rstd);
  }
}

template <typename S>
void layer_norm_backward(Exec exec, const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd, const RowVec<S>& gamma,
                         Mat<S>& dx, RowVec<S>& dgamma, RowVec<S>& dbeta) {
  if (exec == Exec::kReference) {
    layer_norm_backward_ref(dy, xhat, rstd, gamma, dx, dgamma, dbeta);
  } else {
    layer_norm_backward_par(dy, xhat, rstd, gamma, dx, dgamma, dbeta);
  }
}

constexpr Eigen::Index kGeluChunk = 4096;

template <typename S>
void gelu_forward(Exec exec, const Mat<S>& u, Mat<S>& g) {
  g.resize(u.rows(), u.cols());
  const Eigen::Index n = u.size();
  const S* in = u.data();
  S* out = g.data();
  if (exec == Exec::kReference) {
    for (Eigen::Index i = 0; i < n; ++i) out[i] = gelu(in[i]);
    return;
  }
  const S half_sqrt2 = static_cast<S>(std::numbers::sqrt2 / 2);
#pragma omp parallel for schedule(static)
  for (Eigen::Index start = 0; start < n; start += kGeluChunk) {
    const Eigen::Index len = std::min(kGeluChunk, n - start);
    const auto x = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(in + start, len);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(out + start, len) = S(0.5) * x * (S(1) + (x * half_sqrt2).erf());
  }
}

template <typename S>
void gelu_backward(Exec exec, const Mat<S>& u, const Mat<S>& dg, Mat<S>& du) {
  du.resize(u.rows(), u.cols());
  const Eigen::Index n = u.size();
  const S* in = u.data();
  const S* grad = dg.data();
  S* out = du.data();
  if (exec == Exec::kReference) {
    for (Eigen::Index i = 0; i < n; ++i) out[i] = grad[i] * gelu_grad(in[i]);
    return;
  }
  const S half_sqrt2 = static_cast<S>(std::numbers::sqrt2 / 2);
  const S inv_sqrt2pi = static_cast<S>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
#pragma omp parallel for schedule(static)
  for (Eigen::Index start = 0; start < n; start += kGeluChunk) {
    const Eigen::Index len = std::min(kGeluChunk, n - start);
    const auto x = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(in + start, len);
    const auto dy = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(grad + start, len);
    const auto cdf = S(0.5) * (S(1) + (x * half_sqrt2).erf());
    const auto pdf = inv_sqrt2pi * (S(-0.5) * x.square()).exp();
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(out + start, len) = dy * (cdf + x * pdf);
  }
}

#define RUMPL_INSTANTIATE_KERNELS(S)                                                                                 \
  template void attention_forward<S>(Exec, const Mat<S>&, int, int, const std::uint8_t*, Mat<S>&, std::vector<S>&);  \
  template void attention_backward<S>(Exec, const Mat<S>&, const std::vector<S>&, const Mat<S>&, int, int, Mat<S>&); \
  template void layer_norm_forward<S>(Exec, const Mat<S>&, const RowVec<S>&, const RowVec<S>&, S, Mat<S>&, Mat<S>&,   \
                                      Vec<S>&);                                                                      \
  template void layer_norm_backward<S>(Exec, const Mat<S>&, const Mat<S>&, const Vec<S>&, const RowVec<S>&, Mat<S>&,  \
                                       RowVec<S>&, RowVec<S>&);                                                      \
  template void gelu_forward<S>(Exec, const Mat<S>&, Mat<S>&);                                                       \
  template void gelu_backward<S>(Exec, const Mat<S>&, const Mat<S>&, Mat<S>&);

RUMPL_INSTANTIATE_KERNELS(float)
RUMPL_INSTANTIATE_KERNELS(double)

}  // namespace rumpl::kernels
