#pragma once

#include <cstdint>
#include <vector>

#include "rumpl/tensor.hpp"

// Token-parallel kernels of the encoder. Every kernel has a plain-loop
// reference version and an OpenMP version that parallelizes over independent
// rows or attention groups; both produce the same values up to rounding.
namespace rumpl::kernels {

enum class Exec { kReference, kParallel };

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS. Forward passes allocate many short-lived matrices above glibc's
/// mmap threshold; without this every pass pays fresh page faults. No-op on
/// other C libraries. Idempotent.
void tune_allocator();

/// Multi-head self-attention inside consecutive groups of `group` rows.
/// `qkv` is T×3D with Q, K and V side by side; heads split D evenly.
/// `key_valid`, when non-null, holds T flags; masked keys get zero weight.
/// `probs` receives the softmax weights, laid out [group][head][query][key].
template <typename S>
void attention_forward(Exec exec, const Mat<S>& qkv, int group, int heads, const std::uint8_t* key_valid,
                       Mat<S>& out, std::vector<S>& probs);

template <typename S>
void attention_backward(Exec exec, const Mat<S>& qkv, const std::vector<S>& probs, const Mat<S>& d_out, int group,
                        int heads, Mat<S>& d_qkv);

template <typename S>
void layer_norm_forward(Exec exec, const Mat<S>& x, const RowVec<S>& gamma, const RowVec<S>& beta, S eps, Mat<S>& y,
                        Mat<S>& xhat, Vec<S>& rstd);

/// Writes dx; returns parameter gradients through dgamma/dbeta (overwritten).
template <typename S>
void layer_norm_backward(Exec exec, const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd, const RowVec<S>& gamma,
                         Mat<S>& dx, RowVec<S>& dgamma, RowVec<S>& dbeta);

/// Exact (erf) GELU.
template <typename S>
void gelu_forward(Exec exec, const Mat<S>& u, Mat<S>& g);

template <typename S>
void gelu_backward(Exec exec, const Mat<S>& u, const Mat<S>& dg, Mat<S>& du);

}  // namespace rumpl::kernels
