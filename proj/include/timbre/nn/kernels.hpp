#pragma once

// Dense compute kernels used by the convolutional blocks.
//
// Two implementations share one signature set: `kernels::` is the production
// path (Eigen GEMM micro-kernels, OpenMP over sequences / row tiles / taps)
// and `reference::` is a plain serial loop nest kept as the test oracle and
// benchmark baseline. Every output element of the parallel path is owned by
// exactly one thread and summed in a fixed order, so results do not depend
// on the thread count.
//
// Conventions: activations are frame-major [frames x channels] with sequences
// of length `seq_len` stacked along rows. A dilated convolution weight is
// [taps * in_channels x out_channels]; tap j reads input frame t + offsets[j]
// and reads zero outside the owning sequence.

#include "timbre/nn/tensor.hpp"

#include <span>

namespace timbre::nn {

template <typename T>
using MatRef = Eigen::Ref<Mat<T>>;
template <typename T>
using ConstMatRef = Eigen::Ref<const Mat<T>>;

#define TIMBRE_KERNEL_DECLS                                                              \
  /* y = x w (+ bias) */                                                                 \
  template <typename T>                                                                  \
  void linear(ConstMatRef<T> x, ConstMatRef<T> w, const T* bias, MatRef<T> y);           \
  /* dx (+)= dy w^T */                                                                   \
  template <typename T>                                                                  \
  void linear_input_grad(ConstMatRef<T> dy, ConstMatRef<T> w, MatRef<T> dx,              \
                         bool accumulate);                                               \
  /* dw += x^T dy, dbias += colsum(dy) */                                                \
  template <typename T>                                                                  \
  void linear_param_grad(ConstMatRef<T> x, ConstMatRef<T> dy, MatRef<T> dw, T* dbias);   \
  /* y += sum_j x[t + off_j] w_j */                                                      \
  template <typename T>                                                                  \
  void dilated_conv(ConstMatRef<T> x, Index seq_len, ConstMatRef<T> w,                   \
                    std::span<const int> offsets, MatRef<T> y);                          \
  template <typename T>                                                                  \
  void dilated_conv_input_grad(ConstMatRef<T> dy, Index seq_len, ConstMatRef<T> w,       \
                               std::span<const int> offsets, MatRef<T> dx);              \
  template <typename T>                                                                  \
  void dilated_conv_weight_grad(ConstMatRef<T> x, ConstMatRef<T> dy, Index seq_len,      \
                                std::span<const int> offsets, MatRef<T> dw);             \
  /* z = [zf | zg]: f = tanh(zf), g = sigmoid(zg), u = f * g */                          \
  template <typename T>                                                                  \
  void gated_unit(ConstMatRef<T> z, MatRef<T> f, MatRef<T> g, MatRef<T> u);              \
  template <typename T>                                                                  \
  void gated_unit_grad(ConstMatRef<T> du, ConstMatRef<T> f, ConstMatRef<T> g,            \
                       MatRef<T> dz);                                                    \
  template <typename T>                                                                  \
  void leaky_relu(ConstMatRef<T> x, T alpha, MatRef<T> y);                               \
  /* dx = dy * leaky'(x), x is the pre-activation */                                     \
  template <typename T>                                                                  \
  void leaky_relu_grad(ConstMatRef<T> x, ConstMatRef<T> dy, T alpha, MatRef<T> dx);

namespace kernels {
TIMBRE_KERNEL_DECLS
// Threads the parallel kernels may use (OpenMP max threads, or 1).
int max_threads();
}  // namespace kernels

namespace reference {
TIMBRE_KERNEL_DECLS
}  // namespace reference

#undef TIMBRE_KERNEL_DECLS

// Tap offsets of a dilated convolution. Causal kernels read frames
// t - (k-1)d .. t; non-causal kernels (odd k) are centered on t.
std::vector<int> tap_offsets(int kernel_size, int dilation, bool causal);

}  // namespace timbre::nn
