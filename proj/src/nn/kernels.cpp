#include "timbre/nn/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace timbre::nn {

std::vector<int> tap_offsets(int kernel_size, int dilation, bool causal) {
  require(kernel_size >= 1 && dilation >= 1, "tap_offsets: invalid kernel");
  require(causal || kernel_size % 2 == 1, "tap_offsets: non-causal kernels must be odd");
  std::vector<int> off(kernel_size);
  for (int j = 0; j < kernel_size; ++j) {
    off[j] = causal ? -(kernel_size - 1 - j) * dilation : (j - (kernel_size - 1) / 2) * dilation;
  }
  return off;
}

namespace {

// Frames t of a sequence of length len for which t + off is inside it.
inline std::pair<Index, Index> tap_range(Index len, int off) {
  const Index lo = std::max<Index>(0, -off);
  const Index hi = std::min<Index>(len, len - off);
  return {lo, std::max(lo, hi)};
}

constexpr Index kRowTile = 256;

inline Index n_tiles(Index rows) { return (rows + kRowTile - 1) / kRowTile; }

}  // namespace

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void linear(ConstMatRef<T> x, ConstMatRef<T> w, const T* bias, MatRef<T> y) {
  require(x.cols() == w.rows() && y.rows() == x.rows() && y.cols() == w.cols(),
          "linear: shape mismatch");
  const Index tiles = n_tiles(x.rows());
#pragma omp parallel for schedule(static) if (tiles > 1)
  for (Index tile = 0; tile < tiles; ++tile) {
    const Index r0 = tile * kRowTile;
    const Index n = std::min(kRowTile, x.rows() - r0);
    auto yt = y.middleRows(r0, n);
    yt.noalias() = x.middleRows(r0, n) * w;
    if (bias) {
      Eigen::Map<const RowVec<T>> b(bias, w.cols());
      yt.rowwise() += b;
    }
  }
}

template <typename T>
void linear_input_grad(ConstMatRef<T> dy, ConstMatRef<T> w, MatRef<T> dx, bool accumulate) {
  require(dy.cols() == w.cols() && dx.rows() == dy.rows() && dx.cols() == w.rows(),
          "linear_input_grad: shape mismatch");
  const Index tiles = n_tiles(dy.rows());
#pragma omp parallel for schedule(static) if (tiles > 1)
  for (Index tile = 0; tile < tiles; ++tile) {
    const Index r0 = tile * kRowTile;
    const Index n = std::min(kRowTile, dy.rows() - r0);
    if (accumulate) {
      dx.middleRows(r0, n).noalias() += dy.middleRows(r0, n) * w.transpose();
    } else {
      dx.middleRows(r0, n).noalias() = dy.middleRows(r0, n) * w.transpose();
    }
  }
}

template <typename T>
void linear_param_grad(ConstMatRef<T> x, ConstMatRef<T> dy, MatRef<T> dw, T* dbias) {
  require(x.rows() == dy.rows() && dw.rows() == x.cols() && dw.cols() == dy.cols(),
          "linear_param_grad: shape mismatch");
  // Column strips of dw are independent; each is a full reduction over rows.
  const Index strip = 32;
  const Index strips = (dw.cols() + strip - 1) / strip;
#pragma omp parallel for schedule(static) if (strips > 1 && x.rows() >= kRowTile)
  for (Index s = 0; s < strips; ++s) {
    const Index c0 = s * strip;
    const Index n = std::min(strip, dw.cols() - c0);
    dw.middleCols(c0, n).noalias() += x.transpose() * dy.middleCols(c0, n);
  }
  if (dbias) {
    Eigen::Map<RowVec<T>> db(dbias, dy.cols());
    db += dy.colwise().sum();
  }
}

template <typename T>
void dilated_conv(ConstMatRef<T> x, Index seq_len, ConstMatRef<T> w,
                  std::span<const int> offsets, MatRef<T> y) {
  const Index cin = x.cols();
  require(w.rows() == cin * static_cast<Index>(offsets.size()) && y.cols() == w.cols() &&
              y.rows() == x.rows() && seq_len > 0 && x.rows() % seq_len == 0,
          "dilated_conv: shape mismatch");
  const Index n_seq = x.rows() / seq_len;
#pragma omp parallel for schedule(static) if (n_seq > 1)
  for (Index s = 0; s < n_seq; ++s) {
    const Index base = s * seq_len;
    for (size_t j = 0; j < offsets.size(); ++j) {
      const auto [lo, hi] = tap_range(seq_len, offsets[j]);
      if (hi <= lo) continue;
      y.middleRows(base + lo, hi - lo).noalias() +=
          x.middleRows(base + lo + offsets[j], hi - lo) * w.middleRows(j * cin, cin);
    }
  }
}

template <typename T>
void dilated_conv_input_grad(ConstMatRef<T> dy, Index seq_len, ConstMatRef<T> w,
                             std::span<const int> offsets, MatRef<T> dx) {
  const Index cin = dx.cols();
  require(w.rows() == cin * static_cast<Index>(offsets.size()) && dy.cols() == w.cols() &&
              dy.rows() == dx.rows() && seq_len > 0 && dx.rows() % seq_len == 0,
          "dilated_conv_input_grad: shape mismatch");
  const Index n_seq = dx.rows() / seq_len;
#pragma omp parallel for schedule(static) if (n_seq > 1)
  for (Index s = 0; s < n_seq; ++s) {
    const Index base = s * seq_len;
    for (size_t j = 0; j < offsets.size(); ++j) {
      const auto [lo, hi] = tap_range(seq_len, offsets[j]);
      if (hi <= lo) continue;
      dx.middleRows(base + lo + offsets[j], hi - lo).noalias() +=
          dy.middleRows(base + lo, hi - lo) * w.middleRows(j * cin, cin).transpose();
    }
  }
}

template <typename T>
void dilated_conv_weight_grad(ConstMatRef<T> x, ConstMatRef<T> dy, Index seq_len,
                              std::span<const int> offsets, MatRef<T> dw) {
  const Index cin = x.cols();
  require(dw.rows() == cin * static_cast<Index>(offsets.size()) && dw.cols() == dy.cols() &&
              dy.rows() == x.rows() && seq_len > 0 && x.rows() % seq_len == 0,
          "dilated_conv_weight_grad: shape mismatch");
  const Index n_seq = x.rows() / seq_len;
  const Index taps = static_cast<Index>(offsets.size());
  // One tap per thread; sequences are reduced in order inside it.
#pragma omp parallel for schedule(static) if (taps > 1 && x.rows() >= kRowTile)
  for (Index j = 0; j < taps; ++j) {
    const auto [lo, hi] = tap_range(seq_len, offsets[j]);
    if (hi <= lo) continue;
    auto dwj = dw.middleRows(j * cin, cin);
    for (Index s = 0; s < n_seq; ++s) {
      const Index base = s * seq_len;
      dwj.noalias() += x.middleRows(base + lo + offsets[j], hi - lo).transpose() *
                       dy.middleRows(base + lo, hi - lo);
    }
  }
}

template <typename T>
void gated_unit(ConstMatRef<T> z, MatRef<T> f, MatRef<T> g, MatRef<T> u) {
  const Index r = f.cols();
  require(z.cols() == 2 * r && z.rows() == f.rows() && g.rows() == f.rows() &&
              u.rows() == f.rows() && g.cols() == r && u.cols() == r,
          "gated_unit: shape mismatch");
  const Index tiles = n_tiles(z.rows());
#pragma omp parallel for schedule(static) if (tiles > 1)
  for (Index tile = 0; tile < tiles; ++tile) {
    const Index r0 = tile * kRowTile;
    const Index n = std::min(kRowTile, z.rows() - r0);
    f.middleRows(r0, n) = z.block(r0, 0, n, r).array().tanh().matrix();
    g.middleRows(r0, n) =
        (T(1) / (T(1) + (-z.block(r0, r, n, r).array()).exp())).matrix();
    u.middleRows(r0, n) =
        (f.middleRows(r0, n).array() * g.middleRows(r0, n).array()).matrix();
  }
}

template <typename T>
void gated_unit_grad(ConstMatRef<T> du, ConstMatRef<T> f, ConstMatRef<T> g, MatRef<T> dz) {
  const Index r = f.cols();
  require(dz.cols() == 2 * r && dz.rows() == du.rows() && du.cols() == r,
          "gated_unit_grad: shape mismatch");
  const Index tiles = n_tiles(du.rows());
#pragma omp parallel for schedule(static) if (tiles > 1)
  for (Index tile = 0; tile < tiles; ++tile) {
    const Index r0 = tile * kRowTile;
    const Index n = std::min(kRowTile, du.rows() - r0);
    auto d = du.middleRows(r0, n).array();
    auto ft = f.middleRows(r0, n).array();
    auto gt = g.middleRows(r0, n).array();
    dz.block(r0, 0, n, r) = (d * gt * (T(1) - ft * ft)).matrix();
    dz.block(r0, r, n, r) = (d * ft * gt * (T(1) - gt)).matrix();
  }
}

template <typename T>
void leaky_relu(ConstMatRef<T> x, T alpha, MatRef<T> y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), "leaky_relu: shape mismatch");
  y = x.array().max(alpha * x.array()).matrix();
}

template <typename T>
void leaky_relu_grad(ConstMatRef<T> x, ConstMatRef<T> dy, T alpha, MatRef<T> dx) {
  require(x.rows() == dy.rows() && x.cols() == dy.cols() && dx.rows() == x.rows() &&
              dx.cols() == x.cols(),
          "leaky_relu_grad: shape mismatch");
  dx = (x.array() > T(0)).select(dy.array(), alpha * dy.array()).matrix();
}

}  // namespace kernels

namespace reference {

template <typename T>
void linear(ConstMatRef<T> x, ConstMatRef<T> w, const T* bias, MatRef<T> y) {
  require(x.cols() == w.rows() && y.rows() == x.rows() && y.cols() == w.cols(),
          "linear: shape mismatch");
  for (Index t = 0; t < x.rows(); ++t) {
    for (Index o = 0; o < w.cols(); ++o) {
      T acc = bias ? bias[o] : T(0);
      for (Index i = 0; i < x.cols(); ++i) acc += x(t, i) * w(i, o);
      y(t, o) = acc;
    }
  }
}

template <typename T>
void linear_input_grad(ConstMatRef<T> dy, ConstMatRef<T> w, MatRef<T> dx, bool accumulate) {
  require(dy.cols() == w.cols() && dx.rows() == dy.rows() && dx.cols() == w.rows(),
          "linear_input_grad: shape mismatch");
  for (Index t = 0; t < dy.rows(); ++t) {
    for (Index i = 0; i < w.rows(); ++i) {
      T acc = 0;
      for (Index o = 0; o < w.cols(); ++o) acc += dy(t, o) * w(i, o);
      dx(t, i) = accumulate ? dx(t, i) + acc : acc;
    }
  }
}

template <typename T>
void linear_param_grad(ConstMatRef<T> x, ConstMatRef<T> dy, MatRef<T> dw, T* dbias) {
  require(x.rows() == dy.rows() && dw.rows() == x.cols() && dw.cols() == dy.cols(),
          "linear_param_grad: shape mismatch");
  for (Index i = 0; i < x.cols(); ++i) {
    for (Index o = 0; o < dy.cols(); ++o) {
      T acc = 0;
      for (Index t = 0; t < x.rows(); ++t) acc += x(t, i) * dy(t, o);
      dw(i, o) += acc;
    }
  }
  if (dbias) {
    for (Index o = 0; o < dy.cols(); ++o) {
      T acc = 0;
      for (Index t = 0; t < dy.rows(); ++t) acc += dy(t, o);
      dbias[o] += acc;
    }
  }
}

template <typename T>
void dilated_conv(ConstMatRef<T> x, Index seq_len, ConstMatRef<T> w,
                  std::span<const int> offsets, MatRef<T> y) {
  const Index cin = x.cols();
  require(w.rows() == cin * static_cast<Index>(offsets.size()) && y.cols() == w.cols() &&
              y.rows() == x.rows() && seq_len > 0 && x.rows() % seq_len == 0,
          "dilated_conv: shape mismatch");
  for (Index row = 0; row < x.rows(); ++row) {
    const Index t = row % seq_len;
    for (Index o = 0; o < w.cols(); ++o) {
      T acc = 0;
      for (size_t j = 0; j < offsets.size(); ++j) {
        const Index src = t + offsets[j];
        if (src < 0 || src >= seq_len) continue;
        for (Index i = 0; i < cin; ++i) acc += x(row - t + src, i) * w(j * cin + i, o);
      }
      y(row, o) += acc;
    }
  }
}

template <typename T>
void dilated_conv_input_grad(ConstMatRef<T> dy, Index seq_len, ConstMatRef<T> w,
                             std::span<const int> offsets, MatRef<T> dx) {
  const Index cin = dx.cols();
  require(w.rows() == cin * static_cast<Index>(offsets.size()) && dy.cols() == w.cols() &&
              dy.rows() == dx.rows() && seq_len > 0 && dx.rows() % seq_len == 0,
          "dilated_conv_input_grad: shape mismatch");
  for (Index row = 0; row < dy.rows(); ++row) {
    const Index t = row % seq_len;
    for (size_t j = 0; j < offsets.size(); ++j) {
      const Index src = t + offsets[j];
      if (src < 0 || src >= seq_len) continue;
      for (Index i = 0; i < cin; ++i) {
        T acc = 0;
        for (Index o = 0; o < w.cols(); ++o) acc += dy(row, o) * w(j * cin + i, o);
        dx(row - t + src, i) += acc;
      }
    }
  }
}

template <typename T>
void dilated_conv_weight_grad(ConstMatRef<T> x, ConstMatRef<T> dy, Index seq_len,
                              std::span<const int> offsets, MatRef<T> dw) {
  const Index cin = x.cols();
  require(dw.rows() == cin * static_cast<Index>(offsets.size()) && dw.cols() == dy.cols() &&
              dy.rows() == x.rows() && seq_len > 0 && x.rows() % seq_len == 0,
          "dilated_conv_weight_grad: shape mismatch");
  for (size_t j = 0; j < offsets.size(); ++j) {
    for (Index i = 0; i < cin; ++i) {
      for (Index o = 0; o < dy.cols(); ++o) {
        T acc = 0;
        for (Index row = 0; row < x.rows(); ++row) {
          const Index t = row % seq_len;
          const Index src = t + offsets[j];
          if (src < 0 || src >= seq_len) continue;
          acc += x(row - t + src, i) * dy(row, o);
        }
        dw(j * cin + i, o) += acc;
      }
    }
  }
}

template <typename T>
void gated_unit(ConstMatRef<T> z, MatRef<T> f, MatRef<T> g, MatRef<T> u) {
  const Index r = f.cols();
  require(z.cols() == 2 * r && z.rows() == f.rows(), "gated_unit: shape mismatch");
  for (Index t = 0; t < z.rows(); ++t) {
    for (Index c = 0; c < r; ++c) {
      f(t, c) = std::tanh(z(t, c));
      g(t, c) = T(1) / (T(1) + std::exp(-z(t, r + c)));
      u(t, c) = f(t, c) * g(t, c);
    }
  }
}

template <typename T>
void gated_unit_grad(ConstMatRef<T> du, ConstMatRef<T> f, ConstMatRef<T> g, MatRef<T> dz) {
  const Index r = f.cols();
  require(dz.cols() == 2 * r && dz.rows() == du.rows(), "gated_unit_grad: shape mismatch");
  for (Index t = 0; t < du.rows(); ++t) {
    for (Index c = 0; c < r; ++c) {
      dz(t, c) = du(t, c) * g(t, c) * (T(1) - f(t, c) * f(t, c));
      dz(t, r + c) = du(t, c) * f(t, c) * g(t, c) * (T(1) - g(t, c));
    }
  }
}

template <typename T>
void leaky_relu(ConstMatRef<T> x, T alpha, MatRef<T> y) {
  for (Index t = 0; t < x.rows(); ++t)
    for (Index c = 0; c < x.cols(); ++c) y(t, c) = x(t, c) > T(0) ? x(t, c) : alpha * x(t, c);
}

template <typename T>
void leaky_relu_grad(ConstMatRef<T> x, ConstMatRef<T> dy, T alpha, MatRef<T> dx) {
  for (Index t = 0; t < x.rows(); ++t)
    for (Index c = 0; c < x.cols(); ++c) dx(t, c) = x(t, c) > T(0) ? dy(t, c) : alpha * dy(t, c);
}

}  // namespace reference

#define TIMBRE_INSTANTIATE(NS, T)                                                            \
  template void NS::linear<T>(ConstMatRef<T>, ConstMatRef<T>, const T*, MatRef<T>);          \
  template void NS::linear_input_grad<T>(ConstMatRef<T>, ConstMatRef<T>, MatRef<T>, bool);   \
  template void NS::linear_param_grad<T>(ConstMatRef<T>, ConstMatRef<T>, MatRef<T>, T*);     \
  template void NS::dilated_conv<T>(ConstMatRef<T>, Index, ConstMatRef<T>,                   \
                                    std::span<const int>, MatRef<T>);                        \
  template void NS::dilated_conv_input_grad<T>(ConstMatRef<T>, Index, ConstMatRef<T>,        \
                                               std::span<const int>, MatRef<T>);             \
  template void NS::dilated_conv_weight_grad<T>(ConstMatRef<T>, ConstMatRef<T>, Index,       \
                                                std::span<const int>, MatRef<T>);            \
  template void NS::gated_unit<T>(ConstMatRef<T>, MatRef<T>, MatRef<T>, MatRef<T>);          \
  template void NS::gated_unit_grad<T>(ConstMatRef<T>, ConstMatRef<T>, ConstMatRef<T>,       \
                                       MatRef<T>);                                           \
  template void NS::leaky_relu<T>(ConstMatRef<T>, T, MatRef<T>);                             \
  template void NS::leaky_relu_grad<T>(ConstMatRef<T>, ConstMatRef<T>, T, MatRef<T>);

TIMBRE_INSTANTIATE(kernels, float)
TIMBRE_INSTANTIATE(kernels, double)
TIMBRE_INSTANTIATE(reference, float)
TIMBRE_INSTANTIATE(reference, double)

}  // namespace timbre::nn
