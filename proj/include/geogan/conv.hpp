#pragma once

// Dense 2-D convolution kernels (im2col + GEMM) shared by the forward and
// backward rules of conv2d and transposed conv2d. All planes are CHW.

#include <Eigen/Core>

#include "geogan/tensor.hpp"

namespace geogan::conv {

struct Conv2dGeom {
  int in_ch = 0, in_h = 0, in_w = 0;
  int out_ch = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;

  int out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }

  void check() const {
    if (stride < 1 || pad < 0 || kh < 1 || kw < 1)
      throw ValidationError("conv: bad kernel geometry");
    if (in_h + 2 * pad < kh || in_w + 2 * pad < kw)
      throw ValidationError("conv: kernel larger than padded input");
  }
};

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// x {C,H,W} -> cols {C*kh*kw, out_h*out_w}, zero padding.
template <typename T>
void im2col(const T* x, const Conv2dGeom& g, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  const std::int64_t patch = static_cast<std::int64_t>(oh) * ow;
  for (int c = 0; c < g.in_ch; ++c) {
    const T* plane = x + static_cast<std::int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = cols + (static_cast<std::int64_t>(c) * g.kh * g.kw +
                         static_cast<std::int64_t>(ky) * g.kw + kx) *
                            patch;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(row, row + ow, T(0));
            row += ow;
            continue;
          }
          const T* src = plane + static_cast<std::int64_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            *row++ = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
  }
}

// Adjoint of im2col: scatter-add cols back into x (x must be zeroed first).
template <typename T>
void col2im(const T* cols, const Conv2dGeom& g, T* x) {
  const int oh = g.out_h(), ow = g.out_w();
  const std::int64_t patch = static_cast<std::int64_t>(oh) * ow;
  for (int c = 0; c < g.in_ch; ++c) {
    T* plane = x + static_cast<std::int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + (static_cast<std::int64_t>(c) * g.kh * g.kw +
                               static_cast<std::int64_t>(ky) * g.kw + kx) *
                                  patch;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            row += ow;
            continue;
          }
          T* dst = plane + static_cast<std::int64_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += *row;
            ++row;
          }
        }
      }
  }
}

// y {O, oh*ow} = w {O, C*kh*kw} x cols; optional bias {O}.
template <typename T>
void forward(const T* x, const T* w, const T* bias, const Conv2dGeom& g, T* y) {
  g.check();
  const std::int64_t ckk = static_cast<std::int64_t>(g.in_ch) * g.kh * g.kw;
  const std::int64_t patch = static_cast<std::int64_t>(g.out_h()) * g.out_w();
  std::vector<T> cols(static_cast<std::size_t>(ckk * patch));
  im2col(x, g, cols.data());
  Eigen::Map<const MatRM<T>> wm(w, g.out_ch, ckk);
  Eigen::Map<const MatRM<T>> cm(cols.data(), ckk, patch);
  Eigen::Map<MatRM<T>> ym(y, g.out_ch, patch);
  ym.noalias() = wm * cm;
  if (bias)
    for (int o = 0; o < g.out_ch; ++o) ym.row(o).array() += bias[o];
}

// dx = w^T dy scattered back through the patch geometry.
template <typename T>
void backward_input(const T* dy, const T* w, const Conv2dGeom& g, T* dx_accum) {
  const std::int64_t ckk = static_cast<std::int64_t>(g.in_ch) * g.kh * g.kw;
  const std::int64_t patch = static_cast<std::int64_t>(g.out_h()) * g.out_w();
  std::vector<T> dcols(static_cast<std::size_t>(ckk * patch));
  Eigen::Map<const MatRM<T>> wm(w, g.out_ch, ckk);
  Eigen::Map<const MatRM<T>> dym(dy, g.out_ch, patch);
  Eigen::Map<MatRM<T>> dcm(dcols.data(), ckk, patch);
  dcm.noalias() = wm.transpose() * dym;
  std::vector<T> dx(static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w, T(0));
  col2im(dcols.data(), g, dx.data());
  for (std::size_t i = 0; i < dx.size(); ++i) dx_accum[i] += dx[i];
}

// dw += dy cols^T; db += row sums of dy.
template <typename T>
void backward_weight(const T* dy, const T* x, const Conv2dGeom& g, T* dw_accum,
                     T* db_accum) {
  const std::int64_t ckk = static_cast<std::int64_t>(g.in_ch) * g.kh * g.kw;
  const std::int64_t patch = static_cast<std::int64_t>(g.out_h()) * g.out_w();
  std::vector<T> cols(static_cast<std::size_t>(ckk * patch));
  im2col(x, g, cols.data());
  Eigen::Map<const MatRM<T>> dym(dy, g.out_ch, patch);
  Eigen::Map<const MatRM<T>> cm(cols.data(), ckk, patch);
  Eigen::Map<MatRM<T>> dwm(dw_accum, g.out_ch, ckk);
  dwm.noalias() += dym * cm.transpose();
  if (db_accum)
    for (int o = 0; o < g.out_ch; ++o)
      db_accum[o] += dym.row(o).sum();
}

}  // namespace geogan::conv
