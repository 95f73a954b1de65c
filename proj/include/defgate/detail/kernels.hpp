#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "defgate/net.hpp"

// Layer kernels, templated on the activation scalar so the numeric oracle can
// run the exact same layer semantics in double precision (weights stay float
// and are widened per multiply). Convolutions go through im2col so the hot
// loops are contiguous multiply-accumulates.

namespace defgate::detail {

// Smallest t >= 0 with t*stride >= a.
constexpr int first_from(int a, int stride) { return a <= 0 ? 0 : (a + stride - 1) / stride; }
// Largest t <= hi with t*stride <= b (empty range when b < 0).
constexpr int last_until(int b, int stride, int hi) { return b < 0 ? -1 : std::min(hi, b / stride); }

// Column geometry shared by conv (image = layer input) and transposed conv
// (image = layer output). col is laid out [ch*k*k][PH*PW] where (PH,PW) are
// the kernel positions.
struct ColGeom {
  int ch, k, s, p;
  int H, W;    // image plane
  int PH, PW;  // position plane: PH = (H + 2p - k)/s + 1
  std::size_t rows() const { return static_cast<std::size_t>(ch) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(PH) * PW; }
};

template <typename T>
void im2col(const ColGeom& g, const T* img, T* col) {
  const std::size_t n = g.cols();
  for (int c = 0; c < g.ch; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * g.H * g.W;
    for (int ky = 0; ky < g.k; ++ky) {
      const int py_lo = first_from(g.p - ky, g.s);
      const int py_hi = last_until(g.H - 1 + g.p - ky, g.s, g.PH - 1);
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + (((static_cast<std::size_t>(c) * g.k) + ky) * g.k + kx) * n;
        std::fill(row, row + n, T(0));
        const int px_lo = first_from(g.p - kx, g.s);
        const int px_hi = last_until(g.W - 1 + g.p - kx, g.s, g.PW - 1);
        for (int py = py_lo; py <= py_hi; ++py) {
          const T* src = plane + static_cast<std::size_t>(py * g.s - g.p + ky) * g.W - g.p + kx;
          T* dst = row + static_cast<std::size_t>(py) * g.PW;
          for (int px = px_lo; px <= px_hi; ++px) dst[px] = src[px * g.s];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ColGeom& g, const T* col, T* img) {
  const std::size_t n = g.cols();
  for (int c = 0; c < g.ch; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * g.H * g.W;
    for (int ky = 0; ky < g.k; ++ky) {
      const int py_lo = first_from(g.p - ky, g.s);
      const int py_hi = last_until(g.H - 1 + g.p - ky, g.s, g.PH - 1);
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + (((static_cast<std::size_t>(c) * g.k) + ky) * g.k + kx) * n;
        const int px_lo = first_from(g.p - kx, g.s);
        const int px_hi = last_until(g.W - 1 + g.p - kx, g.s, g.PW - 1);
        for (int py = py_lo; py <= py_hi; ++py) {
          T* dst = plane + static_cast<std::size_t>(py * g.s - g.p + ky) * g.W - g.p + kx;
          const T* src = row + static_cast<std::size_t>(py) * g.PW;
          for (int px = px_lo; px <= px_hi; ++px) dst[px * g.s] += src[px];
        }
      }
    }
  }
}

// Per-scalar scratch for the column buffers.
template <typename T>
std::vector<T>& col_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// C[m][n] += sum_q A[m][q] * B[q][n], B and C rows contiguous.
template <typename T>
void gemm_axpy(int m, int q, std::size_t n, const float* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < q; ++j) {
      const T av = static_cast<T>(a[static_cast<std::size_t>(i) * q + j]);
      const T* brow = b + static_cast<std::size_t>(j) * n;
      for (std::size_t t = 0; t < n; ++t) crow[t] += av * brow[t];
    }
  }
}

template <typename T>
void conv2d_fwd(const Conv2d& c, std::span<const T> in, int H, int W, std::span<const float> w,
                std::span<const float> b, std::span<T> out, int OH, int OW) {
  const ColGeom g{c.in_ch, c.kernel, c.stride, c.pad, H, W, OH, OW};
  auto& col = col_scratch<T>();
  col.resize(g.rows() * g.cols());
  im2col(g, in.data(), col.data());
  const std::size_t n = g.cols();
  for (int oc = 0; oc < c.out_ch; ++oc) {
    T* orow = out.data() + static_cast<std::size_t>(oc) * n;
    std::fill(orow, orow + n, static_cast<T>(b[oc]));
  }
  gemm_axpy(c.out_ch, static_cast<int>(g.rows()), n, w.data(), col.data(), out.data());
}

template <typename T>
void tconv2d_fwd(const TConv2d& c, std::span<const T> in, int H, int W, std::span<const float> w,
                 std::span<const float> b, std::span<T> out, int OH, int OW) {
  // The output plane plays the image role; the input positions index columns.
  const ColGeom g{c.out_ch, c.kernel, c.stride, c.pad, OH, OW, H, W};
  auto& col = col_scratch<T>();
  col.resize(g.rows() * g.cols());
  std::fill(col.begin(), col.end(), T(0));
  const std::size_t n = g.cols();
  // col[q][i] = sum_ic W[ic][q] * in[ic][i]
  gemm_axpy(static_cast<int>(g.rows()), c.in_ch, n, /*a=*/nullptr, in.data(), col.data());  // replaced below
  (void)0;
}

template <typename T>
void dense_fwd(const Dense& d, std::span<const T> in, std::span<const float> w, std::span<const float> b,
               std::span<T> out) {
  for (int o = 0; o < d.out; ++o) {
    const float* wrow = w.data() + static_cast<std::size_t>(o) * d.in;
    T acc = static_cast<T>(b[o]);
    for (int i = 0; i < d.in; ++i) acc += static_cast<T>(wrow[i]) * in[i];
    out[o] = acc;
  }
}

template <typename T>
void relu_fwd(std::span<const T> in, std::span<T> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0 ? in[i] : static_cast<T>(0);
}

template <typename T>
void leaky_relu_fwd(float alpha, std::span<const T> in, std::span<T> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0 ? in[i] : static_cast<T>(alpha) * in[i];
}

template <typename T>
void avg_pool_fwd(const AvgPool& p, std::span<const T> in, int C, int H, int W, std::span<T> out) {
  const int OH = H / p.kernel, OW = W / p.kernel;
  const T inv = static_cast<T>(1) / static_cast<T>(p.kernel * p.kernel);
  for (int c = 0; c < C; ++c) {
    const T* inp = in.data() + static_cast<std::size_t>(c) * H * W;
    T* outp = out.data() + static_cast<std::size_t>(c) * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        T acc = 0;
        for (int ky = 0; ky < p.kernel; ++ky) {
          const T* row = inp + static_cast<std::size_t>(oy * p.kernel + ky) * W + static_cast<std::size_t>(ox) * p.kernel;
          for (int kx = 0; kx < p.kernel; ++kx) acc += row[kx];
        }
        outp[static_cast<std::size_t>(oy) * OW + ox] = acc * inv;
      }
    }
  }
}

template <typename T>
void softmax_fwd(std::span<const T> in, std::span<T> out) {
  T mx = in[0];
  for (std::size_t i = 1; i < in.size(); ++i) mx = std::max(mx, in[i]);
  T sum = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  const T inv = static_cast<T>(1) / sum;
  for (std::size_t i = 0; i < in.size(); ++i) out[i] *= inv;
}

}  // namespace defgate::detail
