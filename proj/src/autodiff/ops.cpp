#include "kmerspace/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "kmerspace/parallel.hpp"

namespace kmerspace::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  int r = static_cast<int>(rank);
  int ax = axis < 0 ? axis + r : axis;
  if (ax < 0 || ax >= r) shape_fail(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  return static_cast<std::size_t>(ax);
}

template <typename T>
void gemm_rows(std::size_t i0, std::size_t i1, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    T* c0 = C + i * N;
    T* c1 = c0 + N;
    T* c2 = c1 + N;
    T* c3 = c2 + N;
    const T* a0 = A + i * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    for (std::size_t k = 0; k < K; ++k) {
      const T* b = B + k * N;
      const T x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
      for (std::size_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T* b = B + k * N;
      const T x = a[k];
      for (std::size_t j = 0; j < N; ++j) c[j] += x * b[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

// Accumulates g into a parent's gradient. `b_shape` is a suffix of the result shape.
template <typename T>
void reduce_into(std::span<T> dst, std::span<const T> g) {
  const std::size_t inner = dst.size();
  for (std::size_t o = 0; o < g.size(); o += inner)
    for (std::size_t i = 0; i < inner; ++i) dst[i] += g[o + i];
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
          bool accumulate) {
  if (!accumulate) std::fill(C, C + M * N, T(0));
  if (M == 0 || N == 0 || K == 0) return;
  std::vector<T> at, bt;
  if (trans_a) {
    at = transposed(A, K, M);
    A = at.data();
  }
  if (trans_b) {
    bt = transposed(B, N, K);
    B = bt.data();
  }
  if (M * N * K < (1u << 18)) {
    gemm_rows(0, M, N, K, A, B, C);
    return;
  }
  parallel_for(M, 16, [&](std::size_t b, std::size_t e) { gemm_rows(b, e, N, K, A, B, C); });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape()))
    shape_fail("add", "cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  const std::size_t inner = bv.size();
  for (std::size_t o = 0; o < out.size(); o += inner)
    for (std::size_t i = 0; i < inner; ++i) out[o + i] += bv[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [a, b](Node<T>& n) {
    std::span<const T> g = n.grad;
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) reduce_into<T>(b.grad(), g);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape()))
    shape_fail("sub", "cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  const std::size_t inner = bv.size();
  for (std::size_t o = 0; o < out.size(); o += inner)
    for (std::size_t i = 0; i < inner; ++i) out[o + i] -= bv[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [a, b](Node<T>& n) {
    std::span<const T> g = n.grad;
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      const std::size_t inner = gb.size();
      for (std::size_t o = 0; o < g.size(); o += inner)
        for (std::size_t i = 0; i < inner; ++i) gb[i] -= g[o + i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape()))
    shape_fail("mul", "cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  auto av = a.values();
  auto bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < out.size(); o += inner)
    for (std::size_t i = 0; i < inner; ++i) out[o + i] = av[o + i] * bv[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [a, b](Node<T>& n) {
    std::span<const T> g = n.grad;
    auto av = a.values();
    auto bv = b.values();
    const std::size_t inner = bv.size();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t o = 0; o < g.size(); o += inner)
        for (std::size_t i = 0; i < inner; ++i) ga[o + i] += g[o + i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t o = 0; o < g.size(); o += inner)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o + i] * av[o + i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v *= s;
  return make_op<T>("scale", a.shape(), std::move(out), {a}, [a, s](Node<T>& n) {
    auto ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * n.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return make_op<T>("sum", {}, {s}, {a}, [a](Node<T>& n) {
    auto ga = a.grad();
    for (T& v : ga) v += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) shape_fail("mean", "empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<T> out(M * N);
  gemm(false, false, M, N, K, a.values().data(), b.values().data(), out.data(), false);
  return make_op<T>("matmul", {M, N}, std::move(out), {a, b}, [a, b, M, N, K](Node<T>& n) {
    if (a.requires_grad()) gemm(false, true, M, K, N, n.grad.data(), b.values().data(), a.grad().data(), true);
    if (b.requires_grad()) gemm(true, false, K, N, M, a.values().data(), n.grad.data(), b.grad().data(), true);
  });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  if (x.rank() < 1 || W.rank() != 2 || x.shape().back() != W.dim(0))
    shape_fail("dense", "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(W.shape()));
  const std::size_t in = W.dim(0), outw = W.dim(1), M = x.numel() / in;
  if (b.defined() && (b.rank() != 1 || b.dim(0) != outw))
    shape_fail("dense", "bias " + shape_str(b.shape()) + " does not match weight " + shape_str(W.shape()));
  std::vector<T> out(M * outw);
  if (b.defined()) {
    auto bv = b.values();
    for (std::size_t r = 0; r < M; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outw);
  }
  gemm(false, false, M, outw, in, x.values().data(), W.values().data(), out.data(), b.defined());
  Shape shape = x.shape();
  shape.back() = outw;
  return make_op<T>("dense", std::move(shape), std::move(out), {x, W, b}, [x, W, b, M, in, outw](Node<T>& n) {
    const T* g = n.grad.data();
    if (x.requires_grad()) gemm(false, true, M, in, outw, g, W.values().data(), x.grad().data(), true);
    if (W.requires_grad()) gemm(true, false, in, outw, M, x.values().data(), g, W.grad().data(), true);
    if (b.defined() && b.requires_grad()) reduce_into<T>(b.grad(), n.grad);
  });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b, std::size_t stride,
                 std::size_t padding) {
  if (x.rank() != 3 || W.rank() != 3 || x.dim(2) != W.dim(1))
    shape_fail("conv1d", "input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(W.shape()));
  if (stride == 0) shape_fail("conv1d", "stride must be >= 1");
  const std::size_t N = x.dim(0), L = x.dim(1), Cin = x.dim(2), K = W.dim(0), Cout = W.dim(2);
  if (L + 2 * padding < K)
    shape_fail("conv1d", "input length " + std::to_string(L) + " too short for kernel " + std::to_string(K));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout))
    shape_fail("conv1d", "bias " + shape_str(b.shape()) + " does not match " + std::to_string(Cout) + " filters");
  const std::size_t Lout = (L + 2 * padding - K) / stride + 1;
  const std::size_t rows = N * Lout, cols = K * Cin;
  const bool pointwise = K == 1 && padding == 0 && stride == 1;

  auto im2col = [=](std::span<const T> xv) {
    std::vector<T> col(rows * cols, T(0));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < Lout; ++t) {
        T* dst = col.data() + (n * Lout + t) * cols;
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(t * stride + k) - static_cast<long>(padding);
          if (src < 0 || src >= static_cast<long>(L)) continue;
          std::copy_n(xv.data() + (n * L + static_cast<std::size_t>(src)) * Cin, Cin, dst + k * Cin);
        }
      }
    return col;
  };

  std::vector<T> out(rows * Cout);
  if (b.defined()) {
    auto bv = b.values();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * Cout);
  }
  {
    std::vector<T> col;
    const T* colp = x.values().data();
    if (!pointwise) {
      col = im2col(x.values());
      colp = col.data();
    }
    gemm(false, false, rows, Cout, cols, colp, W.values().data(), out.data(), b.defined());
  }
  return make_op<T>(
      "conv1d", {N, Lout, Cout}, std::move(out), {x, W, b},
      [=](Node<T>& n) {
        const T* g = n.grad.data();
        if (W.requires_grad()) {
          std::vector<T> col;
          const T* colp = x.values().data();
          if (!pointwise) {
            col = im2col(x.values());
            colp = col.data();
          }
          gemm(true, false, cols, Cout, rows, colp, g, W.grad().data(), true);
        }
        if (b.defined() && b.requires_grad()) reduce_into<T>(b.grad(), n.grad);
        if (x.requires_grad()) {
          auto gx = x.grad();
          if (pointwise) {
            gemm(false, true, rows, Cin, Cout, g, W.values().data(), gx.data(), true);
            return;
          }
          std::vector<T> dcol(rows * cols);
          gemm(false, true, rows, cols, Cout, g, W.values().data(), dcol.data(), false);
          for (std::size_t nn = 0; nn < N; ++nn)
            for (std::size_t t = 0; t < Lout; ++t) {
              const T* src = dcol.data() + (nn * Lout + t) * cols;
              for (std::size_t k = 0; k < K; ++k) {
                const long pos = static_cast<long>(t * stride + k) - static_cast<long>(padding);
                if (pos < 0 || pos >= static_cast<long>(L)) continue;
                T* dst = gx.data() + (nn * L + static_cast<std::size_t>(pos)) * Cin;
                for (std::size_t c = 0; c < Cin; ++c) dst[c] += src[k * Cin + c];
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() < 1) shape_fail("layer_norm", "scalar input");
  const std::size_t D = x.shape().back();
  if (gamma.numel() != D || beta.numel() != D)
    shape_fail("layer_norm", "gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                                 " do not match last axis of " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / D;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> out(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  auto mu = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = xv.data() + r * D;
    T m = 0;
    for (std::size_t i = 0; i < D; ++i) m += p[i];
    m /= static_cast<T>(D);
    T var = 0;
    for (std::size_t i = 0; i < D; ++i) var += (p[i] - m) * (p[i] - m);
    var /= static_cast<T>(D);
    const T rs = T(1) / std::sqrt(var + eps);
    (*mu)[r] = m;
    (*rstd)[r] = rs;
    T* o = out.data() + r * D;
    for (std::size_t i = 0; i < D; ++i) o[i] = (p[i] - m) * rs * gv[i] + bv[i];
  }
  return make_op<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                    [x, gamma, beta, rstd, mu, rows, D](Node<T>& n) {
                      auto xv = x.values();
                      auto gv = gamma.values();
                      std::span<T> gx, gg, gb;
                      if (x.requires_grad()) gx = x.grad();
                      if (gamma.requires_grad()) gg = gamma.grad();
                      if (beta.requires_grad()) gb = beta.grad();
                      std::vector<T> xhat(D), dxhat(D);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const T* p = xv.data() + r * D;
                        const T* g = n.grad.data() + r * D;
                        const T rs = (*rstd)[r], m = (*mu)[r];
                        T mean_d = 0, mean_dx = 0;
                        for (std::size_t i = 0; i < D; ++i) {
                          xhat[i] = (p[i] - m) * rs;
                          dxhat[i] = g[i] * gv[i];
                          mean_d += dxhat[i];
                          mean_dx += dxhat[i] * xhat[i];
                          if (!gg.empty()) gg[i] += g[i] * xhat[i];
                          if (!gb.empty()) gb[i] += g[i];
                        }
                        if (gx.empty()) continue;
                        mean_d /= static_cast<T>(D);
                        mean_dx /= static_cast<T>(D);
                        T* dx = gx.data() + r * D;
                        for (std::size_t i = 0; i < D; ++i) dx[i] += rs * (dxhat[i] - mean_d - xhat[i] * mean_dx);
                      }
                    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  return make_op<T>("gelu", x.shape(), std::move(out), {x}, [x, inv_sqrt2](Node<T>& n) {
    const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    auto xv = x.values();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      gx[i] += n.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (T(1) + std::exp(-xv[i]));
  return make_op<T>("silu", x.shape(), std::move(out), {x}, [x](Node<T>& n) {
    auto xv = x.values();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-xv[i]));
      gx[i] += n.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.dim(i);
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t D = x.dim(ax);
  auto xv = x.values();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * D * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t d = 0; d < D; ++d) mx = std::max(mx, xv[base + d * inner]);
      T s = 0;
      for (std::size_t d = 0; d < D; ++d) {
        T e = std::exp(xv[base + d * inner] - mx);
        out[base + d * inner] = e;
        s += e;
      }
      for (std::size_t d = 0; d < D; ++d) out[base + d * inner] /= s;
    }
  auto y = std::make_shared<std::vector<T>>(out);
  return make_op<T>("softmax", x.shape(), std::move(out), {x}, [x, y, outer, inner, D](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * D * inner + in;
        T dot = 0;
        for (std::size_t d = 0; d < D; ++d) dot += n.grad[base + d * inner] * (*y)[base + d * inner];
        for (std::size_t d = 0; d < D; ++d) {
          const std::size_t i = base + d * inner;
          gx[i] += (*y)[i] * (n.grad[i] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> avg_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 3) shape_fail("avg_pool1d", "expected (N, L, C), got " + shape_str(x.shape()));
  if (kernel == 0 || stride == 0) shape_fail("avg_pool1d", "kernel and stride must be >= 1");
  const std::size_t N = x.dim(0), L = x.dim(1), C = x.dim(2);
  const std::size_t Lout = L <= kernel ? 1 : (L - kernel + stride - 1) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel);
  auto xv = x.values();
  std::vector<T> out(N * Lout * C, T(0));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < Lout; ++t) {
      T* o = out.data() + (n * Lout + t) * C;
      for (std::size_t j = 0; j < kernel && t * stride + j < L; ++j) {
        const T* p = xv.data() + (n * L + t * stride + j) * C;
        for (std::size_t c = 0; c < C; ++c) o[c] += p[c];
      }
      for (std::size_t c = 0; c < C; ++c) o[c] *= inv;
    }
  return make_op<T>("avg_pool1d", {N, Lout, C}, std::move(out), {x}, [=](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t t = 0; t < Lout; ++t) {
        const T* g = n.grad.data() + (b * Lout + t) * C;
        for (std::size_t j = 0; j < kernel && t * stride + j < L; ++j) {
          T* d = gx.data() + (b * L + t * stride + j) * C;
          for (std::size_t c = 0; c < C; ++c) d[c] += g[c] * inv;
        }
      }
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 3) shape_fail("global_avg_pool", "expected (N, L, C), got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), L = x.dim(1), C = x.dim(2);
  const T inv = T(1) / static_cast<T>(L);
  auto xv = x.values();
  std::vector<T> out(N * C, T(0));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) out[n * C + c] += xv[(n * L + t) * C + c];
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] *= inv;
  }
  return make_op<T>("global_avg_pool", {N, C}, std::move(out), {x}, [=](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < C; ++c) gx[(b * L + t) * C + c] += n.grad[b * C + c] * inv;
  });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps) {
  if (x.rank() < 1) shape_fail("l2_normalize", "scalar input");
  const std::size_t D = x.shape().back(), rows = x.numel() / D;
  auto xv = x.values();
  std::vector<T> out(x.numel());
  auto inv = std::make_shared<std::vector<T>>(rows);
  auto clamped = std::make_shared<std::vector<char>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t i = 0; i < D; ++i) s += xv[r * D + i] * xv[r * D + i];
    (*clamped)[r] = s <= eps;
    const T rn = T(1) / std::sqrt(std::max(s, eps));
    (*inv)[r] = rn;
    for (std::size_t i = 0; i < D; ++i) out[r * D + i] = xv[r * D + i] * rn;
  }
  auto y = std::make_shared<std::vector<T>>(out);
  return make_op<T>("l2_normalize", x.shape(), std::move(out), {x}, [x, y, inv, clamped, rows, D](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = n.grad.data() + r * D;
      const T* yr = y->data() + r * D;
      const T rn = (*inv)[r];
      T dot = 0;
      if (!(*clamped)[r])
        for (std::size_t i = 0; i < D; ++i) dot += g[i] * yr[i];
      for (std::size_t i = 0; i < D; ++i) gx[r * D + i] += rn * (g[i] - yr[i] * dot);
    }
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) shape_fail("embedding_lookup", "table must be 2-D, got " + shape_str(table.shape()));
  const std::size_t V = table.dim(0), D = table.dim(1);
  auto tv = table.values();
  std::vector<T> out(ids.size() * D);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= V)
      shape_fail("embedding_lookup", "id " + std::to_string(ids[r]) + " out of range for table " +
                                         shape_str(table.shape()));
    std::copy_n(tv.data() + ids[r] * D, D, out.data() + r * D);
  }
  return make_op<T>("embedding_lookup", {ids.size(), D}, std::move(out), {table}, [table, ids, D](Node<T>& n) {
    auto gt = table.grad();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t i = 0; i < D; ++i) gt[ids[r] * D + i] += n.grad[r * D + i];
  });
}

// ---------------------------------------------------------------------------
// Attention

template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                           std::size_t prefix) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape())
    shape_fail("masked_attention", "q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                                       shape_str(v.shape()) + " must be equal (B, T, D)");
  const std::size_t B = q.dim(0), Tn = q.dim(1), D = q.dim(2);
  if (heads == 0 || D % heads != 0)
    shape_fail("masked_attention", "model width " + std::to_string(D) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  const std::size_t dh = D / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  auto qv = q.values();
  auto kv = k.values();
  auto vv = v.values();
  // probs[((b*H + h)*T + t)*T + u]; masked entries stay 0.
  auto probs = std::make_shared<std::vector<T>>(B * heads * Tn * Tn, T(0));
  std::vector<T> out(B * Tn * D, T(0));
  auto allowed = [prefix](std::size_t t, std::size_t u) { return u < prefix || u <= t; };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < Tn; ++t) {
        T* p = probs->data() + ((b * heads + h) * Tn + t) * Tn;
        const T* qt = qv.data() + (b * Tn + t) * D + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t u = 0; u < Tn; ++u) {
          if (!allowed(t, u)) continue;
          const T* ku = kv.data() + (b * Tn + u) * D + h * dh;
          T s = 0;
          for (std::size_t i = 0; i < dh; ++i) s += qt[i] * ku[i];
          p[u] = s * sc;
          mx = std::max(mx, p[u]);
        }
        T z = 0;
        for (std::size_t u = 0; u < Tn; ++u) {
          if (!allowed(t, u)) continue;
          p[u] = std::exp(p[u] - mx);
          z += p[u];
        }
        T* o = out.data() + (b * Tn + t) * D + h * dh;
        for (std::size_t u = 0; u < Tn; ++u) {
          if (!allowed(t, u)) continue;
          p[u] /= z;
          const T* vu = vv.data() + (b * Tn + u) * D + h * dh;
          for (std::size_t i = 0; i < dh; ++i) o[i] += p[u] * vu[i];
        }
      }
  return make_op<T>("masked_attention", q.shape(), std::move(out), {q, k, v},
                    [=](Node<T>& n) {
                      auto qv = q.values();
                      auto kv = k.values();
                      auto vv = v.values();
                      std::vector<T> gq(q.numel(), T(0)), gk(k.numel(), T(0)), gv(v.numel(), T(0));
                      std::vector<T> dp(Tn);
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t h = 0; h < heads; ++h)
                          for (std::size_t t = 0; t < Tn; ++t) {
                            const T* p = probs->data() + ((b * heads + h) * Tn + t) * Tn;
                            const T* g = n.grad.data() + (b * Tn + t) * D + h * dh;
                            T dot = 0;
                            for (std::size_t u = 0; u < Tn; ++u) {
                              dp[u] = 0;
                              if (!allowed(t, u)) continue;
                              const T* vu = vv.data() + (b * Tn + u) * D + h * dh;
                              T* gvu = gv.data() + (b * Tn + u) * D + h * dh;
                              for (std::size_t i = 0; i < dh; ++i) {
                                dp[u] += g[i] * vu[i];
                                gvu[i] += p[u] * g[i];
                              }
                              dot += p[u] * dp[u];
                            }
                            const T* qt = qv.data() + (b * Tn + t) * D + h * dh;
                            T* gqt = gq.data() + (b * Tn + t) * D + h * dh;
                            for (std::size_t u = 0; u < Tn; ++u) {
                              if (!allowed(t, u)) continue;
                              const T ds = p[u] * (dp[u] - dot) * sc;
                              const T* ku = kv.data() + (b * Tn + u) * D + h * dh;
                              T* gku = gk.data() + (b * Tn + u) * D + h * dh;
                              for (std::size_t i = 0; i < dh; ++i) {
                                gqt[i] += ds * ku[i];
                                gku[i] += ds * qt[i];
                              }
                            }
                          }
                      auto acc = [](const Tensor<T>& t, const std::vector<T>& g) {
                        if (!t.requires_grad()) return;
                        auto d = t.grad();
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                      };
                      acc(q, gq);
                      acc(k, gk);
                      acc(v, gv);
                    });
}

template <typename T>
Tensor<T> causal_mha(const Tensor<T>& x, const MhaWeights<T>& w, std::size_t heads, std::size_t prefix) {
  Tensor<T> q = dense(x, w.wq, w.bq);
  Tensor<T> k = dense(x, w.wk, w.bk);
  Tensor<T> v = dense(x, w.wv, w.bv);
  return dense(masked_attention(q, k, v, heads, prefix), w.wo, w.bo);
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<std::size_t>& targets) {
  if (probs.rank() != 2 || probs.dim(0) != targets.size())
    shape_fail("cross_entropy", "probabilities " + shape_str(probs.shape()) + " vs " +
                                    std::to_string(targets.size()) + " targets");
  const std::size_t M = probs.dim(0), C = probs.dim(1);
  if (M == 0) shape_fail("cross_entropy", "empty batch");
  const T tiny = std::numeric_limits<T>::min();
  auto pv = probs.values();
  T loss = 0;
  for (std::size_t r = 0; r < M; ++r) {
    if (targets[r] >= C) shape_fail("cross_entropy", "target " + std::to_string(targets[r]) + " >= classes");
    loss -= std::log(std::max(pv[r * C + targets[r]], tiny));
  }
  loss /= static_cast<T>(M);
  return make_op<T>("cross_entropy", {}, {loss}, {probs}, [probs, targets, M, C, tiny](Node<T>& n) {
    auto pv = probs.values();
    auto gp = probs.grad();
    const T g = n.grad[0] / static_cast<T>(M);
    for (std::size_t r = 0; r < M; ++r) {
      const T p = pv[r * C + targets[r]];
      if (p > tiny) gp[r * C + targets[r]] -= g / p;
    }
  });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    shape_fail("mse", "prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  if (pred.numel() == 0) shape_fail("mse", "empty input");
  auto pv = pred.values();
  auto tv = target.values();
  T s = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const T n_inv = T(1) / static_cast<T>(pv.size());
  return make_op<T>("mse", {}, {s * n_inv}, {pred, target}, [pred, target, n_inv](Node<T>& n) {
    auto pv = pred.values();
    auto tv = target.values();
    const T g = n.grad[0] * T(2) * n_inv;
    if (pred.requires_grad()) {
      auto gp = pred.grad();
      for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * (pv[i] - tv[i]);
    }
    if (target.requires_grad()) {
      auto gt = target.grad();
      for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= g * (pv[i] - tv[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& s0 = parts[0].shape();
  const std::size_t ax = norm_axis(axis, s0.size(), "concat");
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == s0[i];
    if (!ok) shape_fail("concat", "shape " + shape_str(s) + " incompatible with " + shape_str(s0));
    total += s[ax];
  }
  Shape shape = s0;
  shape[ax] = total;
  std::vector<T> out(numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(ax) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * total * inner + offset);
    offset += chunk;
  }
  return make_op<T>("concat", std::move(shape), std::move(out), parts, [parts, ax, outer, inner, total](Node<T>& n) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t chunk = p.dim(ax) * inner;
      if (p.requires_grad()) {
        auto gp = p.grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += n.grad[o * total * inner + offset + i];
      }
      offset += chunk;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = norm_axis(axis, x.rank(), "slice");
  if (begin > end || end > x.dim(ax))
    shape_fail("slice", "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for axis of " +
                            std::to_string(x.dim(ax)) + " in " + shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.dim(i);
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t full = x.dim(ax) * inner, chunk = (end - begin) * inner, off = begin * inner;
  Shape shape = x.shape();
  shape[ax] = end - begin;
  std::vector<T> out(outer * chunk);
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(xv.data() + o * full + off, chunk, out.data() + o * chunk);
  return make_op<T>("slice", std::move(shape), std::move(out), {x}, [x, outer, full, chunk, off](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < chunk; ++i) gx[o * full + off + i] += n.grad[o * chunk + i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    shape_fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_op<T>("reshape", std::move(shape), std::move(out), {x}, [x](Node<T>& n) {
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

#define KMERSPACE_INSTANTIATE_OPS(T)                                                                            \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> gelu(const Tensor<T>&);                                                                   \
  template Tensor<T> silu(const Tensor<T>&);                                                                   \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                           \
  template Tensor<T> avg_pool1d(const Tensor<T>&, std::size_t, std::size_t);                                   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                        \
  template Tensor<T> l2_normalize(const Tensor<T>&, T);                                                        \
  template Tensor<T> embedding_lookup(const Tensor<T>&, const std::vector<std::size_t>&);                      \
  template Tensor<T> masked_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                                      std::size_t);                                                            \
  template Tensor<T> causal_mha(const Tensor<T>&, const MhaWeights<T>&, std::size_t, std::size_t);             \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<std::size_t>&);                         \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                               \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

KMERSPACE_INSTANTIATE_OPS(float)
KMERSPACE_INSTANTIATE_OPS(double)

}  // namespace kmerspace::ad
