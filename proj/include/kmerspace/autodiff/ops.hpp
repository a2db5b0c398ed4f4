#pragma once

#include <cstddef>
#include <vector>

#include "kmerspace/autodiff/tensor.hpp"

// Differentiable operators. Sequence tensors are channels-last: (batch, length, channels).
// Every op validates shapes and throws ShapeError naming the op and the offending shapes.

namespace kmerspace::ad {

/// C (+)= op(A) * op(B); A is MxK (KxM if trans_a), B is KxN (NxK if trans_b). Row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
          bool accumulate);

/// Elementwise sum. `b` may match `a` or a trailing suffix of its shape (broadcast over leading dims).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise product with the same broadcasting rule as add.
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x(..., in) * W(in, out) + b(out). `b` may be undefined.
template <typename T> Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b);

/// x(N, L, Cin), W(K, Cin, Cout), b(Cout) -> (N, (L + 2*padding - K)/stride + 1, Cout). Zero padding.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b, std::size_t stride, std::size_t padding);

/// Normalizes over the last axis, then gamma * xhat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Exact (erf) GeLU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);

/// Softmax along `axis`; negative axis counts from the end.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// Average pooling over the length axis of (N, L, C). Output length is
/// ceil((L - kernel) / stride) + 1; windows running past the end see zeros.
template <typename T> Tensor<T> avg_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride);

/// (N, L, C) -> (N, C).
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

/// x * rsqrt(max(sum(x^2), eps)) along the last axis.
template <typename T> Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12));

/// table(V, D), ids -> (ids.size(), D).
template <typename T> Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::size_t>& ids);

/// Scaled dot-product attention over (B, T, D) with `heads` heads. Position t attends to
/// position u when u < prefix or u <= t: the first `prefix` tokens see each other fully
/// and nothing after them; later tokens see the prefix and earlier tokens only.
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                           std::size_t prefix);

template <typename T>
struct MhaWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;  // (D, D) and (D)
};

/// Multi-head self-attention with the prefix-causal mask of masked_attention.
template <typename T>
Tensor<T> causal_mha(const Tensor<T>& x, const MhaWeights<T>& w, std::size_t heads, std::size_t prefix);

/// Mean over rows of -log p[row, target]. probs is (M, C).
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<std::size_t>& targets);

/// Mean squared error.
template <typename T> Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

}  // namespace kmerspace::ad
