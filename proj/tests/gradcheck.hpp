#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/rng.hpp"

namespace gradcheck {

using TD = kmerspace::ad::Tensor<double>;
using Fn = std::function<TD(const std::vector<TD>&)>;

inline TD random_tensor(kmerspace::ad::Shape shape, kmerspace::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(kmerspace::ad::numel(shape));
  for (double& x : v) x = lo + (hi - lo) * kmerspace::uniform01(rng);
  return TD::from(std::move(shape), std::move(v), true);
}

/// Reduces an op output to a scalar with fixed random weights so every output element
/// contributes to the checked gradient.
inline Fn projected(std::function<TD(const std::vector<TD>&)> op, std::uint64_t seed) {
  return [op, seed](const std::vector<TD>& in) {
    TD y = op(in);
    if (y.numel() == 1) return kmerspace::ad::reshape(y, {});
    kmerspace::Rng rng(seed);
    TD w = random_tensor(y.shape(), rng);
    w.set_requires_grad(false);
    return kmerspace::ad::sum(kmerspace::ad::mul(y, w));
  };
}

/// max |analytic - numeric| / max(max |analytic|, max |numeric|) over all inputs
/// that require a gradient, using central differences.
inline double max_relative_error(const Fn& f, const std::vector<TD>& inputs, double h = 1e-3) {
  for (const auto& t : inputs)
    if (t.requires_grad()) t.zero_grad();
  TD y = f(inputs);
  y.backward();
  double max_diff = 0, max_a = 0, max_n = 0;
  for (const auto& t : inputs) {
    if (!t.requires_grad()) continue;
    auto v = t.values();
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      double fp, fm;
      {
        kmerspace::ad::NoGradGuard g;
        v[i] = orig + h;
        fp = f(inputs).item();
        v[i] = orig - h;
        fm = f(inputs).item();
      }
      v[i] = orig;
      const double num = (fp - fm) / (2 * h);
      max_diff = std::max(max_diff, std::abs(num - analytic[i]));
      max_a = std::max(max_a, std::abs(analytic[i]));
      max_n = std::max(max_n, std::abs(num));
    }
  }
  const double denom = std::max(max_a, max_n);
  return denom > 0 ? max_diff / denom : max_diff;
}

struct OpCase {
  std::string name;
  std::function<std::vector<TD>(kmerspace::Rng&)> make_inputs;
  std::function<TD(const std::vector<TD>&)> op;
};

std::vector<OpCase> all_op_cases();

}  // namespace gradcheck
