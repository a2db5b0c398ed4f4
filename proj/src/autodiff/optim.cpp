#include "kmerspace/autodiff/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kmerspace::ad {

OptimizerState make_optimizer(const std::vector<Tensor<float>>& params, AdamWConfig cfg) {
  OptimizerState s;
  s.config = cfg;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0f);
    s.v.emplace_back(p.numel(), 0.0f);
  }
  return s;
}

void adamw_step(const std::vector<Tensor<float>>& params, OptimizerState& state, double lr) {
  if (params.size() != state.m.size()) throw std::invalid_argument("optimizer state does not match parameter list");
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const float decay = static_cast<float>(1.0 - lr * c.weight_decay);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(c.eps);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != w.size()) throw std::invalid_argument("optimizer moment shape mismatch");
    const bool has = params[p].has_grad();
    const float* g = has ? params[p].node().grad.data() : nullptr;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = has ? g[i] : 0.0f;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      w[i] *= decay;
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
}

double cosine_warmup_lr(std::uint64_t step, std::uint64_t warmup_steps, std::uint64_t total_steps, double base_lr) {
  if (warmup_steps > total_steps) throw std::invalid_argument("warmup_steps exceeds total_steps");
  if (step > total_steps) throw std::invalid_argument("step beyond total_steps");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
Tensor<T> init_truncated_normal(Shape shape, Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<T> vals(numel(shape));
  for (T& x : vals) {
    double s;
    do {
      s = dist(rng);
    } while (std::abs(s - mean) > 2.0 * stddev);
    x = static_cast<T>(s);
  }
  return Tensor<T>::from(std::move(shape), std::move(vals), true);
}

template Tensor<float> init_truncated_normal<float>(Shape, Rng&, double, double);
template Tensor<double> init_truncated_normal<double>(Shape, Rng&, double, double);

double global_grad_norm(const std::vector<Tensor<float>>& params) {
  double s = 0;
  for (const auto& p : params)
    if (p.has_grad())
      for (float g : p.node().grad) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

void zero_grads(const std::vector<Tensor<float>>& params) {
  for (const auto& p : params) p.zero_grad();
}

}  // namespace kmerspace::ad
