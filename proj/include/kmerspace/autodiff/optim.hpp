#pragma once

#include <cstdint>
#include <vector>

#include "kmerspace/autodiff/tensor.hpp"
#include "kmerspace/rng.hpp"

namespace kmerspace::ad {

struct AdamWConfig {
  double lr = 0.5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  double weight_decay = 1e-5;
};

/// Moments for a fixed list of parameters; the list order must not change between steps.
struct OptimizerState {
  AdamWConfig config;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer(const std::vector<Tensor<float>>& params, AdamWConfig cfg = {});

/// One AdamW update at learning rate `lr`. Weight decay is decoupled: p -= lr * wd * p.
/// Parameters without an allocated gradient are treated as having zero gradient.
void adamw_step(const std::vector<Tensor<float>>& params, OptimizerState& state, double lr);

/// Linear warmup from 0 to base_lr, then cosine decay to 0 at total_steps.
double cosine_warmup_lr(std::uint64_t step, std::uint64_t warmup_steps, std::uint64_t total_steps, double base_lr);

/// Normal(mean, stddev) resampled until within two standard deviations of the mean.
template <typename T = float>
Tensor<T> init_truncated_normal(Shape shape, Rng& rng, double mean = 0.0, double stddev = 0.05);

/// sqrt of the sum of squared gradients over all parameters.
double global_grad_norm(const std::vector<Tensor<float>>& params);

void zero_grads(const std::vector<Tensor<float>>& params);

}  // namespace kmerspace::ad
