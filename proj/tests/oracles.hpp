#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

// Straightforward reference implementations used to check the production code.
namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Coordinate-thresholded contrastive loss written directly as nested loops without
/// any stabilization. weighting: 0 off, 1 |dc|/gamma, 2 1 - |dc|/gamma.
inline double contrastive_loss(const Matrix& Z, const std::vector<std::size_t>& coords,
                               const std::vector<std::size_t>& partner, bool supervised, double gamma,
                               int weighting, double tau) {
  const std::size_t M = Z.size();
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t t = 0; t < Z[a].size(); ++t) s += Z[a][t] * Z[b][t];
    return s;
  };
  double total = 0;
  int contributing = 0;
  for (std::size_t i = 0; i < M; ++i) {
    double denom = 0;
    for (std::size_t a = 0; a < M; ++a)
      if (a != i) denom += std::exp(dot(i, a) / tau);
    double sum = 0;
    int count = 0;
    for (std::size_t p = 0; p < M; ++p) {
      if (p == i) continue;
      bool positive;
      double w = 1;
      if (supervised) {
        const double gap = std::fabs(static_cast<double>(coords[i]) - static_cast<double>(coords[p]));
        positive = gap <= gamma;
        if (weighting == 1) w = gap / gamma;
        if (weighting == 2) w = 1 - gap / gamma;
      } else {
        positive = partner[i] == p;
      }
      if (!positive) continue;
      ++count;
      sum += w * std::log(std::exp(dot(i, p) / tau) / denom);
    }
    if (count == 0) continue;
    ++contributing;
    total += -sum / count;
  }
  return total / contributing;
}

/// NT-Xent on partner pairs, written independently of the thresholded form.
inline double nt_xent(const Matrix& Z, const std::vector<std::size_t>& partner, double tau) {
  const std::size_t M = Z.size();
  double total = 0;
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> logits;
    double pos = 0;
    for (std::size_t a = 0; a < M; ++a) {
      if (a == i) continue;
      double s = 0;
      for (std::size_t t = 0; t < Z[i].size(); ++t) s += Z[i][t] * Z[a][t];
      logits.push_back(s / tau);
      if (a == partner[i]) pos = s / tau;
    }
    double lse = 0;
    for (double l : logits) lse += std::exp(l);
    total += std::log(lse) - pos;
  }
  return total / static_cast<double>(M);
}

/// Number of positions where two equal-length strings agree.
inline std::size_t match_count(const std::string& a, const std::string& b, std::size_t offset) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == b[offset + i]) ++n;
  return n;
}

}  // namespace oracle
