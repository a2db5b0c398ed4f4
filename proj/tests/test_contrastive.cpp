#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/contrastive.hpp"
#include "oracles.hpp"

using namespace kmerspace;
using TD = ad::Tensor<double>;

namespace {

oracle::Matrix random_unit_rows(Rng& rng, std::size_t M, std::size_t D) {
  oracle::Matrix Z(M, std::vector<double>(D));
  for (auto& row : Z) {
    double n = 0;
    for (double& x : row) {
      x = uniform01(rng) * 2 - 1;
      n += x * x;
    }
    for (double& x : row) x /= std::sqrt(n);
  }
  return Z;
}

TD to_tensor(const oracle::Matrix& Z) {
  std::vector<double> v;
  for (const auto& r : Z) v.insert(v.end(), r.begin(), r.end());
  return TD::from({Z.size(), Z[0].size()}, v, true);
}

std::vector<std::size_t> pair_partners(std::size_t M) {
  std::vector<std::size_t> p(M);
  for (std::size_t i = 0; i < M; ++i) p[i] = i ^ 1;
  return p;
}

double loss_of(const oracle::Matrix& Z, const std::vector<std::size_t>& coords, const std::vector<std::size_t>& partner,
               const LossConfig& cfg) {
  auto P = positive_set(coords, partner, cfg);
  return contrastive_loss(to_tensor(Z), P, distance_weights(coords, P, cfg), cfg.tau).item();
}

Genome random_genome(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Genome g{"g", {}, {}};
  for (std::size_t i = 0; i < n; ++i) g.bases.push_back(kBaseChars[uniform_int(rng, 0, 3)]);
  return g;
}

}  // namespace

TEST_CASE("positive sets and weights") {
  LossConfig cfg;
  cfg.gamma = 1000;
  const std::vector<std::size_t> coords{0, 40, 500, 2000};
  auto P = positive_set(coords, pair_partners(4), cfg);
  CHECK(P[0] == std::vector<std::size_t>{1, 2});
  CHECK(P[3].empty());

  cfg.mode = LossMode::self_supervised;
  auto S = positive_set({}, pair_partners(6), cfg);
  for (std::size_t i = 0; i < 6; ++i) CHECK(S[i] == std::vector<std::size_t>{i ^ 1});

  LossConfig w;
  w.gamma = 1000;
  w.weighting = DistanceWeighting::proportional;
  const std::vector<std::size_t> c2{0, 500, 0};
  PositiveSets P2{{1, 2}, {0}, {0}};
  auto W = distance_weights(c2, P2, w);
  CHECK(W[0][0] == doctest::Approx(0.5));
  CHECK(W[0][1] == 0.0);
  w.weighting = DistanceWeighting::inverted;
  CHECK(distance_weights(c2, P2, w)[0][0] == doctest::Approx(0.5));
  CHECK(distance_weights(c2, P2, w)[0][1] == 1.0);
  w.weighting = DistanceWeighting::off;
  CHECK(distance_weights(c2, P2, w)[0][0] == 1.0);
}

TEST_CASE("loss matches the brute-force oracle") {
  Rng rng(2024);
  const double gammas[] = {20, 150, 600, 5000};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t M = 16;
    auto Z = random_unit_rows(rng, M, 6);
    std::vector<std::size_t> coords(M);
    for (std::size_t i = 0; i < M; i += 2) {
      coords[i] = uniform_int(rng, 0, 2000);
      coords[i + 1] = coords[i] + uniform_int(rng, 0, 10);
    }
    LossConfig cfg;
    cfg.gamma = gammas[trial % 4];
    cfg.tau = 0.1 + 0.05 * (trial % 5);
    cfg.weighting = static_cast<DistanceWeighting>(trial % 3);
    const double got = loss_of(Z, coords, pair_partners(M), cfg);
    const double want =
        oracle::contrastive_loss(Z, coords, pair_partners(M), true, cfg.gamma, trial % 3, cfg.tau);
    INFO("trial " << trial);
    CHECK(std::abs(got - want) < 1e-6);
  }
}

TEST_CASE("self-supervised and degenerate cases") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t M = 16;
    auto Z = random_unit_rows(rng, M, 5);
    LossConfig cfg;
    cfg.mode = LossMode::self_supervised;
    const double ss = loss_of(Z, {}, pair_partners(M), cfg);
    CHECK(std::abs(ss - oracle::nt_xent(Z, pair_partners(M), cfg.tau)) < 1e-6);

    // Partners 3 bp apart, pairs 10 kbp apart: the threshold set is just the partner.
    std::vector<std::size_t> coords(M);
    for (std::size_t i = 0; i < M; ++i) coords[i] = (i / 2) * 10000 + (i % 2) * 3;
    LossConfig sup;
    sup.gamma = 100;
    CHECK(std::abs(loss_of(Z, coords, pair_partners(M), sup) - ss) < 1e-6);
  }

  oracle::Matrix two{{1.0, 0.0}, {0.6, 0.8}};
  LossConfig cfg;
  CHECK(std::abs(loss_of(two, {5, 9}, {1, 0}, cfg)) < 1e-6);

  CHECK_THROWS(contrastive_loss(to_tensor(two), {{1}, {0}}, {{1.0}, {1.0}}, 0.0));
  LossConfig bad;
  bad.tau = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("empty positive sets are skipped") {
  Rng rng(5);
  auto Z = random_unit_rows(rng, 4, 3);
  LossConfig cfg;
  cfg.gamma = 1000;
  const std::vector<std::size_t> coords{0, 40, 500, 2000};
  const double got = loss_of(Z, coords, pair_partners(4), cfg);
  CHECK(std::abs(got - oracle::contrastive_loss(Z, coords, pair_partners(4), true, 1000, 0, cfg.tau)) < 1e-9);
}

TEST_CASE("loss is permutation invariant and finite") {
  Rng rng(8);
  const std::size_t M = 12;
  auto Z = random_unit_rows(rng, M, 4);
  std::vector<std::size_t> coords(M);
  for (auto& c : coords) c = uniform_int(rng, 0, 500);
  LossConfig cfg;
  cfg.gamma = 120;
  const double base = loss_of(Z, coords, pair_partners(M), cfg);

  std::vector<std::size_t> perm(M);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> inv(M);
  for (std::size_t i = 0; i < M; ++i) inv[perm[i]] = i;
  oracle::Matrix Zp(M);
  std::vector<std::size_t> cp(M), pp(M);
  for (std::size_t i = 0; i < M; ++i) {
    Zp[i] = Z[perm[i]];
    cp[i] = coords[perm[i]];
    pp[i] = inv[perm[i] ^ 1];
  }
  CHECK(std::abs(loss_of(Zp, cp, pp, cfg) - base) < 1e-6);

  cfg.tau = 0.01;
  CHECK(std::isfinite(loss_of(Z, coords, pair_partners(M), cfg)));
}

TEST_CASE("batch construction") {
  Genome g = random_genome(1, 1000);
  AugmentConfig aug;
  Rng rng(3);
  auto b = build_batch(&g, aug, 2, LossMode::supervised, rng);
  CHECK(b.size() == 4);
  CHECK(b.coords.size() == 4);
  CHECK(b.partner == std::vector<std::size_t>{1, 0, 3, 2});
  for (std::size_t i = 0; i < 4; i += 2) CHECK(b.coords[i + 1] - b.coords[i] <= aug.d);

  Rng r1(9), r2(9);
  auto b1 = build_batch(&g, aug, 8, LossMode::supervised, r1);
  auto b2 = build_batch(&g, aug, 8, LossMode::supervised, r2);
  CHECK(b1.x == b2.x);
  CHECK(b1.coords == b2.coords);

  ReadSet reads = simulate_reads(g, 20, DamageConfig::noiseless(150), 4);
  auto sb = build_batch(&reads, aug, 8, LossMode::self_supervised, rng);
  CHECK(sb.size() == 16);
  CHECK(sb.coords.empty());
  CHECK_THROWS(build_batch(&reads, aug, 8, LossMode::supervised, rng));

  ReadSet shorts = simulate_reads(g, 5, DamageConfig::noiseless(30), 4);
  CHECK_THROWS(build_batch(&shorts, aug, 2, LossMode::self_supervised, rng));
}

TEST_CASE("encoder training bookkeeping") {
  Genome g = random_genome(2, 600);
  EncoderConfig ec = EncoderConfig::nano();
  LossConfig lc;
  lc.gamma = 200;
  TrainConfig tc;
  tc.batch_pairs = 4;
  tc.iterations = 0;
  auto r0 = train_encoder(&g, ec, lc, AugmentConfig{}, tc);
  Rng init(derive_seed(tc.seed, "encoder-init"));
  EncoderModel fresh(ec, init);
  CHECK(r0.model.to_checkpoint() == fresh.to_checkpoint());
  CHECK(r0.history.empty());

  tc.iterations = 3;
  tc.warmup = 1;
  auto a = train_encoder(&g, ec, lc, AugmentConfig{}, tc);
  auto b = train_encoder(&g, ec, lc, AugmentConfig{}, tc);
  REQUIRE(a.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.history[i].loss == b.history[i].loss);
  CHECK(a.model.to_checkpoint() == b.model.to_checkpoint());
  CHECK_FALSE(a.model.to_checkpoint() == fresh.to_checkpoint());
}
