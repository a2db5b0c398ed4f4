#include "kmerspace/contrastive.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/autodiff/optim.hpp"

namespace kmerspace {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature tau must be > 0");
  if (mode == LossMode::supervised && !(gamma > 0.0)) throw std::invalid_argument("threshold gamma must be > 0");
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "supervised") return LossMode::supervised;
  if (s == "selfsup" || s == "self_supervised" || s == "self-supervised") return LossMode::self_supervised;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected supervised or selfsup)");
}

std::string to_string(LossMode m) { return m == LossMode::supervised ? "supervised" : "selfsup"; }

DistanceWeighting parse_weighting(const std::string& s) {
  if (s == "off") return DistanceWeighting::off;
  if (s == "proportional") return DistanceWeighting::proportional;
  if (s == "inverted") return DistanceWeighting::inverted;
  throw std::invalid_argument("unknown distance weighting '" + s + "' (expected off, proportional or inverted)");
}

std::string to_string(DistanceWeighting w) {
  switch (w) {
    case DistanceWeighting::proportional: return "proportional";
    case DistanceWeighting::inverted: return "inverted";
    default: return "off";
  }
}

PositiveSets positive_set(const std::vector<std::size_t>& coords, const std::vector<std::size_t>& partner,
                          const LossConfig& cfg) {
  const std::size_t M = partner.size();
  PositiveSets P(M);
  if (cfg.mode == LossMode::self_supervised) {
    for (std::size_t i = 0; i < M; ++i) P[i] = {partner[i]};
    return P;
  }
  if (coords.size() != M) throw std::invalid_argument("supervised positive sets need one coordinate per sample");
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t p = 0; p < M; ++p) {
      if (p == i) continue;
      const double gap = std::abs(static_cast<double>(coords[i]) - static_cast<double>(coords[p]));
      if (gap <= cfg.gamma) P[i].push_back(p);
    }
  return P;
}

std::vector<std::vector<double>> distance_weights(const std::vector<std::size_t>& coords, const PositiveSets& P,
                                                  const LossConfig& cfg) {
  std::vector<std::vector<double>> w(P.size());
  const bool unit = cfg.mode == LossMode::self_supervised || cfg.weighting == DistanceWeighting::off;
  for (std::size_t i = 0; i < P.size(); ++i) {
    w[i].reserve(P[i].size());
    for (std::size_t p : P[i]) {
      if (unit) {
        w[i].push_back(1.0);
        continue;
      }
      const double frac = std::abs(static_cast<double>(coords[i]) - static_cast<double>(coords[p])) / cfg.gamma;
      w[i].push_back(cfg.weighting == DistanceWeighting::proportional ? frac : 1.0 - frac);
    }
  }
  return w;
}

template <typename T>
ad::Tensor<T> contrastive_loss(const ad::Tensor<T>& Z, const PositiveSets& P,
                               const std::vector<std::vector<double>>& weights, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be > 0");
  if (Z.rank() != 2) throw ad::ShapeError("contrastive_loss: Z must be (2N, D), got " + ad::shape_str(Z.shape()));
  const std::size_t M = Z.dim(0), D = Z.dim(1);
  if (P.size() != M || weights.size() != M)
    throw ad::ShapeError("contrastive_loss: positive sets / weights do not match " + std::to_string(M) + " samples");
  if (M < 2) throw ad::ShapeError("contrastive_loss: need at least 2 samples");
  const T inv_tau = static_cast<T>(1.0 / tau);

  std::vector<T> S(M * M);
  ad::gemm(false, true, M, M, D, Z.values().data(), Z.values().data(), S.data(), false);

  // Row softmax over A(i) = all a != i, with max-logit subtraction.
  auto soft = std::make_shared<std::vector<T>>(M * M, T(0));
  std::vector<T> lse(M);
  for (std::size_t i = 0; i < M; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t a = 0; a < M; ++a)
      if (a != i) mx = std::max(mx, S[i * M + a] * inv_tau);
    T s = 0;
    for (std::size_t a = 0; a < M; ++a) {
      if (a == i) continue;
      const T e = std::exp(S[i * M + a] * inv_tau - mx);
      (*soft)[i * M + a] = e;
      s += e;
    }
    for (std::size_t a = 0; a < M; ++a) (*soft)[i * M + a] /= s;
    lse[i] = mx + std::log(s);
  }

  T total = 0;
  std::size_t contributing = 0;
  for (std::size_t i = 0; i < M; ++i) {
    if (P[i].empty()) continue;
    if (weights[i].size() != P[i].size()) throw ad::ShapeError("contrastive_loss: weight list length mismatch");
    ++contributing;
    T acc = 0;
    for (std::size_t j = 0; j < P[i].size(); ++j) {
      const std::size_t p = P[i][j];
      if (p >= M || p == i) throw std::invalid_argument("contrastive_loss: invalid positive index");
      acc += static_cast<T>(weights[i][j]) * (S[i * M + p] * inv_tau - lse[i]);
    }
    total -= acc / static_cast<T>(P[i].size());
  }
  if (contributing == 0) throw std::invalid_argument("contrastive_loss: no sample has a positive");
  const T norm = T(1) / static_cast<T>(contributing);

  return ad::make_op<T>("contrastive_loss", {}, {total * norm}, {Z}, [Z, P, weights, soft, M, D, inv_tau, norm](
                                                                        ad::Node<T>& n) {
    // G = dL/dS; S = Z Z^T, so dZ = (G + G^T) Z.
    std::vector<T> G(M * M, T(0));
    const T up = n.grad[0] * norm;
    for (std::size_t i = 0; i < M; ++i) {
      if (P[i].empty()) continue;
      const T inv_p = T(1) / static_cast<T>(P[i].size());
      T wsum = 0;
      for (std::size_t j = 0; j < P[i].size(); ++j) {
        const T w = static_cast<T>(weights[i][j]);
        wsum += w;
        G[i * M + P[i][j]] -= up * w * inv_p * inv_tau;
      }
      const T c = up * wsum * inv_p * inv_tau;
      for (std::size_t a = 0; a < M; ++a) G[i * M + a] += c * (*soft)[i * M + a];
    }
    std::vector<T> Gs(M * M);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t a = 0; a < M; ++a) Gs[i * M + a] = G[i * M + a] + G[a * M + i];
    ad::gemm(false, false, M, D, M, Gs.data(), Z.values().data(), Z.grad().data(), true);
  });
}

template ad::Tensor<float> contrastive_loss(const ad::Tensor<float>&, const PositiveSets&,
                                            const std::vector<std::vector<double>>&, double);
template ad::Tensor<double> contrastive_loss(const ad::Tensor<double>&, const PositiveSets&,
                                             const std::vector<std::vector<double>>&, double);

namespace {

struct ReadPool {
  std::vector<const Read*> usable;
};

ReadPool usable_reads(const ReadSet& rs, const AugmentConfig& aug) {
  ReadPool pool;
  std::size_t skipped = 0;
  for (const Read& r : rs.reads) {
    if (r.sequence.size() >= aug.k + aug.d) pool.usable.push_back(&r);
    else ++skipped;
  }
  thread_local const ReadSet* warned = nullptr;
  if (skipped > 0 && warned != &rs) {
    warned = &rs;
    std::cerr << "warning: skipped " << skipped << " reads shorter than k + d = " << aug.k + aug.d << " bp\n";
  }
  if (pool.usable.empty()) throw std::invalid_argument("no read is long enough (k + d) for self-supervised pairs");
  return pool;
}

}  // namespace

ContrastiveBatch build_batch(const TrainingSource& source, const AugmentConfig& aug, std::size_t N, LossMode mode,
                             Rng& rng) {
  aug.validate();
  if (N == 0) throw std::invalid_argument("batch needs at least one pair");
  ContrastiveBatch b;
  b.mode = mode;
  b.x.reserve(2 * N);
  b.partner.reserve(2 * N);
  if (const Genome* const* g = std::get_if<const Genome*>(&source)) {
    for (std::size_t i = 0; i < N; ++i) {
      AugmentedPair p = augment_pair(**g, aug, rng);
      b.x.push_back(std::move(p.x_i));
      b.x.push_back(std::move(p.x_j));
      if (mode == LossMode::supervised) {
        b.coords.push_back(p.c_i);
        b.coords.push_back(p.c_j);
      }
      b.partner.push_back(2 * i + 1);
      b.partner.push_back(2 * i);
    }
    return b;
  }
  if (mode == LossMode::supervised) throw std::invalid_argument("supervised batches require a reference genome");
  const ReadSet& rs = *std::get<const ReadSet*>(source);
  ReadPool pool = usable_reads(rs, aug);
  for (std::size_t i = 0; i < N; ++i) {
    const Read& r = *pool.usable[uniform_int(rng, 0, pool.usable.size() - 1)];
    const std::size_t ci = uniform_int(rng, 0, r.sequence.size() - aug.k - aug.d);
    const std::size_t cj = uniform_int(rng, ci, ci + aug.d);
    b.x.push_back(apply_noise(std::string_view(r.sequence).substr(ci, aug.k), aug, rng));
    b.x.push_back(apply_noise(std::string_view(r.sequence).substr(cj, aug.k), aug, rng));
    b.partner.push_back(2 * i + 1);
    b.partner.push_back(2 * i);
  }
  return b;
}

TrainResult train_encoder(const TrainingSource& source, const EncoderConfig& enc_cfg, const LossConfig& loss_cfg,
                          const AugmentConfig& aug_cfg, const TrainConfig& tc, const ProgressFn& progress) {
  loss_cfg.validate();
  aug_cfg.validate();
  if (aug_cfg.k != enc_cfg.k) throw std::invalid_argument("augmentation k differs from encoder k");
  Rng init_rng(derive_seed(tc.seed, "encoder-init"));
  TrainResult res{EncoderModel(enc_cfg, init_rng), {}};
  if (tc.iterations == 0) return res;

  const auto params = res.model.parameters();
  ad::OptimizerState opt = ad::make_optimizer(params, {tc.lr, 0.9, 0.999, 1e-7, tc.weight_decay});
  const std::uint64_t warmup = std::min(tc.warmup, tc.iterations);
  const std::uint64_t batch_seed = derive_seed(tc.seed, "encoder-batches");
  res.history.reserve(tc.iterations);

  for (std::uint64_t step = 0; step < tc.iterations; ++step) {
    Rng rng(derive_seed(batch_seed, step));
    ContrastiveBatch batch = build_batch(source, aug_cfg, tc.batch_pairs, loss_cfg.mode, rng);
    PositiveSets P = positive_set(batch.coords, batch.partner, loss_cfg);
    auto W = distance_weights(batch.coords, P, loss_cfg);

    ad::zero_grads(params);
    auto out = res.model.forward(one_hot_batch(batch.x, enc_cfg.k));
    TensorF loss = contrastive_loss(out.z, P, W, loss_cfg.tau);
    const double lr = ad::cosine_warmup_lr(step, warmup, tc.iterations, tc.lr);
    const double value = loss.item();
    loss.backward();
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "non-finite contrastive loss at step " << step << " (lr=" << lr << ", loss=" << value
         << ", grad_norm=" << ad::global_grad_norm(params) << ")\n";
      for (const auto& [name, t] : res.model.named_parameters()) {
        double s = 0;
        if (t.has_grad())
          for (float g : t.node().grad) s += static_cast<double>(g) * g;
        os << "  " << name << " grad_norm=" << std::sqrt(s) << '\n';
      }
      throw TrainingError(os.str());
    }
    ad::adamw_step(params, opt, lr);
    res.history.push_back({step, lr, value});
    if (progress) progress(res.history.back());
    if (tc.checkpoint_every > 0 && !tc.checkpoint_path.empty() && (step + 1) % tc.checkpoint_every == 0)
      ad::save_checkpoint(tc.checkpoint_path + ".step" + std::to_string(step + 1), res.model.to_checkpoint());
  }
  ad::zero_grads(params);
  return res;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "step,lr,loss\n";
  out << std::setprecision(9);
  for (const auto& r : history) out << r.step << ',' << r.lr << ',' << r.loss << '\n';
}

}  // namespace kmerspace
