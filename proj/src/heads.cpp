#include "kmerspace/heads.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/autodiff/optim.hpp"

namespace kmerspace {

using namespace ad;

HeadKind parse_head_kind(const std::string& s) {
  if (s == "mse" || s == "MSE") return HeadKind::mse;
  if (s == "cce" || s == "CCE") return HeadKind::cce;
  if (s == "gpt" || s == "GPT") return HeadKind::gpt;
  throw std::invalid_argument("unknown head kind '" + s + "' (expected mse, cce or gpt)");
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::mse: return "mse";
    case HeadKind::cce: return "cce";
    default: return "gpt";
  }
}

void HeadConfig::validate() const {
  if (mlp_width == 0 || mlp_layers == 0) throw std::invalid_argument("head MLP needs width and layers >= 1");
  if (base < 2) throw std::invalid_argument("digit base must be >= 2");
  if (L < 1) throw std::invalid_argument("coordinate space must be >= 1");
  if (kind == HeadKind::gpt) {
    if (gpt_blocks == 0 || gpt_heads == 0 || ff_dim == 0 || token_dim == 0 || mlp_out_tokens == 0)
      throw std::invalid_argument("GPT head sizes must be >= 1");
    if (token_dim % gpt_heads != 0) throw std::invalid_argument("token_dim must be divisible by gpt_heads");
  }
}

std::size_t HeadConfig::trunk_out_width() const {
  switch (kind) {
    case HeadKind::mse: return 1;
    case HeadKind::cce: return digits() * base;
    default: return mlp_out_tokens * token_dim;
  }
}

void PositionHead::add_param(const std::string& name, TensorF t) {
  params_.emplace_back("head." + to_string(cfg_.kind) + "." + name, std::move(t));
}

const TensorF& PositionHead::param(const std::string& name) const {
  const std::string full = "head." + to_string(cfg_.kind) + "." + name;
  for (const auto& [n, t] : params_)
    if (n == full) return t;
  throw std::logic_error("head has no parameter '" + full + "'");
}

PositionHead::PositionHead(HeadConfig cfg, std::size_t rep_dim, Rng& rng) : cfg_(cfg), rep_dim_(rep_dim) {
  cfg_.validate();
  if (rep_dim == 0) throw std::invalid_argument("representation width must be >= 1");
  std::size_t in = rep_dim;
  for (std::size_t l = 0; l < cfg_.mlp_layers; ++l) {
    const std::string p = "mlp" + std::to_string(l);
    add_param(p + ".ln.g", TensorF::full({in}, 1.0f, true));
    add_param(p + ".ln.b", TensorF::zeros({in}, true));
    add_param(p + ".w", init_truncated_normal<float>({in, cfg_.mlp_width}, rng));
    add_param(p + ".b", TensorF::zeros({cfg_.mlp_width}, true));
    in = cfg_.mlp_width;
  }
  add_param("out.w", init_truncated_normal<float>({in, cfg_.trunk_out_width()}, rng));
  add_param("out.b", TensorF::zeros({cfg_.trunk_out_width()}, true));
  if (cfg_.kind != HeadKind::gpt) return;

  const std::size_t D = cfg_.token_dim, T = cfg_.mlp_out_tokens + cfg_.digits() - 1;
  add_param("digit_embed", init_truncated_normal<float>({cfg_.base, D}, rng));
  add_param("pos_embed", init_truncated_normal<float>({T, D}, rng));
  for (std::size_t b = 0; b < cfg_.gpt_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      add_param(p + ".attn." + w, init_truncated_normal<float>({D, D}, rng));
      add_param(p + ".attn.b" + std::string(w + 1), TensorF::zeros({D}, true));
    }
    add_param(p + ".ln1.g", TensorF::full({D}, 1.0f, true));
    add_param(p + ".ln1.b", TensorF::zeros({D}, true));
    add_param(p + ".ff1.w", init_truncated_normal<float>({D, cfg_.ff_dim}, rng));
    add_param(p + ".ff1.b", TensorF::zeros({cfg_.ff_dim}, true));
    add_param(p + ".ff2.w", init_truncated_normal<float>({cfg_.ff_dim, D}, rng));
    add_param(p + ".ff2.b", TensorF::zeros({D}, true));
    add_param(p + ".ln2.g", TensorF::full({D}, 1.0f, true));
    add_param(p + ".ln2.b", TensorF::zeros({D}, true));
  }
  add_param("logits.w", init_truncated_normal<float>({D, cfg_.base}, rng));
  add_param("logits.b", TensorF::zeros({cfg_.base}, true));
}

std::vector<TensorF> PositionHead::parameters() const {
  std::vector<TensorF> out;
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

TensorF PositionHead::mlp_trunk(const TensorF& h) const {
  if (h.rank() != 2 || h.dim(1) != rep_dim_)
    throw ShapeError("head: expected representation (B, " + std::to_string(rep_dim_) + "), got " +
                     shape_str(h.shape()));
  TensorF y = h;
  for (std::size_t l = 0; l < cfg_.mlp_layers; ++l) {
    const std::string p = "mlp" + std::to_string(l);
    y = layer_norm(y, param(p + ".ln.g"), param(p + ".ln.b"));
    y = silu(dense(y, param(p + ".w"), param(p + ".b")));
  }
  return dense(y, param("out.w"), param("out.b"));
}

TensorF PositionHead::cce_probs(const TensorF& h) const {
  if (cfg_.kind != HeadKind::cce) throw std::logic_error("cce_probs on a " + to_string(cfg_.kind) + " head");
  TensorF logits = mlp_trunk(h);
  return softmax(reshape(logits, {h.dim(0) * cfg_.digits(), cfg_.base}), -1);
}

TensorF PositionHead::gpt_forward_tokens(const TensorF& trunk,
                                         const std::vector<std::vector<std::uint32_t>>& prefix_digits) const {
  if (cfg_.kind != HeadKind::gpt) throw std::logic_error("gpt_forward on a " + to_string(cfg_.kind) + " head");
  const std::size_t B = trunk.dim(0), D = cfg_.token_dim, P = cfg_.mlp_out_tokens;
  if (prefix_digits.size() != B) throw ShapeError("gpt_forward: digit rows do not match batch");
  const std::size_t n = B ? prefix_digits[0].size() : 0;
  if (n + 1 > cfg_.digits()) throw ShapeError("gpt_forward: too many digit tokens");
  TensorF y = reshape(trunk, {B, P, D});
  if (n > 0) {
    std::vector<std::size_t> ids;
    ids.reserve(B * n);
    for (const auto& row : prefix_digits) {
      if (row.size() != n) throw ShapeError("gpt_forward: ragged digit rows");
      for (std::uint32_t d : row) {
        if (d >= cfg_.base) throw std::invalid_argument("gpt_forward: digit out of range");
        ids.push_back(d);
      }
    }
    TensorF bits = reshape(embedding_lookup(param("digit_embed"), ids), {B, n, D});
    y = concat<float>({y, bits}, 1);
  }
  const std::size_t T = P + n;
  y = add(y, slice(param("pos_embed"), 0, 0, T));
  for (std::size_t b = 0; b < cfg_.gpt_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    MhaWeights<float> w{param(p + ".attn.wq"), param(p + ".attn.bq"), param(p + ".attn.wk"), param(p + ".attn.bk"),
                        param(p + ".attn.wv"), param(p + ".attn.bv"), param(p + ".attn.wo"), param(p + ".attn.bo")};
    TensorF a = layer_norm(add(causal_mha(y, w, cfg_.gpt_heads, P), y), param(p + ".ln1.g"), param(p + ".ln1.b"));
    TensorF ff = dense(gelu(dense(a, param(p + ".ff1.w"), param(p + ".ff1.b"))), param(p + ".ff2.w"),
                       param(p + ".ff2.b"));
    y = layer_norm(add(ff, a), param(p + ".ln2.g"), param(p + ".ln2.b"));
  }
  return softmax(dense(y, param("logits.w"), param("logits.b")), -1);
}

TensorF PositionHead::gpt_forward(const TensorF& h, const std::vector<std::vector<std::uint32_t>>& digits) const {
  const std::size_t nb = cfg_.digits();
  std::vector<std::vector<std::uint32_t>> prefix;
  prefix.reserve(digits.size());
  for (const auto& row : digits) {
    if (row.size() != nb)
      throw ShapeError("gpt_forward: target has " + std::to_string(row.size()) + " digits, expected " +
                       std::to_string(nb));
    prefix.emplace_back(row.begin(), row.end() - 1);
  }
  return gpt_forward_tokens(mlp_trunk(h), prefix);
}

std::vector<std::vector<std::uint32_t>> PositionHead::gpt_decode(const TensorF& h) const {
  const std::size_t B = h.dim(0), nb = cfg_.digits(), P = cfg_.mlp_out_tokens, b = cfg_.base;
  TensorF trunk = mlp_trunk(h);
  std::vector<std::vector<std::uint32_t>> digits(B);
  for (std::size_t step = 0; step < nb; ++step) {
    TensorF probs = gpt_forward_tokens(trunk, digits);
    const std::size_t T = P + step;
    auto pv = probs.values();
    for (std::size_t i = 0; i < B; ++i) {
      const float* row = pv.data() + (i * T + (P - 1 + step)) * b;
      digits[i].push_back(static_cast<std::uint32_t>(std::max_element(row, row + b) - row));
    }
  }
  return digits;
}

TensorF PositionHead::loss(const TensorF& h, const std::vector<std::uint64_t>& coords) const {
  const std::size_t B = h.dim(0);
  if (coords.size() != B) throw ShapeError("head loss: coordinate count does not match batch");
  if (cfg_.kind == HeadKind::mse) {
    std::vector<float> target(B);
    for (std::size_t i = 0; i < B; ++i) target[i] = static_cast<float>(static_cast<double>(coords[i]) / cfg_.L);
    return mse(mlp_trunk(h), TensorF::from({B, 1}, std::move(target)));
  }
  const std::size_t nb = cfg_.digits();
  std::vector<std::vector<std::uint32_t>> digits(B);
  std::vector<std::size_t> flat;
  flat.reserve(B * nb);
  for (std::size_t i = 0; i < B; ++i) {
    digits[i] = encode_coordinate(static_cast<long long>(coords[i]), cfg_.base, cfg_.L).digits;
    flat.insert(flat.end(), digits[i].begin(), digits[i].end());
  }
  if (cfg_.kind == HeadKind::cce) return cross_entropy(cce_probs(h), flat);
  TensorF probs = gpt_forward(h, digits);
  const std::size_t P = cfg_.mlp_out_tokens;
  TensorF kept = slice(probs, 1, P - 1, P - 1 + nb);
  return cross_entropy(reshape(kept, {B * nb, cfg_.base}), flat);
}

PositionPrediction PositionHead::from_digits(std::vector<std::uint32_t> digits, std::vector<float> probs) const {
  PositionPrediction p;
  p.kind = cfg_.kind;
  DigitCode dc{cfg_.base, cfg_.L, digits};
  const std::uint64_t v = decode_digits(dc);
  p.raw = static_cast<double>(v);
  p.clamped = v >= cfg_.L;
  p.coordinate = p.clamped ? cfg_.L - 1 : v;
  p.digits = std::move(digits);
  p.probs = std::move(probs);
  return p;
}

std::vector<PositionPrediction> PositionHead::predict(const RowMatrix& H, std::size_t chunk) const {
  if (H.cols != rep_dim_)
    throw ShapeError("head: representation width " + std::to_string(H.cols) + ", expected " +
                     std::to_string(rep_dim_));
  NoGradGuard guard;
  std::vector<PositionPrediction> out;
  out.reserve(H.rows);
  const std::size_t nb = cfg_.digits(), b = cfg_.base;
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t s = 0; s < H.rows; s += chunk) {
    const std::size_t e = std::min(H.rows, s + chunk), B = e - s;
    TensorF h = TensorF::from({B, rep_dim_}, {H.data.begin() + s * rep_dim_, H.data.begin() + e * rep_dim_});
    if (cfg_.kind == HeadKind::mse) {
      const TensorF out_t = mlp_trunk(h);
      auto v = out_t.values();
      for (std::size_t i = 0; i < B; ++i) {
        PositionPrediction p;
        p.kind = HeadKind::mse;
        p.raw = static_cast<double>(v[i]) * static_cast<double>(cfg_.L);
        const double r = std::round(p.raw);
        p.clamped = !(r >= 0.0 && r <= static_cast<double>(cfg_.L - 1));
        p.coordinate = r < 0.0 || !std::isfinite(r) ? 0 : std::min<std::uint64_t>(static_cast<std::uint64_t>(r), cfg_.L - 1);
        out.push_back(std::move(p));
      }
    } else if (cfg_.kind == HeadKind::cce) {
      const TensorF probs_t = cce_probs(h);
      auto pv = probs_t.values();
      for (std::size_t i = 0; i < B; ++i) {
        std::vector<std::uint32_t> digits(nb);
        for (std::size_t n = 0; n < nb; ++n) {
          const float* row = pv.data() + (i * nb + n) * b;
          digits[n] = static_cast<std::uint32_t>(std::max_element(row, row + b) - row);
        }
        out.push_back(from_digits(std::move(digits), {pv.begin() + i * nb * b, pv.begin() + (i + 1) * nb * b}));
      }
    } else {
      // Greedy decode, keeping the probability row used for each digit.
      const std::size_t P = cfg_.mlp_out_tokens;
      TensorF trunk = mlp_trunk(h);
      std::vector<std::vector<std::uint32_t>> digits(B);
      std::vector<std::vector<float>> probs(B);
      for (std::size_t step = 0; step < nb; ++step) {
        const TensorF probs_t = gpt_forward_tokens(trunk, digits);
        auto pv = probs_t.values();
        const std::size_t T = P + step;
        for (std::size_t i = 0; i < B; ++i) {
          const float* row = pv.data() + (i * T + (P - 1 + step)) * b;
          digits[i].push_back(static_cast<std::uint32_t>(std::max_element(row, row + b) - row));
          probs[i].insert(probs[i].end(), row, row + b);
        }
      }
      for (std::size_t i = 0; i < B; ++i) out.push_back(from_digits(std::move(digits[i]), std::move(probs[i])));
    }
  }
  return out;
}

namespace {

// Config metadata; L is split into 16-bit halves so it survives float32 storage exactly.
std::vector<float> head_meta(const HeadConfig& c, std::size_t rep_dim) {
  return {static_cast<float>(static_cast<int>(c.kind)),
          static_cast<float>(c.mlp_width),
          static_cast<float>(c.mlp_layers),
          static_cast<float>(c.base),
          static_cast<float>(c.L >> 32),
          static_cast<float>((c.L >> 16) & 0xffff),
          static_cast<float>(c.L & 0xffff),
          static_cast<float>(c.gpt_blocks),
          static_cast<float>(c.gpt_heads),
          static_cast<float>(c.ff_dim),
          static_cast<float>(c.token_dim),
          static_cast<float>(c.mlp_out_tokens),
          static_cast<float>(rep_dim)};
}

}  // namespace

ad::Checkpoint PositionHead::to_checkpoint() const {
  ad::Checkpoint ck;
  auto meta = head_meta(cfg_, rep_dim_);
  ck.put("head." + to_string(cfg_.kind) + ".config", {meta.size()}, meta);
  for (const auto& [n, t] : params_) ck.put(n, t);
  return ck;
}

PositionHead PositionHead::from_checkpoint(const ad::Checkpoint& ckpt, HeadKind kind) {
  const auto& m = ckpt.get("head." + to_string(kind) + ".config").values;
  if (m.size() != 13) throw std::runtime_error("head config metadata has unexpected length");
  auto u = [&](std::size_t i) { return static_cast<std::uint64_t>(m[i]); };
  HeadConfig c;
  c.kind = static_cast<HeadKind>(u(0));
  if (c.kind != kind) throw std::runtime_error("head metadata kind mismatch");
  c.mlp_width = u(1);
  c.mlp_layers = u(2);
  c.base = static_cast<std::uint32_t>(u(3));
  c.L = (u(4) << 32) | (u(5) << 16) | u(6);
  c.gpt_blocks = u(7);
  c.gpt_heads = u(8);
  c.ff_dim = u(9);
  c.token_dim = u(10);
  c.mlp_out_tokens = u(11);
  Rng rng(0);
  PositionHead h(c, u(12), rng);
  for (const auto& [n, t] : h.params_) ckpt.load_into(n, t);
  return h;
}

HeadTrainResult train_head(const EncoderModel& encoder, const HeadConfig& cfg, const Genome& g,
                           const AugmentConfig& aug, const HeadTrainConfig& tc, const ProgressFn& progress) {
  if (cfg.L != g.length())
    throw std::invalid_argument("head coordinate space " + std::to_string(cfg.L) + " differs from genome length " +
                                std::to_string(g.length()));
  if (aug.k != encoder.config().k) throw std::invalid_argument("augmentation k differs from encoder k");
  if (g.length() < aug.k) throw std::invalid_argument("genome shorter than k");
  Rng init_rng(derive_seed(tc.seed, "head-init"));
  HeadTrainResult res{PositionHead(cfg, encoder.rep_dim(), init_rng), {}};
  if (tc.iterations == 0) return res;
  if (tc.batch == 0 || tc.pool_size == 0) throw std::invalid_argument("head batch and pool size must be >= 1");

  // Cache of frozen-encoder representations.
  const std::size_t npos = g.length() - aug.k + 1;
  Rng pool_rng(derive_seed(tc.seed, "head-pool"));
  std::vector<OneHotKmer> xs;
  std::vector<std::uint64_t> coords;
  xs.reserve(tc.pool_size);
  coords.reserve(tc.pool_size);
  for (std::size_t i = 0; i < tc.pool_size; ++i) {
    std::size_t c = tc.pool_size >= npos ? i % npos : uniform_int(pool_rng, 0, npos - 1);
    while (g.overlaps_mask(c, aug.k)) c = uniform_int(pool_rng, 0, npos - 1);
    xs.push_back(apply_noise(std::string_view(g.bases).substr(c, aug.k), aug, pool_rng));
    coords.push_back(c);
  }
  const RowMatrix H = encode(encoder, xs).h;
  xs.clear();

  const auto params = res.head.parameters();
  OptimizerState opt = make_optimizer(params, {tc.lr, 0.9, 0.999, 1e-7, tc.weight_decay});
  const std::uint64_t warmup = std::min(tc.warmup, tc.iterations);
  const std::uint64_t batch_seed = derive_seed(tc.seed, "head-batches");
  const std::size_t R = H.cols;
  for (std::uint64_t step = 0; step < tc.iterations; ++step) {
    Rng rng(derive_seed(batch_seed, step));
    std::vector<float> hb(tc.batch * R);
    std::vector<std::uint64_t> cb(tc.batch);
    for (std::size_t i = 0; i < tc.batch; ++i) {
      const std::size_t idx = uniform_int(rng, 0, H.rows - 1);
      std::copy_n(H.data.begin() + idx * R, R, hb.begin() + i * R);
      cb[i] = coords[idx];
    }
    zero_grads(params);
    TensorF loss = res.head.loss(TensorF::from({tc.batch, R}, std::move(hb)), cb);
    const double value = loss.item();
    const double lr = cosine_warmup_lr(step, warmup, tc.iterations, tc.lr);
    loss.backward();
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "non-finite head loss at step " << step << " (lr=" << lr << ", loss=" << value
         << ", grad_norm=" << global_grad_norm(params) << ")";
      throw TrainingError(os.str());
    }
    adamw_step(params, opt, lr);
    res.history.push_back({step, lr, value});
    if (progress) progress(res.history.back());
  }
  zero_grads(params);
  return res;
}

}  // namespace kmerspace
