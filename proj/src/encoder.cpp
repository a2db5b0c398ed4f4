#include "kmerspace/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/autodiff/optim.hpp"

namespace kmerspace {

using namespace ad;

void EncoderConfig::validate() const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (stage_channels[i] == 0) throw std::invalid_argument("encoder stage channel counts must be >= 1");
    if (stage_blocks[i] == 0) throw std::invalid_argument("encoder stage block counts must be >= 1");
  }
  if (embed_dim == 0) throw std::invalid_argument("embed_dim must be >= 1");
  if (k == 0) throw std::invalid_argument("encoder k must be >= 1");
  if (!(init_gain >= 0.0) || init_gain > 100.0) throw std::invalid_argument("init_gain must be in [0, 100]");
}

EncoderConfig EncoderConfig::tiny() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::small() {
  EncoderConfig c;
  c.stage_blocks = {3, 3, 27, 3};
  return c;
}

EncoderConfig EncoderConfig::base() {
  EncoderConfig c;
  c.stage_channels = {96, 192, 384, 768};
  c.stage_blocks = {3, 3, 27, 3};
  return c;
}

EncoderConfig EncoderConfig::nano() {
  EncoderConfig c;
  c.stage_channels = {16, 32, 64, 128};
  c.stage_blocks = {1, 1, 2, 1};
  c.init_gain = 1.4;
  return c;
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "t" || n == "tiny") return tiny();
  if (n == "s" || n == "small") return small();
  if (n == "b" || n == "base") return base();
  if (n == "nano") return nano();
  throw std::invalid_argument("unknown encoder preset '" + name + "' (expected T, S, B or Nano)");
}

TensorF& EncoderModel::add_param(const std::string& name, TensorF t) {
  params_.emplace_back("encoder." + name, std::move(t));
  return params_.back().second;
}

const TensorF& EncoderModel::param(const std::string& name) const {
  const std::string full = "encoder." + name;
  for (const auto& [n, t] : params_)
    if (n == full) return t;
  throw std::logic_error("encoder has no parameter '" + full + "'");
}

EncoderModel::EncoderModel(EncoderConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  auto weight = [&](Shape shape, std::size_t fan_in) {
    const double sd = cfg_.init_gain > 0 ? cfg_.init_gain / std::sqrt(static_cast<double>(fan_in)) : 0.05;
    return init_truncated_normal<float>(std::move(shape), rng, 0.0, sd);
  };
  auto conv = [&](const std::string& name, std::size_t K, std::size_t cin, std::size_t cout) {
    add_param(name + ".w", weight({K, cin, cout}, K * cin));
    add_param(name + ".b", TensorF::zeros({cout}, true));
  };
  auto norm = [&](const std::string& name, std::size_t c) {
    add_param(name + ".g", TensorF::full({c}, 1.0f, true));
    add_param(name + ".b", TensorF::zeros({c}, true));
  };
  const auto& ch = cfg_.stage_channels;
  conv("stem.conv", 3, 4, ch[0]);
  norm("stem.ln", ch[0]);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) conv("down" + std::to_string(s) + ".conv", 3, ch[s - 1], ch[s]);
    for (std::size_t b = 0; b < cfg_.stage_blocks[s]; ++b) {
      const std::string p = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const std::size_t C = ch[s];
      conv(p + ".conv", 3, C, C);
      norm(p + ".ln", C);
      conv(p + ".expand", 1, C, 4 * C);
      conv(p + ".project", 1, 4 * C, C);
    }
  }
  add_param("rep.w", weight({ch[3], ch[3]}, ch[3]));
  add_param("rep.b", TensorF::zeros({ch[3]}, true));
  add_param("embed.w", weight({ch[3], cfg_.embed_dim}, ch[3]));
  add_param("embed.b", TensorF::zeros({cfg_.embed_dim}, true));
}

std::vector<TensorF> EncoderModel::parameters() const {
  std::vector<TensorF> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void EncoderModel::set_trainable(bool on) const {
  for (const auto& [n, t] : params_) t.set_requires_grad(on);
}

TensorF EncoderModel::residual_block(const TensorF& x, const std::string& p) const {
  TensorF y;
  if (cfg_.norm_first) {
    y = layer_norm(x, param(p + ".ln.g"), param(p + ".ln.b"));
    y = conv1d(y, param(p + ".conv.w"), param(p + ".conv.b"), 1, 1);
  } else {
    y = conv1d(x, param(p + ".conv.w"), param(p + ".conv.b"), 1, 1);
    y = layer_norm(y, param(p + ".ln.g"), param(p + ".ln.b"));
  }
  y = gelu(conv1d(y, param(p + ".expand.w"), param(p + ".expand.b"), 1, 0));
  y = conv1d(y, param(p + ".project.w"), param(p + ".project.b"), 1, 0);
  return add(x, y);
}

EncoderModel::Output EncoderModel::forward(const TensorF& x) const {
  if (x.rank() != 3 || x.dim(1) != cfg_.k || x.dim(2) != 4)
    throw ShapeError("encoder: expected input (N, " + std::to_string(cfg_.k) + ", 4), got " + shape_str(x.shape()));
  TensorF y = conv1d(x, param("stem.conv.w"), param("stem.conv.b"), 1, 1);
  y = gelu(layer_norm(y, param("stem.ln.g"), param("stem.ln.b")));
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      const std::string d = "down" + std::to_string(s) + ".conv";
      y = avg_pool1d(y, 2, 2);
      y = gelu(conv1d(y, param(d + ".w"), param(d + ".b"), 1, 1));
    }
    for (std::size_t b = 0; b < cfg_.stage_blocks[s]; ++b)
      y = residual_block(y, "stage" + std::to_string(s) + ".block" + std::to_string(b));
  }
  TensorF pooled = global_avg_pool(y);
  TensorF h = l2_normalize(gelu(dense(pooled, param("rep.w"), param("rep.b"))));
  TensorF z = l2_normalize(dense(h, param("embed.w"), param("embed.b")));
  return {h, z};
}

ad::Checkpoint EncoderModel::to_checkpoint() const {
  ad::Checkpoint ck;
  const auto& c = cfg_;
  std::vector<float> meta;
  for (auto v : c.stage_channels) meta.push_back(static_cast<float>(v));
  for (auto v : c.stage_blocks) meta.push_back(static_cast<float>(v));
  meta.push_back(static_cast<float>(c.embed_dim));
  meta.push_back(static_cast<float>(c.k));
  meta.push_back(c.norm_first ? 1.0f : 0.0f);
  meta.push_back(static_cast<float>(std::round(c.init_gain * 1e4)));
  ck.put("encoder.config", {meta.size()}, meta);
  for (const auto& [n, t] : params_) ck.put(n, t);
  return ck;
}

EncoderModel EncoderModel::from_checkpoint(const ad::Checkpoint& ckpt) {
  const auto& meta = ckpt.get("encoder.config").values;
  if (meta.size() != 12) throw std::runtime_error("encoder.config has unexpected length");
  EncoderConfig c;
  for (std::size_t i = 0; i < 4; ++i) {
    c.stage_channels[i] = static_cast<std::size_t>(meta[i]);
    c.stage_blocks[i] = static_cast<std::size_t>(meta[4 + i]);
  }
  c.embed_dim = static_cast<std::size_t>(meta[8]);
  c.k = static_cast<std::size_t>(meta[9]);
  c.norm_first = meta[10] != 0.0f;
  c.init_gain = static_cast<double>(meta[11]) / 1e4;
  Rng rng(0);
  EncoderModel m(c, rng);
  for (const auto& [n, t] : m.params_) ckpt.load_into(n, t);
  return m;
}

TensorF one_hot_batch(std::span<const OneHotKmer> batch, std::size_t k) {
  std::vector<float> v(batch.size() * k * 4);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].k() != k)
      throw ShapeError("k-mer " + std::to_string(i) + " has length " + std::to_string(batch[i].k()) + ", expected " +
                       std::to_string(k));
    const auto& cells = batch[i].cells();
    for (std::size_t j = 0; j < k * 4; ++j) v[i * k * 4 + j] = static_cast<float>(cells[j]);
  }
  return TensorF::from({batch.size(), k, 4}, std::move(v));
}

Encoded encode(const EncoderModel& m, std::span<const OneHotKmer> batch, std::size_t chunk) {
  NoGradGuard guard;
  Encoded out{RowMatrix(batch.size(), m.rep_dim()), RowMatrix(batch.size(), m.embed_dim())};
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t b = 0; b < batch.size(); b += chunk) {
    const std::size_t e = std::min(batch.size(), b + chunk);
    auto res = m.forward(one_hot_batch(batch.subspan(b, e - b), m.config().k));
    std::copy(res.h.values().begin(), res.h.values().end(), out.h.data.begin() + b * m.rep_dim());
    std::copy(res.z.values().begin(), res.z.values().end(), out.z.data.begin() + b * m.embed_dim());
  }
  return out;
}

}  // namespace kmerspace
