#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kmerspace/autodiff/checkpoint.hpp"
#include "kmerspace/contrastive.hpp"
#include "kmerspace/coordcodec.hpp"
#include "kmerspace/encoder.hpp"

namespace kmerspace {

enum class HeadKind { mse, cce, gpt };

HeadKind parse_head_kind(const std::string& s);
std::string to_string(HeadKind k);

struct HeadConfig {
  HeadKind kind = HeadKind::cce;
  std::size_t mlp_width = 2048;
  std::size_t mlp_layers = 3;
  std::uint32_t base = 3;
  std::uint64_t L = 1;  // coordinate space size
  std::size_t gpt_blocks = 1;
  std::size_t gpt_heads = 2;
  std::size_t ff_dim = 256;
  std::size_t token_dim = 64;
  std::size_t mlp_out_tokens = 8;

  void validate() const;
  std::size_t digits() const { return num_digits(L, base); }
  /// Width of the trunk's final projection for this head kind.
  std::size_t trunk_out_width() const;
  bool operator==(const HeadConfig&) const = default;
};

struct PositionPrediction {
  HeadKind kind = HeadKind::cce;
  double raw = 0;                 // regression output in bp, or the decoded digit value
  std::uint64_t coordinate = 0;   // clamped to [0, L-1]
  bool clamped = false;
  std::vector<std::uint32_t> digits;  // CCE/GPT only
  std::vector<float> probs;           // CCE/GPT only: N_b rows of b probabilities
};

class PositionHead {
 public:
  PositionHead() = default;
  PositionHead(HeadConfig cfg, std::size_t rep_dim, Rng& rng);

  const HeadConfig& config() const { return cfg_; }
  std::size_t rep_dim() const { return rep_dim_; }
  std::vector<TensorF> parameters() const;
  const std::vector<std::pair<std::string, TensorF>>& named_parameters() const { return params_; }

  /// LN -> dense -> SiLU per layer, then a linear projection. h is (B, rep_dim).
  TensorF mlp_trunk(const TensorF& h) const;

  /// Training loss on a batch: MSE on c/L, or mean digit cross-entropy for CCE/GPT.
  TensorF loss(const TensorF& h, const std::vector<std::uint64_t>& coords) const;

  /// CCE: (B * N_b, b) digit probabilities.
  TensorF cce_probs(const TensorF& h) const;

  /// Teacher-forced GPT pass. `digits` holds B rows of N_b digits; only the first N_b-1 are
  /// fed. Returns (B, mlp_out_tokens + N_b - 1, b) probabilities before any discarding.
  TensorF gpt_forward(const TensorF& h, const std::vector<std::vector<std::uint32_t>>& digits) const;
  /// Same, starting from an explicit trunk output (B, mlp_out_tokens * token_dim).
  TensorF gpt_forward_tokens(const TensorF& trunk, const std::vector<std::vector<std::uint32_t>>& prefix_digits) const;

  /// Greedy autoregressive decoding, one row per sample.
  std::vector<std::vector<std::uint32_t>> gpt_decode(const TensorF& h) const;

  /// Batched inference without graph recording.
  std::vector<PositionPrediction> predict(const RowMatrix& H, std::size_t chunk = 512) const;

  ad::Checkpoint to_checkpoint() const;
  /// Loads the head of the given kind stored under "head.<kind>.".
  static PositionHead from_checkpoint(const ad::Checkpoint& ckpt, HeadKind kind);

 private:
  const TensorF& param(const std::string& name) const;
  void add_param(const std::string& name, TensorF t);
  PositionPrediction from_digits(std::vector<std::uint32_t> digits, std::vector<float> probs) const;

  HeadConfig cfg_;
  std::size_t rep_dim_ = 0;
  std::vector<std::pair<std::string, TensorF>> params_;
};

struct HeadTrainConfig {
  std::uint64_t iterations = 2000;
  std::size_t batch = 256;
  std::uint64_t warmup = 100;
  double lr = 0.5e-3;
  double weight_decay = 1e-5;
  std::uint64_t seed = 42;
  std::size_t pool_size = 20000;  // cached (representation, coordinate) training samples
};

struct HeadTrainResult {
  PositionHead head;
  std::vector<LossRecord> history;
};

/// Trains a head on frozen-encoder representations of augmented k-mers drawn from `g`.
/// Representations are computed once into a cache; encoder weights are never touched.
HeadTrainResult train_head(const EncoderModel& encoder, const HeadConfig& cfg, const Genome& g,
                           const AugmentConfig& aug, const HeadTrainConfig& tc, const ProgressFn& progress = {});

}  // namespace kmerspace
