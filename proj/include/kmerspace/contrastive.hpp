#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kmerspace/autodiff/tensor.hpp"
#include "kmerspace/encoder.hpp"
#include "kmerspace/noise.hpp"

namespace kmerspace {

enum class LossMode { supervised, self_supervised };

/// How positives are weighted by coordinate distance:
///   off          -> 1
///   proportional -> |c_i - c_p| / gamma
///   inverted     -> 1 - |c_i - c_p| / gamma
enum class DistanceWeighting { off, proportional, inverted };

struct LossConfig {
  double tau = 0.1;
  double gamma = 1000.0;  // bp; ignored in self-supervised mode
  LossMode mode = LossMode::supervised;
  DistanceWeighting weighting = DistanceWeighting::off;

  void validate() const;
};

LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode m);
DistanceWeighting parse_weighting(const std::string& s);
std::string to_string(DistanceWeighting w);

/// 2N augmented samples; samples 2i and 2i+1 are augmentation partners.
struct ContrastiveBatch {
  std::vector<OneHotKmer> x;
  std::vector<std::size_t> coords;   // empty in self-supervised mode
  std::vector<std::size_t> partner;  // partner[i] is the other half of i's pair
  LossMode mode = LossMode::supervised;

  std::size_t size() const { return x.size(); }
};

using PositiveSets = std::vector<std::vector<std::size_t>>;

/// Supervised: every other sample within gamma bp. Self-supervised: the partner only.
PositiveSets positive_set(const std::vector<std::size_t>& coords, const std::vector<std::size_t>& partner,
                          const LossConfig& cfg);

/// Per-positive weights, parallel to `P`.
std::vector<std::vector<double>> distance_weights(const std::vector<std::size_t>& coords, const PositiveSets& P,
                                                  const LossConfig& cfg);

/// Mean over anchors with a non-empty positive set of
///   -1/|P(i)| * sum_p w_ip * log( exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau) ).
/// Z is (2N, D) with unit rows. Differentiable with respect to Z.
template <typename T>
ad::Tensor<T> contrastive_loss(const ad::Tensor<T>& Z, const PositiveSets& P,
                               const std::vector<std::vector<double>>& weights, double tau);

using TrainingSource = std::variant<const Genome*, const ReadSet*>;

/// Draws N positive pairs and augments each k-mer independently.
ContrastiveBatch build_batch(const TrainingSource& source, const AugmentConfig& aug, std::size_t N, LossMode mode,
                             Rng& rng);

struct TrainConfig {
  std::size_t batch_pairs = 64;  // N; the batch holds 2N samples
  std::uint64_t iterations = 2000;
  std::uint64_t warmup = 200;
  double lr = 0.5e-3;
  double weight_decay = 1e-5;
  std::uint64_t seed = 42;
  std::uint64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;         // periodic checkpoints go to <path>.step<N>
};

struct LossRecord {
  std::uint64_t step = 0;
  double lr = 0;
  double loss = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  EncoderModel model;
  std::vector<LossRecord> history;
};

using ProgressFn = std::function<void(const LossRecord&)>;

TrainResult train_encoder(const TrainingSource& source, const EncoderConfig& enc_cfg, const LossConfig& loss_cfg,
                          const AugmentConfig& aug_cfg, const TrainConfig& train_cfg, const ProgressFn& progress = {});

/// CSV with header "step,lr,loss".
void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history);

}  // namespace kmerspace
