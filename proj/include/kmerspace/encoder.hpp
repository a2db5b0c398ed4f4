#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kmerspace/autodiff/checkpoint.hpp"
#include "kmerspace/autodiff/tensor.hpp"
#include "kmerspace/rng.hpp"
#include "kmerspace/seqcore.hpp"

namespace kmerspace {

using TensorF = ad::Tensor<float>;

/// Dense row-major float matrix used for embeddings and representations.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

struct EncoderConfig {
  std::array<std::size_t, 4> stage_channels{64, 128, 256, 512};
  std::array<std::size_t, 4> stage_blocks{3, 3, 9, 3};
  std::size_t embed_dim = 256;
  std::size_t k = 30;
  // Residual block order: false = conv -> LN (default), true = LN -> conv.
  bool norm_first = false;
  // Weight init: 0 = truncated normal with stddev 0.05; g > 0 = stddev g / sqrt(fan_in).
  double init_gain = 0.0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;

  static EncoderConfig tiny();
  static EncoderConfig small();
  static EncoderConfig base();
  /// Desk-scale preset for CPU training; not one of the published sizes.
  static EncoderConfig nano();
  /// "T", "S", "B" or "Nano" (case-insensitive).
  static EncoderConfig preset(const std::string& name);
};

class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(EncoderConfig cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t rep_dim() const { return cfg_.stage_channels[3]; }
  std::size_t embed_dim() const { return cfg_.embed_dim; }

  const std::vector<std::pair<std::string, TensorF>>& named_parameters() const { return params_; }
  std::vector<TensorF> parameters() const;
  std::size_t parameter_count() const;

  struct Output {
    TensorF h;  // (N, rep_dim), unit rows
    TensorF z;  // (N, embed_dim), unit rows
  };

  /// x is (N, k, 4). Records a graph when grad mode is on.
  Output forward(const TensorF& x) const;

  /// Stores parameters under "encoder." plus the config as "encoder.config".
  ad::Checkpoint to_checkpoint() const;
  static EncoderModel from_checkpoint(const ad::Checkpoint& ckpt);

  void set_trainable(bool on) const;

 private:
  const TensorF& param(const std::string& name) const;
  TensorF& add_param(const std::string& name, TensorF t);
  TensorF residual_block(const TensorF& x, const std::string& prefix) const;

  EncoderConfig cfg_;
  std::vector<std::pair<std::string, TensorF>> params_;
};

/// Stacks one-hot k-mers into an (N, k, 4) tensor.
TensorF one_hot_batch(std::span<const OneHotKmer> batch, std::size_t k);

struct Encoded {
  RowMatrix h;
  RowMatrix z;
};

/// Inference without graph recording, processed in chunks. Rows are independent of
/// chunking and of the other samples in the batch.
Encoded encode(const EncoderModel& m, std::span<const OneHotKmer> batch, std::size_t chunk = 256);

}  // namespace kmerspace
