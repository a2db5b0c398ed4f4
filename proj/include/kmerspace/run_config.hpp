#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "kmerspace/analysis.hpp"
#include "kmerspace/contrastive.hpp"
#include "kmerspace/encoder.hpp"
#include "kmerspace/heads.hpp"
#include "kmerspace/noise.hpp"

namespace kmerspace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, stored as an INI file ([section] headers, key=value lines).
/// Every seed is derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string encoder_preset = "T";
  EncoderConfig encoder = EncoderConfig::tiny();
  AugmentConfig augment;
  LossConfig loss;
  TrainConfig train;
  HeadConfig head;
  HeadTrainConfig head_train;
  DamageConfig damage;
  std::size_t window = 5000;
  InversionConfig inversion;

  /// Propagates the master seed and shared values (k) into the module configs.
  void resolve();
  void validate() const;
};

/// Keys absent from the file keep their defaults; unknown sections or keys are errors.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);
void write_run_config(std::ostream& out, const RunConfig& cfg);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace kmerspace
