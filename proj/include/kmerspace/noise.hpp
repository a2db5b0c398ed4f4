#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "kmerspace/rng.hpp"
#include "kmerspace/seqcore.hpp"

namespace kmerspace {

/// Settings of the training augmentation Aug(.).
struct AugmentConfig {
  std::size_t k = 30;
  std::size_t d = 50;              // max offset between positive k-mers, bp
  double flat_sub_rate = 0.01;
  double deam_rate = 0.10;         // C->T in the first, G->A in the last deam_end_len bases
  std::size_t deam_end_len = 10;
  double revcomp_prob = 0.5;
  bool deam_after_revcomp = false; // apply end damage in the flipped orientation instead

  void validate() const;
};

/// Simplified Briggs-style damage model for evaluation reads.
struct DamageConfig {
  std::size_t fragment_len = 30;
  double overhang_geom_p = 0.4;  // Geometric on {0,1,...}, truncated at fragment_len
  double deam_ss = 0.7;          // C deamination in single-stranded overhangs
  double deam_ds = 0.01;         // C deamination in double-stranded interior
  double seq_error_rate = 0.01;

  void validate() const;
  static DamageConfig noiseless(std::size_t fragment_len);
};

struct Read {
  std::string id;
  std::string sequence;  // read orientation
  std::size_t coordinate = 0;
  Strand strand = Strand::forward;

  bool operator==(const Read&) const = default;
};

struct ReadSet {
  std::string genome;
  std::vector<Read> reads;

  bool operator==(const ReadSet&) const = default;
};

struct PositivePair {
  Kmer first;
  Kmer second;
  std::size_t c_i = 0;
  std::size_t c_j = 0;
};

struct AugmentedPair {
  OneHotKmer x_i;
  OneHotKmer x_j;
  std::size_t c_i = 0;
  std::size_t c_j = 0;
};

/// c_i ~ U{0..L-k-d}, c_j ~ U{c_i..c_i+d}; both k-mers un-noised. Requires L > k + d.
PositivePair sample_positive_pair(const Genome& g, const AugmentConfig& cfg, Rng& rng);

/// Substitution noise, end deamination and the random reverse-complement flip.
OneHotKmer apply_noise(const Kmer& km, const AugmentConfig& cfg, Rng& rng);
OneHotKmer apply_noise(std::string_view bases, const AugmentConfig& cfg, Rng& rng);

AugmentedPair augment_pair(const Genome& g, const AugmentConfig& cfg, Rng& rng);

/// n reads; read i is generated from its own stream seeded with derive_seed(seed, i).
ReadSet simulate_reads(const Genome& g, long long n, const DamageConfig& cfg, std::uint64_t seed);

/// One damaged read at a fixed locus. Exposed for tests and for the inversion tools.
Read damage_read(const Genome& g, std::size_t coordinate, Strand strand, const DamageConfig& cfg, Rng& rng);

/// Tab-separated: read_id, sequence, true_coordinate, strand (+/-), with a header row.
void write_reads_tsv(std::ostream& out, const ReadSet& rs);
ReadSet read_reads_tsv(std::istream& in, std::string genome = {});
void write_reads_tsv_file(const std::string& path, const ReadSet& rs);
ReadSet read_reads_tsv_file(const std::string& path);

}  // namespace kmerspace
