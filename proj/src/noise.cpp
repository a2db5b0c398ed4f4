#include "kmerspace/noise.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kmerspace {

namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

// Uniformly one of the three other bases.
char substitute(char b, Rng& rng) {
  int idx = base_index(b);
  int shift = 1 + static_cast<int>(uniform_int(rng, 0, 2));
  return kBaseChars[(idx + shift) % 4];
}

// Geometric on {0,1,...} with success probability p, by inversion.
std::size_t geometric(Rng& rng, double p, std::size_t cap) {
  if (p >= 1.0) return 0;
  if (p <= 0.0) return cap;
  double u = 1.0 - uniform01(rng);  // (0, 1]
  double x = std::floor(std::log(u) / std::log1p(-p));
  if (!(x < static_cast<double>(cap))) return cap;
  return static_cast<std::size_t>(x);
}

}  // namespace

void AugmentConfig::validate() const {
  if (k == 0) throw std::invalid_argument("augment k must be >= 1");
  check_prob(flat_sub_rate, "flat_sub_rate");
  check_prob(deam_rate, "deam_rate");
  check_prob(revcomp_prob, "revcomp_prob");
  if (deam_end_len > k) throw std::invalid_argument("deam_end_len must not exceed k");
}

void DamageConfig::validate() const {
  if (fragment_len == 0) throw std::invalid_argument("fragment_len must be >= 1");
  check_prob(overhang_geom_p, "overhang_geom_p");
  check_prob(deam_ss, "deam_ss");
  check_prob(deam_ds, "deam_ds");
  check_prob(seq_error_rate, "seq_error_rate");
}

DamageConfig DamageConfig::noiseless(std::size_t fragment_len) {
  DamageConfig c;
  c.fragment_len = fragment_len;
  c.deam_ss = 0.0;
  c.deam_ds = 0.0;
  c.seq_error_rate = 0.0;
  return c;
}

PositivePair sample_positive_pair(const Genome& g, const AugmentConfig& cfg, Rng& rng) {
  const std::size_t L = g.length();
  if (L <= cfg.k + cfg.d)
    throw std::invalid_argument("genome length " + std::to_string(L) + " must exceed k + d = " +
                                std::to_string(cfg.k + cfg.d));
  // Masked loci are resampled; bounded so a fully masked genome cannot spin forever.
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::size_t ci = uniform_int(rng, 0, L - cfg.k - cfg.d);
    std::size_t cj = uniform_int(rng, ci, ci + cfg.d);
    if (g.overlaps_mask(ci, cfg.k) || g.overlaps_mask(cj, cfg.k)) continue;
    return PositivePair{kmer_at(g, ci, cfg.k), kmer_at(g, cj, cfg.k), ci, cj};
  }
  throw std::runtime_error("could not sample an unmasked positive pair from '" + g.name + "'");
}

OneHotKmer apply_noise(std::string_view bases, const AugmentConfig& cfg, Rng& rng) {
  std::string s(bases);
  const bool flip = bernoulli(rng, cfg.revcomp_prob);
  if (flip && cfg.deam_after_revcomp) s = reverse_complement(s);
  // Deamination first, then flat substitutions on positions it left untouched.
  const std::size_t k = s.size();
  for (std::size_t i = 0; i < k; ++i) {
    const char orig = s[i];
    if (i < cfg.deam_end_len && orig == 'C' && bernoulli(rng, cfg.deam_rate)) {
      s[i] = 'T';
      continue;
    }
    if (i + cfg.deam_end_len >= k && orig == 'G' && bernoulli(rng, cfg.deam_rate)) {
      s[i] = 'A';
      continue;
    }
    if (bernoulli(rng, cfg.flat_sub_rate)) s[i] = substitute(orig, rng);
  }
  OneHotKmer x = one_hot(s);
  if (flip && !cfg.deam_after_revcomp) x = reverse_complement(x);
  return x;
}

OneHotKmer apply_noise(const Kmer& km, const AugmentConfig& cfg, Rng& rng) {
  return apply_noise(km.bases, cfg, rng);
}

AugmentedPair augment_pair(const Genome& g, const AugmentConfig& cfg, Rng& rng) {
  PositivePair p = sample_positive_pair(g, cfg, rng);
  AugmentedPair out;
  out.x_i = apply_noise(p.first, cfg, rng);
  out.x_j = apply_noise(p.second, cfg, rng);
  out.c_i = p.c_i;
  out.c_j = p.c_j;
  return out;
}

Read damage_read(const Genome& g, std::size_t coordinate, Strand strand, const DamageConfig& cfg, Rng& rng) {
  const std::size_t len = cfg.fragment_len;
  std::string s = g.bases.substr(coordinate, len);
  if (strand == Strand::revcomp) s = reverse_complement(s);
  const std::size_t o5 = geometric(rng, cfg.overhang_geom_p, len);
  const std::size_t o3 = geometric(rng, cfg.overhang_geom_p, len);
  for (std::size_t i = 0; i < len; ++i) {
    const bool in5 = i < o5;
    const bool in3 = i + o3 >= len;
    if (s[i] == 'C') {
      if (bernoulli(rng, in5 ? cfg.deam_ss : cfg.deam_ds)) s[i] = 'T';
    } else if (s[i] == 'G') {
      if (bernoulli(rng, in3 ? cfg.deam_ss : cfg.deam_ds)) s[i] = 'A';
    }
  }
  for (std::size_t i = 0; i < len; ++i)
    if (bernoulli(rng, cfg.seq_error_rate)) s[i] = substitute(s[i], rng);
  return Read{{}, std::move(s), coordinate, strand};
}

ReadSet simulate_reads(const Genome& g, long long n, const DamageConfig& cfg, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("read count must be positive");
  cfg.validate();
  if (g.length() < cfg.fragment_len)
    throw std::invalid_argument("genome shorter than fragment length " + std::to_string(cfg.fragment_len));
  ReadSet rs;
  rs.genome = g.name;
  rs.reads.reserve(static_cast<std::size_t>(n));
  const std::size_t max_start = g.length() - cfg.fragment_len;
  for (long long i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::size_t c = 0;
    do {
      c = uniform_int(rng, 0, max_start);
    } while (g.overlaps_mask(c, cfg.fragment_len));
    Strand strand = bernoulli(rng, 0.5) ? Strand::revcomp : Strand::forward;
    Read r = damage_read(g, c, strand, cfg, rng);
    r.id = "read" + std::to_string(i);
    rs.reads.push_back(std::move(r));
  }
  return rs;
}

void write_reads_tsv(std::ostream& out, const ReadSet& rs) {
  out << "read_id\tsequence\ttrue_coordinate\tstrand\n";
  for (const Read& r : rs.reads)
    out << r.id << '\t' << r.sequence << '\t' << r.coordinate << '\t' << strand_char(r.strand) << '\n';
}

ReadSet read_reads_tsv(std::istream& in, std::string genome) {
  ReadSet rs;
  rs.genome = std::move(genome);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("read_id\t", 0) == 0) continue;
    std::istringstream ls(line);
    Read r;
    std::string coord, strand;
    if (!std::getline(ls, r.id, '\t') || !std::getline(ls, r.sequence, '\t'))
      throw ParseError("reads TSV line " + std::to_string(line_no) + ": expected at least 2 columns");
    for (char c : r.sequence)
      if (base_index(c) < 0) throw ParseError("reads TSV line " + std::to_string(line_no) + ": non-ACGT sequence");
    if (std::getline(ls, coord, '\t') && !coord.empty()) {
      try {
        r.coordinate = std::stoull(coord);
      } catch (const std::exception&) {
        throw ParseError("reads TSV line " + std::to_string(line_no) + ": bad coordinate '" + coord + "'");
      }
    }
    if (std::getline(ls, strand, '\t') && !strand.empty()) r.strand = parse_strand(strand);
    rs.reads.push_back(std::move(r));
  }
  return rs;
}

void write_reads_tsv_file(const std::string& path, const ReadSet& rs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_reads_tsv(out, rs);
}

ReadSet read_reads_tsv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open reads file '" + path + "'");
  return read_reads_tsv(in);
}

}  // namespace kmerspace
