#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kmerspace {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base ordering A,C,G,T is the one-hot column order. Complement is 3 - index.
enum class Base : std::uint8_t { A = 0, C = 1, G = 2, T = 3 };

enum class Strand : std::uint8_t { forward = 0, revcomp = 1 };

inline constexpr std::array<char, 4> kBaseChars = {'A', 'C', 'G', 'T'};

/// Index of an uppercase or lowercase ACGT symbol, or -1 for anything else.
inline int base_index(char c) {
  switch (c) {
    case 'A': case 'a': return 0;
    case 'C': case 'c': return 1;
    case 'G': case 'g': return 2;
    case 'T': case 't': return 3;
    default: return -1;
  }
}

inline char complement(char c) {
  int i = base_index(c);
  return i < 0 ? 'N' : kBaseChars[3 - i];
}

/// Biological reverse complement of an ACGT string.
std::string reverse_complement(std::string_view seq);

char strand_char(Strand s);
Strand parse_strand(std::string_view s);

/// How non-ACGT symbols are treated by parse_fasta.
enum class NPolicy {
  reject,  // any N is a parse error
  mask,    // N positions are recorded; overlapping k-mers are excluded downstream
};

struct Genome {
  std::string name;
  std::string bases;  // uppercase ACGT only; masked positions hold 'A'
  std::vector<std::size_t> masked;  // sorted N positions (mask policy only)

  std::size_t length() const { return bases.size(); }

  /// True when [start, start + len) contains a masked position.
  bool overlaps_mask(std::size_t start, std::size_t len) const;
};

struct KmerOrigin {
  std::string genome;
  std::size_t coordinate = 0;  // 0-based first nucleotide on the forward strand
  Strand strand = Strand::forward;

  bool operator==(const KmerOrigin&) const = default;
};

struct Kmer {
  std::string bases;
  std::optional<KmerOrigin> origin;

  std::size_t size() const { return bases.size(); }
  bool operator==(const Kmer&) const = default;
};

/// k x 4 one-hot matrix stored row-major; row i encodes base i.
class OneHotKmer {
 public:
  OneHotKmer() = default;
  explicit OneHotKmer(std::size_t k) : cells_(k * 4, 0) {}

  std::size_t k() const { return cells_.size() / 4; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return cells_[row * 4 + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return cells_[row * 4 + col]; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }

  /// Column index of the hot cell in `row`. Throws if the row is not one-hot.
  int hot(std::size_t row) const;

  bool operator==(const OneHotKmer&) const = default;

 private:
  std::vector<std::uint8_t> cells_;
};

std::vector<Genome> parse_fasta(std::string_view text, NPolicy policy = NPolicy::reject);
std::vector<Genome> read_fasta_file(const std::string& path, NPolicy policy = NPolicy::reject);

/// All L-k+1 k-mers in coordinate order. Under the mask policy, k-mers
/// overlapping a masked position are omitted.
std::vector<Kmer> extract_kmers(const Genome& g, std::size_t k);

/// Forward-strand k-mer starting at `coordinate`.
Kmer kmer_at(const Genome& g, std::size_t coordinate, std::size_t k);

OneHotKmer one_hot(std::string_view bases);
inline OneHotKmer one_hot(const Kmer& km) { return one_hot(km.bases); }

/// Flips both axes: rows reversed, columns reversed (A<->T, C<->G).
OneHotKmer reverse_complement(const OneHotKmer& x);

Kmer decode_one_hot(const OneHotKmer& x);

}  // namespace kmerspace
