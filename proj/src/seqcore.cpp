#include "kmerspace/seqcore.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kmerspace {

std::string reverse_complement(std::string_view seq) {
  std::string out(seq.size(), 'N');
  for (std::size_t i = 0; i < seq.size(); ++i) out[seq.size() - 1 - i] = complement(seq[i]);
  return out;
}

char strand_char(Strand s) { return s == Strand::forward ? '+' : '-'; }

Strand parse_strand(std::string_view s) {
  if (s == "+" || s == "forward") return Strand::forward;
  if (s == "-" || s == "revcomp") return Strand::revcomp;
  throw ParseError("invalid strand '" + std::string(s) + "'");
}

bool Genome::overlaps_mask(std::size_t start, std::size_t len) const {
  if (masked.empty()) return false;
  auto it = std::lower_bound(masked.begin(), masked.end(), start);
  return it != masked.end() && *it < start + len;
}

int OneHotKmer::hot(std::size_t row) const {
  int col = -1;
  int ones = 0;
  bool clean = true;
  for (int c = 0; c < 4; ++c) {
    std::uint8_t v = at(row, c);
    if (v == 1) {
      ++ones;
      col = c;
    } else if (v != 0) {
      clean = false;
    }
  }
  if (ones != 1 || !clean) throw std::invalid_argument("one-hot row " + std::to_string(row) + " is not one-hot");
  return col;
}

namespace {

void finish_record(std::vector<Genome>& out, Genome& cur, bool open, std::size_t line_no) {
  if (!open) return;
  if (cur.bases.empty())
    throw ParseError("FASTA record '" + cur.name + "' ending before line " + std::to_string(line_no) +
                     " has no sequence");
  out.push_back(std::move(cur));
  cur = Genome{};
}

}  // namespace

std::vector<Genome> parse_fasta(std::string_view text, NPolicy policy) {
  std::vector<Genome> out;
  Genome cur;
  bool open = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '>') {
      finish_record(out, cur, open, line_no);
      open = true;
      std::string_view header = line.substr(1);
      auto ws = header.find_first_of(" \t");
      cur.name = std::string(header.substr(0, ws));
      continue;
    }
    if (line.front() == ';') continue;
    if (!open) throw ParseError("sequence data before first '>' header at line " + std::to_string(line_no));
    for (char c : line) {
      int idx = base_index(c);
      if (idx >= 0) {
        cur.bases.push_back(kBaseChars[idx]);
      } else if (c == 'N' || c == 'n') {
        if (policy == NPolicy::reject)
          throw ParseError("record '" + cur.name + "': non-ACGT symbol 'N' at position " +
                           std::to_string(cur.bases.size()));
        cur.masked.push_back(cur.bases.size());
        cur.bases.push_back('A');
      } else {
        throw ParseError("record '" + cur.name + "': invalid symbol '" + std::string(1, c) + "' at position " +
                         std::to_string(cur.bases.size()));
      }
    }
    if (end == text.size()) break;
  }
  finish_record(out, cur, open, line_no);
  if (out.empty()) throw ParseError("FASTA input contains no records");
  return out;
}

std::vector<Genome> read_fasta_file(const std::string& path, NPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open FASTA file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fasta(ss.str(), policy);
}

Kmer kmer_at(const Genome& g, std::size_t coordinate, std::size_t k) {
  if (k == 0 || coordinate + k > g.length())
    throw std::out_of_range("k-mer [" + std::to_string(coordinate) + ", " + std::to_string(coordinate + k) +
                            ") outside genome of length " + std::to_string(g.length()));
  return Kmer{g.bases.substr(coordinate, k), KmerOrigin{g.name, coordinate, Strand::forward}};
}

std::vector<Kmer> extract_kmers(const Genome& g, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (k > g.length())
    throw std::invalid_argument("k=" + std::to_string(k) + " exceeds genome length " + std::to_string(g.length()));
  std::vector<Kmer> out;
  out.reserve(g.length() - k + 1);
  for (std::size_t c = 0; c + k <= g.length(); ++c) {
    if (g.overlaps_mask(c, k)) continue;
    out.push_back(kmer_at(g, c, k));
  }
  return out;
}

OneHotKmer one_hot(std::string_view bases) {
  OneHotKmer x(bases.size());
  for (std::size_t i = 0; i < bases.size(); ++i) {
    int idx = base_index(bases[i]);
    if (idx < 0) throw std::invalid_argument("cannot one-hot encode symbol '" + std::string(1, bases[i]) + "'");
    x.at(i, idx) = 1;
  }
  return x;
}

OneHotKmer reverse_complement(const OneHotKmer& x) {
  const std::size_t k = x.k();
  OneHotKmer out(k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < 4; ++c) out.at(k - 1 - r, 3 - c) = x.at(r, c);
  return out;
}

Kmer decode_one_hot(const OneHotKmer& x) {
  Kmer km;
  km.bases.resize(x.k());
  for (std::size_t r = 0; r < x.k(); ++r) km.bases[r] = kBaseChars[x.hot(r)];
  return km;
}

}  // namespace kmerspace
