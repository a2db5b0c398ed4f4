#include "kmerspace/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "kmerspace/parallel.hpp"

namespace kmerspace {

namespace {

std::size_t matches(std::string_view a, const char* b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] == b[i];
  return n;
}

std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace

AlignResult local_align(std::string_view read, const Genome& g, std::size_t center, std::size_t window) {
  const std::size_t len = read.size();
  if (len == 0) throw std::invalid_argument("local_align: empty read");
  if (window < len)
    throw std::invalid_argument("local_align: window " + std::to_string(window) + " shorter than read length " +
                                std::to_string(len));
  if (g.length() < len) throw std::invalid_argument("local_align: read longer than genome");
  const std::size_t half = window / 2;
  const std::size_t lo = center > half ? center - half : 0;
  const std::size_t hi = std::min(g.length() - len, center + half);
  if (lo > hi)
    throw std::invalid_argument("local_align: no valid offsets near coordinate " + std::to_string(center));

  const std::string rc = reverse_complement(read);
  AlignResult best;
  bool have = false;
  std::size_t best_offsets = 0, last_best_offset = std::numeric_limits<std::size_t>::max();
  const char* gb = g.bases.data();
  for (std::size_t off = lo; off <= hi; ++off) {
    const std::size_t sf = matches(read, gb + off);
    const std::size_t sr = matches(rc, gb + off);
    for (int s = 0; s < 2; ++s) {
      const std::size_t score = s == 0 ? sf : sr;
      const Strand strand = s == 0 ? Strand::forward : Strand::revcomp;
      if (have && score < best.score) continue;
      if (!have || score > best.score) {
        best_offsets = 0;
        last_best_offset = std::numeric_limits<std::size_t>::max();
      }
      if (off != last_best_offset) {
        ++best_offsets;
        last_best_offset = off;
      }
      bool take = !have || score > best.score;
      if (!take) {
        const std::size_t d_new = distance(off, center), d_old = distance(best.coordinate, center);
        if (d_new != d_old) take = d_new < d_old;
        else if (strand != best.strand) take = strand == Strand::forward;
        else take = off < best.coordinate;
      }
      if (take) best = {off, strand, score, false};
      have = true;
    }
  }
  best.ambiguous = best_offsets >= 2;
  return best;
}

std::vector<MappingRecord> refine_predictions(const ReadSet& reads, const std::vector<std::uint64_t>& predicted,
                                              const Genome& g, std::size_t window) {
  if (predicted.size() != reads.reads.size())
    throw std::invalid_argument("refine_predictions: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(reads.reads.size()) + " reads");
  std::vector<MappingRecord> out(reads.reads.size());
  parallel_for(out.size(), 64, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Read& r = reads.reads[i];
      AlignResult a = local_align(r.sequence, g, predicted[i], window);
      out[i] = {r.id, predicted[i], a.coordinate, a.strand, a.score, a.ambiguous};
    }
  });
  return out;
}

std::vector<MappingRecord> map_reads(const ReadSet& reads, const Genome& g, const EncoderModel& encoder,
                                     const PositionHead& head, std::size_t window) {
  if (reads.reads.empty()) return {};
  const std::size_t k = encoder.config().k;
  std::vector<OneHotKmer> xs;
  xs.reserve(reads.reads.size());
  for (const Read& r : reads.reads) {
    if (r.sequence.size() < k)
      throw std::invalid_argument("read '" + r.id + "' is shorter than the encoder k-mer length " +
                                  std::to_string(k));
    xs.push_back(one_hot(std::string_view(r.sequence).substr(0, k)));
  }
  const auto preds = head.predict(encode(encoder, xs).h);
  std::vector<std::uint64_t> centers;
  centers.reserve(preds.size());
  for (const auto& p : preds) centers.push_back(p.coordinate);
  return refine_predictions(reads, centers, g, window);
}

MappingEvaluation evaluate_mapping(const std::vector<MappingRecord>& records, const ReadSet& truth) {
  if (records.size() != truth.reads.size())
    throw std::invalid_argument("evaluate_mapping: " + std::to_string(records.size()) + " records but " +
                                std::to_string(truth.reads.size()) + " truth reads");
  MappingEvaluation ev;
  ev.n = records.size();
  ev.errors.reserve(ev.n);
  for (std::size_t i = 0; i < ev.n; ++i) {
    const Read& t = truth.reads[i];
    if (records[i].read_id != t.id)
      throw std::invalid_argument("evaluate_mapping: read id mismatch at row " + std::to_string(i) + " ('" +
                                  records[i].read_id + "' vs '" + t.id + "')");
    const std::uint64_t err = distance(records[i].refined, t.coordinate);
    ev.exact += err == 0;
    ev.errors.push_back(err);
  }
  ev.accuracy = ev.n ? static_cast<double>(ev.exact) / static_cast<double>(ev.n)
                     : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

void write_mapping_tsv(std::ostream& out, const std::vector<MappingRecord>& records) {
  out << "read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous\n";
  for (const auto& r : records)
    out << r.read_id << '\t' << r.predicted << '\t' << r.refined << '\t' << strand_char(r.strand) << '\t' << r.score
        << '\t' << (r.ambiguous ? 1 : 0) << '\n';
}

std::vector<MappingRecord> read_mapping_tsv(std::istream& in) {
  std::vector<MappingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("read_id\t", 0) == 0) continue;
    std::istringstream ls(line);
    MappingRecord r;
    std::string pred, refined, strand, score, amb;
    if (!std::getline(ls, r.read_id, '\t') || !std::getline(ls, pred, '\t') || !std::getline(ls, refined, '\t') ||
        !std::getline(ls, strand, '\t') || !std::getline(ls, score, '\t') || !std::getline(ls, amb, '\t'))
      throw ParseError("mapping TSV line " + std::to_string(line_no) + ": expected 6 columns");
    try {
      r.predicted = std::stoull(pred);
      r.refined = std::stoull(refined);
      r.score = std::stoull(score);
    } catch (const std::exception&) {
      throw ParseError("mapping TSV line " + std::to_string(line_no) + ": bad number");
    }
    r.strand = parse_strand(strand);
    r.ambiguous = amb == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace kmerspace
