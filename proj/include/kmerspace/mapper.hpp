#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kmerspace/encoder.hpp"
#include "kmerspace/heads.hpp"
#include "kmerspace/noise.hpp"

namespace kmerspace {

inline constexpr std::size_t kDefaultWindow = 5000;

struct AlignResult {
  std::size_t coordinate = 0;
  Strand strand = Strand::forward;
  std::size_t score = 0;  // matching positions
  bool ambiguous = false;  // another offset reaches the same score
};

/// Exhaustive match-count scan of the read and its reverse complement over start offsets
/// [max(0, center - W/2), min(L - len, center + W/2)]. Ties prefer the offset nearest to
/// `center`, then the forward strand, then the smaller coordinate.
AlignResult local_align(std::string_view read, const Genome& g, std::size_t center, std::size_t window);

struct MappingRecord {
  std::string read_id;
  std::uint64_t predicted = 0;
  std::size_t refined = 0;
  Strand strand = Strand::forward;
  std::size_t score = 0;
  bool ambiguous = false;

  bool operator==(const MappingRecord&) const = default;
};

/// Refines externally supplied coordinate predictions, one per read.
std::vector<MappingRecord> refine_predictions(const ReadSet& reads, const std::vector<std::uint64_t>& predicted,
                                              const Genome& g, std::size_t window);

/// Head prediction on the first k bases of each read as given, then local alignment.
std::vector<MappingRecord> map_reads(const ReadSet& reads, const Genome& g, const EncoderModel& encoder,
                                     const PositionHead& head, std::size_t window = kDefaultWindow);

struct MappingEvaluation {
  std::size_t n = 0;
  std::size_t exact = 0;
  double accuracy = 0;  // NaN when n == 0
  std::vector<std::uint64_t> errors;  // |refined - truth| per record
};

/// Records and truth must list the same read ids in the same order.
MappingEvaluation evaluate_mapping(const std::vector<MappingRecord>& records, const ReadSet& truth);

/// Columns: read_id, pred_coord, refined_coord, strand, score, ambiguous.
void write_mapping_tsv(std::ostream& out, const std::vector<MappingRecord>& records);
std::vector<MappingRecord> read_mapping_tsv(std::istream& in);

}  // namespace kmerspace
