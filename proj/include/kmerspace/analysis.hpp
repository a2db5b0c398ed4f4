#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kmerspace/encoder.hpp"
#include "kmerspace/heads.hpp"
#include "kmerspace/noise.hpp"

namespace kmerspace {

struct EmbeddingIndex {
  RowMatrix Z;  // unit rows
  std::vector<std::size_t> coords;
  std::string genome;

  std::size_t size() const { return Z.rows; }
};

/// Embeds every stride-th k-mer of `g` (k-mers over masked positions are skipped).
EmbeddingIndex build_index(const EncoderModel& encoder, const Genome& g, std::size_t stride = 1);

struct Neighbor {
  std::size_t row = 0;
  double distance = 0;  // Euclidean
};

/// Exact K nearest rows, ascending by distance, ties by row index. `exclude` skips one row.
std::vector<Neighbor> knn(const EmbeddingIndex& index, std::span<const float> query, std::size_t K,
                          std::size_t exclude = static_cast<std::size_t>(-1));

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins);

struct KnnDistanceStats {
  std::vector<double> per_row;  // mean |c_self - c_neighbor| over the K nearest other rows
  double median = 0;
  Histogram histogram;
};

KnnDistanceStats mean_knn_genomic_distance(const EmbeddingIndex& index, std::size_t K = 10, std::size_t bins = 50);

/// Same statistic on random unit vectors placed at the index coordinates.
KnnDistanceStats random_embedding_baseline(const std::vector<std::size_t>& coords, std::size_t dim, std::size_t K,
                                           std::uint64_t seed, std::size_t bins = 50);

double median(std::vector<double> v);
/// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q);

struct Pca2 {
  RowMatrix projection;               // N x 2
  std::vector<double> components[2];  // unit eigenvectors, largest-magnitude entry positive
  double explained[2] = {0, 0};       // fraction of total variance
};

/// Top two principal components by power iteration with deflation.
Pca2 pca2(const RowMatrix& Z);

struct EcdfRow {
  double t = 0;
  double ecdf = 0;  // fraction of errors strictly below t
  double complement = 0;
};

std::vector<EcdfRow> ecdf(std::span<const std::uint64_t> errors, std::span<const double> thresholds);
/// 0, 1, then a 1-2-5 grid up to the first value above the largest error.
std::vector<double> default_ecdf_thresholds(std::span<const std::uint64_t> errors);

/// Copy of `g` with [start, start + len) replaced by its reverse complement.
Genome plant_inversion(const Genome& g, std::size_t start, std::size_t len);

struct InversionConfig {
  double quantile = 0.99;
  std::size_t window = 500;        // local alignment window around the head prediction
  std::size_t cluster_gap = 1000;  // flagged reads closer than this join one interval
  std::size_t min_support = 3;     // flagged reads needed for an interval
  // Half-width in bp of the predicted-coordinate window whose background reads set a read's
  // threshold; 0, or fewer than 20 background reads in the window, uses the global quantile.
  std::size_t local_background = 1000;
};

struct InversionRead {
  std::string read_id;
  std::size_t predicted = 0;
  double distance = 0;
  double threshold = 0;
  bool flagged = false;
};

struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t support = 0;
};

struct InversionReport {
  std::vector<InversionRead> reads;
  std::vector<Interval> intervals;
  std::vector<std::pair<double, double>> background_quantiles;  // (q, distance)
  double threshold = 0;  // global background quantile
  std::size_t skipped = 0;
};

/// Embedding distance between the first and last k-mer of each read.
std::vector<double> end_pair_distances(const ReadSet& reads, const EncoderModel& encoder, std::size_t* skipped = nullptr);

/// Flags reads whose end-pair distance exceeds the configured quantile of `background`
/// (same statistic on reads without structural variants) and clusters them by predicted
/// coordinate on the reference `g`.
InversionReport inversion_scan(const ReadSet& reads, const ReadSet& background, const Genome& g,
                               const EncoderModel& encoder, const PositionHead& head, const InversionConfig& cfg);

struct NeighborDistribution {
  std::vector<std::size_t> coords;  // neighbor coordinates, nearest first
  Histogram histogram;
  double largest_gap = 0;
  double median_gap = 0;
  bool multimodal = false;
};

/// Largest-gap modality test on sorted coordinates: multimodal when the largest gap
/// exceeds 5x the median gap (median floored at 1 bp).
NeighborDistribution coordinate_modality(std::vector<std::size_t> coords, std::size_t bins = 50);

NeighborDistribution neighbor_coordinate_distribution(const EmbeddingIndex& index, std::string_view kmer,
                                                      const EncoderModel& encoder, std::size_t K = 250,
                                                      std::size_t bins = 50);

void write_embedding_csv(std::ostream& out, const EmbeddingIndex& index);
void write_pca_csv(std::ostream& out, const Pca2& pca, const std::vector<std::size_t>& coords);
void write_ecdf_csv(std::ostream& out, const std::vector<EcdfRow>& rows);
void write_knn_stats_csv(std::ostream& out, const KnnDistanceStats& stats, const std::vector<std::size_t>& coords);
void write_inversion_reads_csv(std::ostream& out, const InversionReport& rep);
void write_inversion_intervals_csv(std::ostream& out, const InversionReport& rep);
void write_background_quantiles_csv(std::ostream& out, const InversionReport& rep);

}  // namespace kmerspace
