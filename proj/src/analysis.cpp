#include "kmerspace/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "kmerspace/mapper.hpp"
#include "kmerspace/parallel.hpp"

namespace kmerspace {

EmbeddingIndex build_index(const EncoderModel& encoder, const Genome& g, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("build_index: stride must be >= 1");
  const std::size_t k = encoder.config().k;
  EmbeddingIndex idx;
  idx.genome = g.name;
  std::vector<OneHotKmer> xs;
  if (g.length() >= k) {
    for (std::size_t c = 0; c + k <= g.length(); c += stride) {
      if (g.overlaps_mask(c, k)) continue;
      xs.push_back(one_hot(std::string_view(g.bases).substr(c, k)));
      idx.coords.push_back(c);
    }
  }
  idx.Z = xs.empty() ? RowMatrix(0, encoder.embed_dim()) : encode(encoder, xs).z;
  return idx;
}

namespace {

double sq_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<Neighbor> knn(const EmbeddingIndex& index, std::span<const float> query, std::size_t K,
                          std::size_t exclude) {
  if (query.size() != index.Z.cols)
    throw std::invalid_argument("knn: query width " + std::to_string(query.size()) + ", index width " +
                                std::to_string(index.Z.cols));
  const std::size_t avail = index.size() - (exclude < index.size() ? 1 : 0);
  if (K > avail)
    throw std::invalid_argument("knn: K = " + std::to_string(K) + " exceeds the " + std::to_string(avail) +
                                " available rows");
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    if (i != exclude) d.emplace_back(sq_distance(query, index.Z.row(i)), i);
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(K), d.end());
  std::vector<Neighbor> out(K);
  for (std::size_t i = 0; i < K; ++i) out[i] = {d[i].second, std::sqrt(d[i].first)};
  return out;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) {
    h.edges.assign(bins + 1, 0.0);
    return h;
  }
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1.0;
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / bins);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

KnnDistanceStats mean_knn_genomic_distance(const EmbeddingIndex& index, std::size_t K, std::size_t bins) {
  if (index.coords.size() != index.size()) throw std::invalid_argument("index coordinates do not match rows");
  if (K == 0 || K >= index.size())
    throw std::invalid_argument("mean_knn_genomic_distance: need 1 <= K < index size");
  KnnDistanceStats s;
  s.per_row.assign(index.size(), 0.0);
  parallel_for(index.size(), 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double total = 0;
      for (const Neighbor& n : knn(index, index.Z.row(i), K, i)) {
        const auto a = index.coords[i], c = index.coords[n.row];
        total += static_cast<double>(a > c ? a - c : c - a);
      }
      s.per_row[i] = total / static_cast<double>(K);
    }
  });
  s.median = median(s.per_row);
  s.histogram = make_histogram(s.per_row, bins);
  return s;
}

KnnDistanceStats random_embedding_baseline(const std::vector<std::size_t>& coords, std::size_t dim, std::size_t K,
                                           std::uint64_t seed, std::size_t bins) {
  if (dim == 0) throw std::invalid_argument("baseline dimension must be >= 1");
  EmbeddingIndex idx;
  idx.coords = coords;
  idx.Z = RowMatrix(coords.size(), dim);
  Rng rng(seed);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto row = idx.Z.row(i);
    double norm = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      // Box-Muller on the library-independent uniform stream.
      const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
      const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      row[j] = static_cast<float>(g);
      norm += g * g;
    }
    const double inv = norm > 0 ? 1.0 / std::sqrt(norm) : 0.0;
    for (float& x : row) x = static_cast<float>(x * inv);
  }
  return mean_knn_genomic_distance(idx, K, bins);
}

Pca2 pca2(const RowMatrix& Z) {
  const std::size_t N = Z.rows, D = Z.cols;
  if (N < 3) throw std::invalid_argument("pca2 needs at least 3 rows");
  if (D < 2) throw std::invalid_argument("pca2 needs at least 2 columns");
  std::vector<double> mean(D, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < D; ++j) mean[j] += Z.data[i * D + j];
  for (double& m : mean) m /= static_cast<double>(N);
  std::vector<double> X(N * D);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < D; ++j) X[i * D + j] = Z.data[i * D + j] - mean[j];
  std::vector<double> C(D * D, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const double* x = X.data() + i * D;
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = a; b < D; ++b) C[a * D + b] += x[a] * x[b];
  }
  double trace = 0;
  for (std::size_t a = 0; a < D; ++a)
    for (std::size_t b = a; b < D; ++b) {
      C[a * D + b] /= static_cast<double>(N - 1);
      C[b * D + a] = C[a * D + b];
    }
  for (std::size_t a = 0; a < D; ++a) trace += C[a * D + a];
  if (!(trace > 1e-300)) throw std::invalid_argument("pca2: input has zero variance");

  Pca2 out;
  std::vector<double> v(D), w(D);
  for (int comp = 0; comp < 2; ++comp) {
    for (std::size_t j = 0; j < D; ++j) v[j] = 1.0 + 0.01 * static_cast<double>((j * 7919) % 101);
    double lambda = 0;
    for (int it = 0; it < 20000; ++it) {
      for (std::size_t a = 0; a < D; ++a) {
        double s = 0;
        for (std::size_t b = 0; b < D; ++b) s += C[a * D + b] * v[b];
        w[a] = s;
      }
      double n = 0;
      for (double x : w) n += x * x;
      n = std::sqrt(n);
      if (n < 1e-300) break;  // remaining variance is zero
      double change = 0;
      for (std::size_t j = 0; j < D; ++j) {
        w[j] /= n;
        change = std::max(change, std::abs(w[j] - v[j]));
      }
      v.swap(w);
      lambda = n;
      if (change < 1e-13) break;
    }
    double vn = 0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    for (double& x : v) x /= vn;
    // Rayleigh quotient for the eigenvalue.
    lambda = 0;
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) lambda += v[a] * C[a * D + b] * v[b];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < D; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0)
      for (double& x : v) x = -x;
    out.components[comp] = v;
    out.explained[comp] = std::max(0.0, lambda) / trace;
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) C[a * D + b] -= lambda * v[a] * v[b];
  }
  out.projection = RowMatrix(N, 2);
  for (std::size_t i = 0; i < N; ++i)
    for (int comp = 0; comp < 2; ++comp) {
      double s = 0;
      for (std::size_t j = 0; j < D; ++j) s += X[i * D + j] * out.components[comp][j];
      out.projection.data[i * 2 + comp] = static_cast<float>(s);
    }
  return out;
}

std::vector<EcdfRow> ecdf(std::span<const std::uint64_t> errors, std::span<const double> thresholds) {
  if (errors.empty()) throw std::invalid_argument("ecdf of an empty error list");
  std::vector<std::uint64_t> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<EcdfRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    // count of errors e with e < t
    const auto below = std::partition_point(sorted.begin(), sorted.end(),
                                            [t](std::uint64_t e) { return static_cast<double>(e) < t; });
    const double f = static_cast<double>(below - sorted.begin()) / n;
    rows.push_back({t, f, 1.0 - f});
  }
  return rows;
}

std::vector<double> default_ecdf_thresholds(std::span<const std::uint64_t> errors) {
  const double mx = errors.empty() ? 0.0 : static_cast<double>(*std::max_element(errors.begin(), errors.end()));
  std::vector<double> t{0.0, 1.0};
  for (double decade = 1.0; t.back() <= mx; decade *= 10.0)
    for (double m : {2.0, 5.0, 10.0}) {
      if (t.back() > mx) break;
      t.push_back(m * decade);
    }
  return t;
}

Genome plant_inversion(const Genome& g, std::size_t start, std::size_t len) {
  if (start + len > g.length()) throw std::invalid_argument("inversion runs past the genome end");
  Genome out = g;
  out.bases.replace(start, len, reverse_complement(std::string_view(g.bases).substr(start, len)));
  return out;
}

std::vector<double> end_pair_distances(const ReadSet& reads, const EncoderModel& encoder, std::size_t* skipped) {
  const std::size_t k = encoder.config().k;
  std::vector<OneHotKmer> xs;
  std::vector<std::size_t> rows;
  std::size_t skip = 0;
  for (std::size_t i = 0; i < reads.reads.size(); ++i) {
    const std::string& s = reads.reads[i].sequence;
    if (s.size() < 2 * k) {
      ++skip;
      continue;
    }
    xs.push_back(one_hot(std::string_view(s).substr(0, k)));
    xs.push_back(one_hot(std::string_view(s).substr(s.size() - k)));
    rows.push_back(i);
  }
  if (skip > 0) std::cerr << "warning: skipped " << skip << " reads shorter than 2k = " << 2 * k << " bp\n";
  if (skipped) *skipped = skip;
  std::vector<double> d(reads.reads.size(), std::numeric_limits<double>::quiet_NaN());
  if (xs.empty()) return d;
  const RowMatrix Z = encode(encoder, xs).z;
  for (std::size_t r = 0; r < rows.size(); ++r) d[rows[r]] = std::sqrt(sq_distance(Z.row(2 * r), Z.row(2 * r + 1)));
  return d;
}

namespace {

// Reads with an end-pair distance, cut to their first k bases and mapped onto g.
struct MappedDistances {
  std::vector<std::string> ids;
  std::vector<std::size_t> coords;
  std::vector<double> dist;
};

MappedDistances map_with_distances(const ReadSet& reads, const Genome& g, const EncoderModel& encoder,
                                   const PositionHead& head, std::size_t window, std::size_t* skipped) {
  const std::vector<double> dist = end_pair_distances(reads, encoder, skipped);
  const std::size_t k = encoder.config().k;
  ReadSet usable;
  MappedDistances out;
  for (std::size_t i = 0; i < reads.reads.size(); ++i) {
    if (std::isnan(dist[i])) continue;
    Read r = reads.reads[i];
    r.sequence.resize(k);
    usable.reads.push_back(std::move(r));
    out.dist.push_back(dist[i]);
  }
  for (const auto& m : map_reads(usable, g, encoder, head, std::max(window, k))) {
    out.ids.push_back(m.read_id);
    out.coords.push_back(m.refined);
  }
  return out;
}

}  // namespace

InversionReport inversion_scan(const ReadSet& reads, const ReadSet& background, const Genome& g,
                               const EncoderModel& encoder, const PositionHead& head, const InversionConfig& cfg) {
  if (!(cfg.quantile > 0.0 && cfg.quantile < 1.0)) throw std::invalid_argument("inversion quantile must be in (0, 1)");
  InversionReport rep;
  const MappedDistances bg = map_with_distances(background, g, encoder, head, cfg.window, nullptr);
  if (bg.dist.empty()) throw std::invalid_argument("inversion_scan: background has no usable reads");
  for (double q : {0.5, 0.9, 0.99, 0.999}) rep.background_quantiles.emplace_back(q, quantile(bg.dist, q));
  rep.threshold = quantile(bg.dist, cfg.quantile);
  if (std::none_of(rep.background_quantiles.begin(), rep.background_quantiles.end(),
                   [&](const auto& p) { return p.first == cfg.quantile; }))
    rep.background_quantiles.emplace_back(cfg.quantile, rep.threshold);

  std::vector<std::pair<std::size_t, double>> by_coord;
  for (std::size_t i = 0; i < bg.dist.size(); ++i) by_coord.emplace_back(bg.coords[i], bg.dist[i]);
  std::sort(by_coord.begin(), by_coord.end());
  auto threshold_at = [&](std::size_t c) {
    if (cfg.local_background == 0) return rep.threshold;
    const std::size_t lo = c > cfg.local_background ? c - cfg.local_background : 0;
    auto first = std::lower_bound(by_coord.begin(), by_coord.end(), std::make_pair(lo, -HUGE_VAL));
    auto last = std::upper_bound(by_coord.begin(), by_coord.end(), std::make_pair(c + cfg.local_background, HUGE_VAL));
    if (last - first < 20) return rep.threshold;
    std::vector<double> local;
    for (auto it = first; it != last; ++it) local.push_back(it->second);
    return quantile(std::move(local), cfg.quantile);
  };

  const MappedDistances rd = map_with_distances(reads, g, encoder, head, cfg.window, &rep.skipped);
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < rd.dist.size(); ++i) {
    const double t = threshold_at(rd.coords[i]);
    const bool f = rd.dist[i] > t;
    rep.reads.push_back({rd.ids[i], rd.coords[i], rd.dist[i], t, f});
    if (f) flagged.push_back(rd.coords[i]);
  }
  std::sort(flagged.begin(), flagged.end());
  const std::size_t read_len = reads.reads.empty() ? 0 : reads.reads.front().sequence.size();
  for (std::size_t i = 0; i < flagged.size();) {
    std::size_t j = i + 1;
    while (j < flagged.size() && flagged[j] - flagged[j - 1] <= cfg.cluster_gap) ++j;
    if (j - i >= cfg.min_support)
      rep.intervals.push_back({flagged[i], std::min(g.length(), flagged[j - 1] + read_len), j - i});
    i = j;
  }
  return rep;
}

NeighborDistribution coordinate_modality(std::vector<std::size_t> coords, std::size_t bins) {
  NeighborDistribution nd;
  nd.coords = coords;
  std::vector<double> vals(coords.begin(), coords.end());
  nd.histogram = make_histogram(vals, bins);
  std::sort(coords.begin(), coords.end());
  if (coords.size() < 2) return nd;
  std::vector<double> gaps;
  for (std::size_t i = 1; i < coords.size(); ++i) gaps.push_back(static_cast<double>(coords[i] - coords[i - 1]));
  nd.largest_gap = *std::max_element(gaps.begin(), gaps.end());
  nd.median_gap = median(gaps);
  nd.multimodal = nd.largest_gap > 5.0 * std::max(nd.median_gap, 1.0);
  return nd;
}

NeighborDistribution neighbor_coordinate_distribution(const EmbeddingIndex& index, std::string_view kmer,
                                                      const EncoderModel& encoder, std::size_t K, std::size_t bins) {
  if (kmer.size() != encoder.config().k) throw std::invalid_argument("query k-mer length differs from encoder k");
  if (K > index.size()) throw std::invalid_argument("K exceeds index size");
  const OneHotKmer x = one_hot(kmer);
  const RowMatrix z = encode(encoder, std::span<const OneHotKmer>(&x, 1)).z;
  std::vector<std::size_t> coords;
  for (const Neighbor& n : knn(index, z.row(0), K)) coords.push_back(index.coords[n.row]);
  return coordinate_modality(std::move(coords), bins);
}

void write_embedding_csv(std::ostream& out, const EmbeddingIndex& index) {
  out << "coordinate";
  for (std::size_t j = 0; j < index.Z.cols; ++j) out << ",z" << j;
  out << '\n';
  out.precision(9);
  for (std::size_t i = 0; i < index.size(); ++i) {
    out << index.coords[i];
    for (float v : index.Z.row(i)) out << ',' << v;
    out << '\n';
  }
}

void write_pca_csv(std::ostream& out, const Pca2& pca, const std::vector<std::size_t>& coords) {
  out << "pc1,pc2,coordinate\n";
  out.precision(9);
  for (std::size_t i = 0; i < pca.projection.rows; ++i)
    out << pca.projection.data[2 * i] << ',' << pca.projection.data[2 * i + 1] << ','
        << (i < coords.size() ? std::to_string(coords[i]) : std::string()) << '\n';
}

void write_ecdf_csv(std::ostream& out, const std::vector<EcdfRow>& rows) {
  out << "t,ecdf,one_minus_ecdf\n";
  out.precision(9);
  for (const auto& r : rows) out << r.t << ',' << r.ecdf << ',' << r.complement << '\n';
}

void write_knn_stats_csv(std::ostream& out, const KnnDistanceStats& stats, const std::vector<std::size_t>& coords) {
  out << "coordinate,mean_knn_distance\n";
  out.precision(9);
  for (std::size_t i = 0; i < stats.per_row.size(); ++i) out << coords.at(i) << ',' << stats.per_row[i] << '\n';
}

void write_inversion_reads_csv(std::ostream& out, const InversionReport& rep) {
  out << "read_id,predicted_coord,distance,threshold,flagged\n";
  out.precision(9);
  for (const auto& r : rep.reads)
    out << r.read_id << ',' << r.predicted << ',' << r.distance << ',' << r.threshold << ',' << r.flagged << '\n';
}

void write_inversion_intervals_csv(std::ostream& out, const InversionReport& rep) {
  out << "start,end,support\n";
  for (const auto& iv : rep.intervals) out << iv.start << ',' << iv.end << ',' << iv.support << '\n';
}

void write_background_quantiles_csv(std::ostream& out, const InversionReport& rep) {
  out << "quantile,distance\n";
  out.precision(9);
  for (const auto& [q, d] : rep.background_quantiles) out << q << ',' << d << '\n';
}

}  // namespace kmerspace
