#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmerspace/mapper.hpp"
#include "oracles.hpp"

using namespace kmerspace;

namespace {

Genome random_genome(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Genome g{"chr", {}, {}};
  for (std::size_t i = 0; i < n; ++i) g.bases.push_back(kBaseChars[uniform_int(rng, 0, 3)]);
  return g;
}

}  // namespace

TEST_CASE("local alignment finds the best-scoring offset") {
  Genome g = random_genome(1, 3000);
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::string read;
    for (int i = 0; i < 25; ++i) read.push_back(kBaseChars[uniform_int(rng, 0, 3)]);
    const std::size_t center = uniform_int(rng, 0, 2999), W = 400;
    auto r = local_align(read, g, center, W);
    const std::size_t lo = center > W / 2 ? center - W / 2 : 0;
    const std::size_t hi = std::min(g.length() - read.size(), center + W / 2);
    const std::string rc = reverse_complement(read);
    std::size_t best = 0, at_best = 0;
    for (std::size_t off = lo; off <= hi; ++off)
      best = std::max({best, oracle::match_count(read, g.bases, off), oracle::match_count(rc, g.bases, off)});
    for (std::size_t off = lo; off <= hi; ++off)
      if (oracle::match_count(read, g.bases, off) == best || oracle::match_count(rc, g.bases, off) == best) ++at_best;
    CHECK(r.score == best);
    CHECK(r.coordinate >= lo);
    CHECK(r.coordinate <= hi);
    const std::string& oriented = r.strand == Strand::forward ? read : rc;
    CHECK(oracle::match_count(oriented, g.bases, r.coordinate) == best);
    CHECK(r.ambiguous == (at_best >= 2));
  }
}

TEST_CASE("planted reads align exactly on both strands") {
  Genome g = random_genome(3, 2000);
  const std::string read = g.bases.substr(700, 30);
  auto fwd = local_align(read, g, 650, 500);
  CHECK(fwd.coordinate == 700);
  CHECK(fwd.strand == Strand::forward);
  CHECK(fwd.score == 30);
  CHECK_FALSE(fwd.ambiguous);
  auto rev = local_align(reverse_complement(read), g, 900, 500);
  CHECK(rev.coordinate == 700);
  CHECK(rev.strand == Strand::revcomp);
  CHECK(rev.score == 30);

  Genome flat{"a", std::string(200, 'A'), {}};
  auto amb = local_align("AAAA", flat, 100, 50);
  CHECK(amb.ambiguous);
  CHECK(amb.coordinate == 100);
  CHECK(amb.strand == Strand::forward);

  CHECK_THROWS(local_align("", g, 10, 100));
  CHECK_THROWS(local_align(read, g, 10, 20));
}

TEST_CASE("refinement recovers simulated reads from true coordinates") {
  Genome g = random_genome(4, 5000);
  ReadSet reads = simulate_reads(g, 200, DamageConfig::noiseless(30), 5);
  std::vector<std::uint64_t> predicted;
  Rng rng(6);
  for (const auto& r : reads.reads) predicted.push_back(r.coordinate + uniform_int(rng, 0, 100));
  auto records = refine_predictions(reads, predicted, g, 500);
  auto ev = evaluate_mapping(records, reads);
  CHECK(ev.n == 200);
  CHECK(ev.accuracy == 1.0);
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].strand == reads.reads[i].strand);
}

TEST_CASE("mapping evaluation and TSV") {
  ReadSet truth;
  truth.reads = {Read{"r1", "ACGT", 10, Strand::forward}, Read{"r2", "ACGT", 25, Strand::forward}};
  std::vector<MappingRecord> recs{{"r1", 11, 10, Strand::forward, 4, false}, {"r2", 30, 20, Strand::revcomp, 3, true}};
  auto ev = evaluate_mapping(recs, truth);
  CHECK(ev.accuracy == 0.5);
  CHECK(ev.errors == std::vector<std::uint64_t>{0, 5});

  std::vector<MappingRecord> swapped{recs[1], recs[0]};
  CHECK_THROWS(evaluate_mapping(swapped, truth));
  CHECK_THROWS(evaluate_mapping({recs[0]}, truth));
  CHECK(std::isnan(evaluate_mapping({}, ReadSet{}).accuracy));

  std::stringstream ss;
  write_mapping_tsv(ss, recs);
  CHECK(ss.str().rfind("read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous\n", 0) == 0);
  CHECK(read_mapping_tsv(ss) == recs);
}
