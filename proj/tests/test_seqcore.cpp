#include <doctest.h>

#include <algorithm>

#include "kmerspace/rng.hpp"
#include "kmerspace/seqcore.hpp"

using namespace kmerspace;

namespace {

// Matrices written out by hand: rows are bases, columns A,C,G,T.
const std::vector<std::vector<int>> kTGCGTGG = {
    {0, 0, 0, 1}, {0, 0, 1, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}, {0, 0, 1, 0}};
const std::vector<std::vector<int>> kCCACGCA = {
    {0, 1, 0, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}};

bool matches(const OneHotKmer& x, const std::vector<std::vector<int>>& m) {
  if (x.k() != m.size()) return false;
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < 4; ++c)
      if (x.at(r, c) != m[r][c]) return false;
  return true;
}

std::string random_bases(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(kBaseChars[uniform_int(rng, 0, 3)]);
  return s;
}

}  // namespace

TEST_CASE("parse_fasta") {
  auto g = parse_fasta(">s\nACGT");
  REQUIRE(g.size() == 1);
  CHECK(g[0].name == "s");
  CHECK(g[0].bases == "ACGT");
  CHECK(parse_fasta(">s\nAC\nGT")[0].bases == "ACGT");
  CHECK(parse_fasta(">s desc\nacgt\n")[0].bases == "ACGT");

  auto two = parse_fasta(">a\nAC\n>b\nGGT\n");
  REQUIRE(two.size() == 2);
  CHECK(two[1].name == "b");
  CHECK(two[1].bases == "GGT");

  try {
    parse_fasta(">s\nACNT");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("position 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_fasta(">s\nACXT"), ParseError);
  CHECK_THROWS_AS(parse_fasta(">s\n>t\nAC"), ParseError);
  CHECK_THROWS_AS(parse_fasta(""), ParseError);

  auto masked = parse_fasta(">s\nACNTACGT", NPolicy::mask);
  CHECK(masked[0].length() == 8);
  CHECK(masked[0].masked == std::vector<std::size_t>{2});
  CHECK(masked[0].overlaps_mask(0, 3));
  CHECK_FALSE(masked[0].overlaps_mask(3, 5));
  auto kms = extract_kmers(masked[0], 3);
  CHECK(kms.size() == 3);  // starts 3, 4, 5
  CHECK(kms.front().origin->coordinate == 3);
}

TEST_CASE("extract_kmers") {
  Genome g{"x", "TGCGTGG", {}};
  auto k3 = extract_kmers(g, 3);
  std::vector<std::string> want3{"TGC", "GCG", "CGT", "GTG", "TGG"};
  REQUIRE(k3.size() == want3.size());
  for (std::size_t i = 0; i < k3.size(); ++i) {
    CHECK(k3[i].bases == want3[i]);
    CHECK(k3[i].origin->coordinate == i);
  }
  auto k5 = extract_kmers(g, 5);
  REQUIRE(k5.size() == 3);
  CHECK(k5[0].bases == "TGCGT");
  CHECK(k5[1].bases == "GCGTG");
  CHECK(k5[2].bases == "CGTGG");

  Genome a{"a", "ACGT", {}};
  auto k4 = extract_kmers(a, 4);
  REQUIRE(k4.size() == 1);
  CHECK(k4[0].bases == "ACGT");
  CHECK(k4[0].origin->coordinate == 0);
  CHECK_THROWS(extract_kmers(a, 5));

  Rng rng(5);
  Genome r{"r", random_bases(rng, 200), {}};
  for (std::size_t k : {1, 7, 30, 200}) {
    auto ks = extract_kmers(r, k);
    CHECK(ks.size() == 200 - k + 1);
    for (std::size_t i = 1; i < ks.size(); ++i) CHECK(ks[i].origin->coordinate == ks[i - 1].origin->coordinate + 1);
  }
}

TEST_CASE("one-hot encoding and reverse complement") {
  CHECK(matches(one_hot("A"), {{1, 0, 0, 0}}));
  CHECK(matches(one_hot("T"), {{0, 0, 0, 1}}));
  const OneHotKmer x = one_hot("TGCGTGG");
  CHECK(matches(x, kTGCGTGG));
  CHECK(matches(reverse_complement(x), kCCACGCA));
  CHECK(reverse_complement(x) == one_hot("CCACGCA"));
  CHECK(reverse_complement(one_hot("AT")) == one_hot("AT"));

  OneHotKmer m(7);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 4; ++c) m.at(r, c) = static_cast<std::uint8_t>(kCCACGCA[r][c]);
  CHECK(decode_one_hot(m).bases == "CCACGCA");
  CHECK(decode_one_hot(one_hot("ACGT")).bases == "ACGT");

  OneHotKmer bad(2);
  bad.at(0, 1) = 1;
  CHECK_THROWS(decode_one_hot(bad));  // row 1 is all zeros
  bad.at(1, 0) = 1;
  bad.at(1, 3) = 1;
  CHECK_THROWS(decode_one_hot(bad));
}

TEST_CASE("one-hot properties over random k-mers") {
  Rng rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::string s = random_bases(rng, 1 + uniform_int(rng, 0, 40));
    const OneHotKmer x = one_hot(s);
    for (std::size_t r = 0; r < x.k(); ++r) {
      int sum = 0;
      for (std::size_t c = 0; c < 4; ++c) sum += x.at(r, c);
      REQUIRE(sum == 1);
    }
    REQUIRE(reverse_complement(reverse_complement(x)) == x);
    REQUIRE(reverse_complement(x) == one_hot(reverse_complement(s)));
    REQUIRE(decode_one_hot(x).bases == s);
  }
}

TEST_CASE("strand helpers") {
  CHECK(strand_char(Strand::forward) == '+');
  CHECK(strand_char(Strand::revcomp) == '-');
  CHECK(parse_strand("-") == Strand::revcomp);
  CHECK(parse_strand("forward") == Strand::forward);
  CHECK_THROWS_AS(parse_strand("x"), ParseError);
  CHECK(reverse_complement(std::string_view("AACG")) == "CGTT");
}
