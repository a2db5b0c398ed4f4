#include <doctest.h>

#include <cmath>

#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/encoder.hpp"

using namespace kmerspace;

namespace {

std::vector<OneHotKmer> random_kmers(std::uint64_t seed, std::size_t n, std::size_t k) {
  Rng rng(seed);
  std::vector<OneHotKmer> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (std::size_t j = 0; j < k; ++j) s.push_back(kBaseChars[uniform_int(rng, 0, 3)]);
    out.push_back(one_hot(s));
  }
  return out;
}

}  // namespace

TEST_CASE("downsampling lengths") {
  auto x = TensorF::zeros({1, 30, 2});
  std::vector<std::size_t> lengths;
  for (int s = 0; s < 3; ++s) {
    x = ad::avg_pool1d(x, 2, 2);
    lengths.push_back(x.dim(1));
  }
  CHECK(lengths == std::vector<std::size_t>{15, 8, 4});
}

TEST_CASE("preset parameter counts") {
  struct Expect {
    const char* name;
    double millions;
  };
  for (auto e : {Expect{"T", 16.8}, Expect{"S", 29.8}, Expect{"B", 66.5}}) {
    Rng rng(1);
    EncoderModel m(EncoderConfig::preset(e.name), rng);
    const double got = static_cast<double>(m.parameter_count()) / 1e6;
    INFO(e.name << " has " << got << "M parameters");
    CHECK(std::abs(got - e.millions) / e.millions < 0.05);
  }
  Rng rng(1);
  EncoderModel nano(EncoderConfig::nano(), rng);
  CHECK(nano.parameter_count() < 500000);
  CHECK_THROWS(EncoderConfig::preset("XL"));
}

TEST_CASE("outputs are unit rows and independent of the batch") {
  Rng rng(4);
  EncoderModel m(EncoderConfig::nano(), rng);
  auto kmers = random_kmers(9, 40, 30);
  auto all = encode(m, kmers, 7);
  CHECK(all.h.rows == 40);
  CHECK(all.h.cols == m.rep_dim());
  CHECK(all.z.cols == m.embed_dim());
  for (std::size_t i = 0; i < 40; ++i) {
    double nh = 0, nz = 0;
    for (float v : all.h.row(i)) nh += v * v;
    for (float v : all.z.row(i)) nz += v * v;
    CHECK(std::sqrt(nh) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::sqrt(nz) == doctest::Approx(1.0).epsilon(1e-5));
  }
  auto single = encode(m, std::span<const OneHotKmer>(kmers).subspan(13, 1));
  for (std::size_t j = 0; j < all.z.cols; ++j) CHECK(single.z.row(0)[j] == doctest::Approx(all.z.row(13)[j]).epsilon(1e-5));

  auto wrong = random_kmers(1, 2, 20);
  CHECK_THROWS(encode(m, wrong));
}

TEST_CASE("encoder checkpoint round trip") {
  for (bool norm_first : {false, true}) {
    EncoderConfig cfg = EncoderConfig::nano();
    cfg.norm_first = norm_first;
    Rng rng(12);
    EncoderModel m(cfg, rng);
    auto restored = EncoderModel::from_checkpoint(m.to_checkpoint());
    CHECK(restored.config() == m.config());
    CHECK(restored.to_checkpoint() == m.to_checkpoint());
    auto kmers = random_kmers(3, 5, 30);
    auto a = encode(m, kmers), b = encode(restored, kmers);
    CHECK(a.z.data == b.z.data);
  }
}

TEST_CASE("init scaling") {
  EncoderConfig fixed = EncoderConfig::nano();
  fixed.init_gain = 0;
  Rng r1(5);
  EncoderModel m(fixed, r1);
  for (const auto& [name, t] : m.named_parameters())
    if (name.ends_with(".w"))
      for (float v : t.values()) CHECK(std::abs(v) <= 0.1f);

  EncoderConfig bad = EncoderConfig::nano();
  bad.init_gain = -1;
  CHECK_THROWS(bad.validate());
}
