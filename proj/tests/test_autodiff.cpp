#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "kmerspace/autodiff/checkpoint.hpp"
#include "kmerspace/autodiff/ops.hpp"
#include "kmerspace/autodiff/optim.hpp"

using namespace kmerspace;
using namespace kmerspace::ad;

TEST_CASE("finite differences agree with every op's backward") {
  for (const auto& c : gradcheck::all_op_cases()) {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      Rng rng(derive_seed(1234, trial));
      auto inputs = c.make_inputs(rng);
      const double err = gradcheck::max_relative_error(gradcheck::projected(c.op, trial + 99), inputs);
      INFO(c.name << " trial " << trial);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("AdamW matches a hand-computed update") {
  auto p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f}, true);
  auto g = p.grad();
  const float grads[] = {0.1f, -0.3f, 0.0f};
  std::copy(std::begin(grads), std::end(grads), g.begin());
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  auto st = make_optimizer({p}, cfg);
  const double lr = 1e-2;
  const double w0[] = {1.0, -2.0, 0.5};
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0}, w[3] = {w0[0], w0[1], w0[2]};
  for (int t = 1; t <= 3; ++t) {
    adamw_step({p}, st, lr);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[i];
      v[i] = 0.999 * v[i] + 0.001 * grads[i] * grads[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] = w[i] - lr * 0.01 * w[i] - lr * mh / (std::sqrt(vh) + 1e-7);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(p.values()[i] == doctest::Approx(w[i]).epsilon(1e-5));

  auto q = Tensor<float>::from({2}, {2.0f, -4.0f}, true);
  AdamWConfig decay_only;
  decay_only.weight_decay = 0.5;
  auto s2 = make_optimizer({q}, decay_only);
  adamw_step({q}, s2, 0.1);
  CHECK(q.values()[0] == doctest::Approx(1.9));
  CHECK(q.values()[1] == doctest::Approx(-3.8));
}

TEST_CASE("cosine schedule with warmup") {
  CHECK(cosine_warmup_lr(0, 10, 110, 1.0) == 0.0);
  CHECK(cosine_warmup_lr(5, 10, 110, 1.0) == doctest::Approx(0.5));
  CHECK(cosine_warmup_lr(10, 10, 110, 1.0) == doctest::Approx(1.0));
  CHECK(cosine_warmup_lr(60, 10, 110, 1.0) == doctest::Approx(0.5));
  CHECK(cosine_warmup_lr(110, 10, 110, 1.0) == doctest::Approx(0.0));
  CHECK_THROWS(cosine_warmup_lr(0, 20, 10, 1.0));
}

TEST_CASE("truncated normal stays within two standard deviations") {
  Rng rng(3);
  auto t = init_truncated_normal<float>({200, 50}, rng);
  double s = 0, s2 = 0;
  for (float x : t.values()) {
    CHECK(std::abs(x) <= 0.1f);
    s += x;
    s2 += x * x;
  }
  const double n = 10000;
  CHECK(std::abs(s / n) < 0.002);
  // Variance of a normal truncated at +-2 sd is about 0.774 sd^2.
  CHECK(std::sqrt(s2 / n) == doctest::Approx(0.05 * std::sqrt(0.774)).epsilon(0.03));
}

TEST_CASE("checkpoint serialization") {
  Checkpoint ck;
  ck.put("a.w", {2, 3}, {1, 2, 3, 4, 5, 6});
  ck.put("b", {}, {7.5f});
  std::stringstream ss;
  write_checkpoint(ss, ck);
  CHECK(read_checkpoint(ss) == ck);

  std::string bytes;
  {
    std::ostringstream os;
    write_checkpoint(os, ck);
    bytes = os.str();
  }
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  CHECK_THROWS(read_checkpoint(in1));
  std::string bad_version = bytes;
  bad_version[4] = 9;
  std::istringstream in2(bad_version);
  CHECK_THROWS(read_checkpoint(in2));
  std::istringstream in3(bytes.substr(0, bytes.size() - 2));
  CHECK_THROWS(read_checkpoint(in3));

  CHECK(ck.filtered("a.").arrays().size() == 1);
  CHECK(fingerprint(ck) == fingerprint(ck));
  Checkpoint other = ck;
  other.put("c", {1}, {0.0f});
  CHECK(fingerprint(other) != fingerprint(ck));

  auto t = Tensor<float>::zeros({3, 2});
  CHECK_THROWS(ck.load_into("a.w", t));
}

TEST_CASE("masked attention ignores later positions") {
  Rng rng(11);
  const std::size_t B = 2, T = 6, D = 4, prefix = 2;
  auto q = gradcheck::random_tensor({B, T, D}, rng);
  auto k = gradcheck::random_tensor({B, T, D}, rng);
  auto v = gradcheck::random_tensor({B, T, D}, rng);
  auto base = masked_attention(q, k, v, 2, prefix);
  for (std::size_t change = prefix; change < T; ++change) {
    auto k2 = Tensor<double>::from(k.shape(), {k.values().begin(), k.values().end()});
    auto v2 = Tensor<double>::from(v.shape(), {v.values().begin(), v.values().end()});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) {
        k2.values()[(b * T + change) * D + d] += 3.0;
        v2.values()[(b * T + change) * D + d] -= 2.0;
      }
    auto out = masked_attention(q, k2, v2, 2, prefix);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) {
          const std::size_t i = (b * T + t) * D + d;
          if (t < change) CHECK(out.values()[i] == base.values()[i]);
        }
    bool any = false;
    for (std::size_t d = 0; d < D; ++d) any |= out.values()[change * D + d] != base.values()[change * D + d];
    CHECK(any);
  }
}
