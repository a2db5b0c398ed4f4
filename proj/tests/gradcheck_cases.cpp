#include <vector>

#include "gradcheck.hpp"
#include "kmerspace/contrastive.hpp"

namespace gradcheck {

using namespace kmerspace;
using namespace kmerspace::ad;

namespace {

TD fixed(TD t) {
  t.set_requires_grad(false);
  return t;
}

std::vector<std::size_t> random_ids(Rng& rng, std::size_t n, std::size_t hi) {
  std::vector<std::size_t> ids(n);
  for (auto& i : ids) i = uniform_int(rng, 0, hi - 1);
  return ids;
}

}  // namespace

std::vector<OpCase> all_op_cases() {
  std::vector<OpCase> c;
  c.push_back({"add", [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; },
               [](const std::vector<TD>& x) { return add(x[0], x[1]); }});
  c.push_back({"add_broadcast", [](Rng& r) { return std::vector{random_tensor({2, 3, 4}, r), random_tensor({3, 4}, r)}; },
               [](const std::vector<TD>& x) { return add(x[0], x[1]); }});
  c.push_back({"sub", [](Rng& r) { return std::vector{random_tensor({2, 3, 4}, r), random_tensor({4}, r)}; },
               [](const std::vector<TD>& x) { return sub(x[0], x[1]); }});
  c.push_back({"mul", [](Rng& r) { return std::vector{random_tensor({2, 5}, r), random_tensor({5}, r)}; },
               [](const std::vector<TD>& x) { return mul(x[0], x[1]); }});
  c.push_back({"scale", [](Rng& r) { return std::vector{random_tensor({7}, r)}; },
               [](const std::vector<TD>& x) { return scale(x[0], 2.5); }});
  c.push_back({"sum", [](Rng& r) { return std::vector{random_tensor({3, 2}, r)}; },
               [](const std::vector<TD>& x) { return sum(x[0]); }});
  c.push_back({"mean", [](Rng& r) { return std::vector{random_tensor({3, 2}, r)}; },
               [](const std::vector<TD>& x) { return mean(x[0]); }});
  c.push_back({"matmul", [](Rng& r) { return std::vector{random_tensor({3, 5}, r), random_tensor({5, 4}, r)}; },
               [](const std::vector<TD>& x) { return matmul(x[0], x[1]); }});
  c.push_back({"dense",
               [](Rng& r) { return std::vector{random_tensor({2, 3, 5}, r), random_tensor({5, 4}, r), random_tensor({4}, r)}; },
               [](const std::vector<TD>& x) { return dense(x[0], x[1], x[2]); }});
  c.push_back({"conv1d_same",
               [](Rng& r) { return std::vector{random_tensor({2, 7, 3}, r), random_tensor({3, 3, 4}, r), random_tensor({4}, r)}; },
               [](const std::vector<TD>& x) { return conv1d(x[0], x[1], x[2], 1, 1); }});
  c.push_back({"conv1d_stride2",
               [](Rng& r) { return std::vector{random_tensor({2, 8, 2}, r), random_tensor({3, 2, 3}, r), random_tensor({3}, r)}; },
               [](const std::vector<TD>& x) { return conv1d(x[0], x[1], x[2], 2, 0); }});
  c.push_back({"conv1d_pointwise",
               [](Rng& r) { return std::vector{random_tensor({1, 5, 3}, r), random_tensor({1, 3, 6}, r), random_tensor({6}, r)}; },
               [](const std::vector<TD>& x) { return conv1d(x[0], x[1], x[2], 1, 0); }});
  c.push_back({"layer_norm",
               [](Rng& r) { return std::vector{random_tensor({2, 3, 6}, r), random_tensor({6}, r), random_tensor({6}, r)}; },
               [](const std::vector<TD>& x) { return layer_norm(x[0], x[1], x[2]); }});
  c.push_back({"gelu", [](Rng& r) { return std::vector{random_tensor({4, 5}, r, -3, 3)}; },
               [](const std::vector<TD>& x) { return gelu(x[0]); }});
  c.push_back({"silu", [](Rng& r) { return std::vector{random_tensor({4, 5}, r, -3, 3)}; },
               [](const std::vector<TD>& x) { return silu(x[0]); }});
  c.push_back({"softmax_last", [](Rng& r) { return std::vector{random_tensor({3, 5}, r, -2, 2)}; },
               [](const std::vector<TD>& x) { return softmax(x[0], -1); }});
  c.push_back({"softmax_middle", [](Rng& r) { return std::vector{random_tensor({2, 4, 3}, r, -2, 2)}; },
               [](const std::vector<TD>& x) { return softmax(x[0], 1); }});
  c.push_back({"avg_pool1d_ceil", [](Rng& r) { return std::vector{random_tensor({2, 7, 3}, r)}; },
               [](const std::vector<TD>& x) { return avg_pool1d(x[0], 2, 2); }});
  c.push_back({"global_avg_pool", [](Rng& r) { return std::vector{random_tensor({2, 5, 3}, r)}; },
               [](const std::vector<TD>& x) { return global_avg_pool(x[0]); }});
  c.push_back({"l2_normalize", [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; },
               [](const std::vector<TD>& x) { return l2_normalize(x[0]); }});
  c.push_back({"embedding_lookup", [](Rng& r) { return std::vector{random_tensor({5, 3}, r)}; },
               [](const std::vector<TD>& x) { return embedding_lookup(x[0], {4, 0, 4, 2}); }});
  c.push_back({"masked_attention",
               [](Rng& r) {
                 return std::vector{random_tensor({2, 6, 4}, r), random_tensor({2, 6, 4}, r), random_tensor({2, 6, 4}, r)};
               },
               [](const std::vector<TD>& x) { return masked_attention(x[0], x[1], x[2], 2, 3); }});
  c.push_back({"causal_mha",
               [](Rng& r) {
                 std::vector<TD> v{random_tensor({2, 5, 4}, r)};
                 for (int i = 0; i < 4; ++i) {
                   v.push_back(random_tensor({4, 4}, r));
                   v.push_back(random_tensor({4}, r));
                 }
                 return v;
               },
               [](const std::vector<TD>& x) {
                 MhaWeights<double> w{x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8]};
                 return causal_mha(x[0], w, 2, 2);
               }});
  c.push_back({"cross_entropy", [](Rng& r) { return std::vector{random_tensor({4, 3}, r, 0.1, 1.0)}; },
               [](const std::vector<TD>& x) { return cross_entropy(x[0], {0, 2, 1, 2}); }});
  c.push_back({"softmax_cross_entropy", [](Rng& r) { return std::vector{random_tensor({4, 3}, r, -2, 2)}; },
               [](const std::vector<TD>& x) { return cross_entropy(softmax(x[0], -1), {1, 1, 0, 2}); }});
  c.push_back({"mse", [](Rng& r) { return std::vector{random_tensor({3, 2}, r), fixed(random_tensor({3, 2}, r))}; },
               [](const std::vector<TD>& x) { return mse(x[0], x[1]); }});
  c.push_back({"concat", [](Rng& r) { return std::vector{random_tensor({2, 3, 2}, r), random_tensor({2, 1, 2}, r)}; },
               [](const std::vector<TD>& x) { return concat<double>({x[0], x[1]}, 1); }});
  c.push_back({"slice", [](Rng& r) { return std::vector{random_tensor({2, 5, 3}, r)}; },
               [](const std::vector<TD>& x) { return slice(x[0], 1, 1, 4); }});
  c.push_back({"reshape", [](Rng& r) { return std::vector{random_tensor({2, 6}, r)}; },
               [](const std::vector<TD>& x) { return reshape(x[0], {3, 4}); }});
  c.push_back({"contrastive_loss",
               [](Rng& r) {
                 TD z = l2_normalize(random_tensor({8, 5}, r)).detach();
                 z.set_requires_grad(true);
                 return std::vector{z};
               },
               [](const std::vector<TD>& x) {
                 std::vector<std::size_t> coords{0, 30, 100, 120, 400, 450, 1000, 2000}, partner{1, 0, 3, 2, 5, 4, 7, 6};
                 LossConfig cfg;
                 cfg.gamma = 100;
                 cfg.weighting = DistanceWeighting::inverted;
                 auto P = positive_set(coords, partner, cfg);
                 return contrastive_loss(x[0], P, distance_weights(coords, P, cfg), 0.5);
               }});
  return c;
}

}  // namespace gradcheck
