#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "support.hpp"
#include "tetradat/binary_io.hpp"
#include "tetradat/tt.hpp"

using namespace tetradat;
using testing::all_indices;
using testing::dense_entry;

namespace {

TTTensor ones_rank1(const std::vector<std::size_t>& modes, double fill = 1.0) {
  std::vector<TTCore> cores;
  for (auto n : modes) cores.emplace_back(1, n, 1, fill);
  return TTTensor(std::move(cores));
}

// Total-variation distance between empirical draws and the normalized tensor.
double sampling_tv(const TTTensor& t, std::size_t draws, std::uint64_t seed) {
  const auto modes = t.mode_sizes();
  const auto idx = all_indices(modes);
  std::map<std::vector<int>, double> exact;
  double z = 0.0;
  for (const auto& n : idx) z += (exact[n] = dense_entry(t, n));
  Rng rng(seed);
  std::map<std::vector<int>, double> freq;
  for (const auto& s : tt_sample(t, draws, rng)) freq[s] += 1.0 / static_cast<double>(draws);
  double tv = 0.0;
  for (const auto& n : idx) tv += std::abs(freq[n] - exact[n] / z);
  return tv / 2.0;
}

}  // namespace

TEST_SUITE("tt") {

TEST_CASE("unit chain evaluates to one") {
  const auto t = ones_rank1({3, 4, 2});
  for (const auto& n : all_indices(t.mode_sizes())) CHECK(tt_get(t, n) == 1.0);
}

TEST_CASE("two cores reproduce a matrix product") {
  const std::size_t n1 = 4, r = 3, n2 = 5;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(n1 * r), b(r * n2);
  for (auto& x : a) x = u(rng);
  for (auto& x : b) x = u(rng);
  TTCore g1(1, n1, r), g2(r, n2, 1);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t k = 0; k < r; ++k) g1(0, i, k) = a[i * r + k];
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t j = 0; j < n2; ++j) g2(k, j, 0) = b[k * n2 + j];
  const TTTensor t({g1, g2});
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      double ab = 0.0;
      for (std::size_t k = 0; k < r; ++k) ab += a[i * r + k] * b[k * n2 + j];
      const int idx[] = {static_cast<int>(i), static_cast<int>(j)};
      CHECK(tt_get(t, idx) == doctest::Approx(ab).epsilon(1e-14));
    }
}

TEST_CASE("random d=4 instance matches the dense oracle on all 81 entries") {
  const std::vector<std::size_t> modes{3, 3, 3, 3};
  const auto t = tt_random_nonneg(modes, 3, 42);
  const auto idx = all_indices(modes);
  REQUIRE(idx.size() == 81);
  for (const auto& n : idx) CHECK(testing::rel_err(tt_get(t, n), dense_entry(t, n)) <= 1e-12);
}

TEST_CASE("dense equivalence holds for assorted shapes") {
  const std::vector<std::vector<std::size_t>> shapes{
      {2}, {7}, {2, 3}, {4, 1, 3}, {3, 3, 3, 3, 3}, {2, 2, 2, 2, 2, 2, 2, 2}, {10, 10, 10}};
  std::uint64_t seed = 0;
  for (const auto& modes : shapes) {
    for (std::size_t rank : {1u, 2u, 4u}) {
      const auto t = tt_random_nonneg(modes, rank, ++seed);
      const auto full = tt_full(t);
      const auto oracle = testing::dense_tensor(t);
      REQUIRE(full.size() == oracle.size());
      for (std::size_t i = 0; i < full.size(); ++i)
        CHECK(testing::rel_err(full[i], oracle[i]) <= 1e-12);
    }
  }
}

TEST_CASE("ranks are capped by the unfolding sizes") {
  const std::size_t modes[] = {2, 3, 4};
  CHECK(capped_ranks(modes, 10) == std::vector<std::size_t>{1, 2, 4, 1});
  CHECK(capped_ranks(modes, 1) == std::vector<std::size_t>{1, 1, 1, 1});
  const auto t = tt_random_nonneg(modes, 10, 1);
  CHECK(t.ranks() == std::vector<std::size_t>{1, 2, 4, 1});
  for (const auto& g : t.cores())
    for (double x : g.data()) CHECK(x > 0.0);
}

TEST_CASE("bad indices and shapes are rejected") {
  const std::size_t modes[] = {3, 2};
  const auto t = tt_random_nonneg(modes, 2, 3);
  CHECK_THROWS_AS(tt_get(t, std::vector<int>{3, 0}), std::out_of_range);
  CHECK_THROWS_AS(tt_get(t, std::vector<int>{-1, 0}), std::out_of_range);
  CHECK_THROWS_AS(tt_get(t, std::vector<int>{0}), std::out_of_range);
  CHECK_THROWS_AS(TTTensor({TTCore(1, 2, 2), TTCore(3, 2, 1)}), ShapeError);
  CHECK_THROWS_AS(TTTensor({TTCore(2, 2, 1)}), ShapeError);
}

TEST_CASE("large dimension stays in TT form") {
  const std::vector<std::size_t> modes(5000, 3);
  const auto t = tt_random_nonneg(modes, 5, 9);
  CHECK(t.dim() == 5000);
  CHECK(t.full_size() == std::numeric_limits<std::size_t>::max());
  CHECK_THROWS_AS(tt_full(t), std::length_error);
  Rng rng(1);
  const auto draws = tt_sample(t, 3, rng);
  REQUIRE(draws.size() == 3);
  for (const auto& n : draws) {
    CHECK(n.size() == 5000);
    CHECK(std::isfinite(tt_log_value(t, n)));
  }
}

TEST_CASE("log value matches the direct product and survives overflow") {
  const std::size_t modes[] = {3, 4, 2};
  const auto t = tt_random_nonneg(modes, 3, 5);
  for (const auto& n : all_indices({3, 4, 2}))
    CHECK(tt_log_value(t, n) == doctest::Approx(std::log(tt_get(t, n))).epsilon(1e-12));

  const auto big = ones_rank1(std::vector<std::size_t>(2000, 2), 10.0);
  const std::vector<int> n(2000, 1);
  CHECK(std::isinf(tt_get(big, n)));
  CHECK(tt_log_value(big, n) == doctest::Approx(2000 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("uniform tensor samples every outcome equally") {
  const auto t = ones_rank1({3, 3});
  Rng rng(123);
  const std::size_t draws = 10000;
  std::map<std::vector<int>, double> count;
  for (const auto& s : tt_sample(t, draws, rng)) count[s] += 1.0;
  const double p = 1.0 / 9.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  REQUIRE(count.size() == 9);
  for (const auto& [n, c] : count) CHECK(std::abs(c - draws * p) <= 4 * sigma);
}

TEST_CASE("rank-1 tensor samples the product of its marginals") {
  const std::vector<double> p1{0.1, 0.6, 0.3}, p2{0.5, 0.2, 0.05, 0.25};
  TTCore g1(1, 3, 1), g2(1, 4, 1);
  for (std::size_t i = 0; i < 3; ++i) g1(0, i, 0) = p1[i] * 7.0;
  for (std::size_t j = 0; j < 4; ++j) g2(0, j, 0) = p2[j] * 0.3;
  const TTTensor t({g1, g2});
  Rng rng(99);
  const std::size_t draws = 20000;
  std::map<std::vector<int>, double> count;
  for (const auto& s : tt_sample(t, draws, rng)) count[s] += 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      const double p = p1[i] * p2[j];
      const double sigma = std::sqrt(draws * p * (1 - p));
      CHECK(std::abs(count[{i, j}] - draws * p) <= 4 * sigma);
    }
}

TEST_CASE("random positive tensor is sampled within TV 0.02") {
  const std::size_t modes[] = {2, 2, 2};
  const auto t = tt_random_nonneg(modes, 2, 17);
  CHECK(sampling_tv(t, 100000, 5) <= 0.02);
}

TEST_CASE("sampling is reproducible from the stream state") {
  const std::size_t modes[] = {4, 4, 4, 4};
  const auto t = tt_random_nonneg(modes, 3, 2);
  Rng a(8), b(8), c(9);
  const auto sa = tt_sample(t, 50, a);
  CHECK(sa == tt_sample(t, 50, b));
  CHECK(sa != tt_sample(t, 50, c));
}

TEST_CASE("negative weights are clipped and dead modes fall back to uniform") {
  // Slice 1 of the first core is negative: never drawn.
  TTCore g1(1, 3, 1), g2(1, 2, 1);
  g1(0, 0, 0) = 1.0;
  g1(0, 1, 0) = -5.0;
  g1(0, 2, 0) = 1.0;
  g2(0, 0, 0) = 1.0;
  g2(0, 1, 0) = 1.0;
  Rng rng(4);
  for (const auto& s : tt_sample(TTTensor({g1, g2}), 2000, rng)) CHECK(s[0] != 1);

  // Every weight non-positive: uniform over the mode.
  TTCore dead(1, 4, 1, -1.0);
  std::map<int, int> count;
  for (const auto& s : tt_sample(TTTensor({dead}), 4000, rng)) ++count[s[0]];
  REQUIRE(count.size() == 4);
  for (const auto& [n, c] : count) CHECK(std::abs(c - 1000) < 4 * std::sqrt(4000 * 0.25 * 0.75));
}

TEST_CASE("single-core gradient is the indicator over the value") {
  TTCore g(1, 4, 1);
  for (std::size_t n = 0; n < 4; ++n) g(0, n, 0) = 0.5 + static_cast<double>(n);
  const TTTensor t({g});
  const std::vector<MultiIndex> batch{{2}};
  const auto grad = tt_log_likelihood_grad(t, batch);
  for (std::size_t n = 0; n < 4; ++n)
    CHECK(grad[0](0, n, 0) == doctest::Approx(n == 2 ? 1.0 / 2.5 : 0.0));
}

TEST_CASE("log-likelihood gradient matches central differences") {
  const std::size_t modes[] = {3, 3, 3};
  auto t = tt_random_nonneg(modes, 2, 31);
  Rng rng(6);
  const auto batch = tt_sample(t, 5, rng);
  const auto grad = tt_log_likelihood_grad(t, batch);
  const double h = 1e-6;
  for (std::size_t i = 0; i < t.dim(); ++i) {
    auto data = t.core(i).data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double up = tt_log_likelihood(t, batch);
      data[j] = saved - h;
      const double down = tt_log_likelihood(t, batch);
      data[j] = saved;
      const double fd = (up - down) / (2 * h);
      const double g = grad[i].data()[j];
      CHECK(std::abs(g - fd) <= 1e-5 * std::max(std::abs(fd), 1.0));
    }
  }
}

TEST_CASE("gradient is additive over the batch") {
  const std::size_t modes[] = {3, 4, 3};
  const auto t = tt_random_nonneg(modes, 3, 8);
  const std::vector<MultiIndex> one{{1, 2, 0}}, two{{1, 2, 0}, {1, 2, 0}};
  const auto g1 = tt_log_likelihood_grad(t, one);
  const auto g2 = tt_log_likelihood_grad(t, two);
  for (std::size_t i = 0; i < t.dim(); ++i)
    for (std::size_t j = 0; j < g1[i].data().size(); ++j)
      CHECK(g2[i].data()[j] == 2.0 * g1[i].data()[j]);
}

TEST_CASE("gradient stays finite at a zero entry") {
  TTCore g1(1, 2, 1), g2(1, 2, 1);
  g1(0, 0, 0) = 0.0;
  g1(0, 1, 0) = 1.0;
  g2(0, 0, 0) = 1.0;
  g2(0, 1, 0) = 1.0;
  const TTTensor t({g1, g2});
  const std::vector<MultiIndex> batch{{0, 1}};
  CHECK(tt_log_likelihood(t, batch) == doctest::Approx(std::log(kLikelihoodFloor)));
  for (const auto& core : tt_log_likelihood_grad(t, batch))
    for (double x : core.data()) CHECK(std::isfinite(x));
}

TEST_CASE("ascent steps") {
  const std::size_t modes[] = {3, 3, 3, 3};
  const auto t = tt_random_nonneg(modes, 3, 12);
  Rng rng(3);
  const auto batch = tt_sample(t, 6, rng);
  const auto grad = tt_log_likelihood_grad(t, batch);

  SUBCASE("zero rate is a bitwise no-op") { CHECK(tt_ascent_step(t, grad, 0.0) == t); }

  SUBCASE("opposite rates cancel") {
    const auto back = tt_ascent_step(tt_ascent_step(t, grad, 0.01), grad, -0.01);
    for (std::size_t i = 0; i < t.dim(); ++i)
      for (std::size_t j = 0; j < t.core(i).data().size(); ++j)
        CHECK(std::abs(back.core(i).data()[j] - t.core(i).data()[j]) <= 1e-12);
  }

  SUBCASE("100 steps increase the batch log-likelihood every time") {
    auto cur = t;
    double prev = tt_log_likelihood(cur, batch);
    for (int step = 0; step < 100; ++step) {
      cur = tt_ascent_step(cur, tt_log_likelihood_grad(cur, batch), 0.01);
      const double next = tt_log_likelihood(cur, batch);
      CHECK(next > prev);
      prev = next;
    }
  }

  SUBCASE("shape mismatch") {
    auto bad = grad;
    bad.pop_back();
    CHECK_THROWS_AS(tt_ascent_step(t, bad, 0.1), ShapeError);
  }
}

TEST_CASE("TTT1 round trip") {
  std::uint64_t seed = 100;
  for (const auto& modes : std::vector<std::vector<std::size_t>>{
           {1}, {5}, {2, 3}, {3, 1, 4, 1, 5}, std::vector<std::size_t>(40, 3)}) {
    for (std::size_t rank : {1u, 3u, 6u}) {
      auto t = tt_random_nonneg(modes, rank, ++seed);
      t.core(0).data()[0] = -0.0;
      const auto bytes = tt_serialize(t);
      const auto back = tt_deserialize(bytes);
      CHECK(back == t);
      CHECK(tt_serialize(back) == bytes);
      CHECK(std::signbit(back.core(0).data()[0]));
    }
  }
  CHECK_THROWS_AS(tt_deserialize("TTT2"), binio::FormatError);
  const std::size_t modes[] = {2, 2};
  const auto bytes = tt_serialize(tt_random_nonneg(modes, 2, 1));
  CHECK_THROWS_AS(tt_deserialize(bytes.substr(0, bytes.size() - 3)), binio::FormatError);
}

}
