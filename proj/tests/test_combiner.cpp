#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "coln/combiner.hpp"
#include "coln/errors.hpp"
#include "coln/prng.hpp"

using namespace coln;

namespace {

// Brute-force transcription of the combination formulas, written directly
// from the definitions with naive loops. Serves as the oracle for the
// production kernels.
namespace oracle {

std::vector<double> rates(const std::vector<std::uint64_t> &sizes) {
  double total = 0.0;
  for (auto t : sizes) total += static_cast<double>(t);
  std::vector<double> r;
  for (auto t : sizes) r.push_back(static_cast<double>(t) / total);
  return r;
}

// sqrt over pairwise (w_j r_j - w_k r_k)^2 for one weight
double weight_distance(const std::vector<double> &w, const std::vector<double> &r) {
  double s = 0.0;
  const std::size_t H = w.size();
  for (std::size_t j = 0; j + 1 < H; ++j)
    for (std::size_t k = j + 1; k < H; ++k) {
      const double d = w[j] * r[j] - w[k] * r[k];
      s += d * d;
    }
  return std::sqrt(s);
}

// sqrt over all weights and pairs of (w_j - w_k)^2, divided by the weight count
double layer_distance(const std::vector<std::vector<double>> &layers) {
  const std::size_t H = layers.size();
  const std::size_t M = layers[0].size();
  double s = 0.0;
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j + 1 < H; ++j)
      for (std::size_t k = j + 1; k < H; ++k) {
        const double d = layers[j][i] - layers[k][i];
        s += d * d;
      }
  return std::sqrt(s) / static_cast<double>(M);
}

// Full combination: w = sum_h e^{c r_h} w_h + beta, beta gated strictly below
// the layer threshold.
ParameterSet combine(std::vector<HostSubmission> subs, double c, bool with_shift) {
  std::sort(subs.begin(), subs.end(), [](const auto &a, const auto &b) {
    return a.host_id < b.host_id;
  });
  std::vector<std::uint64_t> sizes;
  for (const auto &s : subs) sizes.push_back(s.corpus_size);
  const auto r = rates(sizes);

  ParameterSet out = ParameterSet::zeros(subs[0].params.architecture);
  for (std::size_t l = 0; l < out.per_layer.size(); ++l) {
    std::vector<std::vector<double>> host_layers;
    for (const auto &s : subs) host_layers.push_back(s.params.per_layer[l]);
    const double ld = layer_distance(host_layers);
    for (std::size_t i = 0; i < out.per_layer[l].size(); ++i) {
      double acc = 0.0;
      std::vector<double> column;
      for (std::size_t h = 0; h < subs.size(); ++h) {
        acc += std::exp(c * r[h]) * host_layers[h][i];
        column.push_back(host_layers[h][i]);
      }
      const double wd = weight_distance(column, r);
      if (with_shift && wd < ld) acc += wd;
      out.per_layer[l][i] = acc;
    }
  }
  return out;
}

}  // namespace oracle

ArchitectureDescriptor small_arch() {
  return {{{"h", 4, 3, Activation::tanh, true},
           {"out", 3, 2, Activation::softmax, true}}};
}

std::vector<HostSubmission> random_submissions(std::size_t n_hosts,
                                               std::uint64_t seed,
                                               std::uint64_t round = 1) {
  const auto arch = small_arch();
  Xoshiro256 rng(seed);
  std::vector<HostSubmission> subs;
  for (std::size_t h = 0; h < n_hosts; ++h) {
    HostSubmission s;
    s.host_id = "host" + std::to_string(h);
    s.round = round;
    s.corpus_size = 50 + rng.bounded(400);
    s.params = ParameterSet::zeros(arch);
    for (auto &layer : s.params.per_layer)
      for (auto &w : layer) w = rng.uniform(-1.5, 1.5);
    subs.push_back(std::move(s));
  }
  return subs;
}

}  // namespace

TEST_CASE("relative sizes") {
  const auto r = relative_sizes({100, 300});
  CHECK(r[0] == doctest::Approx(0.25));
  CHECK(r[1] == doctest::Approx(0.75));
  CHECK(r[0] + r[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_sizes({}), ArgumentError);
  CHECK_THROWS_AS(relative_sizes({10, 0}), ArgumentError);
}

TEST_CASE("alpha is the exponential combiner") {
  CHECK(alpha(0.25, 1e-3) == doctest::Approx(std::exp(1e-3 * 0.25)));
  CHECK(alpha(1.0, 0.0) == 1.0);
  CHECK(alpha(0.5, -1.0) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("weight and layer distances match the brute-force oracle") {
  Xoshiro256 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = 2 + rng.bounded(4);
    std::vector<std::uint64_t> sizes;
    for (std::size_t h = 0; h < H; ++h) sizes.push_back(1 + rng.bounded(500));
    const auto r = oracle::rates(sizes);

    std::vector<double> column(H);
    for (auto &w : column) w = rng.uniform(-2.0, 2.0);
    CHECK(weight_distance(column, r) ==
          doctest::Approx(oracle::weight_distance(column, r)).epsilon(1e-12));

    const std::size_t M = 1 + rng.bounded(60);
    std::vector<std::vector<double>> layers(H, std::vector<double>(M));
    for (auto &lay : layers)
      for (auto &w : lay) w = rng.uniform(-2.0, 2.0);
    CHECK(layer_distance(layers) ==
          doctest::Approx(oracle::layer_distance(layers)).epsilon(1e-12));
  }
}

TEST_CASE("distance edge cases") {
  SUBCASE("identical submissions: all distances zero, no shift") {
    auto subs = random_submissions(3, 5);
    subs[1].params = subs[0].params;
    subs[2].params = subs[0].params;
    subs[1].corpus_size = subs[0].corpus_size;
    subs[2].corpus_size = subs[0].corpus_size;
    const auto result = combine_coln(subs, CombineConfig{}, 1);
    for (double ld : result.report.layer_distances) CHECK(ld == 0.0);
    for (double f : result.report.shifted_fraction) CHECK(f == 0.0);
    // strict gate: WeightDistance 0 is not < LayerDistance 0
    const auto oracle_out = oracle::combine(subs, 1e-3, true);
    for (std::size_t l = 0; l < oracle_out.per_layer.size(); ++l)
      for (std::size_t i = 0; i < oracle_out.per_layer[l].size(); ++i)
        CHECK(result.params.per_layer[l][i] ==
              doctest::Approx(oracle_out.per_layer[l][i]).epsilon(1e-12));
  }

  SUBCASE("shift function gates strictly") {
    CHECK(shift(0.5, 1.0) == 0.5);
    CHECK(shift(1.0, 1.0) == 0.0);  // tie goes to zero
    CHECK(shift(1.5, 1.0) == 0.0);
    CHECK(shift(0.0, 0.0) == 0.0);
  }
}

TEST_CASE("combine_coln matches the brute-force oracle") {
  Xoshiro256 seeds(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t H = 2 + seeds.bounded(4);
    auto subs = random_submissions(H, seeds.next());
    CombineConfig config;
    config.c = (trial % 2 == 0) ? 1e-3 : 0.7;
    const auto expected = oracle::combine(subs, config.c, true);
    const auto result = combine_coln(subs, config, 1);
    for (std::size_t l = 0; l < expected.per_layer.size(); ++l)
      for (std::size_t i = 0; i < expected.per_layer[l].size(); ++i)
        REQUIRE(result.params.per_layer[l][i] ==
                doctest::Approx(expected.per_layer[l][i]).epsilon(1e-12));
  }
}

TEST_CASE("shift can be disabled") {
  auto subs = random_submissions(2, 9);
  CombineConfig config;
  config.shift_enabled = false;
  const auto expected = oracle::combine(subs, config.c, false);
  const auto result = combine_coln(subs, config, 1);
  for (std::size_t l = 0; l < expected.per_layer.size(); ++l)
    for (std::size_t i = 0; i < expected.per_layer[l].size(); ++i)
      CHECK(result.params.per_layer[l][i] ==
            doctest::Approx(expected.per_layer[l][i]).epsilon(1e-12));
}

TEST_CASE("bit-level order independence") {
  auto subs = random_submissions(4, 13);
  const auto a = combine_coln(subs, CombineConfig{}, 1);
  std::reverse(subs.begin(), subs.end());
  const auto b = combine_coln(subs, CombineConfig{}, 1);
  CHECK(a.params == b.params);
  std::swap(subs[0], subs[2]);
  const auto c = combine_coln(subs, CombineConfig{}, 1);
  CHECK(a.params == c.params);
}

TEST_CASE("validation failures") {
  auto subs = random_submissions(2, 17);
  CHECK_THROWS_AS(combine_coln({subs[0]}, CombineConfig{}, 1), ArgumentError);

  SUBCASE("architecture mismatch") {
    auto bad = subs;
    bad[1].params.architecture.layers[0].activation = Activation::relu;
    CHECK_THROWS_AS(combine_coln(bad, CombineConfig{}, 1), ProtocolError);
  }
  SUBCASE("round mismatch") {
    auto bad = subs;
    bad[1].round = 2;
    CHECK_THROWS_AS(combine_coln(bad, CombineConfig{}, 1), ProtocolError);
  }
  SUBCASE("duplicate host id") {
    auto bad = subs;
    bad[1].host_id = bad[0].host_id;
    CHECK_THROWS_AS(combine_coln(bad, CombineConfig{}, 1), ProtocolError);
  }
}

TEST_CASE("baselines") {
  auto subs = random_submissions(3, 23);
  std::vector<std::uint64_t> sizes;
  for (const auto &s : subs) sizes.push_back(s.corpus_size);
  const auto r = oracle::rates(sizes);

  SUBCASE("fedavg is the size-weighted mean") {
    const auto avg = combine_fedavg(subs);
    for (std::size_t l = 0; l < avg.per_layer.size(); ++l)
      for (std::size_t i = 0; i < avg.per_layer[l].size(); ++i) {
        double expected = 0.0;
        for (std::size_t h = 0; h < subs.size(); ++h)
          expected += r[h] * subs[h].params.per_layer[l][i];
        CHECK(avg.per_layer[l][i] == doctest::Approx(expected).epsilon(1e-12));
      }
  }
  SUBCASE("plain average ignores sizes") {
    const auto avg = combine_plain_average(subs);
    for (std::size_t l = 0; l < avg.per_layer.size(); ++l)
      for (std::size_t i = 0; i < avg.per_layer[l].size(); ++i) {
        double expected = 0.0;
        for (const auto &s : subs) expected += s.params.per_layer[l][i];
        expected /= static_cast<double>(subs.size());
        CHECK(avg.per_layer[l][i] == doctest::Approx(expected).epsilon(1e-12));
      }
  }
  SUBCASE("dispatcher routes on strategy") {
    CombineConfig config;
    config.strategy = CombineStrategy::fedavg;
    CHECK(combine(subs, config, 1).params == combine_fedavg(subs));
    config.strategy = CombineStrategy::plain_average;
    CHECK(combine(subs, config, 1).params == combine_plain_average(subs));
  }
}

TEST_CASE("rate schedules") {
  CombineConfig constant;
  constant.c = 5e-4;
  CHECK(rate_for_round(constant, 1) == 5e-4);
  CHECK(rate_for_round(constant, 2) == 5e-4);

  CombineConfig alt;
  alt.rate_schedule = RateSchedule::alternating;
  CHECK(rate_for_round(alt, 1) == 1.0);
  CHECK(rate_for_round(alt, 2) == -1.0);
  CHECK(rate_for_round(alt, 3) == 1.0);
  CHECK(rate_for_round(alt, 4) == -1.0);
}

TEST_CASE("rate warning outside the recommended band") {
  auto subs = random_submissions(2, 31);
  CombineConfig config;
  config.c = 1e-3;
  CHECK_FALSE(combine_coln(subs, config, 1).report.rate_warning);
  config.c = 0.5;
  CHECK(combine_coln(subs, config, 1).report.rate_warning);
  config.c = 1e-8;
  CHECK(combine_coln(subs, config, 1).report.rate_warning);
}

TEST_CASE("distance report shape and stats") {
  auto subs = random_submissions(2, 41);
  const auto result = combine_coln(subs, CombineConfig{}, 1);
  const auto &rep = result.report;
  REQUIRE(rep.layer_distances.size() == 2);
  REQUIRE(rep.weight_distance_min.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(rep.layer_distances[l] >= 0.0);
    CHECK(rep.weight_distance_min[l] <= rep.weight_distance_mean[l]);
    CHECK(rep.weight_distance_mean[l] <= rep.weight_distance_max[l]);
    CHECK(rep.shifted_fraction[l] >= 0.0);
    CHECK(rep.shifted_fraction[l] <= 1.0);
  }
}
