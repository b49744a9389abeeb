#include <doctest.h>

#include <cmath>

#include "coln/data.hpp"
#include "coln/errors.hpp"
#include "coln/prng.hpp"
#include "coln/trainer.hpp"

using namespace coln;

namespace {

ArchitectureDescriptor bce_arch() {
  return {{{"h", 5, 4, Activation::tanh, true},
           {"out", 4, 1, Activation::sigmoid, true}}};
}

ArchitectureDescriptor softmax_arch() {
  return {{{"h", 5, 4, Activation::relu, true},
           {"out", 4, 3, Activation::softmax, true}}};
}

Dataset random_dataset(std::size_t n, std::size_t features, std::size_t classes,
                       std::uint64_t seed) {
  Dataset d;
  d.n_features = features;
  d.n_classes = classes;
  Xoshiro256 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(features);
    for (auto &x : row) x = rng.uniform(-1.0, 1.0);
    d.push_row(row, rng.bounded(classes));
  }
  return d;
}

// Central finite differences of the training loss, the oracle for backprop.
ParameterSet fd_gradient(const ParameterSet &params, const Dataset &batch,
                         const TrainConfig &config, double h = 1e-6) {
  ParameterSet grad = ParameterSet::zeros(params.architecture);
  for (std::size_t l = 0; l < params.per_layer.size(); ++l)
    for (std::size_t i = 0; i < params.per_layer[l].size(); ++i) {
      ParameterSet plus = params, minus = params;
      plus.per_layer[l][i] += h;
      minus.per_layer[l][i] -= h;
      const double lp = loss_and_gradient(plus, batch, config).first;
      const double lm = loss_and_gradient(minus, batch, config).first;
      grad.per_layer[l][i] = (lp - lm) / (2.0 * h);
    }
  return grad;
}

void check_gradient(const ArchitectureDescriptor &arch, const TrainConfig &config,
                    const Dataset &batch, std::uint64_t seed) {
  const auto params = init_params(arch, seed);
  const auto analytic = loss_and_gradient(params, batch, config).second;
  const auto numeric = fd_gradient(params, batch, config);
  for (std::size_t l = 0; l < analytic.per_layer.size(); ++l)
    for (std::size_t i = 0; i < analytic.per_layer[l].size(); ++i) {
      const double a = analytic.per_layer[l][i];
      const double n = numeric.per_layer[l][i];
      REQUIRE(std::abs(a - n) <= 1e-6 * std::max(1.0, std::abs(n)));
    }
}

}  // namespace

TEST_CASE("glorot initialization") {
  const auto arch = bce_arch();
  const auto p = init_params(arch, 42);
  const auto q = init_params(arch, 42);
  CHECK(p == q);
  CHECK(init_params(arch, 43) != p);

  // layer 0: fan_in 5, fan_out 4, bound sqrt(6/9)
  const double bound = std::sqrt(6.0 / 9.0);
  const auto &arch0 = arch.layers[0];
  for (std::size_t i = 0; i < arch0.input_dim * arch0.output_dim; ++i) {
    CHECK(p.per_layer[0][i] >= -bound);
    CHECK(p.per_layer[0][i] <= bound);
  }
  for (std::size_t u = 0; u < arch0.output_dim; ++u)
    CHECK(p.bias(0)[u] == 0.0);
}

TEST_CASE("forward pass on a hand-computed single layer") {
  ArchitectureDescriptor arch{{{"out", 2, 1, Activation::sigmoid, true}}};
  auto p = ParameterSet::zeros(arch);
  p.at(0, 0, 0) = 1.0;
  p.at(0, 0, 1) = -2.0;
  p.bias_at(0, 0) = 0.5;
  const std::vector<double> x{3.0, 1.0};  // z = 3 - 2 + 0.5 = 1.5
  const auto out = forward(p, x, 1, 2);
  CHECK(out[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))));
}

TEST_CASE("analytic gradient matches finite differences") {
  SUBCASE("bce") {
    TrainConfig config;
    config.loss = Loss::bce;
    check_gradient(bce_arch(), config, random_dataset(16, 5, 2, 1), 7);
  }
  SUBCASE("softmax cross-entropy") {
    TrainConfig config;
    config.loss = Loss::softmax_ce;
    check_gradient(softmax_arch(), config, random_dataset(16, 5, 3, 2), 8);
  }
  SUBCASE("bce with proximal term") {
    TrainConfig config;
    config.loss = Loss::bce;
    config.proximal_mu = 0.3;
    config.reference_params = init_params(bce_arch(), 99);
    check_gradient(bce_arch(), config, random_dataset(16, 5, 2, 3), 9);
  }
}

TEST_CASE("loss head validation") {
  TrainConfig config;
  config.loss = Loss::softmax_ce;
  const auto batch = random_dataset(4, 5, 2, 1);
  // softmax_ce over a sigmoid single-output head is rejected
  CHECK_THROWS_AS(loss_and_gradient(init_params(bce_arch(), 1), batch, config),
                  ConfigError);
  config.loss = Loss::bce;
  const auto batch3 = random_dataset(4, 5, 3, 1);
  CHECK_THROWS_AS(loss_and_gradient(init_params(softmax_arch(), 1), batch3, config),
                  ConfigError);
}

TEST_CASE("training is bit-deterministic per seed") {
  const auto arch = bce_arch();
  const auto data = random_dataset(64, 5, 2, 5);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.seed = 2024;
  const auto init = init_params(arch, 0);
  const auto a = train(init, data, config);
  const auto b = train(init, data, config);
  CHECK(a == b);
  config.seed = 2025;
  CHECK(train(init, data, config) != a);
}

TEST_CASE("training reduces loss on separable data") {
  const auto data = synth_gaussian_blobs(100, 5, 4.0, 3);
  const auto arch = bce_arch();
  const auto init = init_params(arch, 1);
  TrainConfig config;
  config.epochs = 30;
  config.batch_size = 16;
  config.learning_rate = 0.2;
  config.seed = 7;
  const auto trained = train(init, data, config);
  const auto before = evaluate(init, data);
  const auto after = evaluate(trained, data);
  CHECK(after.loss < before.loss);
  CHECK(after.accuracy > 0.95);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto data = random_dataset(32, 5, 2, 11);
  const auto init = init_params(bce_arch(), 4);
  TrainConfig config;
  config.epochs = 2;
  config.learning_rate = 0.0;
  CHECK(train(init, data, config) == init);
}

TEST_CASE("proximal term pulls toward the reference") {
  const auto data = random_dataset(64, 5, 2, 13);
  const auto init = init_params(bce_arch(), 6);
  const auto reference = init;

  TrainConfig plain;
  plain.epochs = 10;
  plain.learning_rate = 0.3;
  plain.seed = 1;

  TrainConfig prox = plain;
  prox.proximal_mu = 5.0;
  prox.reference_params = reference;

  const auto far = train(init, data, plain);
  const auto near = train(init, data, prox);
  auto dist = [&](const ParameterSet &p) {
    double s = 0.0;
    for (std::size_t l = 0; l < p.per_layer.size(); ++l)
      for (std::size_t i = 0; i < p.per_layer[l].size(); ++i) {
        const double d = p.per_layer[l][i] - reference.per_layer[l][i];
        s += d * d;
      }
    return s;
  };
  CHECK(dist(near) < dist(far));
}

TEST_CASE("proximal_mu without reference is rejected") {
  TrainConfig config;
  config.proximal_mu = 0.1;
  const auto data = random_dataset(8, 5, 2, 15);
  CHECK_THROWS_AS(train(init_params(bce_arch(), 1), data, config), ConfigError);
}

TEST_CASE("divergence carries the last finite parameters") {
  const auto data = random_dataset(64, 5, 2, 17);
  const auto init = init_params(bce_arch(), 2);
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 8;
  // a huge step plus the quadratic proximal term overflows the loss on the
  // next batch, while the weights themselves are still finite
  config.learning_rate = 1e200;
  config.proximal_mu = 1.0;
  config.reference_params = init;
  bool threw = false;
  try {
    train(init, data, config);
  } catch (const TrainingDiverged &e) {
    threw = true;
    CHECK(e.last_finite_params.all_finite());
    CHECK(e.last_finite_params.architecture == init.architecture);
  }
  CHECK(threw);
}

TEST_CASE("evaluate semantics") {
  SUBCASE("threshold and per-class accuracy for a bce head") {
    ArchitectureDescriptor arch{{{"out", 1, 1, Activation::sigmoid, true}}};
    auto p = ParameterSet::zeros(arch);
    p.at(0, 0, 0) = 10.0;  // predicts 1 for x > 0, 0 for x < 0 (0.5 at x = 0)
    Dataset d;
    d.n_features = 1;
    d.n_classes = 2;
    d.push_row({1.0}, 1);    // correct
    d.push_row({-1.0}, 0);   // correct
    d.push_row({1.0}, 0);    // wrong
    d.push_row({0.0}, 0);    // p = 0.5, strict > gives class 0: correct
    const auto report = evaluate(p, d);
    CHECK(report.accuracy == doctest::Approx(0.75));
    REQUIRE(report.per_class_accuracy.size() == 2);
    CHECK(report.per_class_accuracy[0] == doctest::Approx(2.0 / 3.0));
    CHECK(report.per_class_accuracy[1] == doctest::Approx(1.0));
  }
  SUBCASE("argmax ties break toward the lowest index") {
    ArchitectureDescriptor arch{{{"out", 2, 3, Activation::softmax, true}}};
    const auto p = ParameterSet::zeros(arch);  // uniform probabilities
    Dataset d;
    d.n_features = 2;
    d.n_classes = 3;
    d.push_row({0.3, 0.3}, 0);
    d.push_row({0.1, 0.1}, 2);
    const auto report = evaluate(p, d);
    CHECK(report.accuracy == doctest::Approx(0.5));
  }
}
