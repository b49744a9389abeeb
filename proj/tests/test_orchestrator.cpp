#include <doctest.h>

#include <sstream>

#include "coln/data.hpp"
#include "coln/errors.hpp"
#include "coln/orchestrator.hpp"

using namespace coln;

namespace {

ExperimentConfig small_experiment(std::uint64_t seed = 21) {
  ExperimentConfig config;
  config.architecture = {{{"h", 4, 6, Activation::tanh, true},
                          {"out", 6, 1, Activation::sigmoid, true}}};
  config.seed = seed;

  const auto blob = synth_gaussian_blobs(160, 4, 3.0, seed + 1);
  PartitionPlan plan;
  plan.scheme = PartitionScheme::class_skew;
  plan.seed = seed + 2;
  plan.hosts = {{"alpha", {80, 20}, 0.0, std::nullopt},
                {"beta", {20, 80}, 0.0, std::nullopt}};
  plan.test_per_class_counts = {40, 40};
  auto parts = partition(blob, plan);

  TrainConfig train;
  train.epochs = 4;
  train.batch_size = 16;
  train.learning_rate = 0.2;
  for (std::size_t h = 0; h < parts.host_data.size(); ++h) {
    TrainConfig t = train;
    t.seed = seed + 10 + h;
    config.hosts.push_back({plan.hosts[h].host_id, parts.host_data[h], t});
  }
  config.test_data = parts.test_data;
  config.max_rounds = 6;
  config.stop_epsilon = 1e-3;
  config.stop_patience = 3;
  return config;
}

}  // namespace

TEST_CASE("round_train_seed differs per round and host") {
  CHECK(round_train_seed(1, 1) != round_train_seed(1, 2));
  CHECK(round_train_seed(1, 1) != round_train_seed(2, 1));
  CHECK(round_train_seed(5, 3) == round_train_seed(5, 3));
}

TEST_CASE("run_rounds structure and round-0 semantics") {
  const auto config = small_experiment();
  const auto result = run_rounds(config);

  REQUIRE(!result.records.empty());
  CHECK(result.records.front().round == 0);
  CHECK(result.records.size() <= config.max_rounds + 1);
  CHECK(result.per_round_combined.size() == result.records.size());

  // round 0's combined model is the untrained shared init
  const auto init = init_params(config.architecture, config.seed);
  CHECK(result.per_round_combined[0] == init);
  const auto init_eval = evaluate(init, config.test_data);
  CHECK(result.records[0].combined_accuracy == init_eval.accuracy);

  // every record carries both hosts
  for (const auto &rec : result.records) {
    CHECK(rec.per_host_accuracy.count("alpha") == 1);
    CHECK(rec.per_host_accuracy.count("beta") == 1);
  }
  // rounds 1+ carry distance diagnostics
  CHECK(result.records[1].distance_report.layer_distances.size() == 2);
  CHECK(result.final_combined == result.per_round_combined.back());
}

TEST_CASE("run_rounds is bit-deterministic") {
  const auto config = small_experiment();
  const auto a = run_rounds(config);
  const auto b = run_rounds(config);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(a.final_combined == b.final_combined);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].combined_accuracy == b.records[i].combined_accuracy);
    CHECK(a.records[i].combined_loss == b.records[i].combined_loss);
  }
}

TEST_CASE("early stopping fires on stalled accuracy") {
  auto config = small_experiment();
  // accuracy never improves by a full 1.0, so every round counts as a stall
  config.stop_epsilon = 1.0;
  config.stop_patience = 2;
  config.max_rounds = 20;
  const auto result = run_rounds(config);
  // stall counting starts at round 2, so patience 2 stops after round 3
  CHECK(result.records.back().round == 3);
}

TEST_CASE("early stopping disabled by epsilon 0 when accuracy never drops") {
  auto config = small_experiment();
  config.stop_epsilon = -1.0;  // improvement is never below -1
  config.max_rounds = 4;
  const auto result = run_rounds(config);
  CHECK(result.records.back().round == 4);
}

TEST_CASE("run_centralized trains on the merged corpus") {
  auto config = small_experiment();
  config.centralized_epochs = 40;
  const auto report = run_centralized(config);
  CHECK(report.accuracy > 0.9);  // well-separated blobs
  // deterministic
  const auto again = run_centralized(config);
  CHECK(report.accuracy == again.accuracy);
  CHECK(report.loss == again.loss);
}

TEST_CASE("run_comparison covers every requested strategy") {
  auto config = small_experiment();
  config.max_rounds = 2;
  config.stop_epsilon = -1.0;
  config.centralized_epochs = 10;
  config.baselines_to_run = {CombineStrategy::coln, CombineStrategy::fedavg,
                             CombineStrategy::plain_average};
  const auto result = run_comparison(config);
  CHECK(result.per_strategy.size() == 3);
  CHECK(result.per_strategy.count("coln") == 1);
  CHECK(result.per_strategy.count("fedavg") == 1);
  CHECK(result.per_strategy.count("plain_average") == 1);
  for (const auto &[name, records] : result.per_strategy) {
    CHECK(records.front().round == 0);
    CHECK(records.back().round == 2);
    // identical partitions and seeds: round 0 is the same everywhere
    CHECK(records[0].combined_accuracy ==
          result.per_strategy.at("coln")[0].combined_accuracy);
  }
}

TEST_CASE("rounds csv schema") {
  RoundRecord r0;
  r0.round = 0;
  r0.combined_accuracy = 0.5;
  r0.combined_loss = 0.7;
  r0.per_host_accuracy = {{"alpha", 0.25}, {"beta", 0.75}};
  r0.per_host_loss = {{"alpha", 1.0}, {"beta", 0.5}};
  const auto text = rounds_csv_text({r0});
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "round,model_id,accuracy,loss");
  std::getline(in, line);
  CHECK(line.rfind("0,combined,0.5", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("0,alpha,0.25,1", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("0,beta,0.75,0.5", 0) == 0);
}

TEST_CASE("config validation") {
  auto config = small_experiment();
  SUBCASE("needs two hosts") {
    config.hosts.pop_back();
    CHECK_THROWS_AS(run_rounds(config), ConfigError);
  }
  SUBCASE("needs a test set") {
    config.test_data = Dataset{};
    config.test_data.n_features = 4;
    CHECK_THROWS_AS(run_rounds(config), ConfigError);
  }
  SUBCASE("data width must match the architecture") {
    config.architecture.layers[0].input_dim = 9;
    CHECK_THROWS_AS(run_rounds(config), ConfigError);
  }
}
