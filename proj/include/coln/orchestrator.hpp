#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coln/combiner.hpp"
#include "coln/data.hpp"
#include "coln/trainer.hpp"

namespace coln {

struct HostConfig {
  std::string host_id;
  Dataset data;
  TrainConfig train;  // epochs may differ per host
};

struct ExperimentConfig {
  ArchitectureDescriptor architecture;
  std::vector<HostConfig> hosts;
  Dataset test_data;
  CombineConfig combine;
  std::size_t max_rounds = 30;
  double stop_epsilon = 1e-3;     // absolute accuracy improvement threshold
  std::size_t stop_patience = 3;  // consecutive below-threshold rounds
  std::uint64_t seed = 0;         // shared initial-parameter seed
  std::vector<CombineStrategy> baselines_to_run;
  std::size_t centralized_epochs = 200;
};

struct RoundRecord {
  std::uint64_t round = 0;
  std::map<std::string, double> per_host_accuracy;
  std::map<std::string, double> per_host_loss;
  double combined_accuracy = 0.0;
  double combined_loss = 0.0;
  double weight_norm_mean = 0.0;  // mean |w| over the round's combined model
  double weight_norm_std = 0.0;
  DistanceReport distance_report;
};

struct RoundsResult {
  std::vector<RoundRecord> records;
  ParameterSet final_combined;
  std::vector<ParameterSet> per_round_combined;  // index = round
};

/// Training seed for (host, round): every path that replays the protocol
/// (in-process simulation, networked hosts) must derive seeds this way for
/// results to match bit-for-bit.
std::uint64_t round_train_seed(std::uint64_t host_seed, std::uint64_t round);

/// Golden-standard reference: one model trained on the union of all host
/// datasets from the shared initial parameters.
EvalReport run_centralized(const ExperimentConfig &config);

/// The full round protocol in one process. Round 0 records the untrained
/// shared init as the combined model plus each host's first local training;
/// every later round trains all hosts from the previous combined model,
/// combines, and evaluates everything on the global test set. Stops early
/// when combined-accuracy improvement stays below stop_epsilon for
/// stop_patience consecutive rounds.
RoundsResult run_rounds(const ExperimentConfig &config);

struct ComparisonResult {
  std::map<std::string, std::vector<RoundRecord>> per_strategy;
  EvalReport centralized;
};

/// Runs every strategy in baselines_to_run on identical partitions and seeds,
/// plus the centralized reference.
ComparisonResult run_comparison(const ExperimentConfig &config);

/// Stable plot-ready schema: "round,model_id,accuracy,loss".
void write_rounds_csv(const std::vector<RoundRecord> &records,
                      const std::string &path);
std::string rounds_csv_text(const std::vector<RoundRecord> &records);

void write_summary_json(const ExperimentConfig &config,
                        const std::vector<RoundRecord> &records,
                        const EvalReport *centralized, const std::string &path);

}  // namespace coln
