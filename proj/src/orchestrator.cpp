#include "coln/orchestrator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coln/errors.hpp"
#include "coln/prng.hpp"

namespace coln {

using nlohmann::json;

namespace {

void validate_experiment(const ExperimentConfig &config) {
  validate_architecture(config.architecture);
  if (config.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (config.stop_patience < 1) throw ConfigError("stop_patience must be >= 1");
  for (const auto &host : config.hosts) {
    validate_dataset(host.data);
    if (host.data.n_features != config.architecture.layers.front().input_dim)
      throw ConfigError("host '" + host.host_id +
                        "' data width does not match the architecture");
  }
  if (config.test_data.n_samples > 0) validate_dataset(config.test_data);
}

std::pair<double, double> weight_norm_stats(const ParameterSet &params) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto &layer : params.per_layer) {
    for (double w : layer) sum += std::fabs(w);
    count += layer.size();
  }
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (const auto &layer : params.per_layer)
    for (double w : layer) {
      const double d = std::fabs(w) - mean;
      var += d * d;
    }
  return {mean, std::sqrt(var / static_cast<double>(count))};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t round_train_seed(std::uint64_t host_seed, std::uint64_t round) {
  return mix_seed(host_seed, round);
}

EvalReport run_centralized(const ExperimentConfig &config) {
  validate_experiment(config);
  if (config.hosts.empty()) throw ConfigError("no hosts configured");
  std::vector<Dataset> parts;
  parts.reserve(config.hosts.size());
  for (const auto &host : config.hosts) parts.push_back(host.data);
  const Dataset all = merge_datasets(parts);

  TrainConfig train_cfg = config.hosts.front().train;
  train_cfg.epochs = config.centralized_epochs;
  train_cfg.seed = mix_seed(config.seed, 0x63656e74);  // distinct stream

  const ParameterSet init = init_params(config.architecture, config.seed);
  const ParameterSet trained = train(init, all, train_cfg);
  return evaluate(trained, config.test_data.n_samples > 0 ? config.test_data : all);
}

RoundsResult run_rounds(const ExperimentConfig &config) {
  validate_experiment(config);
  if (config.hosts.size() < 2)
    throw ConfigError("the round protocol needs at least 2 hosts");
  if (config.test_data.n_samples == 0)
    throw ConfigError("the round protocol needs a global test set");

  const ParameterSet init = init_params(config.architecture, config.seed);
  RoundsResult result;
  result.per_round_combined.push_back(init);

  auto eval_host = [&](const ParameterSet &p) { return evaluate(p, config.test_data); };

  // Round 0: the shared init is the "combined" model; hosts show their first
  // local training.
  {
    RoundRecord rec;
    rec.round = 0;
    const EvalReport combined_eval = eval_host(init);
    rec.combined_accuracy = combined_eval.accuracy;
    rec.combined_loss = combined_eval.loss;
    std::tie(rec.weight_norm_mean, rec.weight_norm_std) = weight_norm_stats(init);
    for (const auto &host : config.hosts) {
      TrainConfig cfg = host.train;
      cfg.seed = round_train_seed(host.train.seed, 0);
      const EvalReport report = eval_host(train(init, host.data, cfg));
      rec.per_host_accuracy[host.host_id] = report.accuracy;
      rec.per_host_loss[host.host_id] = report.loss;
    }
    result.records.push_back(std::move(rec));
  }

  ParameterSet previous_combined = init;
  std::size_t stall_count = 0;
  for (std::uint64_t round = 1; round <= config.max_rounds; ++round) {
    std::vector<HostSubmission> submissions;
    std::vector<EvalReport> host_reports;
    for (const auto &host : config.hosts) {
      TrainConfig cfg = host.train;
      cfg.seed = round_train_seed(host.train.seed, round);
      ParameterSet trained = train(previous_combined, host.data, cfg);
      host_reports.push_back(eval_host(trained));
      submissions.push_back({host.host_id, round, host.data.n_samples,
                             std::move(trained)});
    }

    CombineResult combined = combine(submissions, config.combine, round);
    const EvalReport combined_eval = eval_host(combined.params);

    RoundRecord rec;
    rec.round = round;
    rec.combined_accuracy = combined_eval.accuracy;
    rec.combined_loss = combined_eval.loss;
    std::tie(rec.weight_norm_mean, rec.weight_norm_std) =
        weight_norm_stats(combined.params);
    rec.distance_report = std::move(combined.report);
    for (std::size_t h = 0; h < config.hosts.size(); ++h) {
      rec.per_host_accuracy[config.hosts[h].host_id] = host_reports[h].accuracy;
      rec.per_host_loss[config.hosts[h].host_id] = host_reports[h].loss;
    }

    const double improvement =
        rec.combined_accuracy - result.records.back().combined_accuracy;
    result.records.push_back(std::move(rec));
    result.per_round_combined.push_back(combined.params);
    previous_combined = std::move(combined.params);

    if (round >= 2) {
      if (improvement < config.stop_epsilon)
        ++stall_count;
      else
        stall_count = 0;
      if (stall_count >= config.stop_patience) break;
    }
  }

  result.final_combined = previous_combined;
  return result;
}

ComparisonResult run_comparison(const ExperimentConfig &config) {
  if (config.baselines_to_run.empty())
    throw ConfigError("baselines_to_run is empty");
  ComparisonResult result;
  for (const CombineStrategy strategy : config.baselines_to_run) {
    ExperimentConfig variant = config;
    variant.combine.strategy = strategy;
    result.per_strategy[to_string(strategy)] = run_rounds(variant).records;
  }
  result.centralized = run_centralized(config);
  return result;
}

std::string rounds_csv_text(const std::vector<RoundRecord> &records) {
  std::ostringstream out;
  out << "round,model_id,accuracy,loss\n";
  for (const auto &rec : records) {
    out << rec.round << ",combined," << format_double(rec.combined_accuracy)
        << ',' << format_double(rec.combined_loss) << '\n';
    for (const auto &[host_id, accuracy] : rec.per_host_accuracy)
      out << rec.round << ',' << host_id << ',' << format_double(accuracy)
          << ',' << format_double(rec.per_host_loss.at(host_id)) << '\n';
  }
  return out.str();
}

void write_rounds_csv(const std::vector<RoundRecord> &records,
                      const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  out << rounds_csv_text(records);
  if (!out) throw IngestError("write failed: " + path);
}

void write_summary_json(const ExperimentConfig &config,
                        const std::vector<RoundRecord> &records,
                        const EvalReport *centralized, const std::string &path) {
  json rounds = json::array();
  for (const auto &rec : records) {
    json layer_distances = rec.distance_report.layer_distances;
    rounds.push_back({{"round", rec.round},
                      {"combined_accuracy", rec.combined_accuracy},
                      {"combined_loss", rec.combined_loss},
                      {"per_host_accuracy", rec.per_host_accuracy},
                      {"weight_norm_mean", rec.weight_norm_mean},
                      {"weight_norm_std", rec.weight_norm_std},
                      {"layer_distances", layer_distances},
                      {"shifted_fraction", rec.distance_report.shifted_fraction}});
  }
  json doc{{"strategy", to_string(config.combine.strategy)},
           {"rounds_run", records.empty() ? 0 : records.back().round},
           {"param_count", param_count(config.architecture)},
           {"seed", config.seed},
           {"rounds", rounds}};
  if (centralized) {
    doc["centralized_accuracy"] = centralized->accuracy;
    doc["centralized_loss"] = centralized->loss;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IngestError("write failed: " + path);
}

}  // namespace coln
