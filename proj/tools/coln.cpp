// coln: combined-learning toolkit front end.
//
// Subcommands: simulate, combine, serve, join, partition, eval.
// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 protocol error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coln/config.hpp"
#include "coln/errors.hpp"
#include "coln/kernels.hpp"

namespace {

using nlohmann::json;

enum LogLevel { log_error = 0, log_info = 1, log_debug = 2 };

LogLevel g_log_level = log_info;

void init_log_level(bool quiet) {
  if (quiet) {
    g_log_level = log_error;
    return;
  }
  if (const char *env = std::getenv("COLN_LOG")) {
    const std::string value = env;
    if (value == "error") g_log_level = log_error;
    else if (value == "info") g_log_level = log_info;
    else if (value == "debug") g_log_level = log_debug;
  }
}

void log_info_line(const std::string &msg) {
  if (g_log_level >= log_info) std::cerr << "[coln] " << msg << "\n";
}

json distance_report_json(const coln::DistanceReport &report) {
  return json{{"layer_distances", report.layer_distances},
              {"weight_distance_min", report.weight_distance_min},
              {"weight_distance_max", report.weight_distance_max},
              {"weight_distance_mean", report.weight_distance_mean},
              {"shifted_fraction", report.shifted_fraction},
              {"rate_warning", report.rate_warning}};
}

int cmd_simulate(const std::string &config_path, const coln::CliOverrides &cli) {
  const auto spec = coln::load_simulate_config(config_path, cli);
  std::filesystem::create_directories(spec.output_dir);

  if (spec.experiment.baselines_to_run.size() > 1) {
    log_info_line("running strategy comparison");
    const auto comparison = coln::run_comparison(spec.experiment);
    json summary{{"centralized_accuracy", comparison.centralized.accuracy}};
    for (const auto &[strategy, records] : comparison.per_strategy) {
      coln::write_rounds_csv(records, spec.output_dir + "/rounds_" + strategy + ".csv");
      summary["final_accuracy"][strategy] = records.back().combined_accuracy;
    }
    // primary strategy also lands in the standard location
    const std::string primary = coln::to_string(spec.experiment.combine.strategy);
    coln::write_rounds_csv(comparison.per_strategy.at(primary),
                           spec.output_dir + "/rounds.csv");
    std::ofstream out(spec.output_dir + "/summary.json");
    out << summary.dump(2) << '\n';
    log_info_line("wrote " + spec.output_dir + "/summary.json");
    return 0;
  }

  const auto result = coln::run_rounds(spec.experiment);
  coln::write_rounds_csv(result.records, spec.output_dir + "/rounds.csv");
  std::optional<coln::EvalReport> centralized;
  if (spec.run_centralized_reference) {
    log_info_line("training centralized reference");
    centralized = coln::run_centralized(spec.experiment);
  }
  coln::write_summary_json(spec.experiment, result.records,
                           centralized ? &*centralized : nullptr,
                           spec.output_dir + "/summary.json");
  coln::save_params(result.final_combined, spec.output_dir + "/combined_final.json");
  log_info_line("finished after round " +
                std::to_string(result.records.back().round) +
                ", combined accuracy " +
                std::to_string(result.records.back().combined_accuracy));
  return 0;
}

int cmd_combine(const std::vector<std::string> &model_paths,
                const std::vector<std::uint64_t> &sizes, double c,
                bool no_shift, const std::string &out_path) {
  if (model_paths.size() < 2)
    throw coln::ConfigError("need at least two --model files");
  if (sizes.size() != model_paths.size())
    throw coln::ConfigError("need one --size per --model");

  std::vector<coln::HostSubmission> submissions;
  for (std::size_t i = 0; i < model_paths.size(); ++i) {
    coln::HostSubmission sub;
    sub.host_id = "model" + std::to_string(i);
    sub.round = 1;
    sub.corpus_size = sizes[i];
    sub.params = coln::load_params(model_paths[i]);
    submissions.push_back(std::move(sub));
  }
  coln::CombineConfig config;
  config.c = c;
  config.shift_enabled = !no_shift;
  const auto result = coln::combine_coln(submissions, config, 1);
  coln::save_params(result.params, out_path);
  std::cout << distance_report_json(result.report).dump(2) << "\n";
  return 0;
}

int cmd_serve(const std::string &config_path, const coln::CliOverrides &cli) {
  const auto spec = coln::load_serve_config(config_path, cli);
  if (!spec.session.out_dir.empty())
    std::filesystem::create_directories(spec.session.out_dir);
  const auto result = coln::net::serve(
      spec.session, spec.bind_address, spec.port, [](std::uint16_t port) {
        log_info_line("listening on port " + std::to_string(port));
      });
  log_info_line("session finished after " + std::to_string(result.rounds_run) +
                " rounds");
  return 0;
}

int cmd_join(const std::string &config_path, const coln::CliOverrides &cli) {
  const auto spec = coln::load_join_config(config_path, cli);
  const auto result = coln::net::join(spec.join);
  log_info_line("completed " + std::to_string(result.rounds_completed) + " rounds");
  if (!spec.output_model_path.empty())
    coln::save_params(result.final_params, spec.output_model_path);
  return 0;
}

int cmd_partition(const std::string &config_path, const coln::CliOverrides &cli) {
  const auto spec = coln::load_partition_config(config_path, cli);
  std::filesystem::create_directories(spec.output_dir);
  const coln::Dataset source = coln::load_source(spec.source);
  const auto result = coln::partition(source, spec.plan);

  std::vector<std::string> names;
  if (!spec.source.synthetic && !spec.source.csv_path.empty()) {
    const auto loaded = coln::load_csv(spec.source.csv_path,
                                       spec.source.label_column,
                                       coln::Normalization::none);
    names = loaded.feature_names;
  } else {
    for (std::size_t i = 0; i < source.n_features; ++i)
      names.push_back("f" + std::to_string(i));
  }
  // bias injection appends one column
  for (std::size_t i = names.size(); i < result.host_data.front().n_features; ++i)
    names.push_back(spec.plan.hosts.front().bias
                        ? spec.plan.hosts.front().bias->feature_name
                        : "synthetic_bias");

  const std::string label = spec.source.synthetic ? "label" : spec.source.label_column;
  for (std::size_t h = 0; h < result.host_data.size(); ++h) {
    const std::string path =
        spec.output_dir + "/" + spec.plan.hosts[h].host_id + ".csv";
    coln::save_csv(result.host_data[h], names, label, path);
    log_info_line("wrote " + path + " (" +
                  std::to_string(result.host_data[h].n_samples) + " rows)");
  }
  if (result.test_data.n_samples > 0) {
    coln::save_csv(result.test_data, names, label, spec.output_dir + "/test.csv");
    log_info_line("wrote " + spec.output_dir + "/test.csv (" +
                  std::to_string(result.test_data.n_samples) + " rows)");
  }
  log_info_line("discarded " + std::to_string(result.discarded) + " rows");
  return 0;
}

int cmd_eval(const std::string &model_path, const std::string &data_path,
             const std::string &label_column, const std::string &normalization) {
  const auto params = coln::load_params(model_path);
  const auto norm = normalization == "zscore" ? coln::Normalization::zscore
                                              : coln::Normalization::none;
  const auto loaded = coln::load_csv(data_path, label_column, norm);
  const auto report = coln::evaluate(params, loaded.data);
  std::cout << json{{"accuracy", report.accuracy},
                    {"loss", report.loss},
                    {"per_class_accuracy", report.per_class_accuracy}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"CoLN combined-learning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  coln::CliOverrides cli;
  bool quiet = false;
  std::uint64_t seed_override = 0;
  std::string out_override;
  std::string kernel_variant;

  app.add_flag("--quiet", quiet, "only report errors");
  auto *seed_opt = app.add_option("--seed", seed_override, "override the config seed");
  auto *out_opt = app.add_option("--out", out_override, "override the output directory");
  app.add_option("--kernels", kernel_variant,
                 "force a kernel variant (scalar, avx2, neon)");

  auto *simulate = app.add_subcommand("simulate", "run the round protocol in-process");
  simulate->add_option("--config", config_path, "experiment config file")->required();

  auto *combine = app.add_subcommand("combine", "one-shot combination of model files");
  std::vector<std::string> model_paths;
  std::vector<std::uint64_t> sizes;
  double c = 1e-3;
  bool no_shift = false;
  std::string combine_out = "combined.json";
  combine->add_option("--model", model_paths, "host model file (repeat)")->required();
  combine->add_option("--size", sizes, "training corpus size per model (repeat)")
      ->required();
  combine->add_option("--c", c, "combination rate");
  combine->add_flag("--no-shift", no_shift, "disable the distance-gated shift");
  combine->add_option("--output", combine_out, "combined model path");

  auto *serve = app.add_subcommand("serve", "run the synchronizer service");
  serve->add_option("--config", config_path, "session config file")->required();

  auto *join = app.add_subcommand("join", "join a session as a host");
  join->add_option("--config", config_path, "host config file")->required();

  auto *part = app.add_subcommand("partition", "materialize per-host datasets");
  part->add_option("--config", config_path, "partition config file")->required();

  auto *eval = app.add_subcommand("eval", "evaluate a model file on a CSV");
  std::string model_path, data_path, label_column = "label", normalization = "none";
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--data", data_path, "CSV file")->required();
  eval->add_option("--label-column", label_column, "label column name");
  eval->add_option("--normalization", normalization, "none or zscore");

  CLI11_PARSE(app, argc, argv);

  init_log_level(quiet);
  if (seed_opt->count() > 0) cli.seed = seed_override;
  if (out_opt->count() > 0) cli.out_dir = out_override;
  if (!kernel_variant.empty() && !coln::kernels::select(kernel_variant)) {
    std::cerr << "error: kernel variant '" << kernel_variant
              << "' is unavailable on this machine\n";
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, cli);
    if (combine->parsed())
      return cmd_combine(model_paths, sizes, c, no_shift, combine_out);
    if (serve->parsed()) return cmd_serve(config_path, cli);
    if (join->parsed()) return cmd_join(config_path, cli);
    if (part->parsed()) return cmd_partition(config_path, cli);
    if (eval->parsed())
      return cmd_eval(model_path, data_path, label_column, normalization);
  } catch (const coln::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const coln::IngestError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const coln::ArgumentError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const coln::TrainingDiverged &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const coln::NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const coln::ProtocolError &e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
