#pragma once

#include <optional>
#include <string>

#include "coln/netsync.hpp"
#include "coln/orchestrator.hpp"

namespace coln {

/// Command-line overrides applied on top of a config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

struct SimulateSpec {
  ExperimentConfig experiment;
  bool run_centralized_reference = false;
  std::string output_dir = ".";
};

struct ServeSpec {
  net::SessionSpec session;
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;
};

struct JoinSpec {
  net::JoinConfig join;
  std::string output_model_path;  // optional
};

struct SourceSpec {
  // exactly one of the two
  std::string csv_path;
  std::string label_column = "label";
  Normalization normalization = Normalization::none;
  bool synthetic = false;
  std::size_t synth_n_per_class = 0;
  std::size_t synth_n_features = 0;
  double synth_separation = 0.0;
  std::uint64_t synth_seed = 0;
};

struct PartitionSpec {
  SourceSpec source;
  PartitionPlan plan;
  std::string output_dir = ".";
};

// All loaders parse strictly: unknown keys and missing referenced files are
// ConfigErrors with the offending key/path in the message.
SimulateSpec load_simulate_config(const std::string &path, const CliOverrides &cli);
ServeSpec load_serve_config(const std::string &path, const CliOverrides &cli);
JoinSpec load_join_config(const std::string &path, const CliOverrides &cli);
PartitionSpec load_partition_config(const std::string &path, const CliOverrides &cli);

Dataset load_source(const SourceSpec &source);

}  // namespace coln
