#include "coln/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coln/errors.hpp"

namespace coln {

using nlohmann::json;

namespace {

json parse_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Rejects keys outside the allowed set; typos in hyperparameter names must
/// not pass silently.
void check_keys(const json &j, std::initializer_list<const char *> allowed,
                const std::string &context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto &item : j.items()) {
    bool known = false;
    for (const char *key : allowed)
      if (item.key() == key) known = true;
    if (!known)
      throw ConfigError(context + ": unknown key '" + item.key() + "'");
  }
}

void require_file(const std::string &path, const std::string &key) {
  if (!std::filesystem::exists(path))
    throw ConfigError(key + ": file does not exist: " + path);
}

ArchitectureDescriptor parse_architecture(const json &j) {
  check_keys(j, {"layers"}, "architecture");
  ArchitectureDescriptor arch;
  for (const auto &jl : j.at("layers")) {
    check_keys(jl, {"name", "input_dim", "output_dim", "activation", "has_bias"},
               "architecture.layers[]");
    LayerSpec layer;
    layer.name = jl.value("name", "layer" + std::to_string(arch.layers.size()));
    layer.input_dim = jl.at("input_dim").get<std::size_t>();
    layer.output_dim = jl.at("output_dim").get<std::size_t>();
    const auto act = activation_from_string(jl.at("activation").get<std::string>());
    if (!act)
      throw ConfigError("unknown activation '" +
                        jl.at("activation").get<std::string>() + "'");
    layer.activation = *act;
    layer.has_bias = jl.value("has_bias", true);
    arch.layers.push_back(std::move(layer));
  }
  validate_architecture(arch);
  return arch;
}

CombineConfig parse_combine(const json &j) {
  check_keys(j, {"strategy", "rate_schedule", "c", "shift_enabled", "signed_shift"},
             "combine");
  CombineConfig cfg;
  if (j.contains("strategy")) {
    const auto s = strategy_from_string(j.at("strategy").get<std::string>());
    if (!s)
      throw ConfigError("unknown strategy '" + j.at("strategy").get<std::string>() + "'");
    cfg.strategy = *s;
  }
  if (j.contains("rate_schedule")) {
    const std::string s = j.at("rate_schedule").get<std::string>();
    if (s == "constant")
      cfg.rate_schedule = RateSchedule::constant;
    else if (s == "alternating")
      cfg.rate_schedule = RateSchedule::alternating;
    else
      throw ConfigError("unknown rate_schedule '" + s + "'");
  }
  cfg.c = j.value("c", cfg.c);
  cfg.shift_enabled = j.value("shift_enabled", true);
  cfg.signed_shift = j.value("signed_shift", false);
  if (cfg.signed_shift)
    throw ConfigError("signed_shift=true is not implemented; only the unsigned shift exists");
  return cfg;
}

Normalization parse_normalization(const std::string &s) {
  if (s == "none") return Normalization::none;
  if (s == "zscore") return Normalization::zscore;
  throw ConfigError("unknown normalization '" + s + "'");
}

TrainConfig parse_train(const json &j, TrainConfig base, const std::string &context) {
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "loss", "seed", "proximal_mu"},
             context);
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.seed = j.value("seed", base.seed);
  base.proximal_mu = j.value("proximal_mu", base.proximal_mu);
  if (j.contains("loss")) {
    const std::string s = j.at("loss").get<std::string>();
    if (s == "bce")
      base.loss = Loss::bce;
    else if (s == "softmax_ce")
      base.loss = Loss::softmax_ce;
    else
      throw ConfigError(context + ": unknown loss '" + s + "'");
  }
  return base;
}

}  // namespace

Dataset load_source(const SourceSpec &source) {
  if (source.synthetic)
    return synth_gaussian_blobs(source.synth_n_per_class, source.synth_n_features,
                                source.synth_separation, source.synth_seed);
  require_file(source.csv_path, "source.csv");
  return load_csv(source.csv_path, source.label_column, source.normalization).data;
}

namespace {

SourceSpec parse_source(const json &j) {
  check_keys(j, {"csv", "label_column", "normalization", "synth"}, "source");
  SourceSpec source;
  if (j.contains("synth")) {
    const auto &js = j.at("synth");
    check_keys(js, {"n_per_class", "n_features", "class_separation", "seed"},
               "source.synth");
    source.synthetic = true;
    source.synth_n_per_class = js.at("n_per_class").get<std::size_t>();
    source.synth_n_features = js.at("n_features").get<std::size_t>();
    source.synth_separation = js.at("class_separation").get<double>();
    source.synth_seed = js.value("seed", 0ULL);
  } else {
    source.csv_path = j.at("csv").get<std::string>();
    source.label_column = j.value("label_column", source.label_column);
    if (j.contains("normalization"))
      source.normalization =
          parse_normalization(j.at("normalization").get<std::string>());
  }
  return source;
}

PartitionPlan parse_plan(const json &j) {
  check_keys(j,
             {"scheme", "seed", "hosts", "test_per_class_counts",
              "test_bias_fraction_value1", "bias_feature_name"},
             "plan");
  PartitionPlan plan;
  const std::string scheme = j.at("scheme").get<std::string>();
  if (scheme == "class_skew")
    plan.scheme = PartitionScheme::class_skew;
  else if (scheme == "injected_feature_bias")
    plan.scheme = PartitionScheme::injected_feature_bias;
  else if (scheme == "size_split")
    plan.scheme = PartitionScheme::size_split;
  else
    throw ConfigError("unknown partition scheme '" + scheme + "'");
  plan.seed = j.value("seed", 0ULL);
  const std::string bias_name = j.value("bias_feature_name", "synthetic_bias");
  for (const auto &jh : j.at("hosts")) {
    check_keys(jh, {"host_id", "per_class_counts", "fraction", "bias_fraction_value1"},
               "plan.hosts[]");
    HostSpec host;
    host.host_id = jh.at("host_id").get<std::string>();
    if (jh.contains("per_class_counts"))
      host.per_class_counts = jh.at("per_class_counts").get<std::vector<std::size_t>>();
    host.fraction = jh.value("fraction", 0.0);
    if (jh.contains("bias_fraction_value1"))
      host.bias = BiasFeatureSpec{bias_name,
                                  jh.at("bias_fraction_value1").get<double>()};
    plan.hosts.push_back(std::move(host));
  }
  if (j.contains("test_per_class_counts"))
    plan.test_per_class_counts =
        j.at("test_per_class_counts").get<std::vector<std::size_t>>();
  if (j.contains("test_bias_fraction_value1"))
    plan.test_bias = BiasFeatureSpec{
        bias_name, j.at("test_bias_fraction_value1").get<double>()};
  return plan;
}

}  // namespace

SimulateSpec load_simulate_config(const std::string &path, const CliOverrides &cli) {
  const json j = parse_file(path);
  check_keys(j,
             {"architecture", "seed", "combine", "max_rounds", "stop_epsilon",
              "stop_patience", "centralized", "baselines", "train_defaults",
              "label_column", "normalization", "hosts", "test_csv", "output_dir"},
             path);
  SimulateSpec spec;
  auto &exp = spec.experiment;
  exp.architecture = parse_architecture(j.at("architecture"));
  exp.seed = cli.seed.value_or(j.value("seed", 0ULL));
  if (j.contains("combine")) exp.combine = parse_combine(j.at("combine"));
  exp.max_rounds = j.value("max_rounds", exp.max_rounds);
  exp.stop_epsilon = j.value("stop_epsilon", exp.stop_epsilon);
  exp.stop_patience = j.value("stop_patience", exp.stop_patience);
  if (j.contains("centralized")) {
    const auto &jc = j.at("centralized");
    check_keys(jc, {"enabled", "epochs"}, "centralized");
    spec.run_centralized_reference = jc.value("enabled", true);
    exp.centralized_epochs = jc.value("epochs", exp.centralized_epochs);
  }
  if (j.contains("baselines"))
    for (const auto &jb : j.at("baselines")) {
      const auto s = strategy_from_string(jb.get<std::string>());
      if (!s)
        throw ConfigError("unknown baseline '" + jb.get<std::string>() + "'");
      exp.baselines_to_run.push_back(*s);
    }

  TrainConfig defaults;
  if (j.contains("train_defaults"))
    defaults = parse_train(j.at("train_defaults"), defaults, "train_defaults");
  const std::string label_column = j.value("label_column", "label");
  const Normalization norm =
      parse_normalization(j.value("normalization", "none"));

  for (const auto &jh : j.at("hosts")) {
    check_keys(jh, {"host_id", "data_csv", "train"}, "hosts[]");
    HostConfig host;
    host.host_id = jh.at("host_id").get<std::string>();
    const std::string csv = jh.at("data_csv").get<std::string>();
    require_file(csv, "hosts[].data_csv");
    host.data = load_csv(csv, label_column, norm).data;
    host.train = jh.contains("train")
                     ? parse_train(jh.at("train"), defaults, "hosts[].train")
                     : defaults;
    exp.hosts.push_back(std::move(host));
  }
  const std::string test_csv = j.at("test_csv").get<std::string>();
  require_file(test_csv, "test_csv");
  exp.test_data = load_csv(test_csv, label_column, norm).data;

  // class counts must agree across hosts and test for shared evaluation
  std::size_t n_classes = exp.test_data.n_classes;
  for (const auto &host : exp.hosts) n_classes = std::max(n_classes, host.data.n_classes);
  exp.test_data.n_classes = n_classes;
  for (auto &host : exp.hosts) host.data.n_classes = n_classes;

  spec.output_dir = cli.out_dir.value_or(j.value("output_dir", std::string(".")));
  return spec;
}

ServeSpec load_serve_config(const std::string &path, const CliOverrides &cli) {
  const json j = parse_file(path);
  check_keys(j,
             {"session_id", "bind_address", "port", "expected_hosts",
              "architecture", "combine", "max_rounds", "stop_epsilon",
              "stop_patience", "init", "eval_csv", "label_column",
              "normalization", "output_dir"},
             path);
  ServeSpec spec;
  auto &session = spec.session;
  session.session_id = j.at("session_id").get<std::string>();
  spec.bind_address = j.value("bind_address", spec.bind_address);
  spec.port = j.value("port", 0);
  session.expected_hosts = j.at("expected_hosts").get<std::size_t>();
  session.architecture = parse_architecture(j.at("architecture"));
  if (j.contains("combine")) session.combine = parse_combine(j.at("combine"));
  session.max_rounds = j.value("max_rounds", session.max_rounds);
  session.stop_epsilon = j.value("stop_epsilon", session.stop_epsilon);
  session.stop_patience = j.value("stop_patience", session.stop_patience);
  if (j.contains("init")) {
    const auto &ji = j.at("init");
    check_keys(ji, {"seed", "model_file"}, "init");
    if (ji.contains("model_file")) {
      const std::string file = ji.at("model_file").get<std::string>();
      require_file(file, "init.model_file");
      session.preloaded_params = load_params(file);
    }
    session.init_seed = ji.value("seed", 0ULL);
  }
  if (cli.seed) session.init_seed = *cli.seed;
  if (j.contains("eval_csv")) {
    const std::string csv = j.at("eval_csv").get<std::string>();
    require_file(csv, "eval_csv");
    session.eval_data =
        load_csv(csv, j.value("label_column", "label"),
                 parse_normalization(j.value("normalization", "none")))
            .data;
  }
  session.out_dir = cli.out_dir.value_or(j.value("output_dir", std::string()));
  return spec;
}

JoinSpec load_join_config(const std::string &path, const CliOverrides &cli) {
  const json j = parse_file(path);
  check_keys(j,
             {"server_host", "server_port", "session_id", "host_id",
              "architecture", "data_csv", "label_column", "normalization",
              "train", "round_timeout_seconds", "output_model"},
             path);
  JoinSpec spec;
  auto &join = spec.join;
  join.server_host = j.value("server_host", join.server_host);
  join.server_port = j.at("server_port").get<std::uint16_t>();
  join.session_id = j.at("session_id").get<std::string>();
  join.host_id = j.at("host_id").get<std::string>();
  join.architecture = parse_architecture(j.at("architecture"));
  const std::string csv = j.at("data_csv").get<std::string>();
  require_file(csv, "data_csv");
  join.data = load_csv(csv, j.value("label_column", "label"),
                       parse_normalization(j.value("normalization", "none")))
                  .data;
  if (j.contains("train")) join.train = parse_train(j.at("train"), {}, "train");
  if (cli.seed) join.train.seed = *cli.seed;
  join.round_timeout_seconds =
      j.value("round_timeout_seconds", join.round_timeout_seconds);
  spec.output_model_path = j.value("output_model", std::string());
  return spec;
}

PartitionSpec load_partition_config(const std::string &path, const CliOverrides &cli) {
  const json j = parse_file(path);
  check_keys(j, {"source", "plan", "output_dir"}, path);
  PartitionSpec spec;
  spec.source = parse_source(j.at("source"));
  spec.plan = parse_plan(j.at("plan"));
  if (cli.seed) spec.plan.seed = *cli.seed;
  spec.output_dir = cli.out_dir.value_or(j.value("output_dir", std::string(".")));
  return spec;
}

}  // namespace coln
