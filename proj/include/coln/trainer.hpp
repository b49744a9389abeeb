#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "coln/model.hpp"

namespace coln {

enum class Loss { bce, softmax_ce };

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  Loss loss = Loss::bce;
  double proximal_mu = 0.0;  // 0 disables the FedProx proximal term
  std::optional<ParameterSet> reference_params;  // required iff proximal_mu > 0
};

/// Row-major sample matrix plus integer class labels.
struct Dataset {
  std::vector<double> features;  // n_samples * n_features
  std::vector<std::size_t> labels;
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t n_classes = 2;

  const double *row(std::size_t i) const { return features.data() + i * n_features; }
  void push_row(const std::vector<double> &feats, std::size_t label);
};

/// Throws ArgumentError on shape/label/finite-value violations.
void validate_dataset(const Dataset &data);

/// Thrown when the loss or weights go non-finite mid-training; carries the
/// last finite parameter state so callers can persist partial progress.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(const std::string &what, ParameterSet last_finite)
      : std::runtime_error(what), last_finite_params(std::move(last_finite)) {}
  ParameterSet last_finite_params;
};

struct EvalReport {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> per_class_accuracy;
};

/// Glorot-uniform weights (range +-sqrt(6/(fan_in+fan_out))), zero biases,
/// deterministic per seed.
ParameterSet init_params(const ArchitectureDescriptor &arch, std::uint64_t seed);

/// Full forward pass; returns n_samples x n_outputs activations row-major.
std::vector<double> forward(const ParameterSet &params,
                            const std::vector<double> &features,
                            std::size_t n_samples, std::size_t n_features);

/// Mean loss over the batch plus proximal term, and the matching gradient.
std::pair<double, ParameterSet> loss_and_gradient(const ParameterSet &params,
                                                  const Dataset &batch,
                                                  const TrainConfig &config);

/// Mini-batch SGD with a seeded per-epoch Fisher-Yates shuffle
/// (xoshiro256** seeded via splitmix64). Throws NumericError when the loss
/// goes non-finite; the error message carries the last finite epoch.
ParameterSet train(const ParameterSet &params, const Dataset &data,
                   const TrainConfig &config);

/// Argmax prediction (BCE head thresholds at 0.5); ties break toward the
/// lowest class index.
EvalReport evaluate(const ParameterSet &params, const Dataset &data);

}  // namespace coln
