#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coln {

enum class Activation { identity, relu, sigmoid, tanh, softmax };

const char *to_string(Activation a);
std::optional<Activation> activation_from_string(const std::string &s);

/// One dense layer: output = act(W x + b). Weights are stored row-major over
/// (output, input), biases appended after the weight block, so the flat
/// per-layer vector has input_dim*output_dim + output_dim entries.
struct LayerSpec {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::identity;
  bool has_bias = true;

  std::size_t param_count() const {
    return input_dim * output_dim + (has_bias ? output_dim : 0);
  }
  bool operator==(const LayerSpec &) const = default;
};

struct ArchitectureDescriptor {
  std::vector<LayerSpec> layers;

  std::size_t layer_count() const { return layers.size(); }
  bool operator==(const ArchitectureDescriptor &) const = default;
};

/// Total trainable scalars across all layers.
std::size_t param_count(const ArchitectureDescriptor &arch);

/// Throws ArgumentError if the descriptor is malformed (no layers, zero dims,
/// consecutive layers with mismatched dims).
void validate_architecture(const ArchitectureDescriptor &arch);

/// One host's full parameter state: per_layer[l] is the flat vector for
/// layer l (weights row-major, then bias).
struct ParameterSet {
  ArchitectureDescriptor architecture;
  std::vector<std::vector<double>> per_layer;

  /// Zero-initialized parameters for the given architecture.
  static ParameterSet zeros(const ArchitectureDescriptor &arch);

  double &at(std::size_t layer, std::size_t weight_row, std::size_t weight_col);
  double &bias_at(std::size_t layer, std::size_t unit);
  const double *weights(std::size_t layer) const;
  const double *bias(std::size_t layer) const;
  double *weights(std::size_t layer);
  double *bias(std::size_t layer);

  bool all_finite() const;
  bool operator==(const ParameterSet &) const = default;
};

/// Throws ArgumentError if shapes are inconsistent or any value is non-finite.
void validate_params(const ParameterSet &params);

struct HostSubmission {
  std::string host_id;
  std::uint64_t round = 0;
  std::uint64_t corpus_size = 0;  // T_h, must be >= 1
  ParameterSet params;
};

/// True iff every submission's architecture equals the first's.
/// Throws ArgumentError on an empty list.
bool validate_same_architecture(const std::vector<HostSubmission> &submissions);

// --- serialization -----------------------------------------------------------

/// Model file: JSON, format_version 1, reals printed at shortest
/// round-trip precision. Throws ArgumentError on non-finite values.
std::string serialize_params(const ParameterSet &params);
ParameterSet deserialize_params(const std::string &text);

void save_params(const ParameterSet &params, const std::string &path);
ParameterSet load_params(const std::string &path);

/// Canonical JSON for the architecture alone (used in handshakes).
std::string serialize_architecture(const ArchitectureDescriptor &arch);
ArchitectureDescriptor deserialize_architecture(const std::string &text);

/// SHA-256 hex digest of the canonical serialized architecture.
std::string architecture_digest(const ArchitectureDescriptor &arch);

/// SHA-256 hex digest of the full serialized parameter set (sync checks).
std::string params_digest(const ParameterSet &params);

}  // namespace coln
