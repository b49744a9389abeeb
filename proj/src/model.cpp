#include "coln/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/sha.h>

#include <json.hpp>

#include "coln/errors.hpp"

namespace coln {

using nlohmann::json;

const char *to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "identity";
}

std::optional<Activation> activation_from_string(const std::string &s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "softmax") return Activation::softmax;
  return std::nullopt;
}

std::size_t param_count(const ArchitectureDescriptor &arch) {
  std::size_t total = 0;
  for (const auto &layer : arch.layers) total += layer.param_count();
  return total;
}

void validate_architecture(const ArchitectureDescriptor &arch) {
  if (arch.layers.empty()) throw ArgumentError("architecture has no layers");
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto &layer = arch.layers[l];
    if (layer.input_dim == 0 || layer.output_dim == 0)
      throw ArgumentError("layer '" + layer.name + "' has a zero dimension");
    if (l > 0 && layer.input_dim != arch.layers[l - 1].output_dim)
      throw ArgumentError("layer '" + layer.name +
                          "' input_dim does not match previous output_dim");
  }
}

ParameterSet ParameterSet::zeros(const ArchitectureDescriptor &arch) {
  ParameterSet p;
  p.architecture = arch;
  p.per_layer.reserve(arch.layers.size());
  for (const auto &layer : arch.layers)
    p.per_layer.emplace_back(layer.param_count(), 0.0);
  return p;
}

double &ParameterSet::at(std::size_t layer, std::size_t row, std::size_t col) {
  const auto &spec = architecture.layers[layer];
  return per_layer[layer][row * spec.input_dim + col];
}

double &ParameterSet::bias_at(std::size_t layer, std::size_t unit) {
  const auto &spec = architecture.layers[layer];
  return per_layer[layer][spec.input_dim * spec.output_dim + unit];
}

const double *ParameterSet::weights(std::size_t layer) const {
  return per_layer[layer].data();
}
double *ParameterSet::weights(std::size_t layer) {
  return per_layer[layer].data();
}
const double *ParameterSet::bias(std::size_t layer) const {
  const auto &spec = architecture.layers[layer];
  return per_layer[layer].data() + spec.input_dim * spec.output_dim;
}
double *ParameterSet::bias(std::size_t layer) {
  const auto &spec = architecture.layers[layer];
  return per_layer[layer].data() + spec.input_dim * spec.output_dim;
}

bool ParameterSet::all_finite() const {
  for (const auto &layer : per_layer)
    for (double v : layer)
      if (!std::isfinite(v)) return false;
  return true;
}

void validate_params(const ParameterSet &params) {
  validate_architecture(params.architecture);
  if (params.per_layer.size() != params.architecture.layers.size())
    throw ArgumentError("parameter set layer count does not match architecture");
  for (std::size_t l = 0; l < params.per_layer.size(); ++l)
    if (params.per_layer[l].size() != params.architecture.layers[l].param_count())
      throw ArgumentError("layer " + std::to_string(l) + " has wrong length");
  if (!params.all_finite())
    throw ArgumentError("parameter set contains non-finite values");
}

bool validate_same_architecture(const std::vector<HostSubmission> &submissions) {
  if (submissions.empty()) throw ArgumentError("no submissions");
  const auto &first = submissions.front().params.architecture;
  for (const auto &sub : submissions)
    if (!(sub.params.architecture == first)) return false;
  return true;
}

// --- serialization -----------------------------------------------------------

namespace {

json arch_to_json(const ArchitectureDescriptor &arch) {
  json layers = json::array();
  for (const auto &layer : arch.layers) {
    layers.push_back({{"name", layer.name},
                      {"input_dim", layer.input_dim},
                      {"output_dim", layer.output_dim},
                      {"activation", to_string(layer.activation)},
                      {"has_bias", layer.has_bias}});
  }
  return json{{"layers", layers}};
}

ArchitectureDescriptor arch_from_json(const json &j) {
  ArchitectureDescriptor arch;
  for (const auto &jl : j.at("layers")) {
    LayerSpec layer;
    layer.name = jl.at("name").get<std::string>();
    layer.input_dim = jl.at("input_dim").get<std::size_t>();
    layer.output_dim = jl.at("output_dim").get<std::size_t>();
    const auto act = activation_from_string(jl.at("activation").get<std::string>());
    if (!act) throw ArgumentError("unknown activation in model file");
    layer.activation = *act;
    layer.has_bias = jl.at("has_bias").get<bool>();
    arch.layers.push_back(std::move(layer));
  }
  validate_architecture(arch);
  return arch;
}

}  // namespace

std::string serialize_params(const ParameterSet &params) {
  validate_params(params);
  json layers = json::array();
  for (const auto &values : params.per_layer)
    layers.push_back({{"values", values}});
  const json doc{{"format_version", 1},
                 {"architecture", arch_to_json(params.architecture)},
                 {"layers", layers}};
  return doc.dump();
}

ParameterSet deserialize_params(const std::string &text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != 1)
    throw ArgumentError("unsupported model format_version");
  ParameterSet p;
  p.architecture = arch_from_json(doc.at("architecture"));
  for (const auto &jl : doc.at("layers"))
    p.per_layer.push_back(jl.at("values").get<std::vector<double>>());
  validate_params(p);
  return p;
}

void save_params(const ParameterSet &params, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  out << serialize_params(params);
  if (!out) throw IngestError("write failed: " + path);
}

ParameterSet load_params(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_params(buf.str());
}

std::string serialize_architecture(const ArchitectureDescriptor &arch) {
  return arch_to_json(arch).dump();
}

ArchitectureDescriptor deserialize_architecture(const std::string &text) {
  return arch_from_json(json::parse(text));
}

namespace {

std::string sha256_hex(const std::string &data) {
  unsigned char hash[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char *>(data.data()), data.size(), hash);
  static const char *hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : hash) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

}  // namespace

std::string architecture_digest(const ArchitectureDescriptor &arch) {
  return sha256_hex(serialize_architecture(arch));
}

std::string params_digest(const ParameterSet &params) {
  return sha256_hex(serialize_params(params));
}

}  // namespace coln
