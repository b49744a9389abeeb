#include "coln/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "coln/errors.hpp"
#include "coln/kernels.hpp"
#include "coln/prng.hpp"

namespace coln {

namespace {

constexpr double kProbEps = 1e-12;  // keeps log() finite at saturated outputs

double clamp_prob(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

void apply_activation(Activation act, double *row, std::size_t n) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) row[i] = row[i] > 0.0 ? row[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) row[i] = 1.0 / (1.0 + std::exp(-row[i]));
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) row[i] = std::tanh(row[i]);
      break;
    case Activation::softmax: {
      double mx = row[0];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
      }
      for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
      break;
    }
  }
}

/// Derivative of the activation expressed through the activated value.
double activation_grad(Activation act, double activated) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return activated > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return activated * (1.0 - activated);
    case Activation::tanh: return 1.0 - activated * activated;
    case Activation::softmax: return 1.0;  // handled jointly with the CE loss
  }
  return 1.0;
}

/// One layer applied to a batch: out[s] = act(W x_s + b).
void layer_forward(const ParameterSet &params, std::size_t layer,
                   const std::vector<double> &in, std::size_t n_samples,
                   std::vector<double> &out) {
  const auto &spec = params.architecture.layers[layer];
  const auto &k = kernels::active();
  const double *w = params.weights(layer);
  const double *b = spec.has_bias ? params.bias(layer) : nullptr;
  out.resize(n_samples * spec.output_dim);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double *x = in.data() + s * spec.input_dim;
    double *y = out.data() + s * spec.output_dim;
    for (std::size_t j = 0; j < spec.output_dim; ++j)
      y[j] = k.dot(w + j * spec.input_dim, x, spec.input_dim) + (b ? b[j] : 0.0);
    apply_activation(spec.activation, y, spec.output_dim);
  }
}

}  // namespace

void Dataset::push_row(const std::vector<double> &feats, std::size_t label) {
  if (n_samples == 0 && n_features == 0) n_features = feats.size();
  features.insert(features.end(), feats.begin(), feats.end());
  labels.push_back(label);
  ++n_samples;
}

void validate_dataset(const Dataset &data) {
  if (data.n_samples == 0) throw ArgumentError("dataset is empty");
  if (data.features.size() != data.n_samples * data.n_features)
    throw ArgumentError("feature matrix shape mismatch");
  if (data.labels.size() != data.n_samples)
    throw ArgumentError("label count mismatch");
  for (auto label : data.labels)
    if (label >= data.n_classes) throw ArgumentError("label out of range");
  for (double v : data.features)
    if (!std::isfinite(v)) throw ArgumentError("non-finite feature value");
}

ParameterSet init_params(const ArchitectureDescriptor &arch, std::uint64_t seed) {
  validate_architecture(arch);
  ParameterSet p = ParameterSet::zeros(arch);
  Xoshiro256 rng(seed);
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto &spec = arch.layers[l];
    const double limit = std::sqrt(
        6.0 / static_cast<double>(spec.input_dim + spec.output_dim));
    double *w = p.weights(l);
    const std::size_t n_weights = spec.input_dim * spec.output_dim;
    for (std::size_t i = 0; i < n_weights; ++i)
      w[i] = rng.uniform(-limit, limit);
    // biases stay zero
  }
  return p;
}

std::vector<double> forward(const ParameterSet &params,
                            const std::vector<double> &features,
                            std::size_t n_samples, std::size_t n_features) {
  validate_params(params);
  if (n_features != params.architecture.layers.front().input_dim)
    throw ArgumentError("feature width does not match first layer input_dim");
  if (features.size() != n_samples * n_features)
    throw ArgumentError("feature matrix shape mismatch");
  std::vector<double> current = features;
  std::vector<double> next;
  for (std::size_t l = 0; l < params.architecture.layers.size(); ++l) {
    layer_forward(params, l, current, n_samples, next);
    current.swap(next);
  }
  return current;
}

std::pair<double, ParameterSet> loss_and_gradient(const ParameterSet &params,
                                                  const Dataset &batch,
                                                  const TrainConfig &config) {
  validate_dataset(batch);
  const auto &layers = params.architecture.layers;
  const std::size_t layer_count = layers.size();
  if (batch.n_features != layers.front().input_dim)
    throw ArgumentError("batch width does not match architecture");
  if (config.proximal_mu > 0.0 && !config.reference_params)
    throw ConfigError("proximal_mu > 0 requires reference_params");
  const auto &head = layers.back();
  if (config.loss == Loss::bce &&
      (head.output_dim != 1 || head.activation != Activation::sigmoid))
    throw ConfigError("bce loss requires a single sigmoid output");
  if (config.loss == Loss::softmax_ce && head.activation != Activation::softmax)
    throw ConfigError("softmax_ce loss requires a softmax output layer");

  const std::size_t n = batch.n_samples;
  const auto &k = kernels::active();

  // Forward, keeping every layer's activations. acts[0] is the input.
  std::vector<std::vector<double>> acts(layer_count + 1);
  acts[0] = batch.features;
  for (std::size_t l = 0; l < layer_count; ++l)
    layer_forward(params, l, acts[l], n, acts[l + 1]);

  // Mean data loss and the head delta (gradient wrt pre-activation).
  const auto &output = acts[layer_count];
  double loss = 0.0;
  std::vector<double> delta(n * head.output_dim);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t y = batch.labels[s];
    if (config.loss == Loss::bce) {
      const double p = clamp_prob(output[s]);
      loss -= (y == 1 ? std::log(p) : std::log(1.0 - p));
      delta[s] = output[s] - (y == 1 ? 1.0 : 0.0);
    } else {
      const double *p = output.data() + s * head.output_dim;
      loss -= std::log(clamp_prob(p[y]));
      double *d = delta.data() + s * head.output_dim;
      for (std::size_t j = 0; j < head.output_dim; ++j)
        d[j] = p[j] - (j == y ? 1.0 : 0.0);
    }
  }
  loss *= inv_n;

  // Backward pass.
  ParameterSet grad = ParameterSet::zeros(params.architecture);
  std::vector<double> prev_delta;
  for (std::size_t li = layer_count; li-- > 0;) {
    const auto &spec = layers[li];
    const auto &input = acts[li];
    double *gw = grad.weights(li);
    double *gb = spec.has_bias ? grad.bias(li) : nullptr;
    for (std::size_t s = 0; s < n; ++s) {
      const double *d = delta.data() + s * spec.output_dim;
      const double *x = input.data() + s * spec.input_dim;
      for (std::size_t j = 0; j < spec.output_dim; ++j) {
        const double dj = d[j] * inv_n;
        k.axpy(gw + j * spec.input_dim, x, dj, spec.input_dim);
        if (gb) gb[j] += dj;
      }
    }
    if (li == 0) break;
    // delta for the previous layer: (W^T d) * act'(a_prev)
    const auto &prev_spec = layers[li - 1];
    const double *w = params.weights(li);
    prev_delta.assign(n * spec.input_dim, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double *d = delta.data() + s * spec.output_dim;
      double *pd = prev_delta.data() + s * spec.input_dim;
      for (std::size_t j = 0; j < spec.output_dim; ++j)
        k.axpy(pd, w + j * spec.input_dim, d[j], spec.input_dim);
      const double *a = acts[li].data() + s * spec.input_dim;
      for (std::size_t i = 0; i < spec.input_dim; ++i)
        pd[i] *= activation_grad(prev_spec.activation, a[i]);
    }
    delta.swap(prev_delta);
  }

  // FedProx proximal term: mu/2 * ||w - w_ref||^2.
  if (config.proximal_mu > 0.0) {
    const auto &ref = *config.reference_params;
    if (!(ref.architecture == params.architecture))
      throw ConfigError("reference_params architecture mismatch");
    double prox = 0.0;
    for (std::size_t l = 0; l < layer_count; ++l) {
      const auto &w = params.per_layer[l];
      const auto &wr = ref.per_layer[l];
      auto &g = grad.per_layer[l];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = w[i] - wr[i];
        prox += d * d;
        g[i] += config.proximal_mu * d;
      }
    }
    loss += 0.5 * config.proximal_mu * prox;
  }

  return {loss, std::move(grad)};
}

ParameterSet train(const ParameterSet &params, const Dataset &data,
                   const TrainConfig &config) {
  validate_params(params);
  validate_dataset(data);
  if (config.learning_rate <= 0.0 && config.learning_rate != 0.0)
    throw ConfigError("learning_rate must be non-negative");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");

  ParameterSet current = params;
  Xoshiro256 rng(config.seed);
  const std::size_t n = data.n_samples;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto idx = shuffled_indices(n, rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      Dataset batch;
      batch.n_features = data.n_features;
      batch.n_classes = data.n_classes;
      for (std::size_t t = start; t < end; ++t) {
        const std::size_t s = idx[t];
        batch.features.insert(batch.features.end(), data.row(s),
                              data.row(s) + data.n_features);
        batch.labels.push_back(data.labels[s]);
        ++batch.n_samples;
      }
      auto [loss, grad] = loss_and_gradient(current, batch, config);
      if (!std::isfinite(loss))
        throw TrainingDiverged("training diverged at epoch " +
                                   std::to_string(epoch) + " (non-finite loss)",
                               current);
      if (config.learning_rate != 0.0) {
        ParameterSet stepped = current;
        const auto &k = kernels::active();
        for (std::size_t l = 0; l < stepped.per_layer.size(); ++l)
          k.axpy(stepped.per_layer[l].data(), grad.per_layer[l].data(),
                 -config.learning_rate, stepped.per_layer[l].size());
        if (!stepped.all_finite())
          throw TrainingDiverged(
              "training diverged at epoch " + std::to_string(epoch) +
                  " (non-finite weights)",
              current);
        current = std::move(stepped);
      }
    }
  }
  return current;
}

EvalReport evaluate(const ParameterSet &params, const Dataset &data) {
  validate_dataset(data);
  const auto &head = params.architecture.layers.back();
  const auto output =
      forward(params, data.features, data.n_samples, data.n_features);

  EvalReport report;
  report.per_class_accuracy.assign(data.n_classes, 0.0);
  std::vector<std::size_t> class_total(data.n_classes, 0);
  std::vector<std::size_t> class_correct(data.n_classes, 0);
  double loss = 0.0;
  std::size_t correct = 0;

  for (std::size_t s = 0; s < data.n_samples; ++s) {
    const std::size_t y = data.labels[s];
    std::size_t predicted = 0;
    if (head.output_dim == 1) {
      const double p = clamp_prob(output[s]);
      predicted = output[s] > 0.5 ? 1 : 0;
      loss -= (y == 1 ? std::log(p) : std::log(1.0 - p));
    } else {
      const double *p = output.data() + s * head.output_dim;
      for (std::size_t j = 1; j < head.output_dim; ++j)
        if (p[j] > p[predicted]) predicted = j;  // ties keep the lower index
      loss -= std::log(clamp_prob(p[y]));
    }
    ++class_total[y];
    if (predicted == y) {
      ++correct;
      ++class_correct[y];
    }
  }

  report.accuracy = static_cast<double>(correct) / static_cast<double>(data.n_samples);
  report.loss = loss / static_cast<double>(data.n_samples);
  for (std::size_t c = 0; c < data.n_classes; ++c)
    report.per_class_accuracy[c] =
        class_total[c] == 0 ? 0.0
                            : static_cast<double>(class_correct[c]) /
                                  static_cast<double>(class_total[c]);
  return report;
}

}  // namespace coln
