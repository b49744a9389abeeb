#include "coln/combiner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coln/errors.hpp"
#include "coln/kernels.hpp"

namespace coln {

const char *to_string(CombineStrategy s) {
  switch (s) {
    case CombineStrategy::coln: return "coln";
    case CombineStrategy::fedavg: return "fedavg";
    case CombineStrategy::plain_average: return "plain_average";
  }
  return "coln";
}

std::optional<CombineStrategy> strategy_from_string(const std::string &s) {
  if (s == "coln") return CombineStrategy::coln;
  if (s == "fedavg") return CombineStrategy::fedavg;
  if (s == "plain_average") return CombineStrategy::plain_average;
  return std::nullopt;
}

double rate_for_round(const CombineConfig &config, std::uint64_t round) {
  if (config.rate_schedule == RateSchedule::alternating)
    return (round % 2 == 1) ? 1.0 : -1.0;
  return config.c;
}

std::vector<double> relative_sizes(const std::vector<std::uint64_t> &corpus_sizes) {
  if (corpus_sizes.empty()) throw ArgumentError("no corpus sizes");
  double total = 0.0;
  for (auto t : corpus_sizes) {
    if (t == 0) throw ArgumentError("corpus size must be positive");
    total += static_cast<double>(t);
  }
  std::vector<double> rates;
  rates.reserve(corpus_sizes.size());
  for (auto t : corpus_sizes) rates.push_back(static_cast<double>(t) / total);
  return rates;
}

double alpha(double relative_size, double rate) {
  return std::exp(rate * relative_size);
}

double weight_distance(const std::vector<double> &values,
                       const std::vector<double> &rates) {
  const std::size_t hosts = values.size();
  if (hosts < 2) throw ArgumentError("weight_distance needs at least 2 hosts");
  if (rates.size() != hosts) throw ArgumentError("rates/values size mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < hosts; ++j)
    for (std::size_t k = j + 1; k < hosts; ++k) {
      const double d = values[j] * rates[j] - values[k] * rates[k];
      sum += d * d;
    }
  return std::sqrt(sum);
}

double layer_distance(const std::vector<std::vector<double>> &layer_values) {
  const std::size_t hosts = layer_values.size();
  if (hosts < 2) throw ArgumentError("layer_distance needs at least 2 hosts");
  const std::size_t m = layer_values.front().size();
  if (m == 0) throw ArgumentError("empty layer");
  for (const auto &v : layer_values)
    if (v.size() != m) throw ArgumentError("ragged layer values");
  const auto &k = kernels::active();
  double sum = 0.0;
  for (std::size_t a = 0; a < hosts; ++a)
    for (std::size_t b = a + 1; b < hosts; ++b)
      sum += k.sum_sq_diff(layer_values[a].data(), layer_values[b].data(), m);
  return std::sqrt(sum) / static_cast<double>(m);
}

double shift(double weight_dist, double layer_dist) {
  return weight_dist < layer_dist ? weight_dist : 0.0;
}

namespace {

std::vector<const HostSubmission *> sorted_by_host(
    const std::vector<HostSubmission> &submissions) {
  if (submissions.size() < 2)
    throw ArgumentError("combination needs at least 2 submissions");
  if (!validate_same_architecture(submissions))
    throw ProtocolError("submissions disagree on architecture");
  for (const auto &sub : submissions) {
    validate_params(sub.params);
    if (sub.corpus_size == 0)
      throw ArgumentError("host '" + sub.host_id + "' reports zero corpus size");
  }
  std::vector<const HostSubmission *> order;
  order.reserve(submissions.size());
  for (const auto &sub : submissions) order.push_back(&sub);
  std::sort(order.begin(), order.end(),
            [](const HostSubmission *a, const HostSubmission *b) {
              return a->host_id < b->host_id;
            });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (order[i]->host_id == order[i - 1]->host_id)
      throw ProtocolError("duplicate host_id '" + order[i]->host_id + "'");
  return order;
}

/// Weighted sum over hosts in ascending host_id order, coefficient per host.
ParameterSet weighted_sum(const std::vector<const HostSubmission *> &order,
                          const std::vector<double> &coefficients) {
  ParameterSet out = ParameterSet::zeros(order.front()->params.architecture);
  const auto &k = kernels::active();
  for (std::size_t h = 0; h < order.size(); ++h)
    for (std::size_t l = 0; l < out.per_layer.size(); ++l)
      k.axpy(out.per_layer[l].data(), order[h]->params.per_layer[l].data(),
             coefficients[h], out.per_layer[l].size());
  return out;
}

}  // namespace

CombineResult combine_coln(const std::vector<HostSubmission> &submissions,
                           const CombineConfig &config, std::uint64_t round) {
  const auto order = sorted_by_host(submissions);
  const std::uint64_t sub_round = order.front()->round;
  for (const auto *sub : order)
    if (sub->round != sub_round)
      throw ProtocolError("submissions disagree on round index");

  const std::size_t hosts = order.size();
  std::vector<std::uint64_t> sizes;
  sizes.reserve(hosts);
  for (const auto *sub : order) sizes.push_back(sub->corpus_size);
  const std::vector<double> rates = relative_sizes(sizes);

  const double c = rate_for_round(config, round);
  std::vector<double> coefficients;
  coefficients.reserve(hosts);
  for (double r : rates) coefficients.push_back(alpha(r, c));

  CombineResult result;
  result.params = weighted_sum(order, coefficients);
  result.report.rate_warning = config.rate_schedule == RateSchedule::constant &&
                               (config.c < 1e-6 || config.c > 1e-3);

  const auto &k = kernels::active();
  const std::size_t layer_count = result.params.per_layer.size();
  auto &report = result.report;
  report.layer_distances.resize(layer_count);
  report.weight_distance_min.resize(layer_count);
  report.weight_distance_max.resize(layer_count);
  report.weight_distance_mean.resize(layer_count);
  report.shifted_fraction.resize(layer_count);

  std::vector<double> scaled_a, scaled_b, sq_accum, sqrt_dist;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::size_t m = result.params.per_layer[l].size();

    // LayerDistance(l): unscaled pairwise squared differences over the layer.
    double layer_sum = 0.0;
    for (std::size_t a = 0; a < hosts; ++a)
      for (std::size_t b = a + 1; b < hosts; ++b)
        layer_sum += k.sum_sq_diff(order[a]->params.per_layer[l].data(),
                                   order[b]->params.per_layer[l].data(), m);
    const double layer_dist = std::sqrt(layer_sum) / static_cast<double>(m);
    report.layer_distances[l] = layer_dist;

    // WeightDistance(i,l): rate-scaled pairwise squared differences per weight.
    sq_accum.assign(m, 0.0);
    scaled_a.resize(m);
    scaled_b.resize(m);
    for (std::size_t a = 0; a < hosts; ++a) {
      k.scale(scaled_a.data(), order[a]->params.per_layer[l].data(), rates[a], m);
      for (std::size_t b = a + 1; b < hosts; ++b) {
        k.scale(scaled_b.data(), order[b]->params.per_layer[l].data(), rates[b], m);
        k.accum_sq_diff(sq_accum.data(), scaled_a.data(), scaled_b.data(), m);
      }
    }

    double dist_min = std::numeric_limits<double>::infinity();
    double dist_max = 0.0;
    double dist_sum = 0.0;
    std::size_t shifted = 0;
    auto &combined = result.params.per_layer[l];
    for (std::size_t i = 0; i < m; ++i) {
      const double wd = std::sqrt(sq_accum[i]);
      dist_min = std::min(dist_min, wd);
      dist_max = std::max(dist_max, wd);
      dist_sum += wd;
      const double beta = shift(wd, layer_dist);
      if (config.shift_enabled && beta != 0.0) {
        combined[i] += beta;
        ++shifted;
      }
    }
    report.weight_distance_min[l] = dist_min;
    report.weight_distance_max[l] = dist_max;
    report.weight_distance_mean[l] = dist_sum / static_cast<double>(m);
    report.shifted_fraction[l] =
        static_cast<double>(shifted) / static_cast<double>(m);
  }
  return result;
}

ParameterSet combine_fedavg(const std::vector<HostSubmission> &submissions) {
  const auto order = sorted_by_host(submissions);
  std::vector<std::uint64_t> sizes;
  sizes.reserve(order.size());
  for (const auto *sub : order) sizes.push_back(sub->corpus_size);
  return weighted_sum(order, relative_sizes(sizes));
}

ParameterSet combine_plain_average(const std::vector<HostSubmission> &submissions) {
  const auto order = sorted_by_host(submissions);
  const std::vector<double> coefficients(
      order.size(), 1.0 / static_cast<double>(order.size()));
  return weighted_sum(order, coefficients);
}

CombineResult combine(const std::vector<HostSubmission> &submissions,
                      const CombineConfig &config, std::uint64_t round) {
  switch (config.strategy) {
    case CombineStrategy::coln:
      return combine_coln(submissions, config, round);
    case CombineStrategy::fedavg:
      return {combine_fedavg(submissions), {}};
    case CombineStrategy::plain_average:
      return {combine_plain_average(submissions), {}};
  }
  throw ArgumentError("unknown strategy");
}

}  // namespace coln
