#pragma once

#include <cstdint>
#include <vector>

#include "coln/model.hpp"

namespace coln {

enum class CombineStrategy { coln, fedavg, plain_average };

enum class RateSchedule { constant, alternating };

const char *to_string(CombineStrategy s);
std::optional<CombineStrategy> strategy_from_string(const std::string &s);

struct CombineConfig {
  CombineStrategy strategy = CombineStrategy::coln;
  RateSchedule rate_schedule = RateSchedule::constant;
  double c = 1e-3;            // combination rate, used when schedule is constant
  bool shift_enabled = true;  // apply the distance-gated shift term
  bool signed_shift = false;  // reserved; only the unsigned form is implemented
};

/// Combination rate for a given round under the configured schedule.
/// Alternating: +1 on odd rounds, -1 on even rounds (first combination
/// round is round 1, an expansion round).
double rate_for_round(const CombineConfig &config, std::uint64_t round);

/// Per-layer diagnostics of one combination step.
struct DistanceReport {
  std::vector<double> layer_distances;       // length L
  std::vector<double> weight_distance_min;   // per layer
  std::vector<double> weight_distance_max;
  std::vector<double> weight_distance_mean;
  std::vector<double> shifted_fraction;      // |{i : beta != 0}| / M_l
  bool rate_warning = false;  // constant rate outside [1e-6, 1e-3]
};

struct CombineResult {
  ParameterSet params;
  DistanceReport report;
};

/// r_h = T_h / sum(T). Throws ArgumentError on empty input or a zero size.
std::vector<double> relative_sizes(const std::vector<std::uint64_t> &corpus_sizes);

/// The exponential linear combiner e^{c * r_h}.
double alpha(double relative_size, double rate);

/// Pairwise distance of one weight across hosts, each host's value scaled by
/// its relative corpus size: sqrt(sum over pairs j<k of (w_j r_j - w_k r_k)^2).
double weight_distance(const std::vector<double> &values,
                       const std::vector<double> &rates);

/// Per-layer gate threshold: sqrt of the unscaled pairwise squared-difference
/// sum over all weights and host pairs, divided by the layer's weight count.
/// layer_values[h] is host h's flat layer vector.
double layer_distance(const std::vector<std::vector<double>> &layer_values);

/// Shift applied when the weight sits strictly below the layer threshold.
double shift(double weight_dist, double layer_dist);

/// The full combination: w = sum_h alpha(r_h, c) * w_h + beta, per weight.
/// Submissions are sorted by host_id internally, so the result is independent
/// of input order at the bit level. Throws ArgumentError with fewer than two
/// hosts, ProtocolError on architecture or round mismatch.
CombineResult combine_coln(const std::vector<HostSubmission> &submissions,
                           const CombineConfig &config, std::uint64_t round);

/// Size-weighted mean: w = sum_h r_h * w_h.
ParameterSet combine_fedavg(const std::vector<HostSubmission> &submissions);

/// Unweighted mean across hosts.
ParameterSet combine_plain_average(const std::vector<HostSubmission> &submissions);

/// Dispatch on config.strategy; the report is only populated for coln.
CombineResult combine(const std::vector<HostSubmission> &submissions,
                      const CombineConfig &config, std::uint64_t round);

}  // namespace coln
