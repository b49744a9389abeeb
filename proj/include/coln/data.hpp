#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coln/trainer.hpp"

namespace coln {

enum class Normalization { none, zscore };

/// Per-feature statistics captured from a training set so test data can be
/// normalized with the same transform.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // constant columns carry stddev 0
};

struct CsvLoadResult {
  Dataset data;
  NormStats stats;
  std::vector<std::string> feature_names;
  std::size_t skipped_rows = 0;  // rows dropped for missing values
};

/// Loads a comma-separated file (first row header, '.' decimal point).
/// The label column holds non-negative integer class indices. Rows with
/// missing values are dropped and counted. Throws IngestError on unreadable
/// files or non-numeric features.
CsvLoadResult load_csv(const std::string &path, const std::string &label_column,
                       Normalization normalization);

/// Applies previously captured z-score stats (constant columns map to 0).
void apply_normalization(Dataset &data, const NormStats &stats);

void save_csv(const Dataset &data, const std::vector<std::string> &feature_names,
              const std::string &label_column, const std::string &path);

enum class PartitionScheme { class_skew, injected_feature_bias, size_split };

struct BiasFeatureSpec {
  std::string feature_name = "synthetic_bias";
  /// Fraction of class-1 samples that get synthetic value 1; class-0 samples
  /// get value 1 with the complementary fraction, producing the opposite
  /// correlation.
  double positive_class_fraction_value1 = 0.5;
};

struct HostSpec {
  std::string host_id;
  std::vector<std::size_t> per_class_counts;  // class_skew / injected_feature_bias
  double fraction = 0.0;                      // size_split
  std::optional<BiasFeatureSpec> bias;
};

struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::class_skew;
  std::vector<HostSpec> hosts;
  std::vector<std::size_t> test_per_class_counts;
  std::optional<BiasFeatureSpec> test_bias;  // typically fraction 0.5
  std::uint64_t seed = 0;
};

struct PartitionResult {
  std::vector<Dataset> host_data;  // aligned with plan.hosts
  Dataset test_data;
  std::size_t discarded = 0;  // samples in neither a host set nor the test set
};

/// Splits a dataset into disjoint per-host sets plus a test set,
/// deterministically per seed. Bias injection appends one synthetic column
/// and never touches existing features or labels. Throws ConfigError when the
/// requested counts exceed what the data provides (message lists the deficit).
PartitionResult partition(const Dataset &data, const PartitionPlan &plan);

/// Two-class isotropic Gaussian blobs, unit variance per coordinate, class
/// mean vectors separated by `class_separation` (Euclidean norm).
Dataset synth_gaussian_blobs(std::size_t n_per_class, std::size_t n_features,
                             double class_separation, std::uint64_t seed);

/// Concatenates datasets with identical shape metadata.
Dataset merge_datasets(const std::vector<Dataset> &parts);

}  // namespace coln
