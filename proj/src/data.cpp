#include "coln/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coln/errors.hpp"
#include "coln/prng.hpp"

namespace coln {

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_missing(const std::string &field) {
  return field.empty() || field == "?" || field == "NA" || field == "nan";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

CsvLoadResult load_csv(const std::string &path, const std::string &label_column,
                       Normalization normalization) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IngestError("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);

  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = i;
  if (label_idx == header.size())
    throw IngestError("label column '" + label_column + "' not found in " + path);

  CsvLoadResult result;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != label_idx) result.feature_names.push_back(header[i]);
  result.data.n_features = result.feature_names.size();

  std::size_t max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw IngestError(path + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    bool missing = false;
    for (const auto &f : fields)
      if (is_missing(f)) missing = true;
    if (missing) {
      ++result.skipped_rows;
      continue;
    }
    std::vector<double> row;
    row.reserve(result.data.n_features);
    std::size_t label = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        if (i == label_idx) {
          const long v = std::stol(fields[i]);
          if (v < 0) throw IngestError("negative label");
          label = static_cast<std::size_t>(v);
        } else {
          row.push_back(std::stod(fields[i]));
        }
      } catch (const std::exception &) {
        throw IngestError(path + ":" + std::to_string(line_no) +
                          ": non-numeric value '" + fields[i] + "'");
      }
    }
    result.data.push_row(row, label);
    max_label = std::max(max_label, label);
  }
  if (result.data.n_samples == 0)
    throw IngestError("no usable rows in " + path);
  result.data.n_classes = max_label + 1;

  const std::size_t d = result.data.n_features;
  result.stats.mean.assign(d, 0.0);
  result.stats.stddev.assign(d, 0.0);
  const double n = static_cast<double>(result.data.n_samples);
  for (std::size_t s = 0; s < result.data.n_samples; ++s)
    for (std::size_t j = 0; j < d; ++j)
      result.stats.mean[j] += result.data.row(s)[j];
  for (std::size_t j = 0; j < d; ++j) result.stats.mean[j] /= n;
  for (std::size_t s = 0; s < result.data.n_samples; ++s)
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = result.data.row(s)[j] - result.stats.mean[j];
      result.stats.stddev[j] += dv * dv;
    }
  for (std::size_t j = 0; j < d; ++j)
    result.stats.stddev[j] = std::sqrt(result.stats.stddev[j] / n);

  if (normalization == Normalization::zscore)
    apply_normalization(result.data, result.stats);
  return result;
}

void apply_normalization(Dataset &data, const NormStats &stats) {
  if (stats.mean.size() != data.n_features)
    throw ArgumentError("normalization stats width mismatch");
  for (std::size_t s = 0; s < data.n_samples; ++s) {
    double *row = data.features.data() + s * data.n_features;
    for (std::size_t j = 0; j < data.n_features; ++j)
      row[j] = stats.stddev[j] == 0.0
                   ? 0.0
                   : (row[j] - stats.mean[j]) / stats.stddev[j];
  }
}

void save_csv(const Dataset &data, const std::vector<std::string> &feature_names,
              const std::string &label_column, const std::string &path) {
  if (feature_names.size() != data.n_features)
    throw ArgumentError("feature name count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  for (const auto &name : feature_names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t s = 0; s < data.n_samples; ++s) {
    for (std::size_t j = 0; j < data.n_features; ++j)
      out << format_double(data.row(s)[j]) << ',';
    out << data.labels[s] << '\n';
  }
  if (!out) throw IngestError("write failed: " + path);
}

namespace {

Dataset take_rows(const Dataset &data, const std::vector<std::size_t> &rows) {
  Dataset out;
  out.n_features = data.n_features;
  out.n_classes = data.n_classes;
  for (std::size_t s : rows) {
    out.features.insert(out.features.end(), data.row(s),
                        data.row(s) + data.n_features);
    out.labels.push_back(data.labels[s]);
    ++out.n_samples;
  }
  return out;
}

/// Appends the synthetic bias column: class-1 rows get value 1 with the given
/// fraction, class-0 rows with the complementary fraction. Which rows get
/// which value is a seeded shuffle, but the per-class counts are exact.
void inject_bias_column(Dataset &data, double fraction_value1_class1,
                        Xoshiro256 &rng) {
  std::vector<double> column(data.n_samples, 0.0);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t s = 0; s < data.n_samples; ++s)
      if (data.labels[s] == cls) members.push_back(s);
    const double fraction =
        cls == 1 ? fraction_value1_class1 : 1.0 - fraction_value1_class1;
    const auto ones = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(members.size())));
    fisher_yates(members, rng);
    for (std::size_t i = 0; i < ones && i < members.size(); ++i)
      column[members[i]] = 1.0;
  }
  std::vector<double> features;
  features.reserve(data.n_samples * (data.n_features + 1));
  for (std::size_t s = 0; s < data.n_samples; ++s) {
    features.insert(features.end(), data.row(s), data.row(s) + data.n_features);
    features.push_back(column[s]);
  }
  data.features = std::move(features);
  ++data.n_features;
}

}  // namespace

PartitionResult partition(const Dataset &data, const PartitionPlan &plan) {
  validate_dataset(data);
  if (plan.hosts.empty()) throw ConfigError("partition plan has no hosts");

  Xoshiro256 rng(plan.seed);
  PartitionResult result;

  if (plan.scheme == PartitionScheme::size_split) {
    auto order = shuffled_indices(data.n_samples, rng);
    // test rows come off the front, per class
    std::vector<std::size_t> test_rows;
    if (!plan.test_per_class_counts.empty()) {
      std::vector<std::size_t> want = plan.test_per_class_counts;
      want.resize(data.n_classes, 0);
      std::vector<std::size_t> remaining;
      for (std::size_t s : order) {
        const std::size_t cls = data.labels[s];
        if (want[cls] > 0) {
          test_rows.push_back(s);
          --want[cls];
        } else {
          remaining.push_back(s);
        }
      }
      for (std::size_t cls = 0; cls < want.size(); ++cls)
        if (want[cls] > 0)
          throw ConfigError("test set short " + std::to_string(want[cls]) +
                            " samples of class " + std::to_string(cls));
      order = std::move(remaining);
    }
    double fraction_sum = 0.0;
    for (const auto &host : plan.hosts) fraction_sum += host.fraction;
    if (fraction_sum > 1.0 + 1e-9)
      throw ConfigError("size_split fractions sum to more than 1");
    std::size_t cursor = 0;
    for (const auto &host : plan.hosts) {
      const auto count = static_cast<std::size_t>(
          std::llround(host.fraction * static_cast<double>(order.size())));
      const std::size_t end = std::min(order.size(), cursor + count);
      std::vector<std::size_t> rows(order.begin() + cursor, order.begin() + end);
      if (rows.empty())
        throw ConfigError("host '" + host.host_id + "' would receive no samples");
      result.host_data.push_back(take_rows(data, rows));
      cursor = end;
    }
    result.discarded = order.size() - cursor;
    result.test_data = take_rows(data, test_rows);
    return result;
  }

  // class_skew and injected_feature_bias: explicit per-class counts.
  std::vector<std::vector<std::size_t>> pools(data.n_classes);
  for (std::size_t s = 0; s < data.n_samples; ++s)
    pools[data.labels[s]].push_back(s);
  for (auto &pool : pools) fisher_yates(pool, rng);
  std::vector<std::size_t> cursor(data.n_classes, 0);

  auto draw = [&](const std::vector<std::size_t> &counts,
                  const std::string &who) {
    std::vector<std::size_t> rows;
    for (std::size_t cls = 0; cls < counts.size(); ++cls) {
      if (cls >= data.n_classes) {
        if (counts[cls] > 0)
          throw ConfigError(who + " requests class " + std::to_string(cls) +
                            " which the data does not contain");
        continue;
      }
      const std::size_t available = pools[cls].size() - cursor[cls];
      if (counts[cls] > available)
        throw ConfigError(who + " short " +
                          std::to_string(counts[cls] - available) +
                          " samples of class " + std::to_string(cls));
      for (std::size_t i = 0; i < counts[cls]; ++i)
        rows.push_back(pools[cls][cursor[cls]++]);
    }
    if (rows.empty()) throw ConfigError(who + " would receive no samples");
    return rows;
  };

  std::vector<Dataset> host_sets;
  for (const auto &host : plan.hosts)
    host_sets.push_back(
        take_rows(data, draw(host.per_class_counts, "host '" + host.host_id + "'")));
  Dataset test_set;
  if (!plan.test_per_class_counts.empty())
    test_set = take_rows(data, draw(plan.test_per_class_counts, "test set"));
  else {
    test_set.n_features = data.n_features;
    test_set.n_classes = data.n_classes;
  }

  if (plan.scheme == PartitionScheme::injected_feature_bias) {
    for (std::size_t h = 0; h < host_sets.size(); ++h) {
      const double fraction = plan.hosts[h].bias
                                  ? plan.hosts[h].bias->positive_class_fraction_value1
                                  : 0.5;
      inject_bias_column(host_sets[h], fraction, rng);
    }
    if (test_set.n_samples > 0) {
      const double fraction =
          plan.test_bias ? plan.test_bias->positive_class_fraction_value1 : 0.5;
      inject_bias_column(test_set, fraction, rng);
    } else {
      ++test_set.n_features;
    }
  }

  std::size_t used = test_set.n_samples;
  for (const auto &host : host_sets) used += host.n_samples;
  result.discarded = data.n_samples - used;
  result.host_data = std::move(host_sets);
  result.test_data = std::move(test_set);
  return result;
}

Dataset synth_gaussian_blobs(std::size_t n_per_class, std::size_t n_features,
                             double class_separation, std::uint64_t seed) {
  if (n_per_class == 0) throw ArgumentError("n_per_class must be positive");
  if (n_features == 0) throw ArgumentError("n_features must be positive");
  Xoshiro256 rng(seed);
  const double offset =
      class_separation / std::sqrt(static_cast<double>(n_features));

  auto gaussian = [&rng]() {
    // Box-Muller; u1 in (0,1] to keep the log finite.
    const double u1 = 1.0 - rng.next_double();
    const double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };

  Dataset out;
  out.n_features = n_features;
  out.n_classes = 2;
  std::vector<double> row(n_features);
  for (std::size_t cls = 0; cls < 2; ++cls)
    for (std::size_t s = 0; s < n_per_class; ++s) {
      for (std::size_t j = 0; j < n_features; ++j)
        row[j] = gaussian() + (cls == 1 ? offset : 0.0);
      out.push_row(row, cls);
    }
  return out;
}

Dataset merge_datasets(const std::vector<Dataset> &parts) {
  if (parts.empty()) throw ArgumentError("nothing to merge");
  Dataset out;
  out.n_features = parts.front().n_features;
  out.n_classes = parts.front().n_classes;
  for (const auto &part : parts) {
    if (part.n_features != out.n_features)
      throw ArgumentError("merge: feature width mismatch");
    out.n_classes = std::max(out.n_classes, part.n_classes);
    out.features.insert(out.features.end(), part.features.begin(),
                        part.features.end());
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    out.n_samples += part.n_samples;
  }
  return out;
}

}  // namespace coln
