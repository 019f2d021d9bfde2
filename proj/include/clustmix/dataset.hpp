#pragma once

// Dataset ingestion and preparation: CSV load/store, min-max scaling to the
// unit hypercube, label encoding, seeded splitting, and toy-data generators.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustmix/errors.hpp"
#include "clustmix/rng.hpp"

namespace clustmix {

struct Dataset {
  Eigen::MatrixXd features;  // T x D, rows are records
  std::vector<int> labels;   // length T, values in [0, class_count)
  int class_count = 0;

  Eigen::Index row_count() const { return features.rows(); }
  Eigen::Index feature_count() const { return features.cols(); }
};

// Original CSV schema, kept so outputs can mirror the input byte layout:
// column order (label included at its original position) and the string
// form of each class.
struct ColumnMeta {
  std::vector<std::string> column_names;  // original order, label included
  int label_index = -1;
  std::vector<std::string> class_names;   // index = encoded label

  std::string label_name() const { return column_names.at(label_index); }
};

struct ScalingParams {
  Eigen::VectorXd min;  // per feature
  Eigen::VectorXd max;
};

struct SplitSpec {
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
};

namespace csv {

// RFC-4180-style row reader: quoted fields, doubled-quote escapes, CRLF.
inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

// Shortest round-trip decimal form; identical on every run.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace csv

// Loads a header-ed CSV; the named column carries class labels, every other
// column must be numeric. Labels are encoded 0..C-1 in lexicographic order
// of their string form so runs are comparable.
inline std::pair<Dataset, ColumnMeta> load_csv(const std::string& path,
                                               const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  ColumnMeta meta;
  meta.column_names = csv::split_row(line);
  for (std::size_t j = 0; j < meta.column_names.size(); ++j) {
    meta.column_names[j] = csv::trim(meta.column_names[j]);
    if (meta.column_names[j] == label_column) meta.label_index = static_cast<int>(j);
  }
  if (meta.label_index < 0) {
    throw DataError("label column \"" + label_column + "\" not found in " + path);
  }
  const std::size_t n_cols = meta.column_names.size();
  const std::size_t n_features = n_cols - 1;

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++data_row;
    const auto fields = csv::split_row(line);
    if (fields.size() != n_cols) {
      std::ostringstream msg;
      msg << path << ": row " << data_row << " has " << fields.size()
          << " fields, expected " << n_cols;
      throw DataError(msg.str());
    }
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (static_cast<int>(j) == meta.label_index) {
        raw_labels.push_back(csv::trim(fields[j]));
      } else {
        const auto v = csv::parse_double(fields[j]);
        if (!v) {
          std::ostringstream msg;
          msg << path << ": non-numeric value \"" << fields[j] << "\" at row "
              << data_row << ", column \"" << meta.column_names[j] << "\"";
          throw DataError(msg.str());
        }
        values.push_back(*v);
      }
    }
  }
  if (data_row == 0) throw DataError("no data rows in " + path);

  std::vector<std::string> distinct(raw_labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  meta.class_names = distinct;
  std::map<std::string, int> code;
  for (std::size_t c = 0; c < distinct.size(); ++c) code[distinct[c]] = static_cast<int>(c);

  Dataset d;
  d.class_count = static_cast<int>(distinct.size());
  d.features.resize(static_cast<Eigen::Index>(data_row),
                    static_cast<Eigen::Index>(n_features));
  d.labels.reserve(data_row);
  for (std::size_t i = 0; i < data_row; ++i) {
    for (std::size_t j = 0; j < n_features; ++j) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * n_features + j];
    }
    d.labels.push_back(code[raw_labels[i]]);
  }
  return {std::move(d), std::move(meta)};
}

// Writes the dataset back out with the original column order, the label at
// its original position as its string class name, and shortest round-trip
// float formatting (byte-identical across runs).
inline void write_csv(const std::string& path, const Dataset& d,
                      const ColumnMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t j = 0; j < meta.column_names.size(); ++j) {
    if (j) out << ',';
    out << csv::quote_if_needed(meta.column_names[j]);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < d.row_count(); ++i) {
    Eigen::Index feature = 0;
    for (std::size_t j = 0; j < meta.column_names.size(); ++j) {
      if (j) out << ',';
      if (static_cast<int>(j) == meta.label_index) {
        out << csv::quote_if_needed(meta.class_names.at(d.labels[i]));
      } else {
        out << csv::format_double(d.features(i, feature++));
      }
    }
    out << '\n';
  }
}

inline ScalingParams fit_scaler(const Dataset& d) {
  if (d.row_count() < 1) throw DataError("fit_scaler: empty dataset");
  ScalingParams s;
  s.min = d.features.colwise().minCoeff();
  s.max = d.features.colwise().maxCoeff();
  return s;
}

// (x - min) / (max - min), clamped to [0, 1]; constant columns map to 0.5 so
// values stay inside the unit hypercube without dropping the feature.
inline Dataset apply_scaler(const Dataset& d, const ScalingParams& s) {
  if (d.feature_count() != s.min.size()) {
    throw DataError("apply_scaler: dimension mismatch");
  }
  Dataset out = d;
  for (Eigen::Index j = 0; j < d.feature_count(); ++j) {
    const double lo = s.min(j), span = s.max(j) - s.min(j);
    for (Eigen::Index i = 0; i < d.row_count(); ++i) {
      out.features(i, j) =
          span > 0.0 ? std::clamp((d.features(i, j) - lo) / span, 0.0, 1.0)
                     : 0.5;
    }
  }
  return out;
}

inline Dataset invert_scaler(const Dataset& d, const ScalingParams& s) {
  if (d.feature_count() != s.min.size()) {
    throw DataError("invert_scaler: dimension mismatch");
  }
  Dataset out = d;
  for (Eigen::Index j = 0; j < d.feature_count(); ++j) {
    const double lo = s.min(j), span = s.max(j) - s.min(j);
    for (Eigen::Index i = 0; i < d.row_count(); ++i) {
      out.features(i, j) = span > 0.0 ? d.features(i, j) * span + lo : lo;
    }
  }
  return out;
}

namespace detail {

inline Dataset take_rows(const Dataset& d, const std::vector<int>& rows) {
  Dataset out;
  out.class_count = d.class_count;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), d.feature_count());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = d.features.row(rows[i]);
    out.labels.push_back(d.labels[rows[i]]);
  }
  return out;
}

}  // namespace detail

// Seeded train/test partition. Stratified by label when every class has at
// least two members; per-class test counts follow largest-remainder
// apportionment of round(T * fraction), bounded to [1, T-1].
inline std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
  const int t = static_cast<int>(d.row_count());
  if (t < 2) throw DataError("split: need at least two rows");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("split: test_fraction must be in (0, 1)");
  }
  const int n_test = std::clamp(
      static_cast<int>(std::llround(t * spec.test_fraction)), 1, t - 1);

  std::vector<std::vector<int>> by_class(d.class_count);
  for (int i = 0; i < t; ++i) by_class[d.labels[i]].push_back(i);
  const bool stratify =
      std::all_of(by_class.begin(), by_class.end(),
                  [](const auto& v) { return v.size() >= 2; });

  Rng rng(mix_seed(spec.seed, 0x5711ULL));
  std::vector<int> test_rows, train_rows;
  if (stratify) {
    // Quotas by largest remainder; ties broken by smaller class index.
    std::vector<int> take(d.class_count, 0);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int c = 0; c < d.class_count; ++c) {
      const double quota = by_class[c].size() * spec.test_fraction;
      take[c] = static_cast<int>(quota);
      assigned += take[c];
      remainders.push_back({quota - take[c], c});
    }
    std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < n_test && k < remainders.size(); ++k) {
      const int c = remainders[k].second;
      if (take[c] < static_cast<int>(by_class[c].size())) {
        ++take[c];
        ++assigned;
      }
    }
    // Over-assignment can only come from rounding; trim from largest classes.
    for (int c = d.class_count - 1; assigned > n_test && c >= 0; --c) {
      while (take[c] > 0 && assigned > n_test) {
        --take[c];
        --assigned;
      }
    }
    for (int c = 0; c < d.class_count; ++c) {
      auto rows = by_class[c];
      rng.shuffle(rows);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        (static_cast<int>(i) < take[c] ? test_rows : train_rows).push_back(rows[i]);
      }
    }
  } else {
    std::vector<int> rows(t);
    for (int i = 0; i < t; ++i) rows[i] = i;
    rng.shuffle(rows);
    for (int i = 0; i < t; ++i) {
      (i < n_test ? test_rows : train_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {detail::take_rows(d, train_rows), detail::take_rows(d, test_rows)};
}

enum class ToyKind { kBlobs, kMoons, kSkewedMultimodal };

inline ToyKind toy_kind_from_string(const std::string& s) {
  if (s == "blobs") return ToyKind::kBlobs;
  if (s == "moons") return ToyKind::kMoons;
  if (s == "skewed-multimodal") return ToyKind::kSkewedMultimodal;
  throw ConfigError("unknown toy kind: \"" + s + "\"");
}

struct ToyParams {
  // blobs
  double blob_center0_x = 0.0, blob_center0_y = 0.0;
  double blob_center1_x = 1.0, blob_center1_y = 1.0;
  double blob_std = 0.08;
  // moons
  double moons_noise = 0.06;
  // skewed-multimodal
  int modes = 3;
  double skew_rate = 0.25;
  double mode_spread = 1.0;
};

// Seeded 2-D toy generators mirroring the usual synthetic benchmarks:
// separable blobs, interleaved half-moons, and a skewed multi-mode cloud
// (one class per mode).
inline Dataset make_toy(ToyKind kind, int n, std::uint64_t seed,
                        const ToyParams& params = {}) {
  if (n < 4) throw ConfigError("make_toy: need n >= 4");
  Rng rng(mix_seed(seed, 0x70bdaULL));
  Dataset d;
  d.features.resize(n, 2);

  switch (kind) {
    case ToyKind::kBlobs: {
      d.class_count = 2;
      const int n0 = (n + 1) / 2;
      for (int i = 0; i < n; ++i) {
        const bool first = i < n0;
        const double cx = first ? params.blob_center0_x : params.blob_center1_x;
        const double cy = first ? params.blob_center0_y : params.blob_center1_y;
        d.features(i, 0) = cx + params.blob_std * rng.normal();
        d.features(i, 1) = cy + params.blob_std * rng.normal();
        d.labels.push_back(first ? 0 : 1);
      }
      break;
    }
    case ToyKind::kMoons: {
      d.class_count = 2;
      const int n0 = (n + 1) / 2;
      const int n1 = n - n0;
      for (int i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? M_PI * i / (n0 - 1) : 0.0;
        d.features(i, 0) = std::cos(t) + params.moons_noise * rng.normal();
        d.features(i, 1) = std::sin(t) + params.moons_noise * rng.normal();
        d.labels.push_back(0);
      }
      for (int i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? M_PI * i / (n1 - 1) : 0.0;
        d.features(n0 + i, 0) = 1.0 - std::cos(t) + params.moons_noise * rng.normal();
        d.features(n0 + i, 1) = 0.5 - std::sin(t) + params.moons_noise * rng.normal();
        d.labels.push_back(1);
      }
      break;
    }
    case ToyKind::kSkewedMultimodal: {
      const int m = std::max(1, params.modes);
      d.class_count = m;
      for (int i = 0; i < n; ++i) {
        const int c = i % m;
        const double angle = 2.0 * M_PI * c / m;
        const double cx = params.mode_spread * std::cos(angle);
        const double cy = params.mode_spread * std::sin(angle);
        // Exponential offsets give each mode a heavy one-sided tail.
        d.features(i, 0) = cx + params.skew_rate * rng.exponential() * std::cos(angle)
                           + 0.05 * rng.normal();
        d.features(i, 1) = cy + params.skew_rate * rng.exponential() * std::sin(angle)
                           + 0.05 * rng.normal();
        d.labels.push_back(c);
      }
      break;
    }
  }
  return d;
}

inline ColumnMeta toy_column_meta(const Dataset& d) {
  ColumnMeta meta;
  for (Eigen::Index j = 0; j < d.feature_count(); ++j) {
    meta.column_names.push_back("x" + std::to_string(j));
  }
  meta.column_names.push_back("label");
  meta.label_index = static_cast<int>(d.feature_count());
  for (int c = 0; c < d.class_count; ++c) {
    meta.class_names.push_back(std::to_string(c));
  }
  return meta;
}

}  // namespace clustmix
