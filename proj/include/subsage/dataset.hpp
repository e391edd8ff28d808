#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace subsage {

enum class FeatureKind { continuous, ordinal_count, binary_count };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view name);

// Column-major feature matrix with a response vector. Immutable once built.
class Dataset {
 public:
  Dataset() = default;

  // Validates shapes and the value constraints of each FeatureKind.
  Dataset(std::vector<std::string> feature_names,
          std::vector<FeatureKind> kinds,
          std::vector<std::vector<double>> columns,
          std::vector<double> response);

  std::size_t n_rows() const { return response_.size(); }
  std::size_t n_cols() const { return columns_.size(); }

  std::span<const double> column(std::size_t j) const { return columns_[j]; }
  double value(std::size_t row, std::size_t col) const {
    return columns_[col][row];
  }
  std::span<const double> response() const { return response_; }
  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }
  const std::vector<FeatureKind>& kinds() const { return kinds_; }

  // Index of a feature by name; throws DataError if absent.
  std::size_t feature_index(std::string_view name) const;

  std::vector<double> row(std::size_t i) const;

  // True when every response value is 0 or 1.
  bool has_binary_response() const;

  // Rows selected by `indices`, in that order (duplicates allowed).
  Dataset select_rows(std::span<const std::size_t> indices) const;

  // Row-wise concatenation; schemas must agree.
  static Dataset concat(const Dataset& a, const Dataset& b);

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<std::string> feature_names_;
  std::vector<FeatureKind> kinds_;
  std::vector<std::vector<double>> columns_;
  std::vector<double> response_;
};

struct CsvSchema {
  std::string response = "y";
  // Kinds by column name; unlisted columns are continuous.
  std::map<std::string, FeatureKind> kinds;
};

Dataset load_csv(const std::filesystem::path& path,
                 const CsvSchema& schema = {});

// Writes features in column order followed by the response column,
// using shortest round-trip decimal formatting.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               std::string_view response_name = "y");

struct SplitFractions {
  double train = 0.5;
  double valid = 0.3;
  double test = 0.2;
};

struct DataSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// Row indices of a seeded three-way partition: shuffled row ids are cut at
// floor(fraction * N); leftover rows go to the earliest parts.
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n_rows,
                                                      SplitFractions fractions,
                                                      std::uint64_t seed);

DataSplit split(const Dataset& data, SplitFractions fractions,
                std::uint64_t seed);

// Bootstrap row draw, fully determined by (seed, iteration).
struct ResampleIndex {
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;

  static ResampleIndex draw(std::size_t n_rows, std::uint64_t seed,
                            std::uint64_t iteration);
};

Dataset resample(const Dataset& data, const ResampleIndex& idx);

// Fraction of entries strictly below `threshold`.
double empirical_prob_below(std::span<const double> column, double threshold);

}  // namespace subsage
