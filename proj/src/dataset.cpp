#include "subsage/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subsage/error.hpp"
#include "subsage/format.hpp"
#include "subsage/random.hpp"

namespace subsage {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous:
      return "continuous";
    case FeatureKind::ordinal_count:
      return "ordinal-count";
    case FeatureKind::binary_count:
      return "binary-count";
  }
  return "continuous";
}

FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "continuous") return FeatureKind::continuous;
  if (name == "ordinal-count") return FeatureKind::ordinal_count;
  if (name == "binary-count") return FeatureKind::binary_count;
  throw DataError("unknown feature kind '" + std::string(name) + "'");
}

namespace {

bool is_count(double v) { return v >= 0.0 && std::floor(v) == v; }

}  // namespace

Dataset::Dataset(std::vector<std::string> feature_names,
                 std::vector<FeatureKind> kinds,
                 std::vector<std::vector<double>> columns,
                 std::vector<double> response)
    : feature_names_(std::move(feature_names)),
      kinds_(std::move(kinds)),
      columns_(std::move(columns)),
      response_(std::move(response)) {
  if (feature_names_.size() != columns_.size() ||
      kinds_.size() != columns_.size()) {
    throw DataError("feature names, kinds and columns differ in count");
  }
  const std::size_t n = response_.size();
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].size() != n) {
      throw DataError("column '" + feature_names_[j] + "' has " +
                      std::to_string(columns_[j].size()) + " rows, expected " +
                      std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = columns_[j][i];
      if (!std::isfinite(v)) {
        throw DataError("non-finite value in column '" + feature_names_[j] +
                        "' at row " + std::to_string(i));
      }
      if (kinds_[j] != FeatureKind::continuous && !is_count(v)) {
        throw DataError("column '" + feature_names_[j] + "' is " +
                        std::string(to_string(kinds_[j])) +
                        " but holds non-count value " + format_double(v));
      }
    }
  }
  for (double v : response_) {
    if (!std::isfinite(v)) throw DataError("non-finite response value");
  }
}

std::size_t Dataset::feature_index(std::string_view name) const {
  const auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
  if (it == feature_names_.end()) {
    throw DataError("unknown feature '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - feature_names_.begin());
}

std::vector<double> Dataset::row(std::size_t i) const {
  std::vector<double> out(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) out[j] = columns_[j][i];
  return out;
}

bool Dataset::has_binary_response() const {
  return std::all_of(response_.begin(), response_.end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

Dataset Dataset::select_rows(std::span<const std::size_t> indices) const {
  const std::size_t n = n_rows();
  std::vector<std::vector<double>> columns(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    auto& col = columns[j];
    col.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= n) {
        throw ArgumentError("row index " + std::to_string(i) +
                            " out of range for " + std::to_string(n) + " rows");
      }
      col.push_back(columns_[j][i]);
    }
  }
  std::vector<double> response;
  response.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= n) {
      throw ArgumentError("row index " + std::to_string(i) +
                          " out of range for " + std::to_string(n) + " rows");
    }
    response.push_back(response_[i]);
  }
  Dataset out;
  out.feature_names_ = feature_names_;
  out.kinds_ = kinds_;
  out.columns_ = std::move(columns);
  out.response_ = std::move(response);
  return out;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  if (a.feature_names_ != b.feature_names_ || a.kinds_ != b.kinds_) {
    throw DataError("cannot concatenate datasets with different schemas");
  }
  Dataset out = a;
  for (std::size_t j = 0; j < out.columns_.size(); ++j) {
    out.columns_[j].insert(out.columns_[j].end(), b.columns_[j].begin(),
                           b.columns_[j].end());
  }
  out.response_.insert(out.response_.end(), b.response_.begin(),
                       b.response_.end());
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return std::string(s);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw DataError("'" + path.string() + "' is empty");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.push_back(trim(f));

  const auto response_it =
      std::find(header.begin(), header.end(), schema.response);
  if (response_it == header.end()) {
    throw DataError("missing response column '" + schema.response + "' in '" +
                    path.string() + "'");
  }
  const std::size_t response_col =
      static_cast<std::size_t>(response_it - header.begin());
  for (const auto& [name, kind] : schema.kinds) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw DataError("missing column '" + name + "' declared in schema");
    }
  }

  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == response_col) continue;
    names.push_back(header[c]);
    const auto it = schema.kinds.find(header[c]);
    kinds.push_back(it == schema.kinds.end() ? FeatureKind::continuous
                                             : it->second);
  }

  std::vector<std::vector<double>> columns(names.size());
  std::vector<double> response;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    std::size_t feature = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        throw DataError("parse error at row " + std::to_string(line_no) +
                        ", column \"" + header[c] + "\": '" +
                        std::string(fields[c]) + "'");
      }
      if (c == response_col) {
        response.push_back(v);
      } else {
        if (kinds[feature] != FeatureKind::continuous && !is_count(v)) {
          throw DataError("parse error at row " + std::to_string(line_no) +
                          ", column \"" + header[c] +
                          "\": expected a non-negative integer");
        }
        columns[feature++].push_back(v);
      }
    }
  }
  if (response.empty()) {
    throw DataError("'" + path.string() + "' has a header but no rows");
  }
  return Dataset(std::move(names), std::move(kinds), std::move(columns),
                 std::move(response));
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               std::string_view response_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  std::string buffer;
  for (const auto& name : data.feature_names()) {
    buffer += name;
    buffer += ',';
  }
  buffer += response_name;
  buffer += '\n';
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < data.n_cols(); ++j) {
      buffer += format_double(data.value(i, j));
      buffer += ',';
    }
    buffer += format_double(data.response()[i]);
    buffer += '\n';
    if (buffer.size() > (1u << 20)) {
      out << buffer;
      buffer.clear();
    }
  }
  out << buffer;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n_rows,
                                                      SplitFractions fractions,
                                                      std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.valid, fractions.test};
  if (f[0] <= 0.0 || f[1] <= 0.0 || f[2] <= 0.0 ||
      std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-12) {
    throw ArgumentError("split fractions must be positive and sum to 1");
  }
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, 0x5b17);
  for (std::size_t i = n_rows; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  std::size_t sizes[3];
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    // Snap products such as 0.29 * 100 = 28.999... to the intended integer.
    sizes[p] = static_cast<std::size_t>(
        std::floor(f[p] * static_cast<double>(n_rows) + 1e-9));
    assigned += sizes[p];
  }
  for (int p = 0; assigned < n_rows; p = (p + 1) % 3) {
    ++sizes[p];
    ++assigned;
  }

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t offset = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p].assign(order.begin() + static_cast<std::ptrdiff_t>(offset),
                    order.begin() +
                        static_cast<std::ptrdiff_t>(offset + sizes[p]));
    std::sort(parts[p].begin(), parts[p].end());
    offset += sizes[p];
  }
  return parts;
}

DataSplit split(const Dataset& data, SplitFractions fractions,
                std::uint64_t seed) {
  const auto parts = split_indices(data.n_rows(), fractions, seed);
  return {data.select_rows(parts[0]), data.select_rows(parts[1]),
          data.select_rows(parts[2])};
}

ResampleIndex ResampleIndex::draw(std::size_t n_rows, std::uint64_t seed,
                                  std::uint64_t iteration) {
  ResampleIndex idx;
  idx.seed = seed;
  idx.iteration = iteration;
  idx.indices.resize(n_rows);
  Rng rng(seed, iteration);
  for (auto& i : idx.indices) i = static_cast<std::size_t>(rng.below(n_rows));
  return idx;
}

Dataset resample(const Dataset& data, const ResampleIndex& idx) {
  if (idx.indices.size() != data.n_rows()) {
    throw ArgumentError("resample index has " +
                        std::to_string(idx.indices.size()) +
                        " entries, dataset has " +
                        std::to_string(data.n_rows()) + " rows");
  }
  return data.select_rows(idx.indices);
}

double empirical_prob_below(std::span<const double> column, double threshold) {
  if (column.empty()) throw ArgumentError("empty column");
  std::size_t below = 0;
  for (double v : column) below += v < threshold ? 1 : 0;
  return static_cast<double>(below) / static_cast<double>(column.size());
}

}  // namespace subsage
