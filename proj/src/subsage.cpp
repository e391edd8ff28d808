#include "subsage/subsage.hpp"

#include <algorithm>
#include <cmath>

#include "subsage/detail/expect.hpp"
#include "subsage/error.hpp"

namespace subsage {

std::string_view to_string(LossKind loss) {
  return loss == LossKind::squared_error ? "squared_error"
                                         : "binary_cross_entropy";
}

LossKind loss_from_string(std::string_view name) {
  if (name == "squared_error" || name == "squared" || name == "mse") {
    return LossKind::squared_error;
  }
  if (name == "binary_cross_entropy" || name == "cross_entropy" ||
      name == "logloss") {
    return LossKind::binary_cross_entropy;
  }
  throw ArgumentError("unknown loss '" + std::string(name) + "'");
}

std::size_t Subset::size(int n_features) const {
  switch (kind) {
    case Kind::empty:
      return 0;
    case Kind::singleton:
      return 1;
    case Kind::all_but_k:
      return static_cast<std::size_t>(n_features - 1);
  }
  return 0;
}

std::vector<int> Subset::features(int n_features, int k) const {
  switch (kind) {
    case Kind::empty:
      return {};
    case Kind::singleton:
      return {member};
    case Kind::all_but_k: {
      std::vector<int> out;
      out.reserve(static_cast<std::size_t>(n_features - 1));
      for (int m = 0; m < n_features; ++m) {
        if (m != k) out.push_back(m);
      }
      return out;
    }
  }
  return {};
}

std::string subset_label(const Subset& s, int k,
                         const std::vector<std::string>& names) {
  auto name = [&](int f) {
    return static_cast<std::size_t>(f) < names.size()
               ? names[static_cast<std::size_t>(f)]
               : std::to_string(f);
  };
  switch (s.kind) {
    case Subset::Kind::empty:
      return "{}";
    case Subset::Kind::singleton:
      return "{" + name(s.member) + "}";
    case Subset::Kind::all_but_k:
      return "all\\" + name(k);
  }
  return "";
}

SubsetFamily build_subset_family(int n_features, int k) {
  if (n_features < 3) {
    throw ArgumentError(
        "sub-SAGE needs at least 3 features: with fewer, the complement of k "
        "coincides with a singleton");
  }
  if (k < 0 || k >= n_features) {
    throw ArgumentError("feature index " + std::to_string(k) + " out of range");
  }
  SubsetFamily family;
  family.n_features = n_features;
  family.feature = k;
  const double m1 = static_cast<double>(n_features - 1);
  family.subsets.push_back(Subset::empty());
  family.weights.push_back(1.0 / 3.0);
  for (int m = 0; m < n_features; ++m) {
    if (m == k) continue;
    family.subsets.push_back(Subset::singleton(m));
    family.weights.push_back(1.0 / (3.0 * m1));
  }
  family.subsets.push_back(Subset::all_but(k));
  family.weights.push_back(1.0 / 3.0);
  return family;
}

double combine_deltas(const SubsetFamily& family,
                      const std::vector<double>& deltas) {
  if (deltas.size() != family.weights.size()) {
    throw ArgumentError("one delta per subset required");
  }
  double psi = 0.0;
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    psi += family.weights[s] * deltas[s];
  }
  return psi;
}

namespace {

void check_inputs(const Ensemble& ensemble, int k, const Dataset& test,
                  LossKind loss) {
  if (!ensemble.annotated()) {
    throw ModelError("ensemble has no branch probabilities; annotate it first");
  }
  if (k < 0 || k >= ensemble.n_features()) {
    throw ArgumentError("feature index " + std::to_string(k) + " out of range");
  }
  if (test.n_cols() != static_cast<std::size_t>(ensemble.n_features())) {
    throw DataError("test data has " + std::to_string(test.n_cols()) +
                    " features, model expects " +
                    std::to_string(ensemble.n_features()));
  }
  if (test.n_rows() == 0) throw DataError("empty test data");
  if (loss == LossKind::squared_error &&
      ensemble.objective() != Objective::regression) {
    throw ArgumentError("squared-error loss needs a regression model");
  }
  if (loss == LossKind::binary_cross_entropy) {
    if (ensemble.objective() != Objective::binary_logistic) {
      throw ArgumentError("cross-entropy loss needs a binary-logistic model");
    }
    if (!test.has_binary_response()) {
      throw DataError("cross-entropy loss needs a 0/1 response");
    }
  }
}

void check_member(const Subset& s, int k, int n_features) {
  if (s.kind == Subset::Kind::singleton &&
      (s.member < 0 || s.member >= n_features || s.member == k)) {
    throw ArgumentError("subset is not a member of Q_k");
  }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Per-row sums for one coalition S: A over trees with k given S, B over the
// same trees given S ∪ {k}, C over the remaining trees plus base_score.
struct RowTerms {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
};

double delta_from_terms(LossKind loss, std::span<const double> y,
                        std::span<const double> a, std::span<const double> b,
                        std::span<const double> c) {
  const std::size_t n = y.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (loss == LossKind::squared_error) {
    // (y - A - C)^2 - (y - B - C)^2 = 2yΔ + A² - B² - 2CΔ, Δ = B - A.
    double cross_y = 0.0;
    double sq_a = 0.0;
    double sq_b = 0.0;
    double cross_c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = b[i] - a[i];
      cross_y += y[i] * d;
      sq_a += a[i] * a[i];
      sq_b += b[i] * b[i];
      cross_c += c[i] * d;
    }
    return 2.0 * inv_n * cross_y + inv_n * sq_a - inv_n * sq_b -
           2.0 * inv_n * cross_c;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += (1.0 - y[i]) * (a[i] - b[i]) + softplus(-a[i] - c[i]) -
           softplus(-b[i] - c[i]);
  }
  return inv_n * sum;
}

RowTerms direct_terms(const Ensemble& ensemble, int k, const Subset& s,
                      const Dataset& test) {
  const int m_count = ensemble.n_features();
  std::vector<bool> known(static_cast<std::size_t>(m_count), false);
  for (int f : s.features(m_count, k)) known[static_cast<std::size_t>(f)] = true;
  std::vector<bool> known_k = known;
  known_k[static_cast<std::size_t>(k)] = true;

  const std::size_t n = test.n_rows();
  RowTerms terms{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                 std::vector<double>(n, ensemble.base_score())};
  for (const Tree& tree : ensemble.trees()) {
    const bool has_k = tree.uses(k);
    for (std::size_t i = 0; i < n; ++i) {
      auto value = [&](int f) {
        return test.value(i, static_cast<std::size_t>(f));
      };
      const double v_s = detail::expect_from(
          tree, Tree::root(),
          [&](const Node& nd) {
            return static_cast<bool>(known[static_cast<std::size_t>(nd.feature)]);
          },
          value);
      if (!has_k) {
        terms.c[i] += v_s;
        continue;
      }
      terms.a[i] += v_s;
      terms.b[i] += detail::expect_from(
          tree, Tree::root(),
          [&](const Node& nd) {
            return static_cast<bool>(
                known_k[static_cast<std::size_t>(nd.feature)]);
          },
          value);
    }
  }
  return terms;
}

double delta_direct(const Ensemble& ensemble, int k, const Subset& s,
                    const Dataset& test, LossKind loss) {
  check_inputs(ensemble, k, test, loss);
  check_member(s, k, ensemble.n_features());
  const auto partition = trees_containing(ensemble, k);
  if (partition.containing.empty()) return 0.0;
  const RowTerms t = direct_terms(ensemble, k, s, test);
  return delta_from_terms(loss, test.response(), t.a, t.b, t.c);
}

}  // namespace

double delta_loss_squared(const Ensemble& ensemble, int k, const Subset& s,
                          const Dataset& test) {
  return delta_direct(ensemble, k, s, test, LossKind::squared_error);
}

double delta_loss_cross_entropy(const Ensemble& ensemble, int k,
                                const Subset& s, const Dataset& test) {
  return delta_direct(ensemble, k, s, test, LossKind::binary_cross_entropy);
}

namespace {

constexpr int kMaxPatternBits = 10;

double expect_pattern(const Tree& tree, const std::vector<int>& internal_of,
                      int pos, detail::LocalMask mask, unsigned pattern) {
  const Node& n = tree.node(pos);
  if (n.is_leaf) return n.leaf_value;
  if (((mask >> n.local) & 1u) != 0) {
    const bool left =
        ((pattern >> internal_of[static_cast<std::size_t>(pos)]) & 1u) != 0;
    return expect_pattern(tree, internal_of, left ? n.left : n.right, mask,
                          pattern);
  }
  return n.prob_left * expect_pattern(tree, internal_of, n.left, mask, pattern) +
         n.prob_right() *
             expect_pattern(tree, internal_of, n.right, mask, pattern);
}

detail::LocalMask local_bit(const Tree& tree, int f) {
  const auto& fs = tree.features();
  const auto pos = std::lower_bound(fs.begin(), fs.end(), f) - fs.begin();
  return detail::LocalMask{1} << pos;
}

detail::LocalMask full_mask(const Tree& tree) {
  const std::size_t f = tree.features().size();
  return f >= 64 ? ~detail::LocalMask{0} : (detail::LocalMask{1} << f) - 1;
}

// Adds scale * v_j(mask)(x_r) to out[r] for every selected row.
class RowAccumulator {
 public:
  RowAccumulator(const Ensemble& ensemble, const PreparedTest& prepared,
                 std::span<const std::size_t> rows)
      : ensemble_(ensemble), prepared_(prepared), rows_(rows) {}

  void add(std::size_t j, detail::LocalMask mask, std::vector<double>& out,
           double scale) {
    const Tree& tree = ensemble_.tree(j);
    const auto& cache = prepared_.tree(j);
    const std::size_t n = rows_.size();
    if (cache.n_internal >= 0) {
      table_.resize(std::size_t{1} << cache.n_internal);
      for (unsigned p = 0; p < table_.size(); ++p) {
        table_[p] = scale * expect_pattern(tree, cache.internal_of,
                                           Tree::root(), mask, p);
      }
      for (std::size_t r = 0; r < n; ++r) {
        out[r] += table_[cache.pattern[rows_[r]]];
      }
      return;
    }
    const Dataset& data = prepared_.data();
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t row = rows_[r];
      out[r] += scale * detail::expect_local(tree, mask, [&](int f) {
                  return data.value(row, static_cast<std::size_t>(f));
                });
    }
  }

 private:
  const Ensemble& ensemble_;
  const PreparedTest& prepared_;
  std::span<const std::size_t> rows_;
  std::vector<double> table_;
};

std::size_t total_nodes(const Ensemble& ensemble) {
  std::size_t total = 0;
  for (const Tree& tree : ensemble.trees()) total += tree.nodes().size();
  return total;
}

}  // namespace

PreparedTest::PreparedTest(const Ensemble& ensemble, const Dataset& test)
    : data_(test), node_total_(total_nodes(ensemble)) {
  if (test.n_cols() != static_cast<std::size_t>(ensemble.n_features())) {
    throw DataError("test data has " + std::to_string(test.n_cols()) +
                    " features, model expects " +
                    std::to_string(ensemble.n_features()));
  }
  const std::size_t n = test.n_rows();
  trees_.resize(ensemble.n_trees());
  for (std::size_t j = 0; j < ensemble.n_trees(); ++j) {
    const Tree& tree = ensemble.tree(j);
    auto& cache = trees_[j];
    cache.internal_of.assign(tree.nodes().size(), -1);
    int internal = 0;
    for (std::size_t pos = 0; pos < tree.nodes().size(); ++pos) {
      if (!tree.nodes()[pos].is_leaf) cache.internal_of[pos] = internal++;
    }
    if (internal > kMaxPatternBits) continue;
    cache.n_internal = internal;
    cache.pattern.assign(n, 0);
    for (std::size_t pos = 0; pos < tree.nodes().size(); ++pos) {
      const Node& node = tree.nodes()[pos];
      if (node.is_leaf) continue;
      const auto bit = static_cast<std::uint16_t>(1u << cache.internal_of[pos]);
      const auto column = test.column(static_cast<std::size_t>(node.feature));
      for (std::size_t i = 0; i < n; ++i) {
        if (column[i] < node.threshold) cache.pattern[i] |= bit;
      }
    }
  }
}

SubSageEstimate subsage_estimate(const Ensemble& ensemble, int k,
                                 const Dataset& test, LossKind loss) {
  check_inputs(ensemble, k, test, loss);
  const PreparedTest prepared(ensemble, test);
  std::vector<std::size_t> rows(test.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return subsage_estimate(ensemble, k, prepared, rows, loss);
}

SubSageEstimate subsage_estimate(const Ensemble& ensemble, int k,
                                 const PreparedTest& prepared,
                                 std::span<const std::size_t> rows,
                                 LossKind loss) {
  const Dataset& data = prepared.data();
  check_inputs(ensemble, k, data, loss);
  if (prepared.n_trees() != ensemble.n_trees() ||
      prepared.node_total_ != total_nodes(ensemble)) {
    throw ArgumentError("prepared test set belongs to a different model");
  }
  if (rows.empty()) throw DataError("no test rows selected");
  for (std::size_t r : rows) {
    if (r >= data.n_rows()) throw ArgumentError("row index out of range");
  }
  for (const Tree& tree : ensemble.trees()) {
    if (tree.features().size() > detail::kMaxLocalFeatures) {
      throw ModelError("tree splits on too many distinct features");
    }
  }

  const int m_count = ensemble.n_features();
  SubSageEstimate est;
  est.feature = k;
  est.family = build_subset_family(m_count, k);
  est.n_test = rows.size();
  est.per_subset_deltas.assign(est.family.subsets.size(), 0.0);

  const auto partition = trees_containing(ensemble, k);
  if (partition.containing.empty()) return est;

  const std::size_t n = rows.size();
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = data.response()[rows[r]];

  const auto& trees = ensemble.trees();
  std::vector<double> v_empty(trees.size());
  for (std::size_t j = 0; j < trees.size(); ++j) {
    v_empty[j] = detail::expect_local(trees[j], 0, [](int) { return 0.0; });
  }
  std::vector<bool> in_tau(trees.size(), false);
  for (std::size_t j : partition.containing) in_tau[j] = true;

  RowAccumulator acc(ensemble, prepared, rows);

  // Coalition ∅: A and C are row-independent.
  double a_empty = 0.0;
  for (std::size_t j : partition.containing) a_empty += v_empty[j];
  double c_empty = ensemble.base_score();
  for (std::size_t j : partition.other) c_empty += v_empty[j];
  const std::vector<double> a0(n, a_empty);
  const std::vector<double> c0(n, c_empty);
  std::vector<double> b0(n, 0.0);
  for (std::size_t j : partition.containing) {
    acc.add(j, local_bit(trees[j], k), b0, 1.0);
  }
  const double delta_empty = delta_from_terms(loss, y, a0, b0, c0);
  est.per_subset_deltas[0] = delta_empty;

  // Singletons {m}: only trees splitting on m move away from the ∅ terms.
  std::vector<std::vector<std::size_t>> trees_with(
      static_cast<std::size_t>(m_count));
  for (std::size_t j = 0; j < trees.size(); ++j) {
    for (int f : trees[j].features()) {
      trees_with[static_cast<std::size_t>(f)].push_back(j);
    }
  }
  std::vector<double> a(n), b(n), c(n);
  std::size_t slot = 1;
  for (int m = 0; m < m_count; ++m) {
    if (m == k) continue;
    const auto& touching = trees_with[static_cast<std::size_t>(m)];
    if (touching.empty()) {
      est.per_subset_deltas[slot++] = delta_empty;
      continue;
    }
    double shift_a = 0.0;
    double shift_c = 0.0;
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
    b = b0;
    for (std::size_t j : touching) {
      const detail::LocalMask bit_m = local_bit(trees[j], m);
      if (in_tau[j]) {
        const detail::LocalMask bit_k = local_bit(trees[j], k);
        acc.add(j, bit_m, a, 1.0);
        shift_a -= v_empty[j];
        acc.add(j, bit_m | bit_k, b, 1.0);
        acc.add(j, bit_k, b, -1.0);
      } else {
        acc.add(j, bit_m, c, 1.0);
        shift_c -= v_empty[j];
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      a[r] += a_empty + shift_a;
      c[r] += c_empty + shift_c;
    }
    est.per_subset_deltas[slot++] = delta_from_terms(loss, y, a, b, c);
  }

  // Every feature except k: trees without k are fully determined.
  std::fill(a.begin(), a.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  std::fill(c.begin(), c.end(), ensemble.base_score());
  for (std::size_t j = 0; j < trees.size(); ++j) {
    const detail::LocalMask full = full_mask(trees[j]);
    if (in_tau[j]) {
      acc.add(j, full & ~local_bit(trees[j], k), a, 1.0);
      acc.add(j, full, b, 1.0);
    } else {
      acc.add(j, full, c, 1.0);
    }
  }
  est.per_subset_deltas[slot] = delta_from_terms(loss, y, a, b, c);

  est.psi_hat = combine_deltas(est.family, est.per_subset_deltas);
  return est;
}

SubSageEstimate subsage_stumps(const Ensemble& ensemble, int k,
                               const Dataset& test,
                               StumpNormalization normalization) {
  check_inputs(ensemble, k, test, LossKind::squared_error);
  if (ensemble.max_depth() > 1) {
    throw ArgumentError("closed form requires every tree to have depth <= 1");
  }
  const std::size_t n = test.n_rows();
  if (n < 2) throw NumericError("closed form needs at least 2 test rows");

  SubSageEstimate est;
  est.feature = k;
  est.family = build_subset_family(ensemble.n_features(), k);
  est.n_test = n;

  const auto partition = trees_containing(ensemble, k);
  double g_empty = 0.0;
  for (std::size_t j : partition.containing) {
    g_empty += detail::expect_local(ensemble.tree(j), 0,
                                    [](int) { return 0.0; });
  }
  const auto y = test.response();
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);

  double cov = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double g = 0.0;
    for (std::size_t j : partition.containing) {
      const Node& root = ensemble.tree(j).node(Tree::root());
      const double x = test.value(i, static_cast<std::size_t>(root.feature));
      g += x < root.threshold
               ? ensemble.tree(j).node(root.left).leaf_value
               : ensemble.tree(j).node(root.right).leaf_value;
    }
    const double centred = g - g_empty;
    cov += (y[i] - y_mean) * centred;
    var += centred * centred;
  }
  const double denom = normalization == StumpNormalization::unbiased
                           ? static_cast<double>(n - 1)
                           : static_cast<double>(n);
  est.psi_hat = 2.0 * cov / denom - var / denom;
  est.per_subset_deltas.assign(est.family.subsets.size(), est.psi_hat);
  return est;
}

}  // namespace subsage
