#pragma once

// Independent reference implementations used by the tests. They favour
// obviousness over speed and share no code with the library beyond the
// model and dataset containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/tree_model.hpp"

namespace oracle {

using subsage::Dataset;
using subsage::Ensemble;
using subsage::FeatureKind;
using subsage::Node;
using subsage::NodeSpec;
using subsage::Objective;
using subsage::Tree;

inline double walk(const Tree& tree, const std::vector<double>& x) {
  int pos = Tree::root();
  while (!tree.node(pos).is_leaf) {
    const Node& n = tree.node(pos);
    pos = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return tree.node(pos).leaf_value;
}

// E[tree(X) | X_S = x_S] where unknown features are drawn independently
// from their empirical marginals in `data`: exhaustive sum over the product
// of distinct values of the unknown features the tree splits on.
inline double enumerate_expectation(const Tree& tree,
                                    const std::vector<bool>& known,
                                    const std::vector<double>& x,
                                    const Dataset& data) {
  std::vector<int> unknown;
  for (int f : tree.features()) {
    if (!known[static_cast<std::size_t>(f)]) unknown.push_back(f);
  }
  std::vector<std::vector<std::pair<double, double>>> support;
  for (int f : unknown) {
    std::map<double, double> freq;
    const auto col = data.column(static_cast<std::size_t>(f));
    for (double v : col) freq[v] += 1.0 / static_cast<double>(col.size());
    support.emplace_back(freq.begin(), freq.end());
  }
  std::vector<double> z = x;
  double total = 0.0;
  std::function<void(std::size_t, double)> rec = [&](std::size_t d, double w) {
    if (d == unknown.size()) {
      total += w * walk(tree, z);
      return;
    }
    for (const auto& [v, p] : support[d]) {
      z[static_cast<std::size_t>(unknown[d])] = v;
      rec(d + 1, w * p);
    }
  };
  rec(0, 1.0);
  return total;
}

// Plain recursive marginalisation with the node probabilities stored in the
// tree; written without the library's helpers.
inline double recursive_expectation(const Tree& tree, int pos,
                                    const std::vector<bool>& known,
                                    const std::vector<double>& x) {
  const Node& n = tree.node(pos);
  if (n.is_leaf) return n.leaf_value;
  if (known[static_cast<std::size_t>(n.feature)]) {
    return recursive_expectation(
        tree, x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right,
        known, x);
  }
  return n.prob_left * recursive_expectation(tree, n.left, known, x) +
         (1.0 - n.prob_left) * recursive_expectation(tree, n.right, known, x);
}

inline double ensemble_value(const Ensemble& e, const std::vector<bool>& known,
                             const std::vector<double>& x) {
  double v = e.base_score();
  for (const Tree& t : e.trees()) v += recursive_expectation(t, 0, known, x);
  return v;
}

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Margin-space loss of one prediction.
inline double loss(bool cross_entropy, double y, double margin) {
  if (!cross_entropy) return (y - margin) * (y - margin);
  return y * softplus(-margin) + (1.0 - y) * softplus(margin);
}

// mean loss(v(S)) - mean loss(v(S ∪ {k})) over the rows of `test`, with the
// full ensemble evaluated on both coalitions.
inline double naive_delta(const Ensemble& e, int k, const std::vector<int>& s,
                          const Dataset& test, bool cross_entropy) {
  const std::size_t m = static_cast<std::size_t>(e.n_features());
  std::vector<bool> known(m, false);
  for (int f : s) known[static_cast<std::size_t>(f)] = true;
  std::vector<bool> known_k = known;
  known_k[static_cast<std::size_t>(k)] = true;
  double sum = 0.0;
  for (std::size_t i = 0; i < test.n_rows(); ++i) {
    const auto x = test.row(i);
    const double y = test.response()[i];
    sum += loss(cross_entropy, y, ensemble_value(e, known, x)) -
           loss(cross_entropy, y, ensemble_value(e, known_k, x));
  }
  return sum / static_cast<double>(test.n_rows());
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Naive sub-SAGE: explicit family, explicit weights from factorials.
inline double naive_subsage(const Ensemble& e, int k, const Dataset& test,
                            bool cross_entropy) {
  const int m = e.n_features();
  const double norm = 3.0 * factorial(m - 1);
  double psi = factorial(m - 1) / norm *
               naive_delta(e, k, {}, test, cross_entropy);
  std::vector<int> rest;
  for (int j = 0; j < m; ++j) {
    if (j == k) continue;
    rest.push_back(j);
    psi += factorial(1) * factorial(m - 2) / norm *
           naive_delta(e, k, {j}, test, cross_entropy);
  }
  psi += factorial(m - 1) / norm * naive_delta(e, k, rest, test, cross_entropy);
  return psi;
}

// Shapley values of row x over all M features by full subset enumeration.
inline std::vector<double> brute_force_shap(const Ensemble& e,
                                            const std::vector<double>& x) {
  const int m = e.n_features();
  std::vector<double> phi(static_cast<std::size_t>(m), 0.0);
  const std::uint32_t full = 1u << m;
  std::vector<double> value(full);
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    std::vector<bool> known(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) known[static_cast<std::size_t>(j)] = (mask >> j) & 1u;
    value[mask] = ensemble_value(e, known, x);
  }
  for (int k = 0; k < m; ++k) {
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      if ((mask >> k) & 1u) continue;
      const int s = __builtin_popcount(mask);
      const double w = factorial(s) * factorial(m - s - 1) / factorial(m);
      phi[static_cast<std::size_t>(k)] += w * (value[mask | (1u << k)] - value[mask]);
    }
  }
  return phi;
}

// ------------------------------------------------------------- fixtures

// Columns of small-integer or continuous values, response arbitrary.
inline Dataset random_dataset(std::mt19937_64& rng, int m, std::size_t n,
                              bool binary_y = false, int levels = 0) {
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(m));
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (auto& c : cols) {
    c.resize(n);
    const int lv = levels > 0 ? levels : static_cast<int>(rng() % 6) + 2;
    for (auto& v : c) v = static_cast<double>(rng() % static_cast<unsigned>(lv));
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (binary_y) {
      y[i] = static_cast<double>(rng() % 2);
    } else {
      y[i] = u(rng) + 0.7 * cols[0][i] - 0.4 * cols[static_cast<std::size_t>(m - 1)][i];
    }
  }
  std::vector<std::string> names;
  for (int j = 0; j < m; ++j) names.push_back("f" + std::to_string(j));
  return Dataset(names, std::vector<FeatureKind>(static_cast<std::size_t>(m),
                                                 FeatureKind::continuous),
                 std::move(cols), std::move(y));
}

// Threshold strictly inside the observed range of column f when possible.
inline double random_threshold(std::mt19937_64& rng, const Dataset& data, int f) {
  const auto col = data.column(static_cast<std::size_t>(f));
  const double v = col[rng() % col.size()];
  return v + 0.5;
}

inline Tree random_tree(std::mt19937_64& rng, const Dataset& data, int depth,
                        const std::vector<int>& allowed) {
  std::vector<NodeSpec> specs;
  std::uniform_real_distribution<double> leaf(-1.5, 1.5);
  std::function<void(int, int)> build = [&](int id, int d) {
    NodeSpec s;
    s.id = id;
    if (d == depth || (d > 0 && rng() % 4 == 0)) {
      s.leaf = leaf(rng);
      specs.push_back(s);
      return;
    }
    s.feature = allowed[rng() % allowed.size()];
    s.threshold = random_threshold(rng, data, s.feature);
    s.left = 2 * id;
    s.right = 2 * id + 1;
    specs.push_back(s);
    build(2 * id, d + 1);
    build(2 * id + 1, d + 1);
  };
  build(1, 0);
  return Tree::from_specs(std::move(specs));
}

inline Ensemble random_ensemble(std::mt19937_64& rng, const Dataset& data,
                                int n_trees, int depth,
                                Objective objective = Objective::regression,
                                std::vector<int> allowed = {}) {
  const int m = static_cast<int>(data.n_cols());
  if (allowed.empty()) {
    for (int j = 0; j < m; ++j) allowed.push_back(j);
  }
  std::vector<Tree> trees;
  for (int t = 0; t < n_trees; ++t) trees.push_back(random_tree(rng, data, depth, allowed));
  std::uniform_real_distribution<double> base(-0.5, 0.5);
  return Ensemble(std::move(trees), m, base(rng), objective);
}

// Full factorial grid: every combination of `levels` values per feature
// appears once, so features are exactly independent in the empirical
// distribution.
inline Dataset product_grid(std::mt19937_64& rng, int m, int levels) {
  std::size_t n = 1;
  for (int j = 0; j < m; ++j) n *= static_cast<std::size_t>(levels);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(m),
                                        std::vector<double>(n));
  std::vector<double> y(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = i;
    for (int j = 0; j < m; ++j) {
      cols[static_cast<std::size_t>(j)][i] = static_cast<double>(r % static_cast<std::size_t>(levels));
      r /= static_cast<std::size_t>(levels);
    }
    y[i] = cols[0][i] - 0.5 * cols[1][i] + noise(rng);
  }
  std::vector<std::string> names;
  for (int j = 0; j < m; ++j) names.push_back("g" + std::to_string(j));
  return Dataset(names, std::vector<FeatureKind>(static_cast<std::size_t>(m),
                                                 FeatureKind::continuous),
                 std::move(cols), std::move(y));
}

inline Ensemble random_stumps(std::mt19937_64& rng, const Dataset& data,
                              int n_trees) {
  const int m = static_cast<int>(data.n_cols());
  std::vector<Tree> trees;
  std::uniform_real_distribution<double> leaf(-1.0, 1.0);
  for (int t = 0; t < n_trees; ++t) {
    const int f = static_cast<int>(rng() % static_cast<unsigned>(m));
    trees.push_back(Tree::stump(f, random_threshold(rng, data, f), leaf(rng), leaf(rng)));
  }
  std::uniform_real_distribution<double> base(-0.5, 0.5);
  return Ensemble(std::move(trees), m, base(rng), Objective::regression);
}

}  // namespace oracle
