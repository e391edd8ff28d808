#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/tree_model.hpp"

namespace subsage {

// Observed feature subset S together with the observed values x_S.
struct SubsetMask {
  std::vector<bool> known;     // length M
  std::vector<double> values;  // length M; read only where known

  // Mask over `n_features` with `subset` known, values taken from `row`.
  static SubsetMask of(std::size_t n_features, std::span<const int> subset,
                       std::span<const double> row);
  static SubsetMask all(std::span<const double> row);
  static SubsetMask none(std::size_t n_features);

  bool contains(int feature) const {
    return known[static_cast<std::size_t>(feature)];
  }
};

// E[f(X) | X_S = x_S] for one tree under independent features, using the
// tree's annotated branch probabilities. Throws ModelError if unannotated.
double cond_exp_tree(const Tree& tree, const SubsetMask& mask);

// base_score + sum of per-tree conditional expectations.
double cond_exp_ensemble(const Ensemble& ensemble, const SubsetMask& mask);

// Row-major N x T matrix of per-tree conditional expectations.
struct TreeValueMatrix {
  std::size_t n_rows = 0;
  std::size_t n_trees = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t tree) const {
    return values[row * n_trees + tree];
  }
};

// Entry (i, t) is cond_exp_tree(tree t, x_i restricted to `subset`).
// Per tree the work depends only on subset ∩ features(tree); values of trees
// that share no feature with the subset are computed once and broadcast.
TreeValueMatrix cond_exp_batch(const Ensemble& ensemble,
                               std::span<const int> subset,
                               const Dataset& data);

}  // namespace subsage
