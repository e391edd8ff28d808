#include "subsage/cond_expect.hpp"

#include <algorithm>

#include "subsage/detail/expect.hpp"
#include "subsage/error.hpp"

namespace subsage {

SubsetMask SubsetMask::of(std::size_t n_features, std::span<const int> subset,
                          std::span<const double> row) {
  if (row.size() != n_features) {
    throw ArgumentError("row length does not match feature count");
  }
  SubsetMask m;
  m.known.assign(n_features, false);
  m.values.assign(row.begin(), row.end());
  for (int f : subset) {
    if (f < 0 || static_cast<std::size_t>(f) >= n_features) {
      throw ArgumentError("subset feature " + std::to_string(f) +
                          " out of range");
    }
    m.known[static_cast<std::size_t>(f)] = true;
  }
  return m;
}

SubsetMask SubsetMask::all(std::span<const double> row) {
  SubsetMask m;
  m.known.assign(row.size(), true);
  m.values.assign(row.begin(), row.end());
  return m;
}

SubsetMask SubsetMask::none(std::size_t n_features) {
  SubsetMask m;
  m.known.assign(n_features, false);
  m.values.assign(n_features, 0.0);
  return m;
}

double cond_exp_tree(const Tree& tree, const SubsetMask& mask) {
  if (!tree.annotated()) {
    throw ModelError("tree has no branch probabilities; annotate it first");
  }
  return detail::expect_from(
      tree, Tree::root(),
      [&mask](const Node& n) { return mask.contains(n.feature); },
      [&mask](int f) { return mask.values[static_cast<std::size_t>(f)]; });
}

double cond_exp_ensemble(const Ensemble& ensemble, const SubsetMask& mask) {
  if (mask.known.size() != static_cast<std::size_t>(ensemble.n_features())) {
    throw ArgumentError("mask size does not match model feature count");
  }
  double sum = 0.0;
  for (const Tree& t : ensemble.trees()) sum += cond_exp_tree(t, mask);
  return ensemble.base_score() + sum;
}

TreeValueMatrix cond_exp_batch(const Ensemble& ensemble,
                               std::span<const int> subset,
                               const Dataset& data) {
  if (!ensemble.annotated()) {
    throw ModelError("ensemble has no branch probabilities; annotate it first");
  }
  if (data.n_cols() != static_cast<std::size_t>(ensemble.n_features())) {
    throw DataError("dataset/model feature count mismatch");
  }
  std::vector<bool> in_subset(data.n_cols(), false);
  for (int f : subset) {
    if (f < 0 || static_cast<std::size_t>(f) >= data.n_cols()) {
      throw ArgumentError("subset feature out of range");
    }
    in_subset[static_cast<std::size_t>(f)] = true;
  }

  TreeValueMatrix out;
  out.n_rows = data.n_rows();
  out.n_trees = ensemble.n_trees();
  out.values.resize(out.n_rows * out.n_trees);
  for (std::size_t t = 0; t < ensemble.n_trees(); ++t) {
    const Tree& tree = ensemble.tree(t);
    const bool touches = std::any_of(
        tree.features().begin(), tree.features().end(),
        [&](int f) { return in_subset[static_cast<std::size_t>(f)]; });
    auto known = [&](const Node& n) {
      return static_cast<bool>(in_subset[static_cast<std::size_t>(n.feature)]);
    };
    if (!touches) {
      const double v = detail::expect_from(tree, Tree::root(), known,
                                           [](int) { return 0.0; });
      for (std::size_t i = 0; i < out.n_rows; ++i) {
        out.values[i * out.n_trees + t] = v;
      }
      continue;
    }
    for (std::size_t i = 0; i < out.n_rows; ++i) {
      out.values[i * out.n_trees + t] = detail::expect_from(
          tree, Tree::root(), known,
          [&](int f) { return data.value(i, static_cast<std::size_t>(f)); });
    }
  }
  return out;
}

}  // namespace subsage
