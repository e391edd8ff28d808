#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/tree_model.hpp"

namespace subsage {

enum class LossKind { squared_error, binary_cross_entropy };

std::string_view to_string(LossKind loss);
LossKind loss_from_string(std::string_view name);

// One coalition S of the family Q_k: the empty set, a singleton {m}, or
// every feature except k.
struct Subset {
  enum class Kind { empty, singleton, all_but_k };
  Kind kind = Kind::empty;
  int member = -1;  // singleton only

  static Subset empty() { return {}; }
  static Subset singleton(int m) { return {Kind::singleton, m}; }
  static Subset all_but(int) { return {Kind::all_but_k, -1}; }

  std::size_t size(int n_features) const;
  // Explicit feature list of S for a model with `n_features` inputs.
  std::vector<int> features(int n_features, int k) const;
  bool operator==(const Subset&) const = default;
};

// Human-readable key: "{}", "{<name>}" or "all\<name of k>".
std::string subset_label(const Subset& s, int k,
                         const std::vector<std::string>& names);

// Q_k with weights |S|!(M-|S|-1)!/(3(M-1)!): 1/3 for the empty set, 1/3 for
// the complement of k and 1/(3(M-1)) per singleton. Requires M >= 3.
struct SubsetFamily {
  int n_features = 0;
  int feature = 0;
  std::vector<Subset> subsets;  // ∅, singletons ascending, all-but-k
  std::vector<double> weights;
};

SubsetFamily build_subset_family(int n_features, int k);

// Sum of weight(S) * delta(S) in family order.
double combine_deltas(const SubsetFamily& family,
                      const std::vector<double>& deltas);

struct SubSageEstimate {
  int feature = 0;
  double psi_hat = 0.0;
  SubsetFamily family;
  std::vector<double> per_subset_deltas;  // aligned with family.subsets
  std::size_t n_test = 0;
};

// Plug-in estimate of w(S ∪ {k}) - w(S) under squared error, restricted to
// the trees that split on k. The ensemble must be annotated (normally on
// `test` itself) and have the regression objective.
double delta_loss_squared(const Ensemble& ensemble, int k, const Subset& s,
                          const Dataset& test);

// Same for binary cross-entropy on margins; binary-logistic objective and
// 0/1 responses required.
double delta_loss_cross_entropy(const Ensemble& ensemble, int k,
                                const Subset& s, const Dataset& test);

// Split outcomes of every (tree, row) pair of a test set, cached once so that
// repeated estimates on resampled rows only rebuild small per-tree tables.
// Depends on tree structure only, not on branch probabilities.
class PreparedTest {
 public:
  PreparedTest(const Ensemble& ensemble, const Dataset& test);

  const Dataset& data() const { return data_; }
  std::size_t n_trees() const { return trees_.size(); }

  struct TreeCache {
    // -1 when the tree is too large for a pattern table; rows are then
    // evaluated directly from feature values.
    int n_internal = -1;
    std::vector<int> internal_of;  // arena position -> bit index, -1 for leaves
    std::vector<std::uint16_t> pattern;  // per row: bit q set <=> x < t at q
  };
  const TreeCache& tree(std::size_t j) const { return trees_[j]; }

 private:
  Dataset data_;
  std::vector<TreeCache> trees_;
  std::size_t node_total_ = 0;

  friend SubSageEstimate subsage_estimate(const Ensemble&, int,
                                          const PreparedTest&,
                                          std::span<const std::size_t>,
                                          LossKind);
};

// psi_hat_k over all of Q_k. Trees that do not split on k are evaluated once
// per distinct subset class and shared across the singleton subsets.
SubSageEstimate subsage_estimate(const Ensemble& ensemble, int k,
                                 const Dataset& test, LossKind loss);

// Same estimate on the rows `rows` of a prepared test set (duplicates
// allowed). `ensemble` must have the prepared structure and carry the
// probabilities that belong to those rows.
SubSageEstimate subsage_estimate(const Ensemble& ensemble, int k,
                                 const PreparedTest& prepared,
                                 std::span<const std::size_t> rows,
                                 LossKind loss);

enum class StumpNormalization {
  unbiased,  // 1 / (N - 1)
  plug_in,   // 1 / N, the normalization implied by the general estimator
};

// Closed form for depth-one ensembles: 2 Cov(y, g_k) - Var(g_k) where g_k is
// the summed output of the stumps on k, centred at its v(∅).
SubSageEstimate subsage_stumps(
    const Ensemble& ensemble, int k, const Dataset& test,
    StumpNormalization normalization = StumpNormalization::unbiased);

}  // namespace subsage
