#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subsage/dataset.hpp"

namespace subsage {

// Every split in this library routes `x < threshold` to the left child,
// both when traversing a tree and when estimating branch probabilities.

enum class Objective { regression, binary_logistic };

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

inline constexpr double kUnannotated = std::numeric_limits<double>::quiet_NaN();

struct Node {
  int id = 0;
  bool is_leaf = true;
  double leaf_value = 0.0;
  // Branch fields; child links are arena positions, not ids.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Empirical P(X_feature < threshold), conditioned on the range left open
  // by ancestors that split on the same feature; NaN until annotated.
  double prob_left = kUnannotated;
  // Position of `feature` within Tree::features().
  int local = -1;

  double prob_right() const { return 1.0 - prob_left; }
};

// Node record as it appears in a model file, children referenced by id.
struct NodeSpec {
  int id = 0;
  std::optional<double> leaf;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::optional<double> prob_left;
};

class Tree {
 public:
  Tree() = default;

  // Builds and validates a tree; node id 1 is the root. Throws ModelError on
  // missing root, dangling or shared children, cycles or unreachable nodes.
  static Tree from_specs(std::vector<NodeSpec> specs);

  // Single leaf.
  static Tree leaf(double value);
  // Depth-one tree: x[feature] < threshold ? left_value : right_value.
  static Tree stump(int feature, double threshold, double left_value,
                    double right_value);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int pos) const { return nodes_[static_cast<std::size_t>(pos)]; }
  static constexpr int root() { return 0; }

  // Sorted unique split features.
  const std::vector<int>& features() const { return features_; }
  bool uses(int feature) const;
  int depth() const { return depth_; }
  std::size_t n_leaves() const { return n_leaves_; }
  bool annotated() const;

  double predict(std::span<const double> x) const;

  std::vector<NodeSpec> to_specs() const;

  // Used by annotation; keeps structure untouched.
  void set_prob_left(int pos, double p) {
    nodes_[static_cast<std::size_t>(pos)].prob_left = p;
  }

 private:
  std::vector<Node> nodes_;  // sorted by id; nodes_[0] is the root
  std::vector<int> features_;
  int depth_ = 0;
  std::size_t n_leaves_ = 0;
};

// Distinct (feature, threshold) pairs of an ensemble, used to refresh all
// branch probabilities with one counting pass per feature.
struct ThresholdIndex {
  struct Slot {
    int tree;
    int node;
    // Ancestors splitting on the same feature confine it to
    // [thresholds[lo], thresholds[hi]); -1 and size() mean unbounded.
    int lo;
    int hi;
  };
  // thresholds[f]: sorted unique thresholds on feature f.
  std::vector<std::vector<double>> thresholds;
  // slots[f][t]: branch nodes splitting on (f, thresholds[f][t]).
  std::vector<std::vector<std::vector<Slot>>> slots;
};

class Ensemble {
 public:
  Ensemble() = default;
  // Validates that every split feature is below n_features.
  Ensemble(std::vector<Tree> trees, int n_features, double base_score,
           Objective objective);

  const std::vector<Tree>& trees() const { return trees_; }
  const Tree& tree(std::size_t t) const { return trees_[t]; }
  std::size_t n_trees() const { return trees_.size(); }
  int n_features() const { return n_features_; }
  double base_score() const { return base_score_; }
  Objective objective() const { return objective_; }
  bool annotated() const;
  int max_depth() const;

  const ThresholdIndex& threshold_index() const { return index_; }

  friend void annotate_in_place(Ensemble& ensemble, const Dataset& data);

 private:
  std::vector<Tree> trees_;
  int n_features_ = 0;
  double base_score_ = 0.0;
  Objective objective_ = Objective::regression;
  ThresholdIndex index_;
};

Ensemble load_model(const std::filesystem::path& path);
Ensemble parse_model(std::string_view json_text);
// Canonical form: nodes sorted by id, shortest round-trip floats.
std::string serialize_model(const Ensemble& ensemble);
void write_model(const Ensemble& ensemble, const std::filesystem::path& path);

struct XgbImportOptions {
  // Defaults to 1 + the largest split index found in the dump.
  std::optional<int> n_features;
  // Maps split names that are not of the form "f<idx>".
  std::vector<std::string> feature_names;
  double base_score = 0.0;
  Objective objective = Objective::regression;
};

// Reads the boosted-tree JSON dump (nodeid/split/split_condition/yes/no/
// missing/leaf/children). The "yes" branch becomes the left child.
Ensemble import_xgb_dump(const std::filesystem::path& path,
                         const XgbImportOptions& options = {});
Ensemble parse_xgb_dump(std::string_view json_text,
                        const XgbImportOptions& options = {});
// Writes the same dump layout, node ids renumbered breadth-first from 0.
std::string export_xgb_dump(const Ensemble& ensemble);

// Returns a copy whose branch nodes carry P̂(X_f < t | ancestors) estimated
// on `data`. Without a same-feature ancestor this is the column fraction.
Ensemble annotate_probabilities(const Ensemble& ensemble, const Dataset& data);
// In-place variant for callers that own a scratch copy.
void annotate_in_place(Ensemble& ensemble, const Dataset& data);

struct TreePartition {
  std::vector<std::size_t> containing;  // trees that split on k
  std::vector<std::size_t> other;
};

TreePartition trees_containing(const Ensemble& ensemble, int feature);

double predict_margin(const Ensemble& ensemble, std::span<const double> x);
std::vector<double> predict_margin(const Ensemble& ensemble,
                                   const Dataset& data);

}  // namespace subsage
