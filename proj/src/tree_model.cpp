#include "subsage/tree_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "subsage/error.hpp"
#include "subsage/format.hpp"

namespace subsage {

using nlohmann::json;

std::string_view to_string(Objective objective) {
  return objective == Objective::regression ? "regression" : "binary-logistic";
}

Objective objective_from_string(std::string_view name) {
  if (name == "regression") return Objective::regression;
  if (name == "binary-logistic") return Objective::binary_logistic;
  throw ModelError("unknown objective '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- Tree

Tree Tree::from_specs(std::vector<NodeSpec> specs) {
  if (specs.empty()) throw ModelError("tree has no nodes");
  std::sort(specs.begin(), specs.end(),
            [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (specs[i].id == specs[i - 1].id) {
      throw ModelError("duplicate node id " + std::to_string(specs[i].id));
    }
  }
  if (specs.front().id != 1) {
    throw ModelError("tree has no root node (id 1)");
  }

  std::map<int, int> position;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    position[specs[i].id] = static_cast<int>(i);
  }
  auto resolve = [&](int parent, int child_id) {
    const auto it = position.find(child_id);
    if (it == position.end()) {
      throw ModelError("node " + std::to_string(parent) +
                       " references missing child id " +
                       std::to_string(child_id));
    }
    return it->second;
  };

  Tree tree;
  tree.nodes_.resize(specs.size());
  std::vector<int> parents(specs.size(), 0);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const NodeSpec& s = specs[i];
    Node& n = tree.nodes_[i];
    n.id = s.id;
    if (s.leaf) {
      if (!std::isfinite(*s.leaf)) {
        throw ModelError("non-finite leaf value at node " +
                         std::to_string(s.id));
      }
      n.is_leaf = true;
      n.leaf_value = *s.leaf;
      continue;
    }
    n.is_leaf = false;
    if (s.feature < 0) {
      throw ModelError("branch node " + std::to_string(s.id) +
                       " has negative feature index");
    }
    if (!std::isfinite(s.threshold)) {
      throw ModelError("non-finite threshold at node " + std::to_string(s.id));
    }
    n.feature = s.feature;
    n.threshold = s.threshold;
    n.left = resolve(s.id, s.left);
    n.right = resolve(s.id, s.right);
    if (n.left == n.right) {
      throw ModelError("branch node " + std::to_string(s.id) +
                       " has identical children");
    }
    if (n.left == 0 || n.right == 0) {
      throw ModelError("node " + std::to_string(s.id) + " points at the root");
    }
    ++parents[static_cast<std::size_t>(n.left)];
    ++parents[static_cast<std::size_t>(n.right)];
    if (s.prob_left) {
      if (!(*s.prob_left >= 0.0 && *s.prob_left <= 1.0)) {
        throw ModelError("prob_left outside [0, 1] at node " +
                         std::to_string(s.id));
      }
      n.prob_left = *s.prob_left;
    }
  }
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (parents[i] != 1) {
      throw ModelError("node " + std::to_string(specs[i].id) +
                       (parents[i] == 0 ? " is unreachable from the root"
                                        : " has more than one parent"));
    }
  }

  // Every non-root node has exactly one parent and the root has none, so a
  // walk from the root that reaches every node proves the graph is a tree.
  std::vector<int> stack = {0};
  std::vector<int> depth(specs.size(), 0);
  std::size_t visited = 0;
  while (!stack.empty()) {
    const int pos = stack.back();
    stack.pop_back();
    ++visited;
    const Node& n = tree.nodes_[static_cast<std::size_t>(pos)];
    if (n.is_leaf) {
      ++tree.n_leaves_;
      tree.depth_ = std::max(tree.depth_, depth[static_cast<std::size_t>(pos)]);
      continue;
    }
    for (int child : {n.left, n.right}) {
      depth[static_cast<std::size_t>(child)] =
          depth[static_cast<std::size_t>(pos)] + 1;
      stack.push_back(child);
    }
    tree.features_.push_back(n.feature);
  }
  if (visited != specs.size()) {
    throw ModelError("tree contains a cycle");
  }
  std::sort(tree.features_.begin(), tree.features_.end());
  tree.features_.erase(
      std::unique(tree.features_.begin(), tree.features_.end()),
      tree.features_.end());
  for (Node& n : tree.nodes_) {
    if (n.is_leaf) continue;
    n.local = static_cast<int>(
        std::lower_bound(tree.features_.begin(), tree.features_.end(),
                         n.feature) -
        tree.features_.begin());
  }
  return tree;
}

Tree Tree::leaf(double value) {
  NodeSpec s;
  s.id = 1;
  s.leaf = value;
  return from_specs({s});
}

Tree Tree::stump(int feature, double threshold, double left_value,
                 double right_value) {
  NodeSpec root;
  root.id = 1;
  root.feature = feature;
  root.threshold = threshold;
  root.left = 2;
  root.right = 3;
  NodeSpec l;
  l.id = 2;
  l.leaf = left_value;
  NodeSpec r;
  r.id = 3;
  r.leaf = right_value;
  return from_specs({root, l, r});
}

bool Tree::uses(int feature) const {
  return std::binary_search(features_.begin(), features_.end(), feature);
}

bool Tree::annotated() const {
  return std::all_of(nodes_.begin(), nodes_.end(), [](const Node& n) {
    return n.is_leaf || !std::isnan(n.prob_left);
  });
}

double Tree::predict(std::span<const double> x) const {
  const Node* n = &nodes_[0];
  while (!n->is_leaf) {
    const int next =
        x[static_cast<std::size_t>(n->feature)] < n->threshold ? n->left
                                                               : n->right;
    n = &nodes_[static_cast<std::size_t>(next)];
  }
  return n->leaf_value;
}

std::vector<NodeSpec> Tree::to_specs() const {
  std::vector<NodeSpec> specs;
  specs.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    NodeSpec s;
    s.id = n.id;
    if (n.is_leaf) {
      s.leaf = n.leaf_value;
    } else {
      s.feature = n.feature;
      s.threshold = n.threshold;
      s.left = nodes_[static_cast<std::size_t>(n.left)].id;
      s.right = nodes_[static_cast<std::size_t>(n.right)].id;
      if (!std::isnan(n.prob_left)) s.prob_left = n.prob_left;
    }
    specs.push_back(s);
  }
  return specs;
}

// ------------------------------------------------------------ Ensemble

Ensemble::Ensemble(std::vector<Tree> trees, int n_features, double base_score,
                   Objective objective)
    : trees_(std::move(trees)),
      n_features_(n_features),
      base_score_(base_score),
      objective_(objective) {
  if (n_features_ < 1) throw ModelError("n_features must be positive");
  if (!std::isfinite(base_score_)) throw ModelError("non-finite base_score");
  if (trees_.empty()) throw ModelError("no trees");

  index_.thresholds.assign(static_cast<std::size_t>(n_features_), {});
  for (const Tree& tree : trees_) {
    for (const Node& n : tree.nodes()) {
      if (n.is_leaf) continue;
      if (n.feature >= n_features_) {
        throw ModelError("split feature " + std::to_string(n.feature) +
                         " >= n_features " + std::to_string(n_features_));
      }
      index_.thresholds[static_cast<std::size_t>(n.feature)].push_back(
          n.threshold);
    }
  }
  index_.slots.resize(index_.thresholds.size());
  for (std::size_t f = 0; f < index_.thresholds.size(); ++f) {
    auto& t = index_.thresholds[f];
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    index_.slots[f].resize(t.size());
  }
  // Walk each tree from the root, tracking per feature the tightest
  // interval [lo, hi) of threshold indices implied by the ancestors.
  struct Frame {
    int pos;
    std::vector<std::pair<int, int>> bounds;  // per feature: lo, hi
  };
  for (std::size_t ti = 0; ti < trees_.size(); ++ti) {
    const Tree& tree = trees_[ti];
    if (tree.node(Tree::root()).is_leaf) continue;
    std::vector<std::pair<int, int>> open(static_cast<std::size_t>(n_features_));
    for (std::size_t f = 0; f < open.size(); ++f) {
      open[f] = {-1, static_cast<int>(index_.thresholds[f].size())};
    }
    std::vector<Frame> stack = {{Tree::root(), std::move(open)}};
    while (!stack.empty()) {
      Frame fr = std::move(stack.back());
      stack.pop_back();
      const Node& n = tree.node(fr.pos);
      if (n.is_leaf) continue;
      const auto f = static_cast<std::size_t>(n.feature);
      const auto& t = index_.thresholds[f];
      const int slot = static_cast<int>(
          std::lower_bound(t.begin(), t.end(), n.threshold) - t.begin());
      const auto [lo, hi] = fr.bounds[f];
      index_.slots[f][static_cast<std::size_t>(slot)].push_back(
          {static_cast<int>(ti), fr.pos, lo, hi});
      Frame left{n.left, fr.bounds};
      left.bounds[f].second = std::min(hi, slot);
      Frame right{n.right, std::move(fr.bounds)};
      right.bounds[f].first = std::max(lo, slot);
      stack.push_back(std::move(left));
      stack.push_back(std::move(right));
    }
  }
}

bool Ensemble::annotated() const {
  return std::all_of(trees_.begin(), trees_.end(),
                     [](const Tree& t) { return t.annotated(); });
}

int Ensemble::max_depth() const {
  int d = 0;
  for (const Tree& t : trees_) d = std::max(d, t.depth());
  return d;
}

// ------------------------------------------------------ native format

namespace {

const json& require(const json& obj, const char* key, const std::string& ctx) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ModelError(ctx + ": missing field \"" + key + "\"");
  }
  return *it;
}

double require_number(const json& obj, const char* key,
                      const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number()) {
    throw ModelError(ctx + ": field \"" + key + "\" must be a number");
  }
  return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number_integer()) {
    throw ModelError(ctx + ": field \"" + key + "\" must be an integer");
  }
  return v.get<int>();
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("invalid JSON: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Ensemble parse_model(std::string_view json_text) {
  const json doc = parse_json(json_text);
  if (!doc.is_object()) throw ModelError("model file must be a JSON object");
  const std::string ctx = "model";
  if (require_int(doc, "version", ctx) != 1) {
    throw ModelError("unsupported model version");
  }
  const int n_features = require_int(doc, "n_features", ctx);
  const json& objective = require(doc, "objective", ctx);
  if (!objective.is_string()) throw ModelError("objective must be a string");
  const double base_score = require_number(doc, "base_score", ctx);
  const json& trees_json = require(doc, "trees", ctx);
  if (!trees_json.is_array()) throw ModelError("\"trees\" must be an array");

  std::vector<Tree> trees;
  for (std::size_t t = 0; t < trees_json.size(); ++t) {
    const std::string tctx = "tree " + std::to_string(t);
    const json& nodes = require(trees_json[t], "nodes", tctx);
    if (!nodes.is_array()) throw ModelError(tctx + ": nodes must be an array");
    std::vector<NodeSpec> specs;
    for (const json& nj : nodes) {
      NodeSpec s;
      s.id = require_int(nj, "id", tctx);
      const std::string nctx = tctx + " node " + std::to_string(s.id);
      if (nj.contains("leaf")) {
        s.leaf = require_number(nj, "leaf", nctx);
      } else {
        s.feature = require_int(nj, "feature", nctx);
        s.threshold = require_number(nj, "threshold", nctx);
        s.left = require_int(nj, "left", nctx);
        s.right = require_int(nj, "right", nctx);
        const auto p = nj.find("prob_left");
        if (p != nj.end() && !p->is_null()) {
          if (!p->is_number()) {
            throw ModelError(nctx + ": prob_left must be a number or null");
          }
          s.prob_left = p->get<double>();
        }
      }
      specs.push_back(s);
    }
    try {
      trees.push_back(Tree::from_specs(std::move(specs)));
    } catch (const ModelError& e) {
      throw ModelError(tctx + ": " + e.what());
    }
  }
  return Ensemble(std::move(trees), n_features, base_score,
                  objective_from_string(objective.get<std::string>()));
}

Ensemble load_model(const std::filesystem::path& path) {
  return parse_model(read_file(path));
}

std::string serialize_model(const Ensemble& ensemble) {
  std::string out;
  out += "{\n";
  out += "  \"version\": 1,\n";
  out += "  \"n_features\": " + std::to_string(ensemble.n_features()) + ",\n";
  out += "  \"objective\": \"" + std::string(to_string(ensemble.objective())) +
         "\",\n";
  out += "  \"base_score\": " + format_double(ensemble.base_score()) + ",\n";
  out += "  \"trees\": [";
  for (std::size_t t = 0; t < ensemble.n_trees(); ++t) {
    out += t == 0 ? "\n" : ",\n";
    out += "    {\"nodes\": [";
    const auto specs = ensemble.tree(t).to_specs();
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const NodeSpec& s = specs[i];
      out += i == 0 ? "\n" : ",\n";
      out += "      {\"id\": " + std::to_string(s.id);
      if (s.leaf) {
        out += ", \"leaf\": " + format_double(*s.leaf) + "}";
        continue;
      }
      out += ", \"feature\": " + std::to_string(s.feature);
      out += ", \"threshold\": " + format_double(s.threshold);
      out += ", \"left\": " + std::to_string(s.left);
      out += ", \"right\": " + std::to_string(s.right);
      out += ", \"prob_left\": ";
      out += s.prob_left ? format_double(*s.prob_left) : "null";
      out += "}";
    }
    out += "\n    ]}";
  }
  out += "\n  ]\n}\n";
  return out;
}

void write_model(const Ensemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write '" + path.string() + "'");
  out << serialize_model(ensemble);
  if (!out) throw ModelError("failed writing '" + path.string() + "'");
}

// --------------------------------------------------------- xgb dump

namespace {

int parse_split_name(const json& split, const XgbImportOptions& options,
                     const std::string& ctx) {
  if (split.is_number_integer()) return split.get<int>();
  if (!split.is_string()) throw ModelError(ctx + ": malformed split field");
  const std::string name = split.get<std::string>();
  const auto named =
      std::find(options.feature_names.begin(), options.feature_names.end(),
                name);
  if (named != options.feature_names.end()) {
    return static_cast<int>(named - options.feature_names.begin());
  }
  std::string_view digits = name;
  if (!digits.empty() && digits.front() == 'f') digits.remove_prefix(1);
  if (digits.empty() ||
      !std::all_of(digits.begin(), digits.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    throw ModelError(ctx + ": cannot map split feature '" + name + "'");
  }
  return std::stoi(std::string(digits));
}

void collect_dump_nodes(const json& node, const XgbImportOptions& options,
                        const std::string& ctx, std::vector<NodeSpec>& out) {
  if (!node.is_object()) throw ModelError(ctx + ": node must be an object");
  NodeSpec s;
  s.id = require_int(node, "nodeid", ctx) + 1;
  const std::string nctx = ctx + " nodeid " + std::to_string(s.id - 1);
  if (node.contains("leaf")) {
    s.leaf = require_number(node, "leaf", nctx);
    out.push_back(s);
    return;
  }
  s.feature = parse_split_name(require(node, "split", nctx), options, nctx);
  s.threshold = require_number(node, "split_condition", nctx);
  const int yes = require_int(node, "yes", nctx);
  const int no = require_int(node, "no", nctx);
  if (node.contains("missing")) {
    const int missing = require_int(node, "missing", nctx);
    if (missing != yes) {
      throw ModelError(nctx +
                       ": unsupported missing-value branch (missing != yes)");
    }
  }
  s.left = yes + 1;
  s.right = no + 1;
  out.push_back(s);
  const json& children = require(node, "children", nctx);
  if (!children.is_array()) {
    throw ModelError(nctx + ": children must be an array");
  }
  for (const json& child : children) {
    collect_dump_nodes(child, options, ctx, out);
  }
}

}  // namespace

Ensemble parse_xgb_dump(std::string_view json_text,
                        const XgbImportOptions& options) {
  const json doc = parse_json(json_text);
  if (!doc.is_array()) throw ModelError("dump must be a JSON array of trees");
  if (doc.empty()) throw ModelError("no trees");
  std::vector<Tree> trees;
  int max_feature = -1;
  for (std::size_t t = 0; t < doc.size(); ++t) {
    const std::string ctx = "tree " + std::to_string(t);
    std::vector<NodeSpec> specs;
    collect_dump_nodes(doc[t], options, ctx, specs);
    for (const auto& s : specs) max_feature = std::max(max_feature, s.feature);
    try {
      trees.push_back(Tree::from_specs(std::move(specs)));
    } catch (const ModelError& e) {
      throw ModelError(ctx + ": " + e.what());
    }
  }
  const int n_features = options.n_features.value_or(
      std::max<int>(max_feature + 1,
                    static_cast<int>(options.feature_names.size())));
  return Ensemble(std::move(trees), std::max(n_features, 1),
                  options.base_score, options.objective);
}

Ensemble import_xgb_dump(const std::filesystem::path& path,
                         const XgbImportOptions& options) {
  return parse_xgb_dump(read_file(path), options);
}

std::string export_xgb_dump(const Ensemble& ensemble) {
  json trees = json::array();
  for (const Tree& tree : ensemble.trees()) {
    // Breadth-first renumbering from 0, as the boosted-tree dump expects.
    std::vector<int> order = {Tree::root()};
    std::vector<int> depth = {0};
    std::map<int, int> new_id;
    for (std::size_t i = 0; i < order.size(); ++i) {
      new_id[order[i]] = static_cast<int>(i);
      const Node& n = tree.node(order[i]);
      if (!n.is_leaf) {
        order.push_back(n.left);
        order.push_back(n.right);
        depth.push_back(depth[i] + 1);
        depth.push_back(depth[i] + 1);
      }
    }
    std::vector<json> built(order.size());
    for (std::size_t i = order.size(); i-- > 0;) {
      const Node& n = tree.node(order[i]);
      json j;
      j["nodeid"] = static_cast<int>(i);
      if (n.is_leaf) {
        j["leaf"] = n.leaf_value;
      } else {
        j["depth"] = depth[i];
        j["split"] = "f" + std::to_string(n.feature);
        j["split_condition"] = n.threshold;
        j["yes"] = new_id[n.left];
        j["no"] = new_id[n.right];
        j["missing"] = new_id[n.left];
        j["children"] = json::array(
            {built[static_cast<std::size_t>(new_id[n.left])],
             built[static_cast<std::size_t>(new_id[n.right])]});
      }
      built[i] = std::move(j);
    }
    trees.push_back(std::move(built[0]));
  }
  return trees.dump(1) + "\n";
}

// -------------------------------------------------------- annotation

void annotate_in_place(Ensemble& ensemble, const Dataset& data) {
  if (data.n_cols() != static_cast<std::size_t>(ensemble.n_features())) {
    throw DataError("dataset has " + std::to_string(data.n_cols()) +
                    " feature columns, model expects " +
                    std::to_string(ensemble.n_features()));
  }
  if (data.n_rows() == 0) throw DataError("cannot annotate on empty data");
  const double n = static_cast<double>(data.n_rows());
  const ThresholdIndex& index = ensemble.index_;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> below;
  for (std::size_t f = 0; f < index.thresholds.size(); ++f) {
    const auto& t = index.thresholds[f];
    if (t.empty()) continue;
    // Bucket each value at the first threshold strictly above it.
    counts.assign(t.size() + 1, 0);
    for (double x : data.column(f)) {
      ++counts[static_cast<std::size_t>(
          std::upper_bound(t.begin(), t.end(), x) - t.begin())];
    }
    // below[j + 1] = #{x < t[j]}, below[0] = 0, below[size + 1] = n.
    below.assign(t.size() + 2, 0);
    for (std::size_t j = 0; j < t.size(); ++j) below[j + 1] = below[j] + counts[j];
    below[t.size() + 1] = data.n_rows();
    for (std::size_t j = 0; j < t.size(); ++j) {
      for (const auto& slot : index.slots[f][j]) {
        const auto lo = static_cast<std::size_t>(slot.lo + 1);
        const auto hi = static_cast<std::size_t>(slot.hi + 1);
        const std::size_t at = std::clamp(j + 1, lo, hi);
        const std::size_t mass = below[hi] - below[lo];
        // Unreachable intervals carry no weight; keep the column fraction.
        const double p = mass == 0
                             ? static_cast<double>(below[j + 1]) / n
                             : static_cast<double>(below[at] - below[lo]) /
                                   static_cast<double>(mass);
        ensemble.trees_[static_cast<std::size_t>(slot.tree)].set_prob_left(
            slot.node, p);
      }
    }
  }
}

Ensemble annotate_probabilities(const Ensemble& ensemble, const Dataset& data) {
  Ensemble out = ensemble;
  annotate_in_place(out, data);
  return out;
}

TreePartition trees_containing(const Ensemble& ensemble, int feature) {
  if (feature < 0 || feature >= ensemble.n_features()) {
    throw ArgumentError("feature index " + std::to_string(feature) +
                        " out of range");
  }
  TreePartition out;
  for (std::size_t t = 0; t < ensemble.n_trees(); ++t) {
    (ensemble.tree(t).uses(feature) ? out.containing : out.other).push_back(t);
  }
  return out;
}

double predict_margin(const Ensemble& ensemble, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(ensemble.n_features())) {
    throw ArgumentError("row has " + std::to_string(x.size()) +
                        " values, model expects " +
                        std::to_string(ensemble.n_features()));
  }
  double sum = 0.0;
  for (const Tree& t : ensemble.trees()) sum += t.predict(x);
  return ensemble.base_score() + sum;
}

std::vector<double> predict_margin(const Ensemble& ensemble,
                                   const Dataset& data) {
  std::vector<double> out(data.n_rows());
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    out[i] = predict_margin(ensemble, data.row(i));
  }
  return out;
}

}  // namespace subsage
