#include "subsage/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "subsage/error.hpp"
#include "subsage/parallel.hpp"
#include "subsage/random.hpp"

namespace subsage {

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0)) {
    throw ArgumentError("learning rate must lie in (0, 1]");
  }
  if (cfg.max_depth < 1 || cfg.max_depth > 8) {
    throw ArgumentError("max depth must lie in [1, 8]");
  }
  if (!(cfg.subsample > 0.0 && cfg.subsample <= 1.0) ||
      !(cfg.colsample > 0.0 && cfg.colsample <= 1.0)) {
    throw ArgumentError("sampling fractions must lie in (0, 1]");
  }
  if (!(cfg.lambda >= 0.0) || !(cfg.gamma >= 0.0) ||
      !(cfg.min_child_weight >= 0.0)) {
    throw ArgumentError("lambda, gamma and min child weight must be >= 0");
  }
  if (cfg.max_rounds < 1) throw ArgumentError("need at least one round");
  if (cfg.early_stopping_rounds < 0) {
    throw ArgumentError("early stopping rounds must be >= 0");
  }
}

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double predict_row(const Tree& tree, const Dataset& data, std::size_t row) {
  int pos = Tree::root();
  while (!tree.node(pos).is_leaf) {
    const Node& n = tree.node(pos);
    pos = data.value(row, static_cast<std::size_t>(n.feature)) < n.threshold
              ? n.left
              : n.right;
  }
  return tree.node(pos).leaf_value;
}

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  double g_left = 0.0;
  double h_left = 0.0;
};

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Dataset& data,
             const std::vector<std::vector<std::uint32_t>>& order,
             const TrainConfig& cfg)
      : data_(data), order_(order), cfg_(cfg) {}

  // node_of[i]: heap id of row i's node, 0 for rows outside the sample.
  Tree grow(const std::vector<double>& grad, const std::vector<double>& hess,
            std::vector<int>& node_of, const std::vector<int>& features) {
    std::vector<NodeSpec> specs;
    std::vector<int> open = {1};
    std::vector<NodeStats> stats(2);
    for (std::size_t i = 0; i < node_of.size(); ++i) {
      if (node_of[i] == 1) {
        stats[1].g += grad[i];
        stats[1].h += hess[i];
      }
    }
    for (int depth = 0; depth < cfg_.max_depth && !open.empty(); ++depth) {
      const int first = 1 << depth;
      const auto best = search(grad, hess, node_of, features, stats, first);
      std::vector<int> next;
      std::vector<NodeStats> next_stats(static_cast<std::size_t>(first) * 4);
      std::vector<const Candidate*> split_of(static_cast<std::size_t>(first),
                                             nullptr);
      for (int id : open) {
        const Candidate& c = best[static_cast<std::size_t>(id - first)];
        const NodeStats& s = stats[static_cast<std::size_t>(id)];
        if (c.feature < 0) {
          specs.push_back(leaf_spec(id, s));
          continue;
        }
        split_of[static_cast<std::size_t>(id - first)] = &c;
        NodeSpec spec;
        spec.id = id;
        spec.feature = c.feature;
        spec.threshold = c.threshold;
        spec.left = 2 * id;
        spec.right = 2 * id + 1;
        specs.push_back(spec);
        next.push_back(2 * id);
        next.push_back(2 * id + 1);
        next_stats[static_cast<std::size_t>(2 * id)] = {c.g_left, c.h_left};
        next_stats[static_cast<std::size_t>(2 * id + 1)] = {s.g - c.g_left,
                                                            s.h - c.h_left};
      }
      for (std::size_t i = 0; i < node_of.size(); ++i) {
        const int id = node_of[i];
        if (id < first || id >= 2 * first) continue;
        const Candidate* c = split_of[static_cast<std::size_t>(id - first)];
        if (c == nullptr) {
          node_of[i] = 0;
          continue;
        }
        const double x = data_.value(i, static_cast<std::size_t>(c->feature));
        node_of[i] = x < c->threshold ? 2 * id : 2 * id + 1;
      }
      open = std::move(next);
      stats = std::move(next_stats);
    }
    for (int id : open) {
      specs.push_back(leaf_spec(id, stats[static_cast<std::size_t>(id)]));
    }
    return Tree::from_specs(std::move(specs));
  }

 private:
  NodeSpec leaf_spec(int id, const NodeStats& s) const {
    NodeSpec spec;
    spec.id = id;
    spec.leaf = -s.g / (s.h + cfg_.lambda) * cfg_.learning_rate;
    return spec;
  }

  double score(double g, double h) const { return g * g / (h + cfg_.lambda); }

  // Best split per node of the level starting at heap id `first`.
  std::vector<Candidate> search(const std::vector<double>& grad,
                                const std::vector<double>& hess,
                                const std::vector<int>& node_of,
                                const std::vector<int>& features,
                                const std::vector<NodeStats>& stats,
                                int first) const {
    const std::size_t width = static_cast<std::size_t>(first);
    std::vector<std::vector<Candidate>> per_feature(features.size());
    parallel_for(features.size(), [&](std::size_t begin, std::size_t end) {
      std::vector<double> gl(width);
      std::vector<double> hl(width);
      std::vector<double> last(width);
      std::vector<bool> seen(width);
      for (std::size_t fi = begin; fi < end; ++fi) {
        const int f = features[fi];
        const auto column = data_.column(static_cast<std::size_t>(f));
        auto& best = per_feature[fi];
        best.assign(width, Candidate{});
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), false);
        for (std::uint32_t row : order_[static_cast<std::size_t>(f)]) {
          const int id = node_of[row];
          if (id < first || id >= 2 * first) continue;
          const std::size_t q = static_cast<std::size_t>(id - first);
          const double v = column[row];
          if (seen[q] && v != last[q]) {
            const NodeStats& s = stats[static_cast<std::size_t>(id)];
            const double gr = s.g - gl[q];
            const double hr = s.h - hl[q];
            if (hl[q] >= cfg_.min_child_weight &&
                hr >= cfg_.min_child_weight) {
              const double gain = 0.5 * (score(gl[q], hl[q]) + score(gr, hr) -
                                         score(s.g, s.h)) -
                                  cfg_.gamma;
              if (gain > best[q].gain) {
                double t = last[q] + (v - last[q]) / 2.0;
                if (!(t > last[q])) t = v;
                best[q] = {gain, f, t, gl[q], hl[q]};
              }
            }
          }
          seen[q] = true;
          last[q] = v;
          gl[q] += grad[row];
          hl[q] += hess[row];
        }
      }
    });
    std::vector<Candidate> best(width);
    for (const auto& cand : per_feature) {
      for (std::size_t q = 0; q < width; ++q) {
        if (cand[q].feature >= 0 && cand[q].gain > best[q].gain) best[q] = cand[q];
      }
    }
    return best;
  }

  const Dataset& data_;
  const std::vector<std::vector<std::uint32_t>>& order_;
  const TrainConfig& cfg_;
};

void check_response(const Dataset& data, const TrainConfig& cfg,
                    const char* what) {
  if (cfg.objective == Objective::binary_logistic &&
      !data.has_binary_response()) {
    throw DataError(std::string(what) +
                    " response must be 0/1 for the binary-logistic objective");
  }
}

}  // namespace

double mean_loss(Objective objective, std::span<const double> margin,
                 std::span<const double> y) {
  if (margin.size() != y.size() || y.empty()) {
    throw ArgumentError("margin and response lengths differ or are empty");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (objective == Objective::regression) {
      const double r = y[i] - margin[i];
      sum += r * r;
    } else {
      sum += y[i] * softplus(-margin[i]) + (1.0 - y[i]) * softplus(margin[i]);
    }
  }
  return sum / static_cast<double>(y.size());
}

Ensemble train(const Dataset& train_data, const Dataset& valid_data,
               const TrainConfig& cfg, TrainLog* log) {
  validate(cfg);
  if (train_data.n_rows() == 0 || valid_data.n_rows() == 0) {
    throw DataError("training and validation data must be non-empty");
  }
  if (train_data.feature_names() != valid_data.feature_names()) {
    throw DataError("training and validation data have different columns");
  }
  if (train_data.n_cols() == 0) throw DataError("no feature columns");
  check_response(train_data, cfg, "training");
  check_response(valid_data, cfg, "validation");

  const std::size_t n = train_data.n_rows();
  const std::size_t m = train_data.n_cols();
  const auto y = train_data.response();
  const auto yv = valid_data.response();

  const double mean_y =
      std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double base = mean_y;
  if (cfg.objective == Objective::binary_logistic) {
    if (mean_y <= 0.0 || mean_y >= 1.0) {
      throw DataError("training response has a single class");
    }
    base = std::log(mean_y / (1.0 - mean_y));
  }

  std::vector<std::vector<std::uint32_t>> order(m);
  for (std::size_t f = 0; f < m; ++f) {
    auto& idx = order[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0u);
    const auto col = train_data.column(f);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a,
                                                 std::uint32_t b) {
      return col[a] < col[b];
    });
  }

  std::vector<double> margin(n, base);
  std::vector<double> margin_valid(valid_data.n_rows(), base);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  std::vector<int> node_of(n);
  std::vector<std::uint32_t> rows(n);
  std::vector<int> all_features(m);
  std::iota(all_features.begin(), all_features.end(), 0);

  const std::size_t n_sample = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.subsample *
                                             static_cast<double>(n))));
  const std::size_t n_cols = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.colsample *
                                             static_cast<double>(m))));

  TreeGrower grower(train_data, order, cfg);
  std::vector<Tree> trees;
  TrainLog local_log;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_round = -1;

  for (int round = 0; round < cfg.max_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.objective == Objective::regression) {
        grad[i] = margin[i] - y[i];
        hess[i] = 1.0;
      } else {
        const double p = sigmoid(margin[i]);
        grad[i] = p - y[i];
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
    }

    Rng rng(cfg.seed, static_cast<std::uint64_t>(round));
    if (n_sample < n) {
      std::fill(node_of.begin(), node_of.end(), 0);
      std::iota(rows.begin(), rows.end(), 0u);
      for (std::size_t i = 0; i < n_sample; ++i) {
        std::swap(rows[i], rows[i + rng.below(n - i)]);
        node_of[rows[i]] = 1;
      }
    } else {
      std::fill(node_of.begin(), node_of.end(), 1);
    }
    std::vector<int> features = all_features;
    if (n_cols < m) {
      for (std::size_t i = 0; i < n_cols; ++i) {
        std::swap(features[i], features[i + rng.below(m - i)]);
      }
      features.resize(n_cols);
      std::sort(features.begin(), features.end());
    }

    Tree tree = grower.grow(grad, hess, node_of, features);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += predict_row(tree, train_data, i);
    }
    for (std::size_t i = 0; i < valid_data.n_rows(); ++i) {
      margin_valid[i] += predict_row(tree, valid_data, i);
    }
    trees.push_back(std::move(tree));

    local_log.train_loss.push_back(mean_loss(cfg.objective, margin, y));
    const double vloss = mean_loss(cfg.objective, margin_valid, yv);
    local_log.valid_loss.push_back(vloss);
    if (vloss < best_loss) {
      best_loss = vloss;
      best_round = round;
    } else if (cfg.early_stopping_rounds > 0 &&
               round - best_round >= cfg.early_stopping_rounds) {
      break;
    }
  }

  if (cfg.early_stopping_rounds > 0) {
    trees.resize(static_cast<std::size_t>(best_round + 1));
  } else {
    best_round = static_cast<int>(trees.size()) - 1;
  }
  local_log.best_round = best_round;
  if (log != nullptr) *log = std::move(local_log);
  return Ensemble(std::move(trees), static_cast<int>(m), base, cfg.objective);
}

}  // namespace subsage
