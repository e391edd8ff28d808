#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/tree_model.hpp"

namespace subsage {

struct TrainConfig {
  Objective objective = Objective::regression;
  double learning_rate = 0.05;
  int max_depth = 2;
  double subsample = 1.0;   // row fraction per round, without replacement
  double colsample = 1.0;   // feature fraction per tree
  double lambda = 1.0;      // L2 penalty on leaf values
  double gamma = 0.0;       // minimum gain for a split
  double min_child_weight = 1.0;
  int max_rounds = 1000;
  int early_stopping_rounds = 20;  // 0 disables
  std::uint64_t seed = 0;
};

// Throws ArgumentError when a field is out of range.
void validate(const TrainConfig& cfg);

struct TrainLog {
  std::vector<double> train_loss;  // after each round
  std::vector<double> valid_loss;
  int best_round = -1;  // 0-based; the returned model has best_round + 1 trees
};

// Second-order gradient boosting with exact greedy splits. Thresholds sit
// halfway between consecutive distinct values. Training stops once the
// validation loss has not improved for early_stopping_rounds rounds and the
// model is cut back to the best round. The result is unannotated.
Ensemble train(const Dataset& train_data, const Dataset& valid_data,
               const TrainConfig& cfg, TrainLog* log = nullptr);

// Mean squared error or mean binary cross-entropy of margins against y.
double mean_loss(Objective objective, std::span<const double> margin,
                 std::span<const double> y);

}  // namespace subsage
