#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/tree_model.hpp"

namespace subsage {

// Interventional SHAP values for every row of a dataset.
struct ShapMatrix {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> phi;  // row-major N x M
  double phi0 = 0.0;        // v(∅), shared by all rows

  double at(std::size_t row, std::size_t feature) const {
    return phi[row * n_features + feature];
  }
  std::vector<double> column(std::size_t feature) const;
};

// Exact SHAP under feature independence. Each tree is solved on its own
// feature set by enumerating all 2^|features| coalitions; features outside
// a tree are null players there. The ensemble must be annotated.
ShapMatrix shap_exact(const Ensemble& ensemble, const Dataset& data);

// kappa_k = sum_i |phi_ik| / (|phi0| + sum_j |phi_ij|). Rows whose
// denominator is zero contribute nothing.
std::vector<double> erfc(const ShapMatrix& shap);

struct RankedFeature {
  int feature;
  double kappa;
};

// Descending by kappa, ties by ascending feature index.
std::vector<RankedFeature> rank_features(const std::vector<double>& kappa,
                                         std::size_t top);

}  // namespace subsage
