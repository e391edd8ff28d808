#include "subsage/shap_erfc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "subsage/detail/expect.hpp"
#include "subsage/error.hpp"
#include "subsage/parallel.hpp"

namespace subsage {

namespace {

constexpr std::size_t kMaxShapFeatures = 20;

// w[s] = s! (f - s - 1)! / f! for coalitions of size s out of f - 1 others.
std::vector<double> shapley_weights(std::size_t f) {
  std::vector<double> w(f);
  for (std::size_t s = 0; s < f; ++s) {
    double v = 1.0 / static_cast<double>(f);
    // s!(f-1-s)!/(f-1)! = 1 / C(f-1, s)
    double binom = 1.0;
    for (std::size_t i = 1; i <= s; ++i) {
      binom = binom * static_cast<double>(f - 1 - s + i) / static_cast<double>(i);
    }
    w[s] = v / binom;
  }
  return w;
}

}  // namespace

std::vector<double> ShapMatrix::column(std::size_t feature) const {
  std::vector<double> out(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) out[i] = at(i, feature);
  return out;
}

ShapMatrix shap_exact(const Ensemble& ensemble, const Dataset& data) {
  if (!ensemble.annotated()) {
    throw ModelError("ensemble has no branch probabilities; annotate it first");
  }
  if (data.n_cols() != static_cast<std::size_t>(ensemble.n_features())) {
    throw DataError("dataset/model feature count mismatch");
  }
  ShapMatrix out;
  out.n_rows = data.n_rows();
  out.n_features = data.n_cols();
  out.phi.assign(out.n_rows * out.n_features, 0.0);

  double phi0 = ensemble.base_score();
  for (const Tree& tree : ensemble.trees()) {
    if (tree.features().size() > kMaxShapFeatures) {
      throw ModelError("tree splits on more than " +
                       std::to_string(kMaxShapFeatures) +
                       " distinct features; exact SHAP is not supported");
    }
    phi0 += detail::expect_local(tree, 0, [](int) { return 0.0; });
  }
  out.phi0 = phi0;

  parallel_for(out.n_rows, [&](std::size_t begin, std::size_t end) {
    std::vector<double> v;
    for (const Tree& tree : ensemble.trees()) {
      const auto& features = tree.features();
      const std::size_t f = features.size();
      if (f == 0) continue;
      const auto weights = shapley_weights(f);
      const std::size_t n_masks = std::size_t{1} << f;
      v.resize(n_masks);
      for (std::size_t i = begin; i < end; ++i) {
        auto value = [&](int feat) {
          return data.value(i, static_cast<std::size_t>(feat));
        };
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
          v[mask] = detail::expect_local(tree, mask, value);
        }
        double* row = &out.phi[i * out.n_features];
        for (std::size_t j = 0; j < f; ++j) {
          const std::size_t bit = std::size_t{1} << j;
          double phi = 0.0;
          for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            phi += weights[static_cast<std::size_t>(std::popcount(mask))] *
                   (v[mask | bit] - v[mask]);
          }
          row[features[j]] += phi;
        }
      }
    }
  });
  return out;
}

std::vector<double> erfc(const ShapMatrix& shap) {
  std::vector<double> kappa(shap.n_features, 0.0);
  const double base = std::abs(shap.phi0);
  for (std::size_t i = 0; i < shap.n_rows; ++i) {
    double denom = base;
    for (std::size_t k = 0; k < shap.n_features; ++k) {
      denom += std::abs(shap.at(i, k));
    }
    if (denom == 0.0) continue;
    for (std::size_t k = 0; k < shap.n_features; ++k) {
      kappa[k] += std::abs(shap.at(i, k)) / denom;
    }
  }
  return kappa;
}

std::vector<RankedFeature> rank_features(const std::vector<double>& kappa,
                                         std::size_t top) {
  if (top > kappa.size()) {
    throw ArgumentError("top exceeds the number of features");
  }
  std::vector<RankedFeature> ranked;
  ranked.reserve(kappa.size());
  for (std::size_t k = 0; k < kappa.size(); ++k) {
    ranked.push_back({static_cast<int>(k), kappa[k]});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedFeature& a, const RankedFeature& b) {
                     return a.kappa > b.kappa;
                   });
  ranked.resize(top);
  return ranked;
}

}  // namespace subsage
