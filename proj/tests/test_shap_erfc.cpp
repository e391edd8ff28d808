#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "subsage/cond_expect.hpp"
#include "subsage/error.hpp"
#include "subsage/shap_erfc.hpp"

using namespace subsage;

TEST_CASE("a single stump gives its feature the centred prediction") {
  std::mt19937_64 rng(1);
  const Dataset data = oracle::random_dataset(rng, 3, 40);
  const Ensemble e = annotate_probabilities(
      Ensemble({Tree::stump(1, 2.5, -1.0, 3.0)}, 3, 0.0, Objective::regression), data);
  const ShapMatrix s = shap_exact(e, data);
  const double mean = cond_exp_ensemble(e, SubsetMask::none(3));
  CHECK(s.phi0 == mean);
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    CHECK(s.at(i, 1) == doctest::Approx(predict_margin(e, data.row(i)) - mean).epsilon(1e-14));
    CHECK(s.at(i, 0) == 0.0);
    CHECK(s.at(i, 2) == 0.0);
  }
}

TEST_CASE("local efficiency on random ensembles") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = 3 + static_cast<int>(rng() % 5);
    const Dataset data = oracle::random_dataset(rng, m, 30);
    const Ensemble e =
        annotate_probabilities(oracle::random_ensemble(rng, data, 8, 1 + rep % 4), data);
    const ShapMatrix s = shap_exact(e, data);
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
      double total = s.phi0;
      for (int j = 0; j < m; ++j) total += s.at(i, static_cast<std::size_t>(j));
      CHECK(std::abs(total - predict_margin(e, data.row(i))) < 1e-9);
    }
  }
}

TEST_CASE("SHAP equals brute-force Shapley over all features") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 2 + static_cast<int>(rng() % 4);
    const Dataset data = oracle::random_dataset(rng, m, 15);
    const Ensemble e = annotate_probabilities(oracle::random_ensemble(rng, data, 4, 2), data);
    const ShapMatrix s = shap_exact(e, data);
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
      const auto phi = oracle::brute_force_shap(e, data.row(i));
      for (int j = 0; j < m; ++j) {
        CHECK(std::abs(s.at(i, static_cast<std::size_t>(j)) - phi[static_cast<std::size_t>(j)]) <
              1e-12);
      }
    }
  }
}

TEST_CASE("mirrored features receive equal attributions") {
  std::vector<double> a = {0, 1, 2, 0, 1, 2, 2, 1, 0, 2};
  const Dataset data({"a", "b", "c"},
                     {FeatureKind::continuous, FeatureKind::continuous, FeatureKind::continuous},
                     {a, a, std::vector<double>(10, 0.0)}, std::vector<double>(10, 0.0));
  const Tree t = Tree::from_specs({{1, std::nullopt, 0, 1.5, 2, 3, std::nullopt},
                                   {2, std::nullopt, 1, 1.5, 4, 5, std::nullopt},
                                   {3, std::nullopt, 1, 1.5, 6, 7, std::nullopt},
                                   {4, 1.0, -1, 0, -1, -1, std::nullopt},
                                   {5, 2.0, -1, 0, -1, -1, std::nullopt},
                                   {6, 2.0, -1, 0, -1, -1, std::nullopt},
                                   {7, 5.0, -1, 0, -1, -1, std::nullopt}});
  const Ensemble e = annotate_probabilities(Ensemble({t}, 3, 0.0, Objective::regression), data);
  const ShapMatrix s = shap_exact(e, data);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::abs(s.at(i, 0) - s.at(i, 1)) < 1e-9);
    CHECK(s.at(i, 2) == 0.0);
  }
}

TEST_CASE("SHAP is additive across trees") {
  std::mt19937_64 rng(4);
  const Dataset data = oracle::random_dataset(rng, 4, 25);
  const Ensemble both = annotate_probabilities(oracle::random_ensemble(rng, data, 2, 2), data);
  const Ensemble first({both.tree(0)}, 4, 0.0, Objective::regression);
  const Ensemble second({both.tree(1)}, 4, 0.0, Objective::regression);
  const ShapMatrix s = shap_exact(both, data);
  const ShapMatrix s1 = shap_exact(first, data);
  const ShapMatrix s2 = shap_exact(second, data);
  for (std::size_t i = 0; i < s.phi.size(); ++i) CHECK(s.phi[i] == s1.phi[i] + s2.phi[i]);
  CHECK(s.phi0 == doctest::Approx(both.base_score() + s1.phi0 + s2.phi0).epsilon(1e-15));
}

TEST_CASE("shap_exact needs annotation and matching columns") {
  std::mt19937_64 rng(5);
  const Dataset data = oracle::random_dataset(rng, 3, 10);
  const Ensemble e = oracle::random_ensemble(rng, data, 3, 2);
  CHECK_THROWS_AS(shap_exact(e, data), ModelError);
  const Dataset narrow = oracle::random_dataset(rng, 2, 10);
  CHECK_THROWS(shap_exact(annotate_probabilities(e, data), narrow));
}

TEST_CASE("erfc arithmetic") {
  ShapMatrix s;
  s.n_rows = 1;
  s.n_features = 2;
  s.phi = {1.0, 1.0};
  s.phi0 = 1.0;
  const auto k = erfc(s);
  CHECK(k[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(k[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  ShapMatrix z;
  z.n_rows = 3;
  z.n_features = 3;
  z.phi = {1, 0, -2, 0, 0, 0, 3, 0, 1};
  z.phi0 = 0.0;
  const auto kz = erfc(z);
  CHECK(kz[1] == 0.0);
  // The all-zero middle row contributes nothing; rows are not averaged.
  CHECK(kz[0] == doctest::Approx(1.0 / 3.0 + 3.0 / 4.0).epsilon(1e-15));
  CHECK(kz[2] == doctest::Approx(2.0 / 3.0 + 1.0 / 4.0).epsilon(1e-15));
}

TEST_CASE("unused features have zero SHAP and zero kappa") {
  std::mt19937_64 rng(6);
  const Dataset data = oracle::random_dataset(rng, 5, 30);
  const std::vector<int> allowed = {0, 2, 4};
  const Ensemble e = annotate_probabilities(
      oracle::random_ensemble(rng, data, 6, 2, Objective::regression, allowed), data);
  const ShapMatrix s = shap_exact(e, data);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(s.at(i, 1) == 0.0);
    CHECK(s.at(i, 3) == 0.0);
  }
  const auto k = erfc(s);
  CHECK(k[1] == 0.0);
  CHECK(k[3] == 0.0);
}

TEST_CASE("rank_features ordering") {
  const auto r = rank_features({0.1, 0.5, 0.3}, 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].feature == 1);
  CHECK(r[0].kappa == 0.5);
  CHECK(r[1].feature == 2);
  CHECK(r[1].kappa == 0.3);

  std::vector<double> tie(8, 0.0);
  tie[3] = 0.7;
  tie[7] = 0.7;
  const auto t = rank_features(tie, 2);
  CHECK(t[0].feature == 3);
  CHECK(t[1].feature == 7);

  const auto all = rank_features({0.2, 0.2, 0.9, 0.0}, 4);
  std::vector<int> order;
  for (const auto& f : all) order.push_back(f.feature);
  CHECK(order == std::vector<int>{2, 0, 1, 3});
  CHECK_THROWS_AS(rank_features({0.1, 0.2}, 3), ArgumentError);
}
