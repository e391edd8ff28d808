#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "subsage/bootstrap.hpp"
#include "subsage/error.hpp"
#include "subsage/parallel.hpp"

using namespace subsage;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Textbook BCa with order statistic ceil(B * level).
std::pair<double, double> reference_bca(std::vector<double> draws, double point, double alpha,
                                        double a) {
  std::sort(draws.begin(), draws.end());
  const double b = static_cast<double>(draws.size());
  double below = 0.0;
  for (double d : draws) below += d < point ? 1.0 : (d == point ? 0.5 : 0.0);
  const double z0 = normal_quantile(below / b);
  auto endpoint = [&](double q) {
    const double z = z0 + normal_quantile(q);
    const double level = normal_cdf(z0 + z / (1.0 - a * z));
    const double idx = std::clamp(std::ceil(b * level - 1e-9), 1.0, b);
    return draws[static_cast<std::size_t>(idx) - 1];
  };
  return {endpoint(alpha), endpoint(1.0 - alpha)};
}

}  // namespace

TEST_CASE("percentile interval conventions") {
  const std::vector<double> five = {3, 1, 5, 2, 4};
  CHECK(percentile_interval(five, 0.2) == Interval{1.0, 4.0});

  std::vector<double> thousand(1000);
  for (std::size_t i = 0; i < 1000; ++i) thousand[i] = static_cast<double>(999 - i);
  // 25th and 975th smallest are 24 and 974.
  CHECK(percentile_interval(thousand, 0.025) == Interval{24.0, 974.0});

  const std::vector<double> constant(17, 2.5);
  CHECK(percentile_interval(constant, 0.05) == Interval{2.5, 2.5});

  CHECK_THROWS_AS(percentile_interval(std::vector<double>{}, 0.1), ArgumentError);
  CHECK_THROWS_AS(percentile_interval(five, 0.5), ArgumentError);
  CHECK_THROWS_AS(percentile_interval(five, 0.0), ArgumentError);
}

TEST_CASE("percentile endpoints are draws, nest, and do not depend on order") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.01, 0.49);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> draws(2 + rng() % 300);
    for (auto& d : draws) d = std::round(z(rng) * 20.0) / 10.0;
    double a1 = u(rng);
    double a2 = u(rng);
    if (a1 > a2) std::swap(a1, a2);
    const Interval wide = percentile_interval(draws, a1);
    const Interval narrow = percentile_interval(draws, a2);
    CHECK(wide.first <= narrow.first);
    CHECK(narrow.second <= wide.second);
    CHECK(wide.first <= wide.second);
    CHECK(std::find(draws.begin(), draws.end(), wide.first) != draws.end());
    CHECK(std::find(draws.begin(), draws.end(), wide.second) != draws.end());
    std::vector<double> shuffled = draws;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(percentile_interval(shuffled, a1) == wide);
  }
}

TEST_CASE("BCa with zero acceleration reduces to percentile for symmetric draws") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 50; ++rep) {
    const double centre = z(rng);
    std::vector<double> draws;
    for (int i = 0; i < 500; ++i) {
      const double d = std::abs(z(rng)) + 1e-3;
      draws.push_back(centre + d);
      draws.push_back(centre - d);
    }
    const BcaResult r = bca_interval(draws, centre, 0.025, 0.0);
    CHECK(r.z0 == 0.0);
    const Interval p = percentile_interval(draws, 0.025);
    CHECK(r.lo == p.first);
    CHECK(r.hi == p.second);
  }
}

TEST_CASE("BCa on skewed draws follows the skew and the textbook formula") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::vector<double> draws(2000);
  for (auto& d : draws) d = std::exp(0.6 * z(rng));
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= static_cast<double>(draws.size());
  const Interval p = percentile_interval(draws, 0.05);
  const BcaResult r = bca_interval(draws, mean, 0.05, 0.0);
  CHECK(r.z0 > 0.0);
  CHECK(r.lo >= p.first);
  CHECK(r.hi >= p.second);
  CHECK((r.lo > p.first || r.hi > p.second));
  const auto ref = reference_bca(draws, mean, 0.05, 0.0);
  CHECK(r.lo == ref.first);
  CHECK(r.hi == ref.second);

  const BcaResult ra = bca_interval(draws, mean, 0.05, 0.05);
  const auto refa = reference_bca(draws, mean, 0.05, 0.05);
  CHECK(ra.lo == refa.first);
  CHECK(ra.hi == refa.second);
  CHECK(ra.a == 0.05);
}

TEST_CASE("BCa rejects a one-sided bootstrap distribution") {
  const std::vector<double> draws = {1, 2, 3, 4};
  CHECK_THROWS_AS(bca_interval(draws, 0.5, 0.1, 0.0), NumericError);
  CHECK_THROWS_AS(bca_interval(draws, 4.5, 0.1, 0.0), NumericError);
  const std::vector<double> ties(10, 1.0);
  const BcaResult r = bca_interval(ties, 1.0, 0.1, 0.0);
  CHECK(r.z0 == 0.0);
  CHECK(r.lo == 1.0);
  CHECK(r.hi == 1.0);
}

TEST_CASE("jackknife acceleration") {
  CHECK(jackknife_acceleration(std::vector<double>{2.0, 2.0, 2.0}) == 0.0);
  const std::vector<double> sym = {1.0, 2.0, 3.0};
  CHECK(jackknife_acceleration(sym) == 0.0);
  // mean 1, deviations (mean - theta) = (1, 1, -2): s2 = 6, s3 = -6.
  const std::vector<double> skew = {0.0, 0.0, 3.0};
  CHECK(jackknife_acceleration(skew) ==
        doctest::Approx(-6.0 / (6.0 * std::pow(6.0, 1.5))).epsilon(1e-15));
  CHECK_THROWS_AS(jackknife_acceleration(std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("jackknife values re-estimate on each leave-one-out set") {
  std::mt19937_64 rng(10);
  const Dataset test = oracle::random_dataset(rng, 4, 15);
  const Ensemble e = annotate_probabilities(oracle::random_ensemble(rng, test, 6, 2), test);
  const auto values = jackknife_values(e, 1, test, LossKind::squared_error);
  REQUIRE(values.size() == 15);
  for (std::size_t i = 0; i < 15; ++i) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < 15; ++r) {
      if (r != i) keep.push_back(r);
    }
    const Dataset rest = test.select_rows(keep);
    const double expect =
        subsage_estimate(annotate_probabilities(e, rest), 1, rest, LossKind::squared_error)
            .psi_hat;
    CHECK(std::abs(values[i] - expect) < 1e-12);
  }
  CHECK_THROWS_AS(jackknife_values(e, 1, test.select_rows(std::vector<std::size_t>{0, 1}),
                                   LossKind::squared_error),
                  DataError);
}

TEST_CASE("each draw is the estimate on its re-annotated replicate") {
  std::mt19937_64 rng(11);
  const Dataset test = oracle::random_dataset(rng, 5, 60);
  const Ensemble e = oracle::random_ensemble(rng, test, 10, 2);
  BootstrapConfig cfg;
  cfg.B = 40;
  cfg.alpha = 0.05;
  cfg.seed = 123;
  const BootstrapResult r = paired_bootstrap(e, 2, test, LossKind::squared_error, cfg);
  REQUIRE(r.draws.size() == 40);
  const Ensemble annotated = annotate_probabilities(e, test);
  CHECK(r.point_estimate() ==
        doctest::Approx(subsage_estimate(annotated, 2, test, LossKind::squared_error).psi_hat)
            .epsilon(1e-12));
  for (std::size_t b = 1; b <= cfg.B; ++b) {
    const Dataset rep = resample(test, ResampleIndex::draw(60, cfg.seed, b));
    const double expect =
        subsage_estimate(annotate_probabilities(e, rep), 2, rep, LossKind::squared_error).psi_hat;
    CHECK(std::abs(r.draws[b - 1] - expect) < 1e-12);
  }
  CHECK(r.percentile == percentile_interval(r.draws, 0.05));
  CHECK_FALSE(r.bca.has_value());
}

TEST_CASE("draws are identical across runs and thread counts") {
  std::mt19937_64 rng(12);
  const Dataset test = oracle::random_dataset(rng, 4, 80);
  const Ensemble e = oracle::random_ensemble(rng, test, 12, 3);
  BootstrapConfig cfg;
  cfg.B = 64;
  cfg.seed = 5;
  const int saved = thread_count();
  set_thread_count(1);
  const auto one = paired_bootstrap(e, 0, test, LossKind::squared_error, cfg).draws;
  set_thread_count(4);
  const auto four = paired_bootstrap(e, 0, test, LossKind::squared_error, cfg).draws;
  const auto again = paired_bootstrap(e, 0, test, LossKind::squared_error, cfg).draws;
  set_thread_count(saved);
  CHECK(one == four);
  CHECK(four == again);
  cfg.seed = 6;
  CHECK(paired_bootstrap(e, 0, test, LossKind::squared_error, cfg).draws != one);
}

TEST_CASE("an unused feature gives zero draws and a (0, 0) interval") {
  std::mt19937_64 rng(13);
  const Dataset test = oracle::random_dataset(rng, 4, 50);
  const Ensemble e = oracle::random_ensemble(rng, test, 8, 2, Objective::regression, {0, 1});
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    BootstrapConfig cfg;
    cfg.B = 30;
    cfg.seed = seed;
    cfg.alpha = 0.1;
    const auto r = paired_bootstrap(e, 3, test, LossKind::squared_error, cfg);
    CHECK(r.point_estimate() == 0.0);
    for (double d : r.draws) CHECK(d == 0.0);
    CHECK(r.percentile == Interval{0.0, 0.0});
  }
}

TEST_CASE("identical rows give identical draws") {
  std::mt19937_64 rng(14);
  const Dataset base = oracle::random_dataset(rng, 3, 10);
  const Dataset test = base.select_rows(std::vector<std::size_t>(25, 4));
  const Ensemble e = oracle::random_ensemble(rng, base, 5, 2);
  BootstrapConfig cfg;
  cfg.B = 20;
  cfg.acceleration = Acceleration::zero;
  const auto r = paired_bootstrap(e, 0, test, LossKind::squared_error, cfg);
  for (double d : r.draws) CHECK(d == r.point_estimate());
  CHECK(r.percentile.first == r.percentile.second);
  REQUIRE(r.bca.has_value());
  CHECK(r.bca->lo == r.bca->hi);
}

TEST_CASE("jackknife acceleration flows into the result") {
  std::mt19937_64 rng(15);
  const Dataset test = oracle::random_dataset(rng, 4, 40);
  const Ensemble e = oracle::random_ensemble(rng, test, 8, 2);
  BootstrapConfig cfg;
  cfg.B = 200;
  cfg.acceleration = Acceleration::jackknife;
  const auto r = paired_bootstrap(e, 0, test, LossKind::squared_error, cfg);
  REQUIRE(r.bca.has_value());
  const double a = jackknife_acceleration(
      jackknife_values(annotate_probabilities(e, test), 0, test, LossKind::squared_error));
  CHECK(r.bca->a == a);
}

TEST_CASE("bootstrap configuration checks") {
  BootstrapConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  CHECK_FALSE(alpha_too_small(cfg));
  cfg.B = 1;
  CHECK_THROWS_AS(validate(cfg), ArgumentError);
  cfg.B = 10;
  cfg.alpha = 0.5;
  CHECK_THROWS_AS(validate(cfg), ArgumentError);
  cfg.alpha = 0.05;
  CHECK(alpha_too_small(cfg));
  CHECK(acceleration_from_string("zero") == Acceleration::zero);
  CHECK(to_string(Acceleration::jackknife) == "jackknife");
  CHECK_THROWS_AS(acceleration_from_string("fast"), ArgumentError);

  std::mt19937_64 rng(16);
  const Dataset one = oracle::random_dataset(rng, 3, 1);
  const Ensemble e = oracle::random_ensemble(rng, one, 2, 1);
  CHECK_THROWS_AS(paired_bootstrap(e, 0, one, LossKind::squared_error, BootstrapConfig{}),
                  DataError);
}

TEST_CASE("report JSON layout") {
  std::mt19937_64 rng(17);
  const Dataset test = oracle::random_dataset(rng, 3, 30);
  const Ensemble e = oracle::random_ensemble(rng, test, 6, 2);
  BootstrapConfig cfg;
  cfg.B = 20;
  cfg.alpha = 0.1;
  cfg.seed = 9;
  const auto r = paired_bootstrap(e, 1, test, LossKind::squared_error, cfg);
  const auto j = nlohmann::json::parse(report_json(r, test.feature_names(), LossKind::squared_error, cfg));
  CHECK(j.at("feature") == "f1");
  CHECK(j.at("psi_hat").get<double>() == r.point_estimate());
  CHECK(j.at("loss") == "squared_error");
  CHECK(j.at("B") == 20);
  CHECK(j.at("seed") == 9);
  CHECK(j.at("percentile").at(0).get<double>() == r.percentile.first);
  CHECK(j.at("bca").is_null());
  CHECK(j.at("z0").is_null());
  CHECK_FALSE(j.contains("draws"));
  const auto& d = j.at("per_subset_deltas");
  CHECK(d.size() == 4);
  CHECK(d.contains("{}"));
  CHECK(d.contains("{f0}"));
  CHECK(d.contains("all\\f1"));

  const auto with = nlohmann::json::parse(
      report_json(r, test.feature_names(), LossKind::squared_error, cfg, {true}));
  CHECK(with.at("draws").get<std::vector<double>>() == r.draws);
}

TEST_CASE("histogram counts every draw") {
  const std::vector<double> draws = {0.0, 0.1, 0.5, 0.9, 1.0};
  const std::string csv = histogram_csv(draws, 2);
  CHECK(csv.rfind("bin_lo,bin_hi,count\n", 0) == 0);
  std::size_t total = 0;
  std::size_t lines = 0;
  std::size_t pos = csv.find('\n') + 1;
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    const std::string line = csv.substr(pos, end - pos);
    total += std::stoul(line.substr(line.rfind(',') + 1));
    ++lines;
    pos = end + 1;
  }
  CHECK(lines == 2);
  CHECK(total == 5);
  CHECK_THROWS_AS(histogram_csv(draws, 0), ArgumentError);
}
