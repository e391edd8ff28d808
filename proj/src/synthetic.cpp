#include "subsage/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"

#include "subsage/error.hpp"
#include "subsage/random.hpp"

namespace subsage {

namespace {

// Stream ids: column j (1-based) uses stream j, the noise term stream 0.
constexpr std::uint64_t kEpsStream = 0;

}  // namespace

void validate(const SyntheticConfig& cfg) {
  if (cfg.n == 0) throw ArgumentError("sample count must be positive");
  if (cfg.n_noise < 0 || cfg.n_normal_noise < 0 ||
      cfg.n_normal_noise > cfg.n_noise) {
    throw ArgumentError("inconsistent noise-feature counts");
  }
  if (!(cfg.sigma_eps >= 0.0)) throw ArgumentError("sigma_eps must be >= 0");
  if (!(cfg.mu_lo <= cfg.mu_hi) || !(0.0 < cfg.sigma_lo) ||
      !(cfg.sigma_lo <= cfg.sigma_hi) || !(0.0 <= cfg.p_lo) ||
      !(cfg.p_lo <= cfg.p_hi) || !(cfg.p_hi <= 1.0)) {
    throw ArgumentError("invalid noise-parameter ranges");
  }
}

std::vector<NoiseFeature> noise_parameters(const SyntheticConfig& cfg) {
  validate(cfg);
  std::vector<NoiseFeature> out(static_cast<std::size_t>(cfg.n_noise));
  for (int j = 0; j < cfg.n_noise; ++j) {
    Rng rng(cfg.noise_seed, static_cast<std::uint64_t>(j));
    auto& nf = out[static_cast<std::size_t>(j)];
    if (j < cfg.n_normal_noise) {
      nf.law = NoiseFeature::Law::normal;
      nf.mu = rng.uniform(cfg.mu_lo, cfg.mu_hi);
      nf.sigma = rng.uniform(cfg.sigma_lo, cfg.sigma_hi);
    } else {
      nf.law = NoiseFeature::Law::binomial;
      nf.p = rng.uniform(cfg.p_lo, cfg.p_hi);
    }
  }
  return out;
}

std::vector<std::string> synthetic_feature_names(const SyntheticConfig& cfg) {
  std::vector<std::string> names;
  for (int j = 1; j <= kInformativeFeatures + cfg.n_noise; ++j) {
    names.push_back("x" + std::to_string(j));
  }
  return names;
}

std::vector<FeatureKind> synthetic_feature_kinds(const SyntheticConfig& cfg) {
  std::vector<FeatureKind> kinds = {
      FeatureKind::binary_count, FeatureKind::binary_count,
      FeatureKind::continuous,   FeatureKind::continuous,
      FeatureKind::ordinal_count, FeatureKind::continuous};
  for (int j = 0; j < cfg.n_noise; ++j) {
    kinds.push_back(j < cfg.n_normal_noise ? FeatureKind::continuous
                                           : FeatureKind::binary_count);
  }
  return kinds;
}

CsvSchema synthetic_schema(const SyntheticConfig& cfg) {
  CsvSchema schema;
  const auto names = synthetic_feature_names(cfg);
  const auto kinds = synthetic_feature_kinds(cfg);
  for (std::size_t j = 0; j < names.size(); ++j) {
    schema.kinds[names[j]] = kinds[j];
  }
  return schema;
}

double synthetic_mean(const SyntheticConfig& cfg,
                      std::span<const double> x) {
  return cfg.a0 + cfg.a1 * x[0] + cfg.a2 * x[1] +
         cfg.a21 * x[0] * std::exp(x[1]) + cfg.a3 * x[2] * x[2] +
         cfg.a4 * std::sin(x[3]) + cfg.a5 * std::log1p(x[4]) +
         cfg.a6 * x[4] * (x[5] > 7.0 ? 1.0 : 0.0);
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  const auto noise = noise_parameters(cfg);
  const std::size_t n = cfg.n;
  const int m = kInformativeFeatures + cfg.n_noise;
  std::vector<std::vector<double>> columns(static_cast<std::size_t>(m),
                                           std::vector<double>(n));
  for (int j = 0; j < m; ++j) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(j + 1));
    auto& col = columns[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < n; ++i) {
      switch (j) {
        case 0:
          col[i] = rng.binomial(2, 0.4);
          break;
        case 1:
          col[i] = rng.binomial(2, 0.04);
          break;
        case 2:
          col[i] = rng.gamma(10.0, 2.0);
          break;
        case 3:
          col[i] = rng.uniform(0.0, std::numbers::pi);
          break;
        case 4:
          col[i] = rng.poisson(15.0);
          break;
        case 5:
          col[i] = rng.normal(0.0, 10.0);
          break;
        default: {
          const auto& nf = noise[static_cast<std::size_t>(j - 6)];
          col[i] = nf.law == NoiseFeature::Law::normal
                       ? rng.normal(nf.mu, nf.sigma)
                       : rng.binomial(2, nf.p);
        }
      }
    }
  }
  std::vector<double> y(n);
  Rng eps(cfg.seed, kEpsStream);
  double x[kInformativeFeatures];
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kInformativeFeatures; ++j) {
      x[j] = columns[static_cast<std::size_t>(j)][i];
    }
    y[i] = synthetic_mean(cfg, x) + eps.normal(0.0, cfg.sigma_eps);
  }
  return Dataset(synthetic_feature_names(cfg), synthetic_feature_kinds(cfg),
                 std::move(columns), std::move(y));
}

std::string synthetic_config_json(const SyntheticConfig& cfg) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["coefficients"] = {{"a0", cfg.a0},   {"a1", cfg.a1}, {"a2", cfg.a2},
                       {"a21", cfg.a21}, {"a3", cfg.a3}, {"a4", cfg.a4},
                       {"a5", cfg.a5},   {"a6", cfg.a6}};
  j["sigma_eps"] = cfg.sigma_eps;
  j["noise"] = {{"n_noise", cfg.n_noise},
                {"n_normal_noise", cfg.n_normal_noise},
                {"noise_seed", cfg.noise_seed},
                {"mu_range", {cfg.mu_lo, cfg.mu_hi}},
                {"sigma_range", {cfg.sigma_lo, cfg.sigma_hi}},
                {"p_range", {cfg.p_lo, cfg.p_hi}}};
  const auto names = synthetic_feature_names(cfg);
  const auto kinds = synthetic_feature_kinds(cfg);
  ordered_json laws = ordered_json::array();
  laws.push_back({{"name", names[0]}, {"law", "binomial"}, {"size", 2}, {"p", 0.4}});
  laws.push_back({{"name", names[1]}, {"law", "binomial"}, {"size", 2}, {"p", 0.04}});
  laws.push_back({{"name", names[2]}, {"law", "gamma"}, {"shape", 10.0}, {"rate", 2.0}});
  laws.push_back({{"name", names[3]}, {"law", "uniform"}, {"lo", 0.0}, {"hi", std::numbers::pi}});
  laws.push_back({{"name", names[4]}, {"law", "poisson"}, {"rate", 15.0}});
  laws.push_back({{"name", names[5]}, {"law", "normal"}, {"mu", 0.0}, {"sigma", 10.0}});
  const auto noise = noise_parameters(cfg);
  for (std::size_t j = 0; j < noise.size(); ++j) {
    const auto& nf = noise[j];
    if (nf.law == NoiseFeature::Law::normal) {
      laws.push_back({{"name", names[j + 6]}, {"law", "normal"},
                      {"mu", nf.mu}, {"sigma", nf.sigma}});
    } else {
      laws.push_back({{"name", names[j + 6]}, {"law", "binomial"},
                      {"size", 2}, {"p", nf.p}});
    }
  }
  j["features"] = std::move(laws);
  ordered_json kind_map = ordered_json::object();
  for (std::size_t c = 0; c < names.size(); ++c) {
    kind_map[names[c]] = std::string(to_string(kinds[c]));
  }
  j["kinds"] = std::move(kind_map);
  j["response"] = "y";
  return j.dump(2);
}

SyntheticConfig synthetic_config_from_json(std::string_view text) {
  using nlohmann::json;
  SyntheticConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.n = j.at("n").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const auto& c = j.at("coefficients");
    cfg.a0 = c.at("a0").get<double>();
    cfg.a1 = c.at("a1").get<double>();
    cfg.a2 = c.at("a2").get<double>();
    cfg.a21 = c.at("a21").get<double>();
    cfg.a3 = c.at("a3").get<double>();
    cfg.a4 = c.at("a4").get<double>();
    cfg.a5 = c.at("a5").get<double>();
    cfg.a6 = c.at("a6").get<double>();
    cfg.sigma_eps = j.at("sigma_eps").get<double>();
    const auto& nz = j.at("noise");
    cfg.n_noise = nz.at("n_noise").get<int>();
    cfg.n_normal_noise = nz.at("n_normal_noise").get<int>();
    cfg.noise_seed = nz.at("noise_seed").get<std::uint64_t>();
    cfg.mu_lo = nz.at("mu_range").at(0).get<double>();
    cfg.mu_hi = nz.at("mu_range").at(1).get<double>();
    cfg.sigma_lo = nz.at("sigma_range").at(0).get<double>();
    cfg.sigma_hi = nz.at("sigma_range").at(1).get<double>();
    cfg.p_lo = nz.at("p_range").at(0).get<double>();
    cfg.p_hi = nz.at("p_range").at(1).get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid synthetic config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

SyntheticMoments exact_moments() {
  SyntheticMoments m;
  m.e_x1 = 2.0 * 0.4;
  m.e_x2 = 2.0 * 0.04;
  const double q = 1.0 - 0.04 + 0.04 * std::numbers::e;
  m.e_exp_x2 = q * q;
  m.e_x5 = 15.0;
  // P(N(0, 10) > 7) = 1 - Phi(0.7).
  m.p6 = 0.5 * std::erfc(0.7 / std::numbers::sqrt2);
  return m;
}

double true_shap(const SyntheticConfig& cfg, std::span<const double> x,
                 int feature, const SyntheticMoments& mo) {
  if (feature == 12) return 0.0;
  if (x.size() < static_cast<std::size_t>(kInformativeFeatures)) {
    throw ArgumentError("row too short for the informative features");
  }
  switch (feature) {
    case 1: {
      const double dx1 = x[0] - mo.e_x1;
      return cfg.a1 * dx1 +
             0.5 * cfg.a21 * (mo.e_exp_x2 + std::exp(x[1])) * dx1;
    }
    case 2:
      return cfg.a2 * (x[1] - mo.e_x2) +
             0.5 * cfg.a21 * (x[0] + mo.e_x1) *
                 (std::exp(x[1]) - mo.e_exp_x2);
    case 6:
      return 0.5 * cfg.a6 * ((x[5] > 7.0 ? 1.0 : 0.0) - mo.p6) *
             (x[4] + mo.e_x5);
    default:
      throw ArgumentError("no closed-form SHAP for feature " +
                          std::to_string(feature) +
                          " (supported: 1, 2, 6, 12)");
  }
}

double linreg_population_subsage(double beta, double cov_yk, double var_k) {
  if (var_k < 0.0) throw ArgumentError("variance must be non-negative");
  return 2.0 * beta * cov_yk - beta * beta * var_k;
}

double linreg_sample_subsage(double beta, const Dataset& test, int k) {
  const std::size_t n = test.n_rows();
  if (n < 2) throw DataError("sample estimate needs at least 2 rows");
  if (k < 0 || static_cast<std::size_t>(k) >= test.n_cols()) {
    throw ArgumentError("feature index out of range");
  }
  const auto x = test.column(static_cast<std::size_t>(k));
  const auto y = test.response();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    var += (x[i] - mx) * (x[i] - mx);
  }
  cov /= static_cast<double>(n - 1);
  var /= static_cast<double>(n - 1);
  return 2.0 * beta * cov - beta * beta * var;
}

}  // namespace subsage
