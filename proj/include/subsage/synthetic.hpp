#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subsage/dataset.hpp"

namespace subsage {

// Law of one pure-noise column.
struct NoiseFeature {
  enum class Law { normal, binomial };
  Law law = Law::normal;
  double mu = 0.0;
  double sigma = 1.0;
  double p = 0.0;  // binomial success probability, size 2
};

// Six informative features followed by noise columns:
//   f = a0 + a1 X1 + a2 X2 + a21 X1 exp(X2) + a3 X3^2 + a4 sin X4
//       + a5 log(1 + X5) + a6 X5 I(X6 > 7) + eps,  eps ~ N(0, sigma_eps).
// X1 ~ Bin(2, 0.4), X2 ~ Bin(2, 0.04), X3 ~ Gamma(shape 10, rate 2),
// X4 ~ U(0, pi), X5 ~ Poisson(15), X6 ~ N(0, 10).
struct SyntheticConfig {
  std::size_t n = 16000;
  std::uint64_t seed = 0;
  double a0 = -0.5;
  double a1 = 0.03;
  double a2 = -0.05;
  double a21 = 0.3;
  double a3 = 0.02;
  double a4 = 0.35;
  double a5 = -0.2;
  double a6 = -1.0;
  double sigma_eps = 2.0;

  // Noise columns: the first n_normal_noise are normal, the rest Bin(2, p).
  int n_noise = 94;
  int n_normal_noise = 41;
  std::uint64_t noise_seed = 1;
  double mu_lo = -5.0;
  double mu_hi = 5.0;
  double sigma_lo = 0.5;
  double sigma_hi = 5.0;
  double p_lo = 0.05;
  double p_hi = 0.5;
};

inline constexpr int kInformativeFeatures = 6;

// Throws ArgumentError on n == 0 or inconsistent noise settings.
void validate(const SyntheticConfig& cfg);

// Noise-column laws, drawn once from noise_seed.
std::vector<NoiseFeature> noise_parameters(const SyntheticConfig& cfg);

// Feature names x1..x{6 + n_noise}.
std::vector<std::string> synthetic_feature_names(const SyntheticConfig& cfg);
// Kinds per column: binomial columns are binary-count, Poisson ordinal-count.
std::vector<FeatureKind> synthetic_feature_kinds(const SyntheticConfig& cfg);
CsvSchema synthetic_schema(const SyntheticConfig& cfg);

// Noise-free regression function of the six informative features.
double synthetic_mean(const SyntheticConfig& cfg,
                      std::span<const double> x_informative);

// Each column draws from its own seeded stream, so the output does not
// depend on generation order.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// Sidecar with every parameter, including the sampled noise laws and the
// column kinds.
std::string synthetic_config_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(std::string_view text);

struct SyntheticMoments {
  double e_x1 = 0.0;
  double e_x2 = 0.0;
  double e_exp_x2 = 0.0;
  double e_x5 = 0.0;
  double p6 = 0.0;  // P(X6 > 7)
};

SyntheticMoments exact_moments();

// Exact interventional SHAP of the true function for feature 1, 2, 6 or 12
// (1-based, as in the feature names). `x` is a full row, 0-based.
double true_shap(const SyntheticConfig& cfg, std::span<const double> x,
                 int feature, const SyntheticMoments& moments);

// 2 beta Cov(Y, X_k) - beta^2 Var(X_k).
double linreg_population_subsage(double beta, double cov_yk, double var_k);

// Same with sample moments (1 / (N - 1)) of column k and the response.
double linreg_sample_subsage(double beta, const Dataset& test, int k);

}  // namespace subsage
