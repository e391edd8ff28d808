#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subsage/dataset.hpp"
#include "subsage/subsage.hpp"
#include "subsage/tree_model.hpp"

namespace subsage {

enum class Acceleration { off, zero, jackknife };

std::string_view to_string(Acceleration mode);
Acceleration acceleration_from_string(std::string_view name);

struct BootstrapConfig {
  std::size_t B = 1000;
  double alpha = 0.025;  // each tail; coverage 1 - 2 alpha
  std::uint64_t seed = 0;
  Acceleration acceleration = Acceleration::off;
};

// Throws ArgumentError unless B >= 2 and 0 < alpha < 0.5.
void validate(const BootstrapConfig& cfg);
// True when B * alpha < 1, i.e. the lower endpoint is the minimum draw.
bool alpha_too_small(const BootstrapConfig& cfg);

using Interval = std::pair<double, double>;

struct BcaResult {
  double lo = 0.0;
  double hi = 0.0;
  double z0 = 0.0;
  double a = 0.0;
};

struct BootstrapResult {
  SubSageEstimate estimate;  // on the original test rows
  std::vector<double> draws;  // slot b - 1 holds replicate b
  Interval percentile{0.0, 0.0};
  std::optional<BcaResult> bca;

  double point_estimate() const { return estimate.psi_hat; }
};

// Order statistics ceil(B alpha) and ceil(B (1 - alpha)), 1-indexed and
// clamped to [1, B].
Interval percentile_interval(std::span<const double> draws, double alpha);

// z0 = Phi^-1(share of draws below point, ties counted half) and endpoints at
// the BCa-adjusted levels. Throws NumericError when every draw lies on one
// side of the point.
BcaResult bca_interval(std::span<const double> draws, double point,
                       double alpha, double acceleration);

// a = sum (mean - theta_i)^3 / (6 [sum (mean - theta_i)^2]^(3/2)); 0 when
// all leave-one-out values coincide.
double jackknife_acceleration(std::span<const double> leave_one_out);

// Leave-one-out estimates, each on the remaining N - 1 rows with branch
// probabilities re-estimated on those rows.
std::vector<double> jackknife_values(const Ensemble& ensemble, int k,
                                     const Dataset& test, LossKind loss);

// Paired bootstrap: replicate b resamples rows with ResampleIndex(seed, b),
// re-estimates every branch probability on the replicate and recomputes
// psi_hat. Draws do not depend on the thread count.
BootstrapResult paired_bootstrap(const Ensemble& ensemble, int k,
                                 const Dataset& test, LossKind loss,
                                 const BootstrapConfig& cfg);

struct ReportOptions {
  bool include_draws = false;
};

// JSON object for one feature's result.
std::string report_json(const BootstrapResult& result,
                        const std::vector<std::string>& feature_names,
                        LossKind loss, const BootstrapConfig& cfg,
                        const ReportOptions& options = {});

// Equal-width histogram of draws: bin_lo,bin_hi,count.
std::string histogram_csv(std::span<const double> draws, std::size_t bins);

}  // namespace subsage
