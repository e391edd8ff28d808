#include "subsage/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include "json.hpp"

#include "subsage/error.hpp"
#include "subsage/format.hpp"
#include "subsage/parallel.hpp"

namespace subsage {

std::string_view to_string(Acceleration mode) {
  switch (mode) {
    case Acceleration::off:
      return "off";
    case Acceleration::zero:
      return "zero";
    case Acceleration::jackknife:
      return "jackknife";
  }
  return "off";
}

Acceleration acceleration_from_string(std::string_view name) {
  if (name == "off") return Acceleration::off;
  if (name == "zero") return Acceleration::zero;
  if (name == "jackknife") return Acceleration::jackknife;
  throw ArgumentError("unknown BCa mode '" + std::string(name) +
                      "' (expected off, zero or jackknife)");
}

void validate(const BootstrapConfig& cfg) {
  if (cfg.B < 2) throw ArgumentError("bootstrap needs B >= 2");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 0.5)) {
    throw ArgumentError("alpha must lie in (0, 0.5)");
  }
}

bool alpha_too_small(const BootstrapConfig& cfg) {
  return static_cast<double>(cfg.B) * cfg.alpha < 1.0;
}

namespace {

// 1-indexed order statistic ceil(B q), with B q snapped to an integer when
// it is one up to rounding.
std::size_t order_index(std::size_t b, double q) {
  double x = static_cast<double>(b) * q;
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9) x = r;
  const double c = std::ceil(x);
  if (c < 1.0) return 1;
  if (c > static_cast<double>(b)) return b;
  return static_cast<std::size_t>(c);
}

std::vector<double> sorted_copy(std::span<const double> draws) {
  std::vector<double> s(draws.begin(), draws.end());
  std::sort(s.begin(), s.end());
  return s;
}

const boost::math::normal_distribution<double> kStdNormal;

double phi(double z) { return boost::math::cdf(kStdNormal, z); }
double phi_inv(double p) { return boost::math::quantile(kStdNormal, p); }

}  // namespace

Interval percentile_interval(std::span<const double> draws, double alpha) {
  if (draws.empty()) throw ArgumentError("no bootstrap draws");
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw ArgumentError("alpha must lie in (0, 0.5)");
  }
  const auto s = sorted_copy(draws);
  const std::size_t b = s.size();
  return {s[order_index(b, alpha) - 1], s[order_index(b, 1.0 - alpha) - 1]};
}

BcaResult bca_interval(std::span<const double> draws, double point,
                       double alpha, double acceleration) {
  if (draws.empty()) throw ArgumentError("no bootstrap draws");
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw ArgumentError("alpha must lie in (0, 0.5)");
  }
  const std::size_t b = draws.size();
  double below = 0.0;
  for (double d : draws) {
    if (d < point) {
      below += 1.0;
    } else if (d == point) {
      below += 0.5;
    }
  }
  const double share = below / static_cast<double>(b);
  if (share <= 0.0 || share >= 1.0) {
    throw NumericError(
        "degenerate bootstrap distribution: every draw lies on one side of "
        "the point estimate, bias correction is infinite");
  }
  BcaResult out;
  out.z0 = phi_inv(share);
  out.a = acceleration;
  auto level = [&](double q) {
    const double z = out.z0 + phi_inv(q);
    const double denom = 1.0 - acceleration * z;
    if (!(denom > 0.0)) {
      throw NumericError("BCa adjustment undefined for this acceleration");
    }
    return phi(out.z0 + z / denom);
  };
  const auto s = sorted_copy(draws);
  out.lo = s[order_index(b, level(alpha)) - 1];
  out.hi = s[order_index(b, level(1.0 - alpha)) - 1];
  return out;
}

double jackknife_acceleration(std::span<const double> leave_one_out) {
  if (leave_one_out.size() < 2) {
    throw ArgumentError("jackknife needs at least 2 values");
  }
  const double mean =
      std::accumulate(leave_one_out.begin(), leave_one_out.end(), 0.0) /
      static_cast<double>(leave_one_out.size());
  double s2 = 0.0;
  double s3 = 0.0;
  for (double t : leave_one_out) {
    const double d = mean - t;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (s2 == 0.0) return 0.0;
  return s3 / (6.0 * std::pow(s2, 1.5));
}

std::vector<double> jackknife_values(const Ensemble& ensemble, int k,
                                     const Dataset& test, LossKind loss) {
  const std::size_t n = test.n_rows();
  if (n < 3) throw DataError("jackknife needs at least 3 test rows");
  const PreparedTest prepared(ensemble, test);
  std::vector<double> values(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    Ensemble scratch = ensemble;
    std::vector<std::size_t> rows(n - 1);
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t w = 0;
      for (std::size_t r = 0; r < n; ++r) {
        if (r != i) rows[w++] = r;
      }
      annotate_in_place(scratch, test.select_rows(rows));
      values[i] = subsage_estimate(scratch, k, prepared, rows, loss).psi_hat;
    }
  });
  return values;
}

BootstrapResult paired_bootstrap(const Ensemble& ensemble, int k,
                                 const Dataset& test, LossKind loss,
                                 const BootstrapConfig& cfg) {
  validate(cfg);
  const std::size_t n = test.n_rows();
  if (n < 2) throw DataError("bootstrap needs at least 2 test rows");

  const Ensemble base = annotate_probabilities(ensemble, test);
  const PreparedTest prepared(base, test);
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});

  BootstrapResult result;
  result.estimate = subsage_estimate(base, k, prepared, identity, loss);
  result.draws.assign(cfg.B, 0.0);

  parallel_for(cfg.B, [&](std::size_t begin, std::size_t end) {
    Ensemble scratch = base;
    for (std::size_t b = begin; b < end; ++b) {
      const auto idx = ResampleIndex::draw(n, cfg.seed, b + 1);
      annotate_in_place(scratch, resample(test, idx));
      result.draws[b] =
          subsage_estimate(scratch, k, prepared, idx.indices, loss).psi_hat;
    }
  });

  result.percentile = percentile_interval(result.draws, cfg.alpha);
  if (cfg.acceleration != Acceleration::off) {
    const double a =
        cfg.acceleration == Acceleration::jackknife
            ? jackknife_acceleration(jackknife_values(base, k, test, loss))
            : 0.0;
    result.bca = bca_interval(result.draws, result.point_estimate(),
                              cfg.alpha, a);
  }
  return result;
}

std::string report_json(const BootstrapResult& result,
                        const std::vector<std::string>& feature_names,
                        LossKind loss, const BootstrapConfig& cfg,
                        const ReportOptions& options) {
  using nlohmann::ordered_json;
  const int k = result.estimate.feature;
  ordered_json j;
  j["feature"] = static_cast<std::size_t>(k) < feature_names.size()
                     ? feature_names[static_cast<std::size_t>(k)]
                     : std::to_string(k);
  j["psi_hat"] = result.point_estimate();
  j["loss"] = std::string(to_string(loss));
  j["B"] = cfg.B;
  j["alpha"] = cfg.alpha;
  j["seed"] = cfg.seed;
  j["percentile"] = {result.percentile.first, result.percentile.second};
  if (result.bca) {
    j["bca"] = {result.bca->lo, result.bca->hi};
    j["z0"] = result.bca->z0;
    j["a"] = result.bca->a;
  } else {
    j["bca"] = nullptr;
    j["z0"] = nullptr;
    j["a"] = nullptr;
  }
  if (options.include_draws) j["draws"] = result.draws;
  ordered_json deltas = ordered_json::object();
  const auto& family = result.estimate.family;
  for (std::size_t s = 0; s < family.subsets.size(); ++s) {
    deltas[subset_label(family.subsets[s], k, feature_names)] =
        result.estimate.per_subset_deltas[s];
  }
  j["per_subset_deltas"] = std::move(deltas);
  return j.dump(2);
}

std::string histogram_csv(std::span<const double> draws, std::size_t bins) {
  if (bins == 0) throw ArgumentError("histogram needs at least one bin");
  std::string out = "bin_lo,bin_hi,count\n";
  if (draws.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(draws.begin(), draws.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo == hi) {
    out += format_double(lo) + "," + format_double(hi) + "," +
           std::to_string(draws.size()) + "\n";
    return out;
  }
  std::vector<std::size_t> counts(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double d : draws) {
    auto bin = static_cast<std::size_t>((d - lo) / width);
    if (bin >= bins) bin = bins - 1;
    ++counts[bin];
  }
  for (std::size_t i = 0; i < bins; ++i) {
    const double a = lo + width * static_cast<double>(i);
    const double b = i + 1 == bins ? hi : a + width;
    out += format_double(a) + "," + format_double(b) + "," +
           std::to_string(counts[i]) + "\n";
  }
  return out;
}

}  // namespace subsage
