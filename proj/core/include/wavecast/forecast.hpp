#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "wavecast/errors.hpp"

namespace wavecast {

/// Distributional forecast: n sample paths over a horizon, plus derived
/// point and quantile summaries in value space (meters for SWH runs).
struct Forecast {
    std::vector<std::vector<double>> sample_paths;  // n_samples rows of length horizon
    std::vector<double> point;                      // per-step median
    std::map<double, std::vector<double>> quantiles;
    std::size_t horizon = 0;
};

/// Per-step empirical quantile over the paths: sorted column values,
/// index floor(q * (n - 1)). Median under this rule is the lower
/// midpoint when n is even.
std::vector<double> empirical_quantile(const std::vector<std::vector<double>>& paths,
                                       double q);

/// Assembles a Forecast from raw paths. Validates that the matrix is
/// nonempty, rectangular, and finite; optionally clamps samples at 0
/// before any statistic is computed.
Forecast make_forecast(std::vector<std::vector<double>> paths, bool nonneg_clamp,
                       const std::vector<double>& levels = {0.1, 0.5, 0.9});

/// Clamps paths, point, and quantiles at 0 in place. Exact for empirical
/// quantiles (order statistics commute with a monotone clamp), so applying
/// this after make_forecast equals building with nonneg_clamp on. Idempotent.
void clamp_nonneg(Forecast& forecast);

} // namespace wavecast
