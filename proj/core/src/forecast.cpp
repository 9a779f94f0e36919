#include "wavecast/forecast.hpp"

#include <algorithm>
#include <cmath>

namespace wavecast {

std::vector<double> empirical_quantile(const std::vector<std::vector<double>>& paths,
                                       double q) {
    if (paths.empty() || paths.front().empty()) {
        throw ShapeError("quantile of empty path matrix");
    }
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("quantile level must lie in (0,1)");
    }
    const std::size_t n = paths.size();
    const std::size_t horizon = paths.front().size();
    const auto idx =
        static_cast<std::size_t>(std::floor(q * static_cast<double>(n - 1)));
    std::vector<double> out(horizon);
    std::vector<double> column(n);
    for (std::size_t h = 0; h < horizon; ++h) {
        for (std::size_t p = 0; p < n; ++p) {
            column[p] = paths[p][h];
        }
        std::nth_element(column.begin(),
                         column.begin() + static_cast<std::ptrdiff_t>(idx),
                         column.end());
        out[h] = column[idx];
    }
    return out;
}

Forecast make_forecast(std::vector<std::vector<double>> paths, bool nonneg_clamp,
                       const std::vector<double>& levels) {
    if (paths.empty() || paths.front().empty()) {
        throw ShapeError("forecast needs at least one path of length >= 1");
    }
    const std::size_t horizon = paths.front().size();
    for (auto& path : paths) {
        if (path.size() != horizon) {
            throw ShapeError("ragged sample path matrix");
        }
        for (double& v : path) {
            if (!std::isfinite(v)) {
                throw NonFiniteError("non-finite forecast sample");
            }
            if (nonneg_clamp && v < 0.0) {
                v = 0.0;
            }
        }
    }
    Forecast fc;
    fc.horizon = horizon;
    fc.sample_paths = std::move(paths);
    fc.point = empirical_quantile(fc.sample_paths, 0.5);
    for (double level : levels) {
        fc.quantiles[level] = empirical_quantile(fc.sample_paths, level);
    }
    return fc;
}

void clamp_nonneg(Forecast& forecast) {
    auto clamp = [](std::vector<double>& xs) {
        for (double& x : xs) x = std::max(x, 0.0);
    };
    for (auto& path : forecast.sample_paths) clamp(path);
    clamp(forecast.point);
    for (auto& [level, values] : forecast.quantiles) clamp(values);
}

} // namespace wavecast
