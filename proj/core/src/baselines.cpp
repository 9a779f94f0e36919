#include "wavecast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wavecast/rng.hpp"

namespace wavecast {

namespace {

void check_context(std::span<const double> context, std::size_t min_len) {
    if (context.size() < min_len) {
        throw TooShortError("context needs at least " + std::to_string(min_len) +
                            " points");
    }
    for (double v : context) {
        if (!std::isfinite(v)) {
            throw NonFiniteError("non-finite context value");
        }
    }
}

Forecast replicate(std::vector<double> path, std::size_t n_samples) {
    if (n_samples == 0) {
        throw DomainError("n_samples must be >= 1");
    }
    std::vector<std::vector<double>> paths(n_samples, path);
    return make_forecast(std::move(paths), /*nonneg_clamp=*/false);
}

struct Ols {
    double intercept = 0.0;
    double slope = 0.0;
};

// Least squares of y against t = 1..T.
Ols fit_line(std::span<const double> y) {
    const auto n = static_cast<double>(y.size());
    double sum_t = 0.0, sum_y = 0.0, sum_tt = 0.0, sum_ty = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double t = static_cast<double>(i + 1);
        sum_t += t;
        sum_y += y[i];
        sum_tt += t * t;
        sum_ty += t * y[i];
    }
    const double denom = n * sum_tt - sum_t * sum_t;
    Ols out;
    if (denom != 0.0) {
        out.slope = (n * sum_ty - sum_t * sum_y) / denom;
    }
    out.intercept = (sum_y - out.slope * sum_t) / n;
    return out;
}

struct SesFit {
    double alpha = 0.0;
    double level = 0.0;
};

// SES with level init l_1 = y_1; returns the final level for the given
// alpha along with the in-sample one-step SSE over t = 2..T.
double ses_sse(std::span<const double> y, double alpha, double* final_level) {
    double level = y[0];
    double sse = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        const double err = y[t] - level;
        sse += err * err;
        level = alpha * y[t] + (1.0 - alpha) * level;
    }
    if (final_level) *final_level = level;
    return sse;
}

SesFit fit_ses(std::span<const double> y, std::optional<double> forced_alpha) {
    SesFit best;
    if (forced_alpha) {
        best.alpha = *forced_alpha;
        ses_sse(y, best.alpha, &best.level);
        return best;
    }
    double best_sse = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 99; ++k) {
        const double alpha = static_cast<double>(k) / 100.0;
        double level = 0.0;
        const double sse = ses_sse(y, alpha, &level);
        if (sse < best_sse) {
            best_sse = sse;
            best.alpha = alpha;
            best.level = level;
        }
    }
    return best;
}

} // namespace

Forecast seasonal_naive(std::span<const double> context, std::size_t horizon,
                        std::size_t season_length, std::size_t n_samples) {
    if (season_length < 1) {
        throw DomainError("season length must be >= 1");
    }
    check_context(context, season_length);
    if (horizon < 1) {
        throw DomainError("horizon must be >= 1");
    }
    const std::size_t T = context.size();
    std::vector<double> path(horizon);
    for (std::size_t h = 1; h <= horizon; ++h) {
        const std::size_t cycles = (h + season_length - 1) / season_length;
        path[h - 1] = context[T + h - cycles * season_length - 1];
    }
    return replicate(std::move(path), n_samples);
}

Forecast npts(std::span<const double> context, std::size_t horizon,
              std::size_t n_samples, double decay, std::uint64_t seed) {
    check_context(context, 1);
    if (!(decay > 0.0)) {
        throw DomainError("decay must be > 0");
    }
    if (horizon < 1 || n_samples < 1) {
        throw DomainError("horizon and n_samples must be >= 1");
    }
    const std::size_t T = context.size();
    // Weight for index i (0-based) is exp(-decay * (T-1-i)); the common
    // normalizer cancels inside the sampler.
    std::vector<double> weights(T);
    for (std::size_t i = 0; i < T; ++i) {
        weights[i] = std::exp(-decay * static_cast<double>(T - 1 - i));
    }
    Rng rng(seed);
    std::vector<std::vector<double>> paths(n_samples, std::vector<double>(horizon));
    for (std::size_t p = 0; p < n_samples; ++p) {
        for (std::size_t h = 0; h < horizon; ++h) {
            paths[p][h] = context[sample_weighted(weights, rng)];
        }
    }
    return make_forecast(std::move(paths), /*nonneg_clamp=*/false);
}

Forecast theta_forecast(std::span<const double> context, std::size_t horizon,
                        std::size_t n_samples) {
    check_context(context, 3);
    if (horizon < 1) {
        throw DomainError("horizon must be >= 1");
    }
    const std::size_t T = context.size();
    const Ols line = fit_line(context);
    std::vector<double> theta2(T);
    for (std::size_t i = 0; i < T; ++i) {
        const double fit = line.intercept + line.slope * static_cast<double>(i + 1);
        theta2[i] = 2.0 * context[i] - fit;
    }
    const SesFit ses = fit_ses(theta2, std::nullopt);
    // SES-with-drift form of Theta: the lag correction
    // ((1-a)/a)(1-(1-a)^(T-1)) cancels the smoothed level's trailing bias,
    // which is what makes noiseless linear inputs continue exactly.
    const double a = ses.alpha;
    const double correction =
        ((1.0 - a) / a) * (1.0 - std::pow(1.0 - a, static_cast<double>(T - 1)));
    std::vector<double> path(horizon);
    for (std::size_t h = 1; h <= horizon; ++h) {
        path[h - 1] = ses.level + line.slope * (static_cast<double>(h) + correction);
    }
    return replicate(std::move(path), n_samples);
}

Forecast exp_smoothing(std::span<const double> context, std::size_t horizon,
                       SmoothingVariant variant, std::size_t n_samples,
                       std::optional<double> forced_alpha) {
    check_context(context, 2);
    if (horizon < 1) {
        throw DomainError("horizon must be >= 1");
    }
    if (forced_alpha && !(*forced_alpha > 0.0 && *forced_alpha <= 1.0)) {
        throw DomainError("forced alpha must lie in (0,1]");
    }
    std::vector<double> path(horizon);
    if (variant == SmoothingVariant::Simple) {
        const SesFit ses = fit_ses(context, forced_alpha);
        std::fill(path.begin(), path.end(), ses.level);
        return replicate(std::move(path), n_samples);
    }
    // Holt: level/trend init l_1 = y_1, b_1 = y_2 - y_1, one-step errors
    // scored from t = 2.
    double best_sse = std::numeric_limits<double>::infinity();
    double best_level = context[0];
    double best_trend = context[1] - context[0];
    for (int ka = 1; ka <= 99; ++ka) {
        const double alpha = forced_alpha ? *forced_alpha
                                         : static_cast<double>(ka) / 100.0;
        for (int kb = 1; kb <= 99; ++kb) {
            const double beta = static_cast<double>(kb) / 100.0;
            double level = context[0];
            double trend = context[1] - context[0];
            double sse = 0.0;
            for (std::size_t t = 1; t < context.size(); ++t) {
                const double pred = level + trend;
                const double err = context[t] - pred;
                sse += err * err;
                const double prev_level = level;
                level = alpha * context[t] + (1.0 - alpha) * (level + trend);
                trend = beta * (level - prev_level) + (1.0 - beta) * trend;
            }
            if (sse < best_sse) {
                best_sse = sse;
                best_level = level;
                best_trend = trend;
            }
        }
        if (forced_alpha) break;
    }
    for (std::size_t h = 1; h <= horizon; ++h) {
        path[h - 1] = best_level + static_cast<double>(h) * best_trend;
    }
    return replicate(std::move(path), n_samples);
}

Forecast SeasonalNaiveForecaster::predict(std::span<const double> context,
                                          std::size_t horizon,
                                          std::size_t n_samples,
                                          std::uint64_t) const {
    return seasonal_naive(context, horizon, season_length_, n_samples);
}

Forecast NptsForecaster::predict(std::span<const double> context,
                                 std::size_t horizon, std::size_t n_samples,
                                 std::uint64_t seed) const {
    return npts(context, horizon, n_samples, decay_, seed);
}

Forecast ThetaForecaster::predict(std::span<const double> context,
                                  std::size_t horizon, std::size_t n_samples,
                                  std::uint64_t) const {
    return theta_forecast(context, horizon, n_samples);
}

Forecast SmoothingForecaster::predict(std::span<const double> context,
                                      std::size_t horizon, std::size_t n_samples,
                                      std::uint64_t) const {
    return exp_smoothing(context, horizon, variant_, n_samples);
}

} // namespace wavecast
