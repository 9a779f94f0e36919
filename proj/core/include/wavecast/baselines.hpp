#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "wavecast/forecast.hpp"
#include "wavecast/series.hpp"

namespace wavecast {

/// Common interface for every forecaster in a benchmark roster. Classical
/// methods work directly from the predict-time context, so fit defaults
/// to a no-op; learned models override it or arrive pre-trained.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual std::string name() const = 0;
    virtual void fit(const TimeSeries&) {}
    virtual Forecast predict(std::span<const double> context, std::size_t horizon,
                             std::size_t n_samples, std::uint64_t seed) const = 0;
};

/// Repeats the last observed seasonal cycle: y_hat_{t+h} = y_{t+h-m*ceil(h/m)}.
/// m = 1 degenerates to persistence.
Forecast seasonal_naive(std::span<const double> context, std::size_t horizon,
                        std::size_t season_length, std::size_t n_samples = 1);

/// Non-parametric sampler: each horizon step independently draws a past
/// index i with probability proportional to exp(-decay * (T - i)) and
/// emits that context value. Paths never contain invented values.
Forecast npts(std::span<const double> context, std::size_t horizon,
              std::size_t n_samples, double decay, std::uint64_t seed);

/// Theta(2): simple exponential smoothing of the theta-line 2*y - trend
/// plus a least-squares drift with the usual SES lag correction. The
/// drift uses the full fitted slope, so noiseless linear inputs continue
/// exactly.
Forecast theta_forecast(std::span<const double> context, std::size_t horizon,
                        std::size_t n_samples = 1);

enum class SmoothingVariant { Simple, Holt };

/// SES (flat) or Holt (linear trend) extrapolation. Smoothing parameters
/// are grid-searched over {0.01..0.99 step 0.01} on in-sample one-step
/// squared error; forced_alpha bypasses the grid for the level parameter.
Forecast exp_smoothing(std::span<const double> context, std::size_t horizon,
                       SmoothingVariant variant, std::size_t n_samples = 1,
                       std::optional<double> forced_alpha = std::nullopt);

class SeasonalNaiveForecaster final : public Forecaster {
public:
    explicit SeasonalNaiveForecaster(std::size_t season_length = 24)
        : season_length_(season_length) {}
    std::string name() const override { return "SeasonalNaive"; }
    Forecast predict(std::span<const double> context, std::size_t horizon,
                     std::size_t n_samples, std::uint64_t seed) const override;

private:
    std::size_t season_length_;
};

class NptsForecaster final : public Forecaster {
public:
    explicit NptsForecaster(double decay = 0.1) : decay_(decay) {}
    std::string name() const override { return "NPTS"; }
    Forecast predict(std::span<const double> context, std::size_t horizon,
                     std::size_t n_samples, std::uint64_t seed) const override;

private:
    double decay_;
};

class ThetaForecaster final : public Forecaster {
public:
    std::string name() const override { return "Theta"; }
    Forecast predict(std::span<const double> context, std::size_t horizon,
                     std::size_t n_samples, std::uint64_t seed) const override;
};

class SmoothingForecaster final : public Forecaster {
public:
    explicit SmoothingForecaster(SmoothingVariant variant)
        : variant_(variant) {}
    std::string name() const override {
        return variant_ == SmoothingVariant::Simple ? "SES" : "Holt";
    }
    Forecast predict(std::span<const double> context, std::size_t horizon,
                     std::size_t n_samples, std::uint64_t seed) const override;

private:
    SmoothingVariant variant_;
};

} // namespace wavecast
