#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wavecast/errors.hpp"

namespace wavecast {

enum class MetricFlag : unsigned {
    SmapeZeroTerms = 1u << 0,  // some |y|+|yhat| denominators were 0
    MaseUndefined = 1u << 1,   // constant actuals; mase is NaN
    RmsleClamped = 1u << 2,    // predictions <= -1 were clamped
};

/// Bitmask of MetricFlag values.
using MetricFlags = unsigned;

std::string flags_to_string(MetricFlags flags);
MetricFlags flags_from_string(const std::string& text);

/// The five error measures for one (actuals, predictions) pair.
/// All are positive-error conventions; negation for higher-is-better
/// tables happens at report time.
struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double smape = 0.0;
    double rmsle = 0.0;
    double mase = 0.0;  // NaN when MaseUndefined is flagged
    MetricFlags flags = 0;
};

/// Mean absolute error.
double mae(std::span<const double> y, std::span<const double> y_hat);

/// Root mean squared error.
double rmse(std::span<const double> y, std::span<const double> y_hat);

/// Symmetric mean absolute percentage error as a fraction (no x100).
/// Terms with |y|+|yhat| = 0 contribute 0; flags reports them.
double smape(std::span<const double> y, std::span<const double> y_hat,
             MetricFlags* flags = nullptr);

/// Root mean squared log1p error. Actuals must be > -1 (DomainError);
/// predictions <= -1 are clamped to -1+1e-9 and flagged.
double rmsle(std::span<const double> y, std::span<const double> y_hat,
             MetricFlags* flags = nullptr);

/// Mean absolute error scaled by the naive one-step MAE of the actuals
/// over the same window (not the classical in-sample denominator).
/// Needs n >= 2; constant actuals yield NaN plus the MaseUndefined flag.
double mase(std::span<const double> y, std::span<const double> y_hat,
            MetricFlags* flags = nullptr);

/// Window variant of mase used by the backtest harness: the naive
/// denominator is anchored on the last context value, so the first
/// target step contributes |y_1 - previous_actual|. Defined for n >= 1,
/// which keeps the 1-step horizon scorable.
double mase_anchored(std::span<const double> y, std::span<const double> y_hat,
                     double previous_actual, MetricFlags* flags = nullptr);

/// All five on identical inputs, flags aggregated.
MetricReport metric_suite(std::span<const double> y, std::span<const double> y_hat);

/// Suite as scored by the backtest: mase is the context-anchored window
/// variant, so horizon-1 windows produce a finite value.
MetricReport metric_suite_anchored(std::span<const double> y,
                                   std::span<const double> y_hat,
                                   double previous_actual);

} // namespace wavecast
