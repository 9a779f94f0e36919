#include "wavecast/metrics.hpp"

#include <cmath>
#include <limits>

namespace wavecast {

namespace {

void check_pair(std::span<const double> y, std::span<const double> y_hat,
                std::size_t min_len) {
    if (y.size() != y_hat.size()) {
        throw ShapeError("actuals and predictions differ in length");
    }
    if (y.size() < min_len) {
        throw TooShortError("need at least " + std::to_string(min_len) + " points");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(y_hat[i])) {
            throw NonFiniteError("non-finite metric input");
        }
    }
}

} // namespace

std::string flags_to_string(MetricFlags flags) {
    std::string out;
    auto append = [&out](const char* name) {
        if (!out.empty()) out += ';';
        out += name;
    };
    if (flags & static_cast<unsigned>(MetricFlag::SmapeZeroTerms)) append("SMAPE_ZERO_TERMS");
    if (flags & static_cast<unsigned>(MetricFlag::MaseUndefined)) append("MASE_UNDEFINED");
    if (flags & static_cast<unsigned>(MetricFlag::RmsleClamped)) append("RMSLE_CLAMPED");
    return out;
}

MetricFlags flags_from_string(const std::string& text) {
    MetricFlags flags = 0;
    if (text.find("SMAPE_ZERO_TERMS") != std::string::npos)
        flags |= static_cast<unsigned>(MetricFlag::SmapeZeroTerms);
    if (text.find("MASE_UNDEFINED") != std::string::npos)
        flags |= static_cast<unsigned>(MetricFlag::MaseUndefined);
    if (text.find("RMSLE_CLAMPED") != std::string::npos)
        flags |= static_cast<unsigned>(MetricFlag::RmsleClamped);
    return flags;
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sum += std::abs(y[i] - y_hat[i]);
    }
    return sum / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
}

double smape(std::span<const double> y, std::span<const double> y_hat,
             MetricFlags* flags) {
    check_pair(y, y_hat, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double denom = 0.5 * (std::abs(y[i]) + std::abs(y_hat[i]));
        if (denom == 0.0) {
            if (flags) *flags |= static_cast<unsigned>(MetricFlag::SmapeZeroTerms);
            continue;  // term defined as 0
        }
        sum += std::abs(y[i] - y_hat[i]) / denom;
    }
    return sum / static_cast<double>(y.size());
}

double rmsle(std::span<const double> y, std::span<const double> y_hat,
             MetricFlags* flags) {
    check_pair(y, y_hat, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] <= -1.0) {
            throw DomainError("rmsle actual <= -1");
        }
        double p = y_hat[i];
        if (p <= -1.0) {
            p = -1.0 + 1e-9;
            if (flags) *flags |= static_cast<unsigned>(MetricFlag::RmsleClamped);
        }
        const double d = std::log1p(y[i]) - std::log1p(p);
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
}

double mase(std::span<const double> y, std::span<const double> y_hat,
            MetricFlags* flags) {
    check_pair(y, y_hat, 2);
    const auto n = static_cast<double>(y.size());
    double num = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::abs(y[i] - y_hat[i]);
    }
    num /= n;
    double denom = 0.0;
    for (std::size_t i = 1; i < y.size(); ++i) {
        denom += std::abs(y[i] - y[i - 1]);
    }
    denom /= (n - 1.0);
    if (denom == 0.0) {
        if (flags) *flags |= static_cast<unsigned>(MetricFlag::MaseUndefined);
        return std::numeric_limits<double>::quiet_NaN();
    }
    return num / denom;
}

double mase_anchored(std::span<const double> y, std::span<const double> y_hat,
                     double previous_actual, MetricFlags* flags) {
    check_pair(y, y_hat, 1);
    if (!std::isfinite(previous_actual)) {
        throw NonFiniteError("non-finite anchor value");
    }
    const auto n = static_cast<double>(y.size());
    double num = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::abs(y[i] - y_hat[i]);
    }
    num /= n;
    double denom = std::abs(y[0] - previous_actual);
    for (std::size_t i = 1; i < y.size(); ++i) {
        denom += std::abs(y[i] - y[i - 1]);
    }
    denom /= n;
    if (denom == 0.0) {
        if (flags) *flags |= static_cast<unsigned>(MetricFlag::MaseUndefined);
        return std::numeric_limits<double>::quiet_NaN();
    }
    return num / denom;
}

MetricReport metric_suite(std::span<const double> y, std::span<const double> y_hat) {
    MetricReport r;
    r.mae = mae(y, y_hat);
    r.rmse = rmse(y, y_hat);
    r.smape = smape(y, y_hat, &r.flags);
    r.rmsle = rmsle(y, y_hat, &r.flags);
    r.mase = mase(y, y_hat, &r.flags);
    return r;
}

MetricReport metric_suite_anchored(std::span<const double> y,
                                   std::span<const double> y_hat,
                                   double previous_actual) {
    MetricReport r;
    r.mae = mae(y, y_hat);
    r.rmse = rmse(y, y_hat);
    r.smape = smape(y, y_hat, &r.flags);
    r.rmsle = rmsle(y, y_hat, &r.flags);
    r.mase = mase_anchored(y, y_hat, previous_actual, &r.flags);
    return r;
}

} // namespace wavecast
