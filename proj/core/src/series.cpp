#include "wavecast/series.hpp"

#include <cmath>
#include <unordered_set>

namespace wavecast {

TimeSeries::TimeSeries(std::string station_id,
                       std::vector<std::int64_t> timestamps,
                       std::vector<std::optional<double>> values,
                       std::int64_t frequency_seconds)
    : station_id_(std::move(station_id)),
      timestamps_(std::move(timestamps)),
      values_(std::move(values)),
      frequency_seconds_(frequency_seconds) {
    if (timestamps_.size() != values_.size()) {
        throw ShapeError("timestamps and values differ in length");
    }
    if (frequency_seconds_ <= 0) {
        throw DataError("frequency_seconds must be positive");
    }
    for (std::size_t i = 1; i < timestamps_.size(); ++i) {
        if (timestamps_[i] <= timestamps_[i - 1]) {
            throw OutOfOrderError("timestamps not strictly increasing at index " +
                                  std::to_string(i));
        }
    }
    for (const auto& v : values_) {
        if (v && !std::isfinite(*v)) {
            throw NonFiniteError("non-finite observation");
        }
    }
}

bool TimeSeries::complete() const {
    for (const auto& v : values_) {
        if (!v) return false;
    }
    return true;
}

std::vector<double> TimeSeries::dense_values() const {
    std::vector<double> out;
    out.reserve(values_.size());
    for (const auto& v : values_) {
        if (!v) throw DataError("dense_values on a series with missing values");
        out.push_back(*v);
    }
    return out;
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) {
        throw ShapeError("slice bounds out of range");
    }
    return TimeSeries(station_id_,
                      {timestamps_.begin() + begin, timestamps_.begin() + end},
                      {values_.begin() + begin, values_.begin() + end},
                      frequency_seconds_);
}

void SplitSpec::validate() const {
    if (train_fraction <= 0.0 || train_fraction >= 1.0 ||
        val_fraction <= 0.0 || val_fraction >= 1.0 ||
        test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw DataError("split fractions must lie in (0,1)");
    }
    const double sum = train_fraction + val_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DataError("split fractions must sum to 1");
    }
}

TimeSeries dedup_by_timestamp(const std::vector<RawRecord>& raw,
                              std::string station_id,
                              std::int64_t frequency_seconds) {
    if (raw.empty()) {
        throw EmptySeriesError();
    }
    std::vector<std::int64_t> ts;
    std::vector<std::optional<double>> vals;
    ts.reserve(raw.size());
    vals.reserve(raw.size());
    std::unordered_set<std::int64_t> seen;
    seen.reserve(raw.size() * 2);
    for (const auto& [t, v] : raw) {
        if (seen.insert(t).second) {
            ts.push_back(t);
            vals.push_back(v);
        }
    }
    // The TimeSeries constructor rejects any remaining order violation.
    return TimeSeries(std::move(station_id), std::move(ts), std::move(vals),
                      frequency_seconds);
}

TimeSeries impute_forward_backward(const TimeSeries& series) {
    const auto& in = series.values();
    std::vector<std::optional<double>> out(in.size());

    std::optional<double> last;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i]) last = in[i];
        out[i] = last;
    }
    if (!last) {
        throw AllMissingError();
    }
    // Backward pass covers only the leading run left open by the forward pass.
    std::optional<double> first;
    for (const auto& v : in) {
        if (v) { first = v; break; }
    }
    for (auto& v : out) {
        if (v) break;
        v = first;
    }
    return TimeSeries(series.station_id(), series.timestamps(), std::move(out),
                      series.frequency_seconds());
}

std::tuple<TimeSeries, TimeSeries, TimeSeries>
split_chronological(const TimeSeries& series, const SplitSpec& spec) {
    spec.validate();
    if (!series.complete()) {
        throw DataError("split requires a complete series; impute first");
    }
    const std::size_t n = series.size();
    if (n < 3) {
        throw TooShortError("need at least 3 observations to split");
    }
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * spec.train_fraction));
    const auto n_val = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * spec.val_fraction));
    return {series.slice(0, n_train),
            series.slice(n_train, n_train + n_val),
            series.slice(n_train + n_val, n)};
}

std::vector<Window> make_windows(const TimeSeries& series,
                                 std::size_t context_length,
                                 std::size_t horizon,
                                 std::size_t stride) {
    if (context_length < 1 || horizon < 1 || stride < 1) {
        throw DataError("window parameters must be positive");
    }
    if (!series.complete()) {
        throw DataError("make_windows requires a complete series");
    }
    const std::size_t n = series.size();
    if (n < context_length + horizon) {
        throw TooShortError("series shorter than context + horizon");
    }
    const auto values = series.dense_values();
    std::vector<Window> windows;
    for (std::size_t origin = context_length; origin + horizon <= n; origin += stride) {
        Window w;
        w.context.assign(values.begin() + (origin - context_length),
                         values.begin() + origin);
        w.target.assign(values.begin() + origin, values.begin() + origin + horizon);
        w.origin_timestamp = series.timestamps()[origin];
        windows.push_back(std::move(w));
    }
    return windows;
}

} // namespace wavecast
