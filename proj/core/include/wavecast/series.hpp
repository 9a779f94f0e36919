#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "wavecast/errors.hpp"

namespace wavecast {

/// Timestamped real-valued observations for one station. Timestamps are
/// epoch seconds (UTC) and strictly increasing; a value of nullopt marks
/// a missing observation. Hourly cadence is the expected default.
class TimeSeries {
public:
    TimeSeries() = default;

    /// Validates the invariants: equal lengths, strictly increasing
    /// timestamps, all present values finite. Throws DataError otherwise.
    TimeSeries(std::string station_id,
               std::vector<std::int64_t> timestamps,
               std::vector<std::optional<double>> values,
               std::int64_t frequency_seconds = 3600);

    const std::string& station_id() const { return station_id_; }
    const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
    const std::vector<std::optional<double>>& values() const { return values_; }
    std::int64_t frequency_seconds() const { return frequency_seconds_; }

    std::size_t size() const { return timestamps_.size(); }
    bool empty() const { return timestamps_.empty(); }

    /// True when no value is missing.
    bool complete() const;

    /// The values as plain doubles. Throws DataError if any is missing.
    std::vector<double> dense_values() const;

    /// Sub-series [begin, end). Bounds-checked.
    TimeSeries slice(std::size_t begin, std::size_t end) const;

private:
    std::string station_id_;
    std::vector<std::int64_t> timestamps_;
    std::vector<std::optional<double>> values_;
    std::int64_t frequency_seconds_ = 3600;
};

/// Chronological train/validation/test fractions. Defaults 0.70/0.15/0.15;
/// fractions must sum to 1 within 1e-9.
struct SplitSpec {
    double train_fraction = 0.70;
    double val_fraction = 0.15;
    double test_fraction = 0.15;

    void validate() const;
};

/// One rolling-origin evaluation window: a context of length C immediately
/// followed in time by a target of length H. origin_timestamp is the
/// timestamp of the first target step.
struct Window {
    std::vector<double> context;
    std::vector<double> target;
    std::int64_t origin_timestamp = 0;
};

using RawRecord = std::pair<std::int64_t, std::optional<double>>;

/// Removes duplicate timestamps, keeping the first occurrence and the
/// original order of survivors. Input must be sorted except for the
/// duplicates themselves; a decreasing step raises OutOfOrderError.
/// Empty input raises EmptySeriesError.
TimeSeries dedup_by_timestamp(const std::vector<RawRecord>& raw,
                              std::string station_id = "",
                              std::int64_t frequency_seconds = 3600);

/// Forward fill, then backward fill for any leading run of missing
/// values. Requires at least one present value (AllMissingError).
TimeSeries impute_forward_backward(const TimeSeries& series);

/// Contiguous chronological split: train = floor(n*train_fraction),
/// val = floor(n*val_fraction), test = the remainder. Requires a
/// complete series of length >= 3.
std::tuple<TimeSeries, TimeSeries, TimeSeries>
split_chronological(const TimeSeries& series, const SplitSpec& spec = {});

/// Rolling windows with origins at C, C+stride, C+2*stride, ...
/// Requires a complete series of length >= C+H.
std::vector<Window> make_windows(const TimeSeries& series,
                                 std::size_t context_length,
                                 std::size_t horizon,
                                 std::size_t stride);

} // namespace wavecast
