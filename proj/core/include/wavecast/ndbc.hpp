#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wavecast/series.hpp"

namespace wavecast {

/// A malformed data row: skipped, counted, and reported with its
/// 1-based line number.
struct RowIssue {
    std::size_t line = 0;
    std::string reason;
};

/// Row accounting for one parse. Every data row lands in exactly one of
/// the four buckets, which is what reconciles() checks.
struct ParseReport {
    std::size_t total_rows = 0;
    std::size_t kept_present = 0;      // emitted with a WVHT value
    std::size_t kept_sentinel = 0;     // emitted as missing (99.00 family)
    std::size_t dropped_subhourly = 0; // lost to nearest-top-of-hour reduction
    std::vector<RowIssue> skipped;
    std::size_t out_of_order = 0;      // reported, never reordered

    bool reconciles() const {
        return kept_present + kept_sentinel + dropped_subhourly + skipped.size() ==
               total_rows;
    }
    void merge(const ParseReport& other);
};

struct ParsedStdmet {
    std::vector<RawRecord> records;  // hourly-aligned, original file order
    ParseReport report;
};

/// Parses one NDBC standard-meteorological file. Header may or may not
/// carry the leading '#'; an optional units line is skipped. WVHT is
/// required. Sub-hourly rows are reduced to the observation nearest the
/// top of the hour; ties keep every tied row so duplicates surface to
/// dedup downstream.
ParsedStdmet parse_ndbc_stdmet(std::istream& in);

/// File variant; names ending in .gz are decompressed first.
ParsedStdmet parse_ndbc_stdmet_file(const std::string& path);

/// Inserts missing entries so timestamps advance by exactly one hour
/// from first to last.
TimeSeries fill_hourly_grid(const TimeSeries& series);

/// Full ingestion for one station: parses every file in `dir` whose name
/// starts with the station id (year order by filename), sorts, drops
/// duplicate hours keeping the first, and fills the hourly grid.
TimeSeries ingest_station(const std::string& dir, const std::string& station_id,
                          ParseReport* report = nullptr);

/// Cache interchange format: CSV with header timestamp_utc,swh_m and an
/// empty value field for missing hours. Doubles round-trip exactly.
void write_cache_csv(const std::string& path, const TimeSeries& series);
TimeSeries read_cache_csv(const std::string& path, std::string station_id = "");

struct StationMeta {
    std::string station_id;
    double lat = 0.0;
    double lon = 0.0;
    double depth_m = 0.0;
    double median_swh_m = 0.0;
    double max_swh_m = 0.0;
    std::int64_t n_records = 0;
    std::string span_start;
    std::string span_end;
};

/// Loads and validates station metadata from a JSON file of the form
/// {"stations": [...]}.
std::vector<StationMeta> load_station_metadata(const std::string& path);

} // namespace wavecast
