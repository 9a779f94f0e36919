#include "wavecast/ndbc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

namespace wavecast {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

bool parse_int(const std::string& s, int& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const auto doy =
        static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 +
           static_cast<std::int64_t>(doe) - 719468;
}

bool is_sentinel(double v) { return v == 99.0 || v == 999.0; }

struct PendingRow {
    std::int64_t raw_ts = 0;
    std::int64_t aligned_ts = 0;
    bool missing = false;
    double value = 0.0;
};

void flush_group(std::vector<PendingRow>& group, ParsedStdmet& out) {
    if (group.empty()) return;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const PendingRow& r : group) {
        best = std::min(best, std::abs(r.raw_ts - r.aligned_ts));
    }
    for (const PendingRow& r : group) {
        if (std::abs(r.raw_ts - r.aligned_ts) != best) {
            ++out.report.dropped_subhourly;
            continue;
        }
        if (r.missing) {
            ++out.report.kept_sentinel;
            out.records.emplace_back(r.aligned_ts, std::nullopt);
        } else {
            ++out.report.kept_present;
            out.records.emplace_back(r.aligned_ts, r.value);
        }
    }
    group.clear();
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

} // namespace

void ParseReport::merge(const ParseReport& other) {
    total_rows += other.total_rows;
    kept_present += other.kept_present;
    kept_sentinel += other.kept_sentinel;
    dropped_subhourly += other.dropped_subhourly;
    skipped.insert(skipped.end(), other.skipped.begin(), other.skipped.end());
    out_of_order += other.out_of_order;
}

ParsedStdmet parse_ndbc_stdmet(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;

    // Header line: column names, with or without the leading '#'.
    std::vector<std::string> names;
    if (!std::getline(in, line)) {
        throw EmptySeriesError("empty NDBC file");
    }
    ++line_no;
    {
        std::string stripped = line;
        while (!stripped.empty() && stripped.front() == '#') stripped.erase(0, 1);
        names = tokenize(stripped);
        for (auto& n : names) n = upper(n);
    }
    if (names.empty() || (names[0] != "YY" && names[0] != "YYYY")) {
        throw FormatError("missing NDBC header line");
    }
    const bool has_minutes = names.size() > 4 && names[4] == "MM";
    const std::size_t date_fields = has_minutes ? 5 : 4;
    std::size_t wvht_idx = names.size();
    for (std::size_t i = date_fields; i < names.size(); ++i) {
        if (names[i] == "WVHT") {
            wvht_idx = i;
            break;
        }
    }
    if (wvht_idx == names.size()) {
        throw FormatError("no WVHT column");
    }

    ParsedStdmet out;
    std::vector<PendingRow> group;
    std::int64_t last_aligned = std::numeric_limits<std::int64_t>::min();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (line.front() == '#') {
            if (out.report.total_rows == 0) continue;  // units line
            out.report.skipped.push_back({line_no, "comment amid data"});
            ++out.report.total_rows;
            continue;
        }
        ++out.report.total_rows;
        const auto toks = tokenize(line);
        if (toks.size() <= wvht_idx) {
            out.report.skipped.push_back({line_no, "short row"});
            continue;
        }
        int year = 0, month = 0, day = 0, hour = 0, minute = 0;
        bool ok = parse_int(toks[0], year) && parse_int(toks[1], month) &&
                  parse_int(toks[2], day) && parse_int(toks[3], hour);
        if (ok && has_minutes) ok = parse_int(toks[4], minute);
        if (ok && year < 100) year += year < 50 ? 2000 : 1900;
        ok = ok && year >= 1900 && month >= 1 && month <= 12 && day >= 1 &&
             day <= 31 && hour >= 0 && hour <= 23 && minute >= 0 && minute <= 59;
        if (!ok) {
            out.report.skipped.push_back({line_no, "bad date"});
            continue;
        }
        double wvht = 0.0;
        if (!parse_double(toks[wvht_idx], wvht)) {
            out.report.skipped.push_back({line_no, "bad WVHT"});
            continue;
        }

        PendingRow row;
        row.raw_ts = days_from_civil(year, month, day) * 86400 + hour * 3600 +
                     minute * 60;
        row.aligned_ts = ((row.raw_ts + 1800) / 3600) * 3600;
        row.missing = is_sentinel(wvht);
        row.value = wvht;
        if (!group.empty() && group.back().aligned_ts != row.aligned_ts) {
            flush_group(group, out);
            if (row.aligned_ts < last_aligned) ++out.report.out_of_order;
        }
        last_aligned = std::max(last_aligned, row.aligned_ts);
        group.push_back(row);
    }
    flush_group(group, out);
    if (out.records.empty()) {
        throw EmptySeriesError("NDBC file holds no usable data rows");
    }
    return out;
}

ParsedStdmet parse_ndbc_stdmet_file(const std::string& path) {
    std::string text;
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw IoError("cannot open " + path);
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0) {
            text.append(buf, static_cast<std::size_t>(n));
        }
        const bool bad = n < 0;
        gzclose(gz);
        if (bad) throw IoError("gzip read failed: " + path);
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    std::istringstream stream(text);
    try {
        return parse_ndbc_stdmet(stream);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

TimeSeries fill_hourly_grid(const TimeSeries& series) {
    if (series.empty()) {
        throw EmptySeriesError("cannot grid an empty series");
    }
    const auto& ts = series.timestamps();
    const auto& vals = series.values();
    std::vector<std::int64_t> grid;
    std::vector<std::optional<double>> out;
    std::size_t i = 0;
    for (std::int64_t t = ts.front(); t <= ts.back(); t += 3600) {
        grid.push_back(t);
        if (i < ts.size() && ts[i] == t) {
            out.push_back(vals[i]);
            ++i;
        } else if (i < ts.size() && ts[i] < t) {
            // Off-grid timestamp (not hour-aligned with the first row).
            throw DataError("timestamp not on the hourly grid");
        } else {
            out.push_back(std::nullopt);
        }
    }
    if (i != ts.size()) {
        throw DataError("timestamp not on the hourly grid");
    }
    return TimeSeries(series.station_id(), std::move(grid), std::move(out),
                      3600);
}

TimeSeries ingest_station(const std::string& dir, const std::string& station_id,
                          ParseReport* report) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind(station_id, 0) == 0) files.push_back(entry.path());
    }
    if (files.empty()) {
        throw DataError("no files for station " + station_id + " in " + dir);
    }
    std::sort(files.begin(), files.end());

    std::vector<RawRecord> records;
    ParseReport combined;
    for (const auto& f : files) {
        ParsedStdmet parsed = parse_ndbc_stdmet_file(f.string());
        records.insert(records.end(), parsed.records.begin(),
                       parsed.records.end());
        combined.merge(parsed.report);
    }
    // Cross-file order is by filename; a stable sort puts stray rows in
    // place without breaking the keep-first duplicate rule.
    std::stable_sort(records.begin(), records.end(),
                     [](const RawRecord& a, const RawRecord& b) {
                         return a.first < b.first;
                     });
    TimeSeries deduped = dedup_by_timestamp(records, station_id);
    if (report) *report = std::move(combined);
    return fill_hourly_grid(deduped);
}

void write_cache_csv(const std::string& path, const TimeSeries& series) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open cache for writing: " + path);
    out << "timestamp_utc,swh_m\n";
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << series.timestamps()[i] << ',';
        if (series.values()[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", *series.values()[i]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("cache write failed: " + path);
}

TimeSeries read_cache_csv(const std::string& path, std::string station_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cache: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty cache file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp_utc,swh_m") {
        throw FormatError("unexpected cache header in " + path);
    }
    if (station_id.empty()) {
        station_id = std::filesystem::path(path).stem().string();
    }
    std::vector<std::int64_t> ts;
    std::vector<std::optional<double>> vals;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": missing comma");
        }
        std::int64_t t = 0;
        {
            const char* first = line.data();
            const char* last = line.data() + comma;
            auto [ptr, ec] = std::from_chars(first, last, t);
            if (ec != std::errc() || ptr != last) {
                throw FormatError(path + ":" + std::to_string(line_no) +
                                  ": bad timestamp");
            }
        }
        ts.push_back(t);
        const std::string field = line.substr(comma + 1);
        if (field.empty()) {
            vals.emplace_back(std::nullopt);
        } else {
            double v = 0.0;
            if (!parse_double(field, v)) {
                throw FormatError(path + ":" + std::to_string(line_no) +
                                  ": bad value");
            }
            vals.emplace_back(v);
        }
    }
    return TimeSeries(std::move(station_id), std::move(ts), std::move(vals), 3600);
}

std::vector<StationMeta> load_station_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open station metadata: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad station metadata JSON: ") + e.what());
    }
    std::vector<StationMeta> out;
    try {
        for (const auto& js : j.at("stations")) {
            StationMeta m;
            m.station_id = js.at("station_id").get<std::string>();
            m.lat = js.at("lat").get<double>();
            m.lon = js.at("lon").get<double>();
            m.depth_m = js.at("depth_m").get<double>();
            m.median_swh_m = js.value("median_swh_m", 0.0);
            m.max_swh_m = js.value("max_swh_m", 0.0);
            m.n_records = js.value("n_records", std::int64_t{0});
            m.span_start = js.value("span_start", std::string());
            m.span_end = js.value("span_end", std::string());
            if (m.depth_m <= 0.0 || m.lat < -90.0 || m.lat > 90.0 ||
                m.lon < -180.0 || m.lon > 180.0) {
                throw FormatError("station " + m.station_id +
                                  " metadata out of range");
            }
            out.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete station metadata: ") + e.what());
    }
    return out;
}

} // namespace wavecast
