#include "wavecast/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "wavecast/checkpoint.hpp"
#include "wavecast/ndbc.hpp"
#include "wavecast/rng.hpp"
#include "wavecast/version.hpp"

namespace wavecast {

namespace {

using json = nlohmann::json;

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"mae", "rmse", "smape", "rmsle", "mase"};
    return names;
}

double metric_field(const MetricReport& m, const std::string& name) {
    if (name == "mae") return m.mae;
    if (name == "rmse") return m.rmse;
    if (name == "smape") return m.smape;
    if (name == "rmsle") return m.rmsle;
    if (name == "mase") return m.mase;
    throw DomainError("unknown metric name: " + name);
}

std::string fmt_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v, int decimals) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

double maybe_negate(double v, bool negate) {
    return (negate && !std::isnan(v)) ? -v : v;
}

std::string sanitize_name(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

void check_label(const std::string& label, const char* what) {
    if (label.empty()) throw DomainError(std::string(what) + " must be nonempty");
    if (label.find(',') != std::string::npos || label.find('\n') != std::string::npos) {
        throw DomainError(std::string(what) + " must not contain commas or newlines: " + label);
    }
}

const std::set<std::string>& known_model_types() {
    static const std::set<std::string> types = {"seasonal_naive", "npts", "theta",
                                               "ses", "holt", "chronos"};
    return types;
}

std::string default_model_name(const std::string& type) {
    if (type == "seasonal_naive") return "SeasonalNaive";
    if (type == "npts") return "NPTS";
    if (type == "theta") return "Theta";
    if (type == "ses") return "SES";
    if (type == "holt") return "Holt";
    if (type == "chronos") return "Chronos";
    return type;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["stations"] = json::array();
    for (const auto& s : cfg.stations) {
        j["stations"].push_back({{"id", s.id}, {"cache", s.cache}});
    }
    j["models"] = json::array();
    for (const auto& m : cfg.models) {
        json jm = {{"type", m.type}, {"name", m.name}};
        if (!m.checkpoint.empty()) jm["checkpoint"] = m.checkpoint;
        j["models"].push_back(jm);
    }
    j["split"] = {{"train", cfg.split.train_fraction},
                  {"val", cfg.split.val_fraction},
                  {"test", cfg.split.test_fraction}};
    j["horizons"] = cfg.horizons;
    j["n_windows"] = cfg.n_windows;
    j["context_length"] = cfg.context_length;
    j["n_samples"] = cfg.n_samples;
    j["season_length"] = cfg.season_length;
    j["npts_decay"] = cfg.npts_decay;
    j["nonneg_clamp"] = cfg.nonneg_clamp;
    j["negate_scores"] = cfg.negate_scores;
    j["seed"] = cfg.seed;
    return j;
}

RunConfig config_from_json(const json& j) {
    static const std::set<std::string> allowed = {
        "stations", "models",         "split",       "horizons",      "n_windows",
        "context_length", "n_samples", "season_length", "npts_decay", "nonneg_clamp",
        "negate_scores",  "seed"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw FormatError("run config: unknown key '" + key + "'");
        }
    }
    RunConfig cfg;
    if (j.contains("stations")) {
        cfg.stations.clear();
        for (const auto& js : j.at("stations")) {
            StationSpec s;
            s.id = js.at("id").get<std::string>();
            s.cache = js.value("cache", std::string());
            cfg.stations.push_back(std::move(s));
        }
    }
    if (j.contains("models")) {
        cfg.models.clear();
        for (const auto& jm : j.at("models")) {
            ModelSpec m;
            m.type = jm.at("type").get<std::string>();
            m.name = jm.value("name", default_model_name(m.type));
            m.checkpoint = jm.value("checkpoint", std::string());
            cfg.models.push_back(std::move(m));
        }
    }
    if (j.contains("split")) {
        const auto& js = j.at("split");
        cfg.split.train_fraction = js.at("train").get<double>();
        cfg.split.val_fraction = js.at("val").get<double>();
        cfg.split.test_fraction = js.at("test").get<double>();
    }
    if (j.contains("horizons")) cfg.horizons = j.at("horizons").get<std::vector<std::size_t>>();
    if (j.contains("n_windows")) cfg.n_windows = j.at("n_windows").get<std::size_t>();
    if (j.contains("context_length")) cfg.context_length = j.at("context_length").get<std::size_t>();
    if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("season_length")) cfg.season_length = j.at("season_length").get<std::size_t>();
    if (j.contains("npts_decay")) cfg.npts_decay = j.at("npts_decay").get<double>();
    if (j.contains("nonneg_clamp")) cfg.nonneg_clamp = j.at("nonneg_clamp").get<bool>();
    if (j.contains("negate_scores")) cfg.negate_scores = j.at("negate_scores").get<bool>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t horizon, std::size_t window) {
    return derive_seed(derive_seed(base, horizon), window);
}

BacktestCell eval_one(const Forecaster& forecaster, std::span<const double> values,
                      std::span<const std::int64_t> timestamps, std::size_t origin,
                      std::size_t context_length, std::size_t horizon,
                      const RunConfig& cfg, std::uint64_t seed) {
    const auto context = values.subspan(origin - context_length, context_length);
    const auto target = values.subspan(origin, horizon);
    if (!(timestamps[origin - 1] < timestamps[origin])) {
        throw Error("no-leakage assertion failed: context reaches into the target");
    }
    Forecast fc = forecaster.predict(context, horizon, cfg.n_samples, seed);
    if (fc.point.size() != horizon) {
        throw ShapeError("forecaster returned " + std::to_string(fc.point.size()) +
                         " steps for horizon " + std::to_string(horizon));
    }
    if (cfg.nonneg_clamp) clamp_nonneg(fc);
    BacktestCell cell;
    cell.horizon = horizon;
    cell.metrics = metric_suite_anchored(target, fc.point, context.back());
    cell.window.context.assign(context.begin(), context.end());
    cell.window.target.assign(target.begin(), target.end());
    cell.window.origin_timestamp = timestamps[origin];
    cell.forecast = std::move(fc);
    return cell;
}

struct StationData {
    std::string id;
    TimeSeries train;
    std::vector<double> test_values;
    std::vector<std::int64_t> test_timestamps;
};

StationData prepare_station(const TimeSeries& series, const SplitSpec& split) {
    const TimeSeries dense = series.complete() ? series : impute_forward_backward(series);
    auto [train, val, test] = split_chronological(dense, split);
    (void)val;
    return StationData{dense.station_id(), std::move(train), test.dense_values(),
                       test.timestamps()};
}

void append_predictions(EvalReport& report, const std::string& station,
                        const std::string& model, const BacktestCell& cell,
                        std::span<const std::int64_t> timestamps, std::size_t origin) {
    const auto q10 = cell.forecast.quantiles.find(0.1);
    const auto q90 = cell.forecast.quantiles.find(0.9);
    for (std::size_t s = 0; s < cell.horizon; ++s) {
        PredictionRow row;
        row.station = station;
        row.model = model;
        row.horizon = cell.horizon;
        row.origin_timestamp = cell.window.origin_timestamp;
        row.step = s + 1;
        row.timestamp = timestamps[origin + s];
        row.actual = cell.window.target[s];
        row.predicted = cell.forecast.point[s];
        row.q10 = q10 != cell.forecast.quantiles.end() ? q10->second[s] : row.predicted;
        row.q90 = q90 != cell.forecast.quantiles.end() ? q90->second[s] : row.predicted;
        report.predictions.push_back(std::move(row));
    }
}

// Fractional ranks of `means` ascending; ties take the mean of their
// positions so each rank column sums to k(k+1)/2.
std::vector<double> fractional_ranks(const std::vector<double>& means) {
    const std::size_t k = means.size();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
    std::vector<double> ranks(k, 0.0);
    std::size_t i = 0;
    while (i < k) {
        std::size_t j = i;
        while (j + 1 < k && means[order[j + 1]] == means[order[i]]) ++j;
        const double shared = static_cast<double>(i + j + 2) / 2.0;  // 1-based mean
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
        i = j + 1;
    }
    return ranks;
}

std::vector<std::string> distinct_in_order(const std::vector<CellRow>& rows,
                                           const std::string CellRow::* field) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : rows) {
        if (seen.insert(r.*field).second) out.push_back(r.*field);
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double_field(const std::string& text, const std::filesystem::path& path,
                          std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line) +
                          ": bad numeric field '" + text + "'");
    }
}

template <typename Int>
Int parse_int_field(const std::string& text, const std::filesystem::path& path,
                    std::size_t line) {
    Int v{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw FormatError(path.string() + ":" + std::to_string(line) +
                          ": bad integer field '" + text + "'");
    }
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    return os;
}

void finish_out(std::ofstream& os, const std::filesystem::path& path) {
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

void write_metrics_csv(const EvalReport& report, const std::filesystem::path& path) {
    const bool neg = report.config.negate_scores;
    auto os = open_out(path);
    os << "station,model,horizon,origin_timestamp";
    for (const auto& m : metric_names()) os << ',' << (neg ? "-" : "") << m;
    os << ",flags\n";
    for (const auto& r : report.rows) {
        os << r.station << ',' << r.model << ',' << r.horizon << ',' << r.origin_timestamp;
        for (const auto& m : metric_names()) {
            os << ',' << fmt_g17(maybe_negate(metric_field(r.metrics, m), neg));
        }
        os << ',' << flags_to_string(r.metrics.flags) << '\n';
    }
    finish_out(os, path);
}

void write_predictions_csv(const EvalReport& report, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "station,model,horizon,origin_timestamp,step,timestamp,actual,predicted,q10,q90\n";
    for (const auto& p : report.predictions) {
        os << p.station << ',' << p.model << ',' << p.horizon << ',' << p.origin_timestamp
           << ',' << p.step << ',' << p.timestamp << ',' << fmt_g17(p.actual) << ','
           << fmt_g17(p.predicted) << ',' << fmt_g17(p.q10) << ',' << fmt_g17(p.q90) << '\n';
    }
    finish_out(os, path);
}

void write_ranks_csv(const EvalReport& report, const std::filesystem::path& dir) {
    const bool neg = report.config.negate_scores;
    // Table-6 layout: one row per model, one averaged-rank column per metric.
    static const std::vector<std::string> display_order = {"mae", "mase", "rmse", "rmsle",
                                                           "smape"};
    {
        const auto path = dir / "ranks.csv";
        auto os = open_out(path);
        os << "model";
        for (const auto& m : display_order) {
            std::string upper = m;
            for (char& c : upper) c = static_cast<char>(std::toupper(c));
            os << ',' << (neg ? "-" : "") << upper;
        }
        os << '\n';
        const auto& rk = report.ranks;
        for (std::size_t i = 0; i < rk.models.size(); ++i) {
            os << rk.models[i];
            for (const auto& m : display_order) {
                os << ',';
                const auto it = rk.average.find(m);
                if (it != rk.average.end() && !std::isnan(it->second[i])) {
                    os << fmt_fixed(it->second[i], 3);
                }
            }
            os << '\n';
        }
        finish_out(os, path);
    }
    {
        const auto path = dir / "ranks_by_horizon.csv";
        auto os = open_out(path);
        os << "metric,horizon,model,rank\n";
        const auto& rk = report.ranks;
        for (const auto& m : rk.metrics) {
            const auto mit = rk.per_horizon.find(m);
            if (mit == rk.per_horizon.end()) continue;
            for (const auto& [h, ranks] : mit->second) {
                for (std::size_t i = 0; i < rk.models.size(); ++i) {
                    if (std::isnan(ranks[i])) continue;
                    os << m << ',' << h << ',' << rk.models[i] << ','
                       << fmt_fixed(ranks[i], 3) << '\n';
                }
            }
        }
        finish_out(os, path);
    }
}

void write_timings_csv(const EvalReport& report, const std::filesystem::path& dir) {
    {
        const auto path = dir / "timings_by_station.csv";
        auto os = open_out(path);
        os << "station,model,training_time,prediction_time,prediction_time_per_window\n";
        for (const auto& t : report.timings) {
            const double per = t.windows ? t.predict_seconds / static_cast<double>(t.windows)
                                         : 0.0;
            os << t.station << ',' << t.model << ',' << fmt_fixed(t.fit_seconds, 3) << ','
               << fmt_fixed(t.predict_seconds, 3) << ',' << fmt_fixed(per, 6) << '\n';
        }
        finish_out(os, path);
    }
    {
        const auto path = dir / "timings.csv";
        auto os = open_out(path);
        os << "model,training_time,prediction_time\n";
        std::vector<std::string> order;
        std::set<std::string> seen;
        for (const auto& t : report.timings) {
            if (seen.insert(t.model).second) order.push_back(t.model);
        }
        for (const auto& name : order) {
            double fit = 0.0;
            double pred = 0.0;
            for (const auto& t : report.timings) {
                if (t.model == name) {
                    fit += t.fit_seconds;
                    pred += t.predict_seconds;
                }
            }
            os << name << ',' << fmt_fixed(fit, 3) << ',' << fmt_fixed(pred, 3) << '\n';
        }
        finish_out(os, path);
    }
}

void write_failures_csv(const EvalReport& report, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "station,model,horizon,origin_timestamp,error\n";
    for (const auto& f : report.failures) {
        std::string quoted = "\"";
        for (char c : f.error) {
            if (c == '"') quoted += "\"\"";
            else if (c == '\n') quoted += ' ';
            else quoted += c;
        }
        quoted += '"';
        os << f.station << ',' << f.model << ',' << f.horizon << ',' << f.origin_timestamp
           << ',' << quoted << '\n';
    }
    finish_out(os, path);
}

void write_manifest(const EvalReport& report, const std::filesystem::path& path) {
    json j;
    j["version"] = kVersion;
    j["config"] = config_to_json(report.config);
    j["stations"] = report.station_ids;
    json models = json::object();
    for (const auto& m : report.config.models) {
        const auto it = report.model_info.find(m.name);
        if (it != report.model_info.end()) {
            models[m.name] = json::parse(it->second);
        } else {
            models[m.name] = {{"type", m.type}};
        }
    }
    j["models"] = models;
    j["warnings"] = report.warnings;
    auto os = open_out(path);
    os << j.dump(2) << '\n';
    finish_out(os, path);
}

void write_scatter_files(const std::filesystem::path& dir,
                         const std::vector<PredictionRow>& predictions,
                         const std::vector<std::string>& models) {
    for (const auto& name : models) {
        const auto path = dir / ("scatter_" + sanitize_name(name) + ".csv");
        auto os = open_out(path);
        os << "station,horizon,actual,predicted\n";
        for (const auto& p : predictions) {
            if (p.model != name) continue;
            os << p.station << ',' << p.horizon << ',' << fmt_g17(p.actual) << ','
               << fmt_g17(p.predicted) << '\n';
        }
        finish_out(os, path);
    }
}

void write_overlay_files(const std::filesystem::path& dir,
                         const std::vector<PredictionRow>& predictions,
                         const std::vector<std::string>& models,
                         const std::vector<std::string>& stations) {
    for (const auto& station : stations) {
        const auto path = dir / ("overlay_" + sanitize_name(station) + ".csv");
        auto os = open_out(path);
        os << "timestamp,actual";
        for (const auto& m : models) os << ',' << m;
        os << '\n';
        // One window: the longest horizon available at this station, earliest origin.
        std::size_t h_over = 0;
        for (const auto& p : predictions) {
            if (p.station == station) h_over = std::max(h_over, p.horizon);
        }
        if (h_over == 0) {
            finish_out(os, path);
            continue;
        }
        std::int64_t origin = std::numeric_limits<std::int64_t>::max();
        for (const auto& p : predictions) {
            if (p.station == station && p.horizon == h_over) {
                origin = std::min(origin, p.origin_timestamp);
            }
        }
        std::map<std::size_t, std::pair<std::int64_t, double>> truth;  // step -> (ts, actual)
        std::map<std::string, std::map<std::size_t, double>> by_model;
        for (const auto& p : predictions) {
            if (p.station != station || p.horizon != h_over || p.origin_timestamp != origin) {
                continue;
            }
            truth[p.step] = {p.timestamp, p.actual};
            by_model[p.model][p.step] = p.predicted;
        }
        for (const auto& [step, ta] : truth) {
            os << ta.first << ',' << fmt_g17(ta.second);
            for (const auto& m : models) {
                os << ',';
                const auto mit = by_model.find(m);
                if (mit != by_model.end()) {
                    const auto sit = mit->second.find(step);
                    if (sit != mit->second.end()) os << fmt_g17(sit->second);
                }
            }
            os << '\n';
        }
        finish_out(os, path);
    }
}

void write_horizon_files(const std::filesystem::path& dir, const std::vector<CellRow>& rows,
                         const std::vector<std::string>& models, bool negate) {
    std::set<std::size_t> horizon_set;
    for (const auto& r : rows) horizon_set.insert(r.horizon);
    for (const auto& metric : metric_names()) {
        const auto path = dir / ("horizon_" + metric + ".csv");
        auto os = open_out(path);
        os << "horizon";
        for (const auto& m : models) os << ',' << (negate ? "-" : "") << m;
        os << '\n';
        for (std::size_t h : horizon_set) {
            os << h;
            for (const auto& m : models) {
                double sum = 0.0;
                std::size_t n = 0;
                for (const auto& r : rows) {
                    if (r.horizon != h || r.model != m) continue;
                    const double v = metric_field(r.metrics, metric);
                    if (std::isfinite(v)) {
                        sum += v;
                        ++n;
                    }
                }
                os << ',';
                if (n) os << fmt_g17(maybe_negate(sum / static_cast<double>(n), negate));
            }
            os << '\n';
        }
        finish_out(os, path);
    }
}

std::vector<std::string> roster_names(const RunConfig& cfg) {
    std::vector<std::string> out;
    out.reserve(cfg.models.size());
    for (const auto& m : cfg.models) out.push_back(m.name);
    return out;
}

} // namespace

void RunConfig::validate() const {
    split.validate();
    if (horizons.empty()) throw DomainError("run config needs at least one horizon");
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (horizons[i] < 1) throw DomainError("horizons must be >= 1");
        if (i && horizons[i] <= horizons[i - 1]) {
            throw DomainError("horizons must be strictly increasing");
        }
    }
    if (n_windows < 1) throw DomainError("n_windows must be >= 1");
    if (context_length < 1) throw DomainError("context_length must be >= 1");
    if (n_samples < 1) throw DomainError("n_samples must be >= 1");
    if (season_length < 1) throw DomainError("season_length must be >= 1");
    if (!std::isfinite(npts_decay) || npts_decay < 0.0) {
        throw DomainError("npts_decay must be finite and >= 0");
    }
    if (models.empty()) throw DomainError("run config needs at least one model");
    std::set<std::string> names;
    for (const auto& m : models) {
        if (!known_model_types().count(m.type)) {
            throw DomainError("unknown model type: " + m.type);
        }
        check_label(m.name, "model name");
        if (!names.insert(m.name).second) {
            throw DomainError("duplicate model name: " + m.name);
        }
        if (m.type == "chronos" && m.checkpoint.empty()) {
            throw DomainError("chronos model '" + m.name + "' needs a checkpoint path");
        }
    }
    std::set<std::string> ids;
    for (const auto& s : stations) {
        check_label(s.id, "station id");
        if (!ids.insert(s.id).second) {
            throw DomainError("duplicate station id: " + s.id);
        }
    }
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("run config: ") + e.what());
    }
    try {
        RunConfig cfg = config_from_json(j);
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("run config: ") + e.what());
    }
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open run config: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    try {
        return from_json_text(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string RunConfig::to_json_text() const {
    return config_to_json(*this).dump(2) + "\n";
}

ChronosForecaster::ChronosForecaster(std::string name, SequenceModel model,
                                     TokenizerConfig tokenizer, bool nonneg_clamp)
    : name_(std::move(name)),
      model_(std::move(model)),
      tokenizer_(tokenizer),
      nonneg_clamp_(nonneg_clamp) {}

std::string ChronosForecaster::name() const { return name_; }

Forecast ChronosForecaster::predict(std::span<const double> context, std::size_t horizon,
                                    std::size_t n_samples, std::uint64_t seed) const {
    return forecast(model_, tokenizer_, context, horizon, n_samples, seed, nonneg_clamp_);
}

std::unique_ptr<Forecaster> make_forecaster(const ModelSpec& spec, const RunConfig& cfg,
                                            const std::string& station_id) {
    if (spec.type == "seasonal_naive") {
        return std::make_unique<SeasonalNaiveForecaster>(cfg.season_length);
    }
    if (spec.type == "npts") {
        return std::make_unique<NptsForecaster>(cfg.npts_decay);
    }
    if (spec.type == "theta") {
        return std::make_unique<ThetaForecaster>();
    }
    if (spec.type == "ses") {
        return std::make_unique<SmoothingForecaster>(SmoothingVariant::Simple);
    }
    if (spec.type == "holt") {
        return std::make_unique<SmoothingForecaster>(SmoothingVariant::Holt);
    }
    if (spec.type == "chronos") {
        std::string path = spec.checkpoint;
        const std::string token = "{station}";
        for (std::size_t pos = path.find(token); pos != std::string::npos;
             pos = path.find(token, pos)) {
            path.replace(pos, token.size(), station_id);
            pos += station_id.size();
        }
        LoadedCheckpoint loaded = load_checkpoint(path);
        return std::make_unique<ChronosForecaster>(spec.name, std::move(loaded.model),
                                                   loaded.tokenizer, cfg.nonneg_clamp);
    }
    throw DomainError("unknown model type: " + spec.type);
}

std::vector<std::size_t> window_origins(std::size_t test_len, std::size_t context_length,
                                        std::size_t horizon, std::size_t n_windows) {
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    if (n_windows < 1) throw DomainError("n_windows must be >= 1");
    if (test_len < context_length + horizon) {
        throw TooShortError("test split too short for horizon " + std::to_string(horizon) +
                            ": needs " + std::to_string(context_length + horizon) +
                            " points, has " + std::to_string(test_len));
    }
    const std::size_t lo = context_length;
    const std::size_t hi = test_len - horizon;
    if (n_windows == 1) return {lo};
    std::vector<std::size_t> origins(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) {
        origins[i] = lo + (i * (hi - lo)) / (n_windows - 1);
    }
    return origins;
}

std::vector<BacktestCell> backtest(const Forecaster& forecaster, const TimeSeries& series,
                                   const RunConfig& cfg,
                                   std::optional<std::uint64_t> base_seed) {
    StationData data = prepare_station(series, cfg.split);
    const std::uint64_t base = base_seed.value_or(cfg.seed);
    std::vector<BacktestCell> cells;
    for (std::size_t h : cfg.horizons) {
        const auto origins =
            window_origins(data.test_values.size(), cfg.context_length, h, cfg.n_windows);
        for (std::size_t w = 0; w < origins.size(); ++w) {
            cells.push_back(eval_one(forecaster, data.test_values, data.test_timestamps,
                                     origins[w], cfg.context_length, h, cfg,
                                     cell_seed(base, h, w)));
        }
    }
    return cells;
}

EvalReport run_experiment(const RunConfig& cfg, const std::vector<TimeSeries>& stations) {
    cfg.validate();
    if (stations.empty()) throw DataError("run needs at least one station series");
    if (!cfg.stations.empty() && cfg.stations.size() != stations.size()) {
        throw DataError("station roster size does not match the series list");
    }
    using clock = std::chrono::steady_clock;
    EvalReport report;
    report.config = cfg;

    for (std::size_t si = 0; si < stations.size(); ++si) {
        StationData data = prepare_station(stations[si], cfg.split);
        report.station_ids.push_back(data.id);

        for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
            const ModelSpec& spec = cfg.models[mi];
            const std::uint64_t base = derive_seed(derive_seed(cfg.seed, si), mi);

            const auto fit_start = clock::now();
            std::unique_ptr<Forecaster> forecaster;
            try {
                forecaster = make_forecaster(spec, cfg, data.id);
                forecaster->fit(data.train);
            } catch (const std::exception& e) {
                for (std::size_t h : cfg.horizons) {
                    report.failures.push_back(
                        {data.id, spec.name, h, 0, std::string("fit: ") + e.what()});
                }
                const double fit_s =
                    std::chrono::duration<double>(clock::now() - fit_start).count();
                report.timings.push_back({data.id, spec.name, fit_s, 0.0, 0});
                continue;
            }
            const double fit_seconds =
                std::chrono::duration<double>(clock::now() - fit_start).count();

            if (spec.type == "chronos" && !report.model_info.count(spec.name)) {
                const auto* cf = dynamic_cast<const ChronosForecaster*>(forecaster.get());
                if (cf) {
                    const ModelConfig& mc = cf->model().config();
                    const TokenizerConfig& tc = cf->tokenizer();
                    json info = {
                        {"type", spec.type},
                        {"checkpoint", spec.checkpoint},
                        {"model",
                         {{"vocab_size", mc.vocab_size},
                          {"context_length", mc.context_length},
                          {"embed_dim", mc.embed_dim},
                          {"num_layers", mc.num_layers},
                          {"num_heads", mc.num_heads},
                          {"train_horizon", mc.train_horizon},
                          {"learning_rate", mc.learning_rate},
                          {"max_steps", mc.max_steps},
                          {"batch_size", mc.batch_size},
                          {"seed", mc.seed}}},
                        {"tokenizer",
                         {{"num_bins", tc.num_bins}, {"range", tc.range}, {"layout", tc.layout}}},
                        {"param_count", cf->model().parameters().size()}};
                    report.model_info[spec.name] = info.dump();
                }
            }

            const auto predict_start = clock::now();
            std::size_t windows_done = 0;
            for (std::size_t h : cfg.horizons) {
                std::vector<std::size_t> origins;
                try {
                    origins = window_origins(data.test_values.size(), cfg.context_length, h,
                                             cfg.n_windows);
                } catch (const std::exception& e) {
                    report.failures.push_back({data.id, spec.name, h, 0, e.what()});
                    continue;
                }
                for (std::size_t w = 0; w < origins.size(); ++w) {
                    const std::size_t origin = origins[w];
                    try {
                        BacktestCell cell =
                            eval_one(*forecaster, data.test_values, data.test_timestamps,
                                     origin, cfg.context_length, h, cfg,
                                     cell_seed(base, h, w));
                        report.rows.push_back({data.id, spec.name, h,
                                               cell.window.origin_timestamp, cell.metrics});
                        append_predictions(report, data.id, spec.name, cell,
                                           data.test_timestamps, origin);
                        ++windows_done;
                    } catch (const std::exception& e) {
                        report.failures.push_back({data.id, spec.name, h,
                                                   data.test_timestamps[origin], e.what()});
                    }
                }
            }
            const double predict_seconds =
                std::chrono::duration<double>(clock::now() - predict_start).count();
            report.timings.push_back(
                {data.id, spec.name, fit_seconds, predict_seconds, windows_done});
        }
    }

    if (report.rows.empty()) {
        throw RunFailedError("no cell produced a score; see failure records");
    }
    report.ranks = rank_models(report);

    // Directional degradation check between the shortest and longest horizon.
    const std::size_t h_lo = cfg.horizons.front();
    const std::size_t h_hi = cfg.horizons.back();
    if (h_hi > h_lo) {
        for (const auto& name : roster_names(cfg)) {
            double sum_lo = 0.0;
            double sum_hi = 0.0;
            std::size_t n_lo = 0;
            std::size_t n_hi = 0;
            for (const auto& r : report.rows) {
                if (r.model != name || !std::isfinite(r.metrics.mase)) continue;
                if (r.horizon == h_lo) {
                    sum_lo += r.metrics.mase;
                    ++n_lo;
                } else if (r.horizon == h_hi) {
                    sum_hi += r.metrics.mase;
                    ++n_hi;
                }
            }
            if (n_lo && n_hi && sum_hi / static_cast<double>(n_hi) <
                                    sum_lo / static_cast<double>(n_lo)) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "%s mean MASE at h=%zu (%.4f) below h=%zu (%.4f)",
                              name.c_str(), h_hi, sum_hi / static_cast<double>(n_hi), h_lo,
                              sum_lo / static_cast<double>(n_lo));
                report.warnings.emplace_back(buf);
                std::fprintf(stderr, "WARNING: %s\n", buf);
            }
        }
    }
    return report;
}

EvalReport run_experiment(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.stations.empty()) throw DataError("run config lists no stations");
    std::vector<TimeSeries> series;
    series.reserve(cfg.stations.size());
    for (const auto& s : cfg.stations) {
        if (s.cache.empty()) {
            throw DataError("station " + s.id + " has no cache path");
        }
        series.push_back(impute_forward_backward(read_cache_csv(s.cache, s.id)));
    }
    return run_experiment(cfg, series);
}

RankTable rank_models(const EvalReport& report) {
    if (report.rows.empty()) throw DataError("cannot rank an empty report");
    RankTable table;
    table.metrics = metric_names();
    table.models = report.config.models.empty() ? distinct_in_order(report.rows, &CellRow::model)
                                                : roster_names(report.config);
    {
        std::set<std::size_t> hs;
        for (const auto& r : report.rows) hs.insert(r.horizon);
        table.horizons.assign(hs.begin(), hs.end());
    }
    const std::size_t n_stations = report.station_ids.empty()
                                       ? distinct_in_order(report.rows, &CellRow::station).size()
                                       : report.station_ids.size();
    const std::size_t expected = n_stations * report.config.n_windows;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (const auto& metric : table.metrics) {
        for (std::size_t h : table.horizons) {
            std::vector<double> means(table.models.size(), nan);
            std::vector<bool> eligible(table.models.size(), false);
            for (std::size_t i = 0; i < table.models.size(); ++i) {
                double sum = 0.0;
                std::size_t count = 0;
                bool finite = true;
                for (const auto& r : report.rows) {
                    if (r.horizon != h || r.model != table.models[i]) continue;
                    const double v = metric_field(r.metrics, metric);
                    if (!std::isfinite(v)) finite = false;
                    sum += v;
                    ++count;
                }
                if (count == expected && finite) {
                    means[i] = sum / static_cast<double>(count);
                    eligible[i] = true;
                }
            }
            std::vector<std::size_t> idx;
            std::vector<double> sub;
            for (std::size_t i = 0; i < means.size(); ++i) {
                if (eligible[i]) {
                    idx.push_back(i);
                    sub.push_back(means[i]);
                }
            }
            std::vector<double> ranks(table.models.size(), nan);
            if (!idx.empty()) {
                const auto sub_ranks = fractional_ranks(sub);
                for (std::size_t t = 0; t < idx.size(); ++t) ranks[idx[t]] = sub_ranks[t];
            }
            table.per_horizon[metric][h] = std::move(ranks);
        }
        std::vector<double> avg(table.models.size(), nan);
        for (std::size_t i = 0; i < table.models.size(); ++i) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t h : table.horizons) {
                const double r = table.per_horizon[metric][h][i];
                if (!std::isnan(r)) {
                    sum += r;
                    ++count;
                }
            }
            if (count) avg[i] = sum / static_cast<double>(count);
        }
        table.average[metric] = std::move(avg);
    }
    return table;
}

void emit_reports(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory: " + out_dir.string());
    const auto plot_dir = out_dir / "plotdata";
    std::filesystem::create_directories(plot_dir, ec);
    if (ec) throw IoError("cannot create plotdata directory: " + plot_dir.string());

    write_metrics_csv(report, out_dir / "metrics.csv");
    write_predictions_csv(report, out_dir / "predictions.csv");
    write_ranks_csv(report, out_dir);
    write_timings_csv(report, out_dir);
    write_failures_csv(report, out_dir / "failures.csv");
    write_manifest(report, out_dir / "manifest.json");

    const auto models = report.config.models.empty()
                            ? distinct_in_order(report.rows, &CellRow::model)
                            : roster_names(report.config);
    const auto stations = report.station_ids;
    write_scatter_files(plot_dir, report.predictions, models);
    write_overlay_files(plot_dir, report.predictions, models, stations);
    write_horizon_files(plot_dir, report.rows, models, report.config.negate_scores);
}

void emit_plotdata(const std::filesystem::path& report_dir, const std::string& figure) {
    const auto manifest_path = report_dir / "manifest.json";
    std::ifstream is(manifest_path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    RunConfig cfg;
    std::vector<std::string> stations;
    try {
        cfg = config_from_json(manifest.at("config"));
        stations = manifest.at("stations").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    const auto models = roster_names(cfg);

    const auto plot_dir = report_dir / "plotdata";
    std::error_code ec;
    std::filesystem::create_directories(plot_dir, ec);
    if (ec) throw IoError("cannot create plotdata directory: " + plot_dir.string());

    if (figure == "scatter") {
        write_scatter_files(plot_dir, read_predictions_csv(report_dir / "predictions.csv"),
                            models);
    } else if (figure == "overlay") {
        write_overlay_files(plot_dir, read_predictions_csv(report_dir / "predictions.csv"),
                            models, stations);
    } else if (figure == "horizon") {
        write_horizon_files(plot_dir, read_metrics_csv(report_dir / "metrics.csv"), models,
                            cfg.negate_scores);
    } else {
        throw DomainError("unknown figure family: " + figure);
    }
}

EvalReport load_report(const std::filesystem::path& report_dir) {
    const auto manifest_path = report_dir / "manifest.json";
    std::ifstream is(manifest_path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    EvalReport report;
    try {
        report.config = config_from_json(manifest.at("config"));
        report.station_ids = manifest.at("stations").get<std::vector<std::string>>();
        if (manifest.contains("warnings")) {
            report.warnings = manifest.at("warnings").get<std::vector<std::string>>();
        }
        if (manifest.contains("models")) {
            for (const auto& [name, info] : manifest.at("models").items()) {
                report.model_info[name] = info.dump();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    report.rows = read_metrics_csv(report_dir / "metrics.csv");
    return report;
}

void emit_ranks(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory: " + out_dir.string());
    write_ranks_csv(report, out_dir);
}

std::vector<CellRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open metrics file: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path.string() + ": empty metrics file");
    auto header = split_fields(line);
    const std::vector<std::string> prefix = {"station", "model", "horizon", "origin_timestamp"};
    if (header.size() != prefix.size() + metric_names().size() + 1) {
        throw FormatError(path.string() + ": unexpected metrics header");
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (header[i] != prefix[i]) {
            throw FormatError(path.string() + ": unexpected metrics header");
        }
    }
    const bool negated = !header[4].empty() && header[4][0] == '-';
    for (std::size_t i = 0; i < metric_names().size(); ++i) {
        std::string name = header[prefix.size() + i];
        if (negated && !name.empty() && name[0] == '-') name.erase(0, 1);
        if (name != metric_names()[i]) {
            throw FormatError(path.string() + ": unexpected metric column '" + name + "'");
        }
    }
    if (header.back() != "flags") {
        throw FormatError(path.string() + ": missing flags column");
    }

    std::vector<CellRow> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": wrong field count");
        }
        CellRow row;
        row.station = fields[0];
        row.model = fields[1];
        row.horizon = parse_int_field<std::size_t>(fields[2], path, line_no);
        row.origin_timestamp = parse_int_field<std::int64_t>(fields[3], path, line_no);
        double values[5];
        for (std::size_t i = 0; i < 5; ++i) {
            values[i] = parse_double_field(fields[4 + i], path, line_no);
            if (negated && !std::isnan(values[i])) values[i] = -values[i];
        }
        row.metrics.mae = values[0];
        row.metrics.rmse = values[1];
        row.metrics.smape = values[2];
        row.metrics.rmsle = values[3];
        row.metrics.mase = values[4];
        row.metrics.flags = flags_from_string(fields[9]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open predictions file: " + path.string());
    std::string line;
    if (!std::getline(is, line)) {
        throw FormatError(path.string() + ": empty predictions file");
    }
    if (split_fields(line) !=
        std::vector<std::string>{"station", "model", "horizon", "origin_timestamp", "step",
                                 "timestamp", "actual", "predicted", "q10", "q90"}) {
        throw FormatError(path.string() + ": unexpected predictions header");
    }
    std::vector<PredictionRow> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != 10) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": wrong field count");
        }
        PredictionRow row;
        row.station = fields[0];
        row.model = fields[1];
        row.horizon = parse_int_field<std::size_t>(fields[2], path, line_no);
        row.origin_timestamp = parse_int_field<std::int64_t>(fields[3], path, line_no);
        row.step = parse_int_field<std::size_t>(fields[4], path, line_no);
        row.timestamp = parse_int_field<std::int64_t>(fields[5], path, line_no);
        row.actual = parse_double_field(fields[6], path, line_no);
        row.predicted = parse_double_field(fields[7], path, line_no);
        row.q10 = parse_double_field(fields[8], path, line_no);
        row.q90 = parse_double_field(fields[9], path, line_no);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace wavecast
