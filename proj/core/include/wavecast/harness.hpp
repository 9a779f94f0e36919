#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavecast/baselines.hpp"
#include "wavecast/errors.hpp"
#include "wavecast/forecast.hpp"
#include "wavecast/metrics.hpp"
#include "wavecast/model.hpp"
#include "wavecast/series.hpp"
#include "wavecast/tokenizer.hpp"

namespace wavecast {

/// One roster entry. type selects the forecaster family; name is the label
/// used in every report row. Checkpoint paths may contain "{station}", which
/// is substituted per station (how fine-tuned models get per-station weights).
struct ModelSpec {
    std::string type;  // seasonal_naive | npts | theta | ses | holt | chronos
    std::string name;
    std::string checkpoint;
};

struct StationSpec {
    std::string id;
    std::string cache;  // hourly cache CSV produced by ingest
};

/// Full experiment description. Serializable to JSON so a run is reproducible
/// from its manifest alone.
struct RunConfig {
    std::vector<StationSpec> stations;
    std::vector<ModelSpec> models;
    SplitSpec split;
    std::vector<std::size_t> horizons = {1, 3, 6, 12, 24, 36, 48, 60, 72, 84, 96, 108, 120};
    std::size_t n_windows = 50;
    std::size_t context_length = 120;
    std::size_t n_samples = 20;
    std::size_t season_length = 24;
    double npts_decay = 0.1;
    bool nonneg_clamp = true;
    bool negate_scores = false;
    std::uint64_t seed = 0;

    void validate() const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_json_file(const std::filesystem::path& path);
    std::string to_json_text() const;
};

/// Adapts a trained sequence model to the Forecaster interface.
class ChronosForecaster : public Forecaster {
public:
    ChronosForecaster(std::string name, SequenceModel model, TokenizerConfig tokenizer,
                      bool nonneg_clamp);
    std::string name() const override;
    Forecast predict(std::span<const double> context, std::size_t horizon,
                     std::size_t n_samples, std::uint64_t seed) const override;
    const SequenceModel& model() const { return model_; }
    const TokenizerConfig& tokenizer() const { return tokenizer_; }

private:
    std::string name_;
    SequenceModel model_;
    TokenizerConfig tokenizer_;
    bool nonneg_clamp_;
};

/// Builds a forecaster for one roster entry; "{station}" in checkpoint paths
/// is replaced with station_id before loading.
std::unique_ptr<Forecaster> make_forecaster(const ModelSpec& spec, const RunConfig& cfg,
                                            const std::string& station_id);

struct CellRow {
    std::string station;
    std::string model;
    std::size_t horizon = 0;
    std::int64_t origin_timestamp = 0;  // timestamp of the first target step
    MetricReport metrics;
};

struct PredictionRow {
    std::string station;
    std::string model;
    std::size_t horizon = 0;
    std::int64_t origin_timestamp = 0;
    std::size_t step = 0;  // 1-based within the horizon
    std::int64_t timestamp = 0;
    double actual = 0.0;
    double predicted = 0.0;
    double q10 = 0.0;
    double q90 = 0.0;
};

struct FailureRow {
    std::string station;
    std::string model;
    std::size_t horizon = 0;         // 0 when the fit stage failed
    std::int64_t origin_timestamp = 0;  // 0 when no window applies
    std::string error;
};

struct TimingRow {
    std::string station;
    std::string model;
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
    std::size_t windows = 0;
};

struct RankTable {
    std::vector<std::string> models;     // roster order
    std::vector<std::string> metrics;    // mae, rmse, smape, rmsle, mase
    std::vector<std::size_t> horizons;
    // metric -> horizon -> rank per model (NaN where a model lacked complete rows)
    std::map<std::string, std::map<std::size_t, std::vector<double>>> per_horizon;
    // metric -> mean rank per model across the horizons it was ranked at
    std::map<std::string, std::vector<double>> average;
};

struct EvalReport {
    RunConfig config;
    std::vector<std::string> station_ids;
    std::vector<CellRow> rows;
    std::vector<PredictionRow> predictions;
    std::vector<FailureRow> failures;
    std::vector<TimingRow> timings;
    RankTable ranks;
    std::vector<std::string> warnings;
    // model name -> JSON text describing loaded checkpoints (config, tokenizer)
    std::map<std::string, std::string> model_info;
};

struct BacktestCell {
    Window window;
    std::size_t horizon = 0;
    Forecast forecast;
    MetricReport metrics;
};

/// Evenly spaced forecast origins for one horizon: first at index
/// context_length, last at test_len - horizon, k points total (k = 1 keeps
/// only the first). Throws TooShortError naming the horizon when the test
/// split cannot hold a single window.
std::vector<std::size_t> window_origins(std::size_t test_len, std::size_t context_length,
                                        std::size_t horizon, std::size_t n_windows);

/// Rolling-origin evaluation of one forecaster over the test split of one
/// series. Scores each window with the context-anchored metric suite against
/// the true targets. base_seed defaults to cfg.seed; run_experiment passes a
/// per-(station, model) derivation so cells keep their seeds under any
/// evaluation order.
std::vector<BacktestCell> backtest(const Forecaster& forecaster, const TimeSeries& series,
                                   const RunConfig& cfg,
                                   std::optional<std::uint64_t> base_seed = std::nullopt);

/// Full protocol over an in-memory station list (aligned with cfg.stations
/// when that is nonempty): per station, fit every roster model on the train
/// split (timed), evaluate every (horizon, window) cell (timed), isolate
/// per-cell failures, rank. Throws RunFailedError when no cell succeeds.
EvalReport run_experiment(const RunConfig& cfg, const std::vector<TimeSeries>& stations);

/// Loads cfg.stations caches from disk, imputes gaps, and runs.
EvalReport run_experiment(const RunConfig& cfg);

/// Fractional ranks (ties share the mean of tied positions) per (metric,
/// horizon) over mean error across stations and windows, lower error = rank 1,
/// then per-metric averages across horizons. Models without complete finite
/// rows at a (metric, horizon) are left NaN there.
RankTable rank_models(const EvalReport& report);

/// Writes metrics.csv, predictions.csv, ranks.csv, ranks_by_horizon.csv,
/// timings.csv (Table-8 layout), timings_by_station.csv, failures.csv,
/// manifest.json, and plotdata/ figure CSVs under out_dir.
void emit_reports(const EvalReport& report, const std::filesystem::path& out_dir);

/// Regenerates one plotdata figure family from an emitted report directory.
/// figure is "scatter", "overlay", or "horizon".
void emit_plotdata(const std::filesystem::path& report_dir, const std::string& figure);

/// Reloads manifest.json and metrics.csv from an emitted report directory
/// (predictions and timings are not loaded). Ranks are left empty; call
/// rank_models to rebuild them.
EvalReport load_report(const std::filesystem::path& report_dir);

/// Rewrites ranks.csv and ranks_by_horizon.csv from report.ranks.
void emit_ranks(const EvalReport& report, const std::filesystem::path& out_dir);

/// Reads metrics.csv back into cell rows, undoing score negation when the
/// header carries "-" prefixes.
std::vector<CellRow> read_metrics_csv(const std::filesystem::path& path);

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

} // namespace wavecast
