#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "wavecast/checkpoint.hpp"
#include "wavecast/errors.hpp"
#include "wavecast/gp.hpp"
#include "wavecast/harness.hpp"
#include "wavecast/model.hpp"
#include "wavecast/ndbc.hpp"
#include "wavecast/series.hpp"
#include "wavecast/tokenizer.hpp"
#include "wavecast/version.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TrainConfig {
    wavecast::ModelConfig model;
    wavecast::TokenizerConfig tokenizer;
};

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw wavecast::FormatError(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw wavecast::IoError("cannot open training config: " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw wavecast::FormatError(path + ": " + e.what());
    }
    TrainConfig cfg;
    try {
        check_keys(j, {"model", "tokenizer"}, "training config");
        if (j.contains("tokenizer")) {
            const auto& jt = j.at("tokenizer");
            check_keys(jt, {"num_bins", "range", "layout"}, "tokenizer config");
            if (jt.contains("num_bins")) cfg.tokenizer.num_bins = jt.at("num_bins").get<std::size_t>();
            if (jt.contains("range")) cfg.tokenizer.range = jt.at("range").get<double>();
            if (jt.contains("layout")) cfg.tokenizer.layout = jt.at("layout").get<std::string>();
        }
        bool vocab_given = false;
        if (j.contains("model")) {
            const auto& jm = j.at("model");
            check_keys(jm,
                       {"vocab_size", "context_length", "embed_dim", "num_layers", "num_heads",
                        "train_horizon", "learning_rate", "max_steps", "batch_size", "seed"},
                       "model config");
            auto& m = cfg.model;
            if (jm.contains("vocab_size")) {
                m.vocab_size = jm.at("vocab_size").get<std::size_t>();
                vocab_given = true;
            }
            if (jm.contains("context_length")) m.context_length = jm.at("context_length").get<std::size_t>();
            if (jm.contains("embed_dim")) m.embed_dim = jm.at("embed_dim").get<std::size_t>();
            if (jm.contains("num_layers")) m.num_layers = jm.at("num_layers").get<std::size_t>();
            if (jm.contains("num_heads")) m.num_heads = jm.at("num_heads").get<std::size_t>();
            if (jm.contains("train_horizon")) m.train_horizon = jm.at("train_horizon").get<std::size_t>();
            if (jm.contains("learning_rate")) m.learning_rate = jm.at("learning_rate").get<double>();
            if (jm.contains("max_steps")) m.max_steps = jm.at("max_steps").get<std::size_t>();
            if (jm.contains("batch_size")) m.batch_size = jm.at("batch_size").get<std::size_t>();
            if (jm.contains("seed")) m.seed = jm.at("seed").get<std::uint64_t>();
        }
        if (!vocab_given) cfg.model.vocab_size = cfg.tokenizer.num_bins + 2;
    } catch (const json::exception& e) {
        throw wavecast::FormatError(path + ": " + e.what());
    }
    return cfg;
}

std::vector<wavecast::TimeSeries> load_corpus_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw wavecast::IoError("corpus path is not a directory: " + dir);
    }
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw wavecast::DataError("no .csv series found in " + dir);
    std::vector<wavecast::TimeSeries> corpus;
    corpus.reserve(paths.size());
    for (const auto& p : paths) {
        corpus.push_back(wavecast::impute_forward_backward(wavecast::read_cache_csv(p.string())));
    }
    return corpus;
}

void run_ingest(const std::string& in, const std::string& station, const std::string& out) {
    wavecast::ParseReport report;
    const wavecast::TimeSeries series = wavecast::ingest_station(in, station, &report);
    wavecast::write_cache_csv(out, series);
    std::size_t missing = 0;
    for (const auto& v : series.values()) {
        if (!v) ++missing;
    }
    std::printf("station %s: %zu rows read (%zu kept, %zu sentinel, %zu sub-hourly dropped, "
                "%zu skipped, %zu out of order)\n",
                station.c_str(), report.total_rows, report.kept_present, report.kept_sentinel,
                report.dropped_subhourly, report.skipped.size(), report.out_of_order);
    std::printf("hourly grid: %zu slots, %zu missing -> %s\n", series.size(), missing,
                out.c_str());
}

void run_synth(std::size_t n, std::size_t len, std::uint64_t seed, const std::string& out) {
    const wavecast::NonnegShaping shaping;
    const auto corpus = wavecast::gen_corpus(n, len, seed, &shaping);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw wavecast::IoError("cannot create output directory: " + out);
    for (const auto& series : corpus) {
        wavecast::write_cache_csv((fs::path(out) / (series.station_id() + ".csv")).string(),
                                  series);
    }
    std::printf("wrote %zu series of length %zu to %s\n", corpus.size(), len, out.c_str());
}

void run_train(const std::string& corpus_dir, const std::string& config,
               const std::string& out) {
    const TrainConfig cfg = load_train_config(config);
    const auto corpus = load_corpus_dir(corpus_dir);
    wavecast::TrainStats stats;
    const wavecast::SequenceModel model =
        wavecast::train(corpus, cfg.model, cfg.tokenizer, &stats);
    wavecast::save_checkpoint(out, model, cfg.tokenizer);
    std::printf("trained %zu steps on %zu series in %.3f s, final loss %.6f -> %s\n",
                stats.steps, corpus.size(), stats.seconds, stats.final_loss, out.c_str());
}

void run_finetune(const std::string& ckpt, const std::string& station_csv, std::size_t steps,
                  std::uint64_t seed, const std::string& out) {
    wavecast::LoadedCheckpoint loaded = wavecast::load_checkpoint(ckpt);
    const wavecast::TimeSeries series =
        wavecast::impute_forward_backward(wavecast::read_cache_csv(station_csv));
    auto [train_split, val_split, test_split] = wavecast::split_chronological(series);
    (void)val_split;
    (void)test_split;
    wavecast::TrainStats stats;
    const wavecast::SequenceModel tuned =
        wavecast::fine_tune(std::move(loaded.model), {train_split}, loaded.tokenizer, steps,
                            seed, &stats);
    wavecast::save_checkpoint(out, tuned, loaded.tokenizer);
    std::printf("fine-tuned %zu steps on %s (train split, %zu points) in %.3f s, "
                "final loss %.6f -> %s\n",
                stats.steps, series.station_id().c_str(), train_split.size(), stats.seconds,
                stats.final_loss, out.c_str());
}

void run_evaluate(const std::string& config, const std::string& out) {
    const wavecast::RunConfig cfg = wavecast::RunConfig::from_json_file(config);
    const wavecast::EvalReport report = wavecast::run_experiment(cfg);
    wavecast::emit_reports(report, out);
    std::printf("scored %zu cells over %zu stations x %zu models x %zu horizons "
                "(%zu failures) -> %s\n",
                report.rows.size(), report.station_ids.size(), cfg.models.size(),
                cfg.horizons.size(), report.failures.size(), out.c_str());
    for (const auto& w : report.warnings) {
        std::printf("warning: %s\n", w.c_str());
    }
}

void print_rank_table(const wavecast::RankTable& ranks, bool negate) {
    static const std::vector<std::string> order = {"mae", "mase", "rmse", "rmsle", "smape"};
    std::printf("%-16s", "model");
    for (const auto& m : order) {
        std::string upper = m;
        for (char& c : upper) c = static_cast<char>(std::toupper(c));
        std::printf("%9s", ((negate ? "-" : "") + upper).c_str());
    }
    std::printf("\n");
    for (std::size_t i = 0; i < ranks.models.size(); ++i) {
        std::printf("%-16s", ranks.models[i].c_str());
        for (const auto& m : order) {
            const auto it = ranks.average.find(m);
            if (it != ranks.average.end() && !std::isnan(it->second[i])) {
                std::printf("%9.3f", it->second[i]);
            } else {
                std::printf("%9s", "-");
            }
        }
        std::printf("\n");
    }
}

void run_rank(const std::string& report_dir) {
    wavecast::EvalReport report = wavecast::load_report(report_dir);
    report.ranks = wavecast::rank_models(report);
    wavecast::emit_ranks(report, report_dir);
    print_rank_table(report.ranks, report.config.negate_scores);
}

void run_plotdata(const std::string& report_dir, const std::string& figure) {
    wavecast::emit_plotdata(report_dir, figure);
    std::printf("rebuilt %s plot data under %s\n", figure.c_str(),
                (fs::path(report_dir) / "plotdata").string().c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tokenized probabilistic forecasting of significant wave height"};
    app.require_subcommand(1);
    app.set_version_flag("--version", wavecast::kVersion);

    std::string in_dir;
    std::string station;
    std::string out_path;
    std::size_t synth_n = 0;
    std::size_t synth_len = 0;
    std::uint64_t seed = 0;
    std::string corpus_dir;
    std::string config_path;
    std::string ckpt_path;
    std::string station_csv;
    std::size_t steps = 0;
    std::string report_dir;
    std::string figure;

    auto* ingest = app.add_subcommand("ingest", "Parse NDBC stdmet files into an hourly cache");
    ingest->add_option("--in", in_dir, "Directory of raw stdmet files")->required();
    ingest->add_option("--station", station, "Station id, e.g. 41008")->required();
    ingest->add_option("--out", out_path, "Cache CSV to write")->required();

    auto* synth = app.add_subcommand("synth", "Generate a Gaussian-process synthetic corpus");
    synth->add_option("--n", synth_n, "Number of series")->required();
    synth->add_option("--len", synth_len, "Series length in hours")->required();
    synth->add_option("--seed", seed, "Master seed")->required();
    synth->add_option("--out", out_path, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train a sequence model on a corpus directory");
    train->add_option("--corpus", corpus_dir, "Directory of cache CSVs")->required();
    train->add_option("--config", config_path, "Model/tokenizer JSON config")->required();
    train->add_option("--out", out_path, "Checkpoint to write")->required();

    auto* finetune = app.add_subcommand("finetune", "Continue training on one station's train split");
    finetune->add_option("--ckpt", ckpt_path, "Checkpoint to start from")->required();
    finetune->add_option("--station", station_csv, "Station cache CSV")->required();
    finetune->add_option("--steps", steps, "Training steps")->required();
    finetune->add_option("--out", out_path, "Checkpoint to write")->required();
    finetune->add_option("--seed", seed, "Batch sampling seed")->default_val(1);

    auto* evaluate = app.add_subcommand("evaluate", "Run the full multi-horizon benchmark");
    evaluate->add_option("--config", config_path, "Run config JSON")->required();
    evaluate->add_option("--out", out_path, "Report directory to write")->required();

    auto* rank = app.add_subcommand("rank", "Recompute rank aggregation for a report");
    rank->add_option("--report", report_dir, "Report directory")->required();

    auto* plotdata = app.add_subcommand("plotdata", "Regenerate one plotdata figure family");
    plotdata->add_option("--report", report_dir, "Report directory")->required();
    plotdata->add_option("--figure", figure, "Figure family")
        ->required()
        ->check(CLI::IsMember({"scatter", "overlay", "horizon"}));

    ingest->callback([&] { run_ingest(in_dir, station, out_path); });
    synth->callback([&] { run_synth(synth_n, synth_len, seed, out_path); });
    train->callback([&] { run_train(corpus_dir, config_path, out_path); });
    finetune->callback([&] { run_finetune(ckpt_path, station_csv, steps, seed, out_path); });
    evaluate->callback([&] { run_evaluate(config_path, out_path); });
    rank->callback([&] { run_rank(report_dir); });
    plotdata->callback([&] { run_plotdata(report_dir, figure); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const wavecast::NumericalError& e) {
        std::fprintf(stderr, "wavecast: numerical error: %s\n", e.what());
        return 3;
    } catch (const wavecast::DataError& e) {
        std::fprintf(stderr, "wavecast: data error: %s\n", e.what());
        return 2;
    } catch (const wavecast::Error& e) {
        std::fprintf(stderr, "wavecast: error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "wavecast: error: %s\n", e.what());
        return 2;
    }
    return 0;
}
