#include "wavecast/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace wavecast {

namespace {

constexpr char kMagic[8] = {'W', 'V', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff),
                           static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff),
                           static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw FormatError("truncated checkpoint");
    return static_cast<std::uint32_t>(bytes[0]) |
           (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {{"vocab_size", cfg.vocab_size},
            {"context_length", cfg.context_length},
            {"embed_dim", cfg.embed_dim},
            {"num_layers", cfg.num_layers},
            {"num_heads", cfg.num_heads},
            {"train_horizon", cfg.train_horizon},
            {"learning_rate", cfg.learning_rate},
            {"max_steps", cfg.max_steps},
            {"batch_size", cfg.batch_size},
            {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.context_length = j.at("context_length").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.num_layers = j.at("num_layers").get<std::size_t>();
    cfg.num_heads = j.at("num_heads").get<std::size_t>();
    cfg.train_horizon = j.at("train_horizon").get<std::size_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.max_steps = j.at("max_steps").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

} // namespace

void save_checkpoint(const std::string& path, const SequenceModel& model,
                     const TokenizerConfig& tok) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    nlohmann::json header = {
        {"format_version", 1},
        {"model", config_to_json(model.config())},
        {"tokenizer",
         {{"num_bins", tok.num_bins}, {"range", tok.range}, {"layout", tok.layout}}},
        {"param_count", model.parameters().size()}};
    const std::string header_text = header.dump();

    out.write(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(),
              static_cast<std::streamsize>(header_text.size()));
    for (double v : model.parameters()) {
        const auto f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    if (!out) {
        throw IoError("checkpoint write failed: " + path);
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("bad checkpoint magic: " + path);
    }
    const std::uint32_t header_len = get_u32(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) throw FormatError("truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    ModelConfig cfg;
    TokenizerConfig tok;
    std::size_t param_count = 0;
    try {
        cfg = config_from_json(header.at("model"));
        const auto& jt = header.at("tokenizer");
        tok.num_bins = jt.at("num_bins").get<int>();
        tok.range = jt.at("range").get<double>();
        tok.layout = jt.at("layout").get<std::string>();
        param_count = header.at("param_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete checkpoint header: ") + e.what());
    }
    if (param_count != SequenceModel::parameter_count(cfg)) {
        throw FormatError("checkpoint parameter count does not match its config");
    }

    std::vector<double> params(param_count);
    for (std::size_t i = 0; i < param_count; ++i) {
        const std::uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        params[i] = static_cast<double>(f);
    }
    return {SequenceModel(cfg, std::move(params)), tok};
}

} // namespace wavecast
