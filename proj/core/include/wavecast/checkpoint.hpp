#pragma once

#include <string>

#include "wavecast/model.hpp"
#include "wavecast/tokenizer.hpp"

namespace wavecast {

struct LoadedCheckpoint {
    SequenceModel model;
    TokenizerConfig tokenizer;
};

/// Writes magic, a JSON header (model config, tokenizer config, seed,
/// parameter count), then the parameters as little-endian float32.
void save_checkpoint(const std::string& path, const SequenceModel& model,
                     const TokenizerConfig& tok);

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace wavecast
