#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wavecast/errors.hpp"
#include "wavecast/forecast.hpp"
#include "wavecast/series.hpp"
#include "wavecast/tokenizer.hpp"

namespace wavecast {

/// Hyperparameters for the sequence model. context_length is the
/// positional capacity: every training or generation sequence, targets
/// and EOS included, must fit inside it.
struct ModelConfig {
    std::size_t vocab_size = 130;  // num_bins + 2 specials
    std::size_t context_length = 128;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t train_horizon = 24;
    double learning_rate = 0.1;
    std::size_t max_steps = 500;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;

    void validate() const;
    /// Context length of a training window: capacity minus targets and EOS.
    std::size_t train_context() const;
};

/// Summary of one training run, kept for the timing report.
struct TrainStats {
    std::size_t steps = 0;
    double final_loss = 0.0;
    double seconds = 0.0;
    std::vector<double> loss_history;
};

/// Anything that assigns categorical next-token distributions: the
/// transformer and the count-based verification oracle share it.
class TokenModel {
public:
    virtual ~TokenModel() = default;
    virtual std::size_t vocab_size() const = 0;

    /// Per-position distributions; row t conditions on ids[0..t] only.
    virtual std::vector<std::vector<double>> forward_probs(
        const std::vector<int>& ids) const = 0;

    virtual std::vector<double> next_token_probs(const std::vector<int>& ids) const;

    /// Autoregressive sampling of n paths of `horizon` value tokens.
    /// PAD/EOS are masked out and the distribution renormalized, so paths
    /// contain value tokens only. Deterministic given seed.
    virtual std::vector<std::vector<int>> sample_paths(const std::vector<int>& ids,
                                                       std::size_t horizon,
                                                       std::size_t n,
                                                       std::uint64_t seed) const;
};

/// Decoder-only causal transformer over the token vocabulary, trained
/// with cross entropy on the target-plus-EOS positions. Parameters live
/// in one flat vector; layout order is token embedding, positional
/// embedding, per layer {ln1, Wq,bq, Wk,bk, Wv,bv, Wo,bo, ln2, W1,b1,
/// W2,b2}, final layer norm, then the output head. Matrices are
/// row-major with rows indexed by input dimension.
class SequenceModel : public TokenModel {
public:
    explicit SequenceModel(ModelConfig cfg);
    SequenceModel(ModelConfig cfg, std::vector<double> params);

    static std::size_t parameter_count(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<double>& parameters() const { return params_; }
    std::vector<double>& mutable_parameters() { return params_; }
    std::size_t vocab_size() const override { return cfg_.vocab_size; }

    std::vector<std::vector<double>> forward_probs(
        const std::vector<int>& ids) const override;

    /// Mean negative log-likelihood over the scored positions: the
    /// horizon targets plus the EOS terminator. The trailing token must
    /// be EOS and context positions are excluded.
    double loss(const std::vector<int>& ids, std::size_t context_len) const;

    /// Same value as loss; adds d(loss)/d(theta) scaled by `weight` into
    /// `grad` (length parameter_count).
    double loss_and_grad(const std::vector<int>& ids, std::size_t context_len,
                         std::vector<double>& grad, double weight) const;

    std::vector<std::vector<int>> sample_paths(const std::vector<int>& ids,
                                               std::size_t horizon, std::size_t n,
                                               std::uint64_t seed) const override;

    /// Max relative error between analytic and central finite-difference
    /// gradients on `n_params` randomly chosen coordinates.
    double gradient_check(const std::vector<int>& ids, std::size_t context_len,
                          std::size_t n_params, std::uint64_t seed) const;

private:
    ModelConfig cfg_;
    std::vector<double> params_;
};

/// Pretrains from scratch on the corpus. Deterministic given cfg.seed.
SequenceModel train(const std::vector<TimeSeries>& corpus, const ModelConfig& cfg,
                    const TokenizerConfig& tok, TrainStats* stats = nullptr);

/// Continues training from the given parameters for `steps` steps; zero
/// steps returns the model unchanged.
SequenceModel fine_tune(SequenceModel model, const std::vector<TimeSeries>& corpus,
                        const TokenizerConfig& tok, std::size_t steps,
                        std::uint64_t seed, TrainStats* stats = nullptr);

/// End-to-end forecast: scale and quantize the raw context, sample token
/// paths, map tokens back through bin centers and the context scale.
/// The context is clipped to its tail when context + horizon would
/// exceed the positional capacity.
Forecast forecast(const SequenceModel& model, const TokenizerConfig& tok,
                  std::span<const double> raw_context, std::size_t horizon,
                  std::size_t n_samples, std::uint64_t seed, bool nonneg_clamp);

/// Add-1 smoothed k-gram model over token sequences, k in {1,2}. Serves
/// as an independent, closed-form-checkable stand-in for the transformer
/// when validating the surrounding pipeline.
class MarkovModel : public TokenModel {
public:
    MarkovModel(std::size_t vocab_size, std::size_t order);

    void fit(const std::vector<std::vector<int>>& corpus);
    std::size_t vocab_size() const override { return vocab_; }
    std::size_t order() const { return order_; }

    std::vector<std::vector<double>> forward_probs(
        const std::vector<int>& ids) const override;
    std::vector<double> next_token_probs(const std::vector<int>& ids) const override;

private:
    std::vector<double> conditional(const std::vector<int>& ids,
                                    std::size_t next_pos) const;

    std::size_t vocab_;
    std::size_t order_;
    // counts_[k] flattens a (vocab^k x vocab) table of k-gram counts.
    std::vector<std::vector<std::uint32_t>> counts_;
};

MarkovModel markov_oracle_fit(const std::vector<std::vector<int>>& corpus,
                              std::size_t vocab_size, std::size_t order);

} // namespace wavecast
