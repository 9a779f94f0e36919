#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wavecast/errors.hpp"

namespace wavecast {

/// Affine normalization x -> (x - offset) / scale with offset fixed at 0.
/// The scale is the mean absolute value of the context; an all-zero
/// context falls back to scale 1 so encoding stays total.
struct Scaler {
    double offset = 0.0;
    double scale = 1.0;

    double to_scaled(double x) const { return (x - offset) / scale; }
    double to_value(double s) const { return s * scale + offset; }
};

/// Fits the scaler on a nonempty finite context: scale = mean(|x_i|),
/// or 1 when that mean is 0.
Scaler fit_scaler(std::span<const double> context);

/// Token id layout over the quantizer bins: 0 = PAD, 1 = EOS,
/// 2..B+1 = bins 1..B.
struct Vocabulary {
    int num_bins = 0;

    int size() const { return num_bins + 2; }
    static constexpr int pad_id() { return 0; }
    static constexpr int eos_id() { return 1; }

    int bin_to_token(int bin) const;    // bin in 1..B
    int token_to_bin(int token) const;  // value tokens only
    bool is_value_token(int token) const {
        return token >= 2 && token < size();
    }
};

/// Ordered bin centers c_1 < ... < c_B with edges b_i strictly between
/// adjacent centers. quantize maps a scaled real onto the half-open
/// cells [b_{j-1}, b_j) with b_0 = -inf and b_B = +inf, so out-of-range
/// values saturate to the extreme bins and an input equal to an edge
/// belongs to the upper bin.
class Quantizer {
public:
    /// Uniform centers over [-range, range], edges at midpoints.
    static Quantizer uniform(int num_bins, double range);

    /// Explicit layout; validates the interleaving c_i < b_i < c_{i+1}.
    Quantizer(std::vector<double> centers, std::vector<double> edges);

    int num_bins() const { return static_cast<int>(centers_.size()); }
    const std::vector<double>& centers() const { return centers_; }
    const std::vector<double>& edges() const { return edges_; }
    Vocabulary vocabulary() const { return Vocabulary{num_bins()}; }

    /// Bin index in 1..B for a finite scaled input.
    int quantize(double x_scaled) const;

    /// Center c_j for bin j in 1..B.
    double dequantize(int bin) const;

private:
    std::vector<double> centers_;
    std::vector<double> edges_;
};

/// Serializable quantizer configuration as recorded in run manifests.
struct TokenizerConfig {
    int num_bins = 128;
    double range = 15.0;
    std::string layout = "uniform";

    Quantizer build() const { return Quantizer::uniform(num_bins, range); }
};

/// Token ids together with the scaler that produced them, so forecasts
/// can be mapped back to value space.
struct TokenSequence {
    std::vector<int> ids;
    Scaler scaler;
};

/// Fits the scaler on the context, scales and quantizes every value.
TokenSequence encode(std::span<const double> context, const Quantizer& q);

/// As encode, but the scaler is fit on the first context_length values
/// only; the remainder (a training target) is scaled with the same
/// scaler. context_length must be in [1, len].
TokenSequence encode_with_context(std::span<const double> values,
                                  std::size_t context_length,
                                  const Quantizer& q);

/// Maps value tokens back to bin centers times the stored scale.
/// PAD or EOS ids raise BadTokenError.
std::vector<double> decode(const TokenSequence& tokens, const Quantizer& q);

} // namespace wavecast
