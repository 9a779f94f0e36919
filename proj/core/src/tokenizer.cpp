#include "wavecast/tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace wavecast {

Scaler fit_scaler(std::span<const double> context) {
    if (context.empty()) {
        throw EmptyContextError();
    }
    double sum_abs = 0.0;
    for (double x : context) {
        if (!std::isfinite(x)) throw NonFiniteError("non-finite context value");
        sum_abs += std::abs(x);
    }
    Scaler s;
    s.offset = 0.0;
    s.scale = sum_abs / static_cast<double>(context.size());
    if (s.scale == 0.0) s.scale = 1.0;
    return s;
}

int Vocabulary::bin_to_token(int bin) const {
    if (bin < 1 || bin > num_bins) {
        throw BadTokenError("bin index out of range");
    }
    return bin + 1;
}

int Vocabulary::token_to_bin(int token) const {
    if (!is_value_token(token)) {
        throw BadTokenError("token id " + std::to_string(token) + " is not a value token");
    }
    return token - 1;
}

Quantizer Quantizer::uniform(int num_bins, double range) {
    if (num_bins < 2) throw DataError("need at least 2 bins");
    if (!(range > 0.0)) throw DataError("bin range must be positive");
    std::vector<double> centers(num_bins);
    const double width = 2.0 * range / num_bins;
    for (int i = 0; i < num_bins; ++i) {
        centers[i] = -range + width * (static_cast<double>(i) + 0.5);
    }
    std::vector<double> edges(num_bins - 1);
    for (int i = 0; i + 1 < num_bins; ++i) {
        edges[i] = 0.5 * (centers[i] + centers[i + 1]);
    }
    return Quantizer(std::move(centers), std::move(edges));
}

Quantizer::Quantizer(std::vector<double> centers, std::vector<double> edges)
    : centers_(std::move(centers)), edges_(std::move(edges)) {
    if (centers_.size() < 2 || edges_.size() + 1 != centers_.size()) {
        throw DataError("quantizer needs B >= 2 centers and B-1 edges");
    }
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        if (!(centers_[i] < edges_[i] && edges_[i] < centers_[i + 1])) {
            throw DataError("bin edges must interleave the centers");
        }
    }
}

int Quantizer::quantize(double x_scaled) const {
    if (!std::isfinite(x_scaled)) {
        throw NonFiniteError("cannot quantize a non-finite value");
    }
    // Number of edges <= x, plus one: x == b_j lands in the upper bin.
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), x_scaled);
    return static_cast<int>(it - edges_.begin()) + 1;
}

double Quantizer::dequantize(int bin) const {
    if (bin < 1 || bin > num_bins()) {
        throw BadTokenError("bin index out of range");
    }
    return centers_[bin - 1];
}

TokenSequence encode(std::span<const double> context, const Quantizer& q) {
    return encode_with_context(context, context.size(), q);
}

TokenSequence encode_with_context(std::span<const double> values,
                                  std::size_t context_length,
                                  const Quantizer& q) {
    if (context_length < 1 || context_length > values.size()) {
        throw DataError("context_length out of range");
    }
    TokenSequence seq;
    seq.scaler = fit_scaler(values.subspan(0, context_length));
    const Vocabulary vocab = q.vocabulary();
    seq.ids.reserve(values.size());
    for (double x : values) {
        if (!std::isfinite(x)) throw NonFiniteError("non-finite value in encode");
        seq.ids.push_back(vocab.bin_to_token(q.quantize(seq.scaler.to_scaled(x))));
    }
    return seq;
}

std::vector<double> decode(const TokenSequence& tokens, const Quantizer& q) {
    const Vocabulary vocab = q.vocabulary();
    std::vector<double> out;
    out.reserve(tokens.ids.size());
    for (int id : tokens.ids) {
        const int bin = vocab.token_to_bin(id);  // throws on PAD/EOS
        out.push_back(tokens.scaler.to_value(q.dequantize(bin)));
    }
    return out;
}

} // namespace wavecast
