#include <algorithm>

#include "wavecast/model.hpp"

namespace wavecast {

namespace {

void check_token_range(const std::vector<int>& ids, std::size_t vocab) {
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw BadTokenError("token id out of range");
        }
    }
}

} // namespace

MarkovModel::MarkovModel(std::size_t vocab_size, std::size_t order)
    : vocab_(vocab_size), order_(order) {
    if (vocab_ < 3) throw DomainError("vocabulary too small");
    if (order_ < 1 || order_ > 2) throw DomainError("order must be 1 or 2");
    counts_.resize(order_ + 1);
    std::size_t contexts = 1;
    for (std::size_t k = 0; k <= order_; ++k) {
        counts_[k].assign(contexts * vocab_, 0);
        contexts *= vocab_;
    }
}

void MarkovModel::fit(const std::vector<std::vector<int>>& corpus) {
    std::size_t total = 0;
    for (const auto& seq : corpus) {
        check_token_range(seq, vocab_);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            ++total;
            for (std::size_t k = 0; k <= order_; ++k) {
                if (t < k) continue;
                std::size_t idx = 0;
                for (std::size_t j = t - k; j < t; ++j) {
                    idx = idx * vocab_ + static_cast<std::size_t>(seq[j]);
                }
                ++counts_[k][idx * vocab_ + static_cast<std::size_t>(seq[t])];
            }
        }
    }
    if (total == 0) {
        throw DataError("empty corpus");
    }
}

// Distribution of the token at next_pos given the min(order, next_pos)
// preceding ids, with add-1 smoothing.
std::vector<double> MarkovModel::conditional(const std::vector<int>& ids,
                                             std::size_t next_pos) const {
    const std::size_t k = std::min(order_, next_pos);
    std::size_t idx = 0;
    for (std::size_t j = next_pos - k; j < next_pos; ++j) {
        idx = idx * vocab_ + static_cast<std::size_t>(ids[j]);
    }
    const std::uint32_t* row = counts_[k].data() + idx * vocab_;
    double total = 0.0;
    for (std::size_t i = 0; i < vocab_; ++i) total += row[i];
    std::vector<double> out(vocab_);
    const double denom = total + static_cast<double>(vocab_);
    for (std::size_t i = 0; i < vocab_; ++i) {
        out[i] = (static_cast<double>(row[i]) + 1.0) / denom;
    }
    return out;
}

std::vector<std::vector<double>> MarkovModel::forward_probs(
    const std::vector<int>& ids) const {
    if (ids.empty()) throw ShapeError("empty token sequence");
    check_token_range(ids, vocab_);
    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        out.push_back(conditional(ids, t + 1));
    }
    return out;
}

std::vector<double> MarkovModel::next_token_probs(const std::vector<int>& ids) const {
    check_token_range(ids, vocab_);
    return conditional(ids, ids.size());
}

MarkovModel markov_oracle_fit(const std::vector<std::vector<int>>& corpus,
                              std::size_t vocab_size, std::size_t order) {
    MarkovModel model(vocab_size, order);
    model.fit(corpus);
    return model;
}

} // namespace wavecast
