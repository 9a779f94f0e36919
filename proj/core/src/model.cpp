#include "wavecast/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "wavecast/rng.hpp"

namespace wavecast {

namespace {

constexpr int kPad = Vocabulary::pad_id();
constexpr int kEos = Vocabulary::eos_id();
constexpr double kLnEps = 1e-5;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;
using ConstRowMap = Eigen::Map<const RowVec>;
using RowMap = Eigen::Map<RowVec>;

double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

double gelu_prime(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
    return cdf + x * pdf;
}

struct LayerOffsets {
    std::size_t ln1_g, ln1_b;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b;
    std::size_t w1, b1, w2, b2;
};

struct Layout {
    std::size_t V, P, D, F, nl, nh, dh;
    std::size_t tok_emb, pos_emb;
    std::vector<LayerOffsets> layers;
    std::size_t lnf_g, lnf_b, w_head, b_head;
    std::size_t total;
};

Layout make_layout(const ModelConfig& c) {
    Layout L;
    L.V = c.vocab_size;
    L.P = c.context_length;
    L.D = c.embed_dim;
    L.F = 4 * c.embed_dim;
    L.nl = c.num_layers;
    L.nh = c.num_heads;
    L.dh = c.embed_dim / c.num_heads;
    std::size_t cur = 0;
    auto take = [&cur](std::size_t n) {
        const std::size_t at = cur;
        cur += n;
        return at;
    };
    L.tok_emb = take(L.V * L.D);
    L.pos_emb = take(L.P * L.D);
    L.layers.resize(L.nl);
    for (auto& o : L.layers) {
        o.ln1_g = take(L.D);
        o.ln1_b = take(L.D);
        o.wq = take(L.D * L.D);
        o.bq = take(L.D);
        o.wk = take(L.D * L.D);
        o.bk = take(L.D);
        o.wv = take(L.D * L.D);
        o.bv = take(L.D);
        o.wo = take(L.D * L.D);
        o.bo = take(L.D);
        o.ln2_g = take(L.D);
        o.ln2_b = take(L.D);
        o.w1 = take(L.D * L.F);
        o.b1 = take(L.F);
        o.w2 = take(L.F * L.D);
        o.b2 = take(L.D);
    }
    L.lnf_g = take(L.D);
    L.lnf_b = take(L.D);
    L.w_head = take(L.D * L.V);
    L.b_head = take(L.V);
    L.total = cur;
    return L;
}

void layer_norm_forward(const Mat& x, const double* gp, const double* bp,
                        Mat& xhat, Eigen::VectorXd& rstd, Mat& out) {
    const auto T = x.rows();
    const auto D = x.cols();
    ConstRowMap g(gp, D), b(bp, D);
    xhat.resize(T, D);
    out.resize(T, D);
    rstd.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double mu = x.row(t).mean();
        const double var = (x.row(t).array() - mu).square().mean();
        const double r = 1.0 / std::sqrt(var + kLnEps);
        rstd(t) = r;
        xhat.row(t) = ((x.row(t).array() - mu) * r).matrix();
        out.row(t) = xhat.row(t).cwiseProduct(g) + b;
    }
}

// dγ/dβ accumulate into dg/db; returns d(loss)/d(x).
Mat layer_norm_backward(const Mat& dy, const Mat& xhat,
                        const Eigen::VectorXd& rstd, const double* gp,
                        double* dg, double* db) {
    const auto T = dy.rows();
    const auto D = dy.cols();
    ConstRowMap g(gp, D);
    RowMap dgm(dg, D), dbm(db, D);
    Mat dx(T, D);
    for (Eigen::Index t = 0; t < T; ++t) {
        const RowVec dyr = dy.row(t);
        const RowVec xh = xhat.row(t);
        dgm += dyr.cwiseProduct(xh);
        dbm += dyr;
        const RowVec dxhat = dyr.cwiseProduct(g);
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xh).mean();
        dx.row(t) = (rstd(t) * (dxhat.array() - m1 - xh.array() * m2)).matrix();
    }
    return dx;
}

struct LayerCache {
    Mat x_in;
    Mat xhat1;
    Eigen::VectorXd rstd1;
    Mat a;
    Mat q, k, v;
    std::vector<Mat> alphas;  // per head, lower-triangular T x T
    Mat attn_cat;
    Mat x_mid;
    Mat xhat2;
    Eigen::VectorXd rstd2;
    Mat m;
    Mat u, g;
    Mat x_out;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Mat fhat;
    Eigen::VectorXd frstd;
    Mat f;
    Mat logits;
};

void check_ids(const std::vector<int>& ids, std::size_t vocab, std::size_t cap) {
    if (ids.empty()) {
        throw ShapeError("empty token sequence");
    }
    if (ids.size() > cap) {
        throw ContextOverflowError("sequence length " + std::to_string(ids.size()) +
                                   " exceeds positional capacity " +
                                   std::to_string(cap));
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw BadTokenError("token id out of range");
        }
    }
}

// Full-sequence forward; every intermediate needed by backward is cached.
void run_forward(const Layout& L, const double* p, const std::vector<int>& ids,
                 ForwardCache& fc) {
    const auto T = static_cast<Eigen::Index>(ids.size());
    const auto D = static_cast<Eigen::Index>(L.D);
    ConstMatMap tok(p + L.tok_emb, static_cast<Eigen::Index>(L.V), D);
    ConstMatMap pos(p + L.pos_emb, static_cast<Eigen::Index>(L.P), D);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(L.dh));

    Mat x(T, D);
    for (Eigen::Index t = 0; t < T; ++t) {
        x.row(t) = tok.row(ids[static_cast<std::size_t>(t)]) + pos.row(t);
    }

    fc.layers.resize(L.nl);
    std::vector<double> scores;
    for (std::size_t l = 0; l < L.nl; ++l) {
        const LayerOffsets& o = L.layers[l];
        LayerCache& C = fc.layers[l];
        C.x_in = x;
        layer_norm_forward(x, p + o.ln1_g, p + o.ln1_b, C.xhat1, C.rstd1, C.a);

        ConstMatMap Wq(p + o.wq, D, D), Wk(p + o.wk, D, D), Wv(p + o.wv, D, D);
        ConstRowMap bq(p + o.bq, D), bk(p + o.bk, D), bv(p + o.bv, D);
        C.q.noalias() = C.a * Wq;
        C.q.rowwise() += bq;
        C.k.noalias() = C.a * Wk;
        C.k.rowwise() += bk;
        C.v.noalias() = C.a * Wv;
        C.v.rowwise() += bv;

        C.alphas.assign(L.nh, Mat::Zero(T, T));
        C.attn_cat.resize(T, D);
        for (std::size_t h = 0; h < L.nh; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * L.dh);
            const auto dh = static_cast<Eigen::Index>(L.dh);
            Mat& alpha = C.alphas[h];
            for (Eigen::Index i = 0; i < T; ++i) {
                scores.assign(static_cast<std::size_t>(i) + 1, 0.0);
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const double s = C.q.row(i).segment(c0, dh)
                                         .dot(C.k.row(j).segment(c0, dh)) *
                                     inv_sqrt_dh;
                    scores[static_cast<std::size_t>(j)] = s;
                    mx = std::max(mx, s);
                }
                double denom = 0.0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const double e = std::exp(scores[static_cast<std::size_t>(j)] - mx);
                    alpha(i, j) = e;
                    denom += e;
                }
                RowVec ctx = RowVec::Zero(dh);
                for (Eigen::Index j = 0; j <= i; ++j) {
                    alpha(i, j) /= denom;
                    ctx += alpha(i, j) * C.v.row(j).segment(c0, dh);
                }
                C.attn_cat.row(i).segment(c0, dh) = ctx;
            }
        }

        ConstMatMap Wo(p + o.wo, D, D);
        ConstRowMap bo(p + o.bo, D);
        Mat attn_out = C.attn_cat * Wo;
        attn_out.rowwise() += bo;
        C.x_mid = x + attn_out;

        layer_norm_forward(C.x_mid, p + o.ln2_g, p + o.ln2_b, C.xhat2, C.rstd2,
                           C.m);
        ConstMatMap W1(p + o.w1, D, static_cast<Eigen::Index>(L.F));
        ConstRowMap b1(p + o.b1, static_cast<Eigen::Index>(L.F));
        ConstMatMap W2(p + o.w2, static_cast<Eigen::Index>(L.F), D);
        ConstRowMap b2(p + o.b2, D);
        C.u.noalias() = C.m * W1;
        C.u.rowwise() += b1;
        C.g = C.u.unaryExpr([](double v) { return gelu_scalar(v); });
        Mat mlp = C.g * W2;
        mlp.rowwise() += b2;
        C.x_out = C.x_mid + mlp;
        x = C.x_out;
    }

    layer_norm_forward(x, p + L.lnf_g, p + L.lnf_b, fc.fhat, fc.frstd, fc.f);
    ConstMatMap Wh(p + L.w_head, D, static_cast<Eigen::Index>(L.V));
    ConstRowMap bh(p + L.b_head, static_cast<Eigen::Index>(L.V));
    fc.logits.noalias() = fc.f * Wh;
    fc.logits.rowwise() += bh;
}

double row_logsumexp(const Mat& logits, Eigen::Index r) {
    const double mx = logits.row(r).maxCoeff();
    return mx + std::log((logits.row(r).array() - mx).exp().sum());
}

std::vector<double> softmax_row(const RowVec& logits) {
    const double mx = logits.maxCoeff();
    std::vector<double> out(static_cast<std::size_t>(logits.size()));
    double denom = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double e = std::exp(logits(i) - mx);
        out[static_cast<std::size_t>(i)] = e;
        denom += e;
    }
    for (double& v : out) v /= denom;
    return out;
}

/// Zeroes PAD/EOS mass, renormalizes, draws one value token. An
/// all-special distribution falls back to uniform over value tokens.
int sample_value_token(std::vector<double>& probs, Rng& rng) {
    probs[static_cast<std::size_t>(kPad)] = 0.0;
    probs[static_cast<std::size_t>(kEos)] = 0.0;
    double s = 0.0;
    for (double v : probs) s += v;
    if (s <= 0.0) {
        const double u = 1.0 / static_cast<double>(probs.size() - 2);
        for (std::size_t i = 2; i < probs.size(); ++i) probs[i] = u;
    } else {
        for (double& v : probs) v /= s;
    }
    return static_cast<int>(sample_categorical(probs, rng));
}

void check_loss_inputs(const std::vector<int>& ids, std::size_t context_len,
                       std::size_t vocab, std::size_t cap) {
    check_ids(ids, vocab, cap);
    if (context_len < 1 || ids.size() < context_len + 2) {
        throw ShapeError("sequence must hold the context, >= 1 target, and EOS");
    }
    if (ids.back() != kEos) {
        throw MalformedTargetError("sequence does not end with EOS");
    }
}

// Incremental decoding state: per-layer key/value rows filled up to len.
struct IncState {
    std::vector<Mat> k, v;
    std::size_t len = 0;
};

RowVec ln_single_row(const RowVec& x, const double* gp, const double* bp) {
    const auto D = x.size();
    ConstRowMap g(gp, D), b(bp, D);
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    return (((x.array() - mu) * r).matrix().cwiseProduct(g) + b);
}

RowVec inc_step(const Layout& L, const double* p, IncState& st, int token) {
    const auto D = static_cast<Eigen::Index>(L.D);
    const auto t = static_cast<Eigen::Index>(st.len);
    ConstMatMap tok(p + L.tok_emb, static_cast<Eigen::Index>(L.V), D);
    ConstMatMap pos(p + L.pos_emb, static_cast<Eigen::Index>(L.P), D);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(L.dh));

    RowVec x = tok.row(token) + pos.row(t);
    std::vector<double> scores;
    for (std::size_t l = 0; l < L.nl; ++l) {
        const LayerOffsets& o = L.layers[l];
        const RowVec a = ln_single_row(x, p + o.ln1_g, p + o.ln1_b);
        ConstMatMap Wq(p + o.wq, D, D), Wk(p + o.wk, D, D), Wv(p + o.wv, D, D);
        ConstRowMap bq(p + o.bq, D), bk(p + o.bk, D), bv(p + o.bv, D);
        const RowVec q = a * Wq + bq;
        st.k[l].row(t) = a * Wk + bk;
        st.v[l].row(t) = a * Wv + bv;

        RowVec cat(D);
        for (std::size_t h = 0; h < L.nh; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * L.dh);
            const auto dh = static_cast<Eigen::Index>(L.dh);
            scores.assign(static_cast<std::size_t>(t) + 1, 0.0);
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j <= t; ++j) {
                const double s = q.segment(c0, dh)
                                     .dot(st.k[l].row(j).segment(c0, dh)) *
                                 inv_sqrt_dh;
                scores[static_cast<std::size_t>(j)] = s;
                mx = std::max(mx, s);
            }
            double denom = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                denom += s;
            }
            RowVec ctx = RowVec::Zero(dh);
            for (Eigen::Index j = 0; j <= t; ++j) {
                ctx += (scores[static_cast<std::size_t>(j)] / denom) *
                       st.v[l].row(j).segment(c0, dh);
            }
            cat.segment(c0, dh) = ctx;
        }
        ConstMatMap Wo(p + o.wo, D, D);
        ConstRowMap bo(p + o.bo, D);
        const RowVec xm = x + cat * Wo + bo;
        const RowVec m = ln_single_row(xm, p + o.ln2_g, p + o.ln2_b);
        ConstMatMap W1(p + o.w1, D, static_cast<Eigen::Index>(L.F));
        ConstRowMap b1(p + o.b1, static_cast<Eigen::Index>(L.F));
        ConstMatMap W2(p + o.w2, static_cast<Eigen::Index>(L.F), D);
        ConstRowMap b2(p + o.b2, D);
        RowVec u = m * W1 + b1;
        u = u.unaryExpr([](double v) { return gelu_scalar(v); });
        x = xm + u * W2 + b2;
    }
    const RowVec f = ln_single_row(x, p + L.lnf_g, p + L.lnf_b);
    ConstMatMap Wh(p + L.w_head, D, static_cast<Eigen::Index>(L.V));
    ConstRowMap bh(p + L.b_head, static_cast<Eigen::Index>(L.V));
    st.len = static_cast<std::size_t>(t) + 1;
    return f * Wh + bh;
}

} // namespace

void ModelConfig::validate() const {
    if (vocab_size < 3) throw DomainError("vocab_size must be >= 3");
    // num_layers 0 is legal: embeddings straight into the head. It keeps a
    // nearly linear configuration available for tight gradient checks.
    if (embed_dim == 0 || num_heads == 0 || batch_size == 0) {
        throw DomainError("model dimensions and batch size must be positive");
    }
    if (embed_dim % num_heads != 0) {
        throw DomainError("embed_dim must be divisible by num_heads");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw DomainError("learning_rate must be positive");
    }
    if (train_horizon == 0) throw DomainError("train_horizon must be >= 1");
    if (context_length < train_horizon + 2) {
        throw DomainError("context_length must exceed train_horizon + 1");
    }
}

std::size_t ModelConfig::train_context() const {
    return context_length - train_horizon - 1;
}

std::vector<double> TokenModel::next_token_probs(const std::vector<int>& ids) const {
    auto all = forward_probs(ids);
    return all.back();
}

std::vector<std::vector<int>> TokenModel::sample_paths(const std::vector<int>& ids,
                                                       std::size_t horizon,
                                                       std::size_t n,
                                                       std::uint64_t seed) const {
    if (horizon < 1 || n < 1) {
        throw DomainError("horizon and path count must be >= 1");
    }
    Rng rng(seed);
    std::vector<std::vector<int>> paths(n);
    std::vector<int> cur;
    for (std::size_t p = 0; p < n; ++p) {
        cur = ids;
        paths[p].reserve(horizon);
        for (std::size_t h = 0; h < horizon; ++h) {
            auto probs = next_token_probs(cur);
            const int tokv = sample_value_token(probs, rng);
            cur.push_back(tokv);
            paths[p].push_back(tokv);
        }
    }
    return paths;
}

SequenceModel::SequenceModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const Layout L = make_layout(cfg_);
    params_.assign(L.total, 0.0);
    Rng rng(cfg_.seed);
    auto fill_uniform = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
        const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) {
            params_[off + i] = rng.uniform(-b, b);
        }
    };
    auto fill_const = [&](std::size_t off, std::size_t n, double v) {
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(off), n, v);
    };
    fill_uniform(L.tok_emb, L.V * L.D, L.D);
    fill_uniform(L.pos_emb, L.P * L.D, L.D);
    for (const auto& o : L.layers) {
        fill_const(o.ln1_g, L.D, 1.0);
        fill_uniform(o.wq, L.D * L.D, L.D);
        fill_uniform(o.wk, L.D * L.D, L.D);
        fill_uniform(o.wv, L.D * L.D, L.D);
        fill_uniform(o.wo, L.D * L.D, L.D);
        fill_const(o.ln2_g, L.D, 1.0);
        fill_uniform(o.w1, L.D * L.F, L.D);
        fill_uniform(o.w2, L.F * L.D, L.F);
    }
    fill_const(L.lnf_g, L.D, 1.0);
    fill_uniform(L.w_head, L.D * L.V, L.D);
}

SequenceModel::SequenceModel(ModelConfig cfg, std::vector<double> params)
    : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    if (params_.size() != parameter_count(cfg_)) {
        throw ShapeError("parameter vector does not match config");
    }
    for (double v : params_) {
        if (!std::isfinite(v)) throw NonFiniteError("non-finite parameter");
    }
}

std::size_t SequenceModel::parameter_count(const ModelConfig& cfg) {
    return make_layout(cfg).total;
}

std::vector<std::vector<double>> SequenceModel::forward_probs(
    const std::vector<int>& ids) const {
    const Layout L = make_layout(cfg_);
    check_ids(ids, L.V, L.P);
    ForwardCache fc;
    run_forward(L, params_.data(), ids, fc);
    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (Eigen::Index t = 0; t < fc.logits.rows(); ++t) {
        out.push_back(softmax_row(fc.logits.row(t)));
    }
    return out;
}

double SequenceModel::loss(const std::vector<int>& ids,
                           std::size_t context_len) const {
    const Layout L = make_layout(cfg_);
    check_loss_inputs(ids, context_len, L.V, L.P);
    ForwardCache fc;
    run_forward(L, params_.data(), ids, fc);
    const auto T = static_cast<Eigen::Index>(ids.size());
    const auto first = static_cast<Eigen::Index>(context_len) - 1;
    const double scored = static_cast<double>(T - 1 - first);
    double total = 0.0;
    for (Eigen::Index r = first; r <= T - 2; ++r) {
        const int target = ids[static_cast<std::size_t>(r) + 1];
        total += row_logsumexp(fc.logits, r) - fc.logits(r, target);
    }
    return total / scored;
}

double SequenceModel::loss_and_grad(const std::vector<int>& ids,
                                    std::size_t context_len,
                                    std::vector<double>& grad,
                                    double weight) const {
    const Layout L = make_layout(cfg_);
    check_loss_inputs(ids, context_len, L.V, L.P);
    if (grad.size() != L.total) {
        throw ShapeError("gradient buffer does not match parameter count");
    }
    const double* p = params_.data();
    double* g = grad.data();
    ForwardCache fc;
    run_forward(L, p, ids, fc);

    const auto T = static_cast<Eigen::Index>(ids.size());
    const auto D = static_cast<Eigen::Index>(L.D);
    const auto V = static_cast<Eigen::Index>(L.V);
    const auto F = static_cast<Eigen::Index>(L.F);
    const auto first = static_cast<Eigen::Index>(context_len) - 1;
    const double scored = static_cast<double>(T - 1 - first);
    const double w = weight / scored;

    double total = 0.0;
    Mat dlogits = Mat::Zero(T, V);
    for (Eigen::Index r = first; r <= T - 2; ++r) {
        const int target = ids[static_cast<std::size_t>(r) + 1];
        const double lse = row_logsumexp(fc.logits, r);
        total += lse - fc.logits(r, target);
        dlogits.row(r) = (fc.logits.row(r).array() - lse).exp().matrix() * w;
        dlogits(r, target) -= w;
    }

    ConstMatMap Wh(p + L.w_head, D, V);
    MatMap gWh(g + L.w_head, D, V);
    RowMap gbh(g + L.b_head, V);
    gWh.noalias() += fc.f.transpose() * dlogits;
    gbh += dlogits.colwise().sum();
    Mat df = dlogits * Wh.transpose();
    Mat dx = layer_norm_backward(df, fc.fhat, fc.frstd, p + L.lnf_g, g + L.lnf_g,
                                 g + L.lnf_b);

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(L.dh));
    std::vector<double> dalpha;
    for (std::size_t li = L.nl; li-- > 0;) {
        const LayerOffsets& o = L.layers[li];
        const LayerCache& C = fc.layers[li];

        // MLP branch.
        ConstMatMap W1(p + o.w1, D, F), W2(p + o.w2, F, D);
        MatMap gW1(g + o.w1, D, F), gW2(g + o.w2, F, D);
        RowMap gb1(g + o.b1, F), gb2(g + o.b2, D);
        gW2.noalias() += C.g.transpose() * dx;
        gb2 += dx.colwise().sum();
        Mat dgelu = dx * W2.transpose();
        Mat du =
            dgelu.cwiseProduct(C.u.unaryExpr([](double v) { return gelu_prime(v); }));
        gW1.noalias() += C.m.transpose() * du;
        gb1 += du.colwise().sum();
        Mat dm = du * W1.transpose();
        Mat dx_mid = layer_norm_backward(dm, C.xhat2, C.rstd2, p + o.ln2_g,
                                         g + o.ln2_g, g + o.ln2_b);
        dx_mid += dx;  // residual around the MLP

        // Attention branch.
        ConstMatMap Wo(p + o.wo, D, D);
        MatMap gWo(g + o.wo, D, D);
        RowMap gbo(g + o.bo, D);
        gWo.noalias() += C.attn_cat.transpose() * dx_mid;
        gbo += dx_mid.colwise().sum();
        Mat dcat = dx_mid * Wo.transpose();

        Mat dQ = Mat::Zero(T, D), dK = Mat::Zero(T, D), dV = Mat::Zero(T, D);
        for (std::size_t h = 0; h < L.nh; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * L.dh);
            const auto dh = static_cast<Eigen::Index>(L.dh);
            const Mat& alpha = C.alphas[h];
            for (Eigen::Index i = 0; i < T; ++i) {
                const auto dctx = dcat.row(i).segment(c0, dh);
                dalpha.assign(static_cast<std::size_t>(i) + 1, 0.0);
                double dot = 0.0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const double da = dctx.dot(C.v.row(j).segment(c0, dh));
                    dalpha[static_cast<std::size_t>(j)] = da;
                    dot += alpha(i, j) * da;
                }
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const double ds =
                        alpha(i, j) * (dalpha[static_cast<std::size_t>(j)] - dot);
                    dQ.row(i).segment(c0, dh) +=
                        ds * inv_sqrt_dh * C.k.row(j).segment(c0, dh);
                    dK.row(j).segment(c0, dh) +=
                        ds * inv_sqrt_dh * C.q.row(i).segment(c0, dh);
                    dV.row(j).segment(c0, dh) += alpha(i, j) * dctx;
                }
            }
        }

        ConstMatMap Wq(p + o.wq, D, D), Wk(p + o.wk, D, D), Wv(p + o.wv, D, D);
        MatMap gWq(g + o.wq, D, D), gWk(g + o.wk, D, D), gWv(g + o.wv, D, D);
        RowMap gbq(g + o.bq, D), gbk(g + o.bk, D), gbv(g + o.bv, D);
        gWq.noalias() += C.a.transpose() * dQ;
        gbq += dQ.colwise().sum();
        gWk.noalias() += C.a.transpose() * dK;
        gbk += dK.colwise().sum();
        gWv.noalias() += C.a.transpose() * dV;
        gbv += dV.colwise().sum();
        Mat da = dQ * Wq.transpose();
        da.noalias() += dK * Wk.transpose();
        da.noalias() += dV * Wv.transpose();
        Mat dx_in = layer_norm_backward(da, C.xhat1, C.rstd1, p + o.ln1_g,
                                        g + o.ln1_g, g + o.ln1_b);
        dx_in += dx_mid;  // residual around attention
        dx = std::move(dx_in);
    }

    MatMap gtok(g + L.tok_emb, static_cast<Eigen::Index>(L.V), D);
    MatMap gpos(g + L.pos_emb, static_cast<Eigen::Index>(L.P), D);
    for (Eigen::Index t = 0; t < T; ++t) {
        gtok.row(ids[static_cast<std::size_t>(t)]) += dx.row(t);
        gpos.row(t) += dx.row(t);
    }
    return total / scored;
}

std::vector<std::vector<int>> SequenceModel::sample_paths(
    const std::vector<int>& ids, std::size_t horizon, std::size_t n,
    std::uint64_t seed) const {
    const Layout L = make_layout(cfg_);
    check_ids(ids, L.V, L.P);
    if (horizon < 1 || n < 1) {
        throw DomainError("horizon and path count must be >= 1");
    }
    if (ids.size() + horizon > L.P) {
        throw ContextOverflowError("context plus horizon exceeds capacity");
    }
    IncState st;
    st.k.assign(L.nl, Mat::Zero(static_cast<Eigen::Index>(L.P),
                                static_cast<Eigen::Index>(L.D)));
    st.v = st.k;
    RowVec prefill;
    for (int id : ids) {
        prefill = inc_step(L, params_.data(), st, id);
    }
    const std::size_t base = st.len;

    Rng rng(seed);
    std::vector<std::vector<int>> paths(n);
    for (std::size_t pi = 0; pi < n; ++pi) {
        st.len = base;  // drop the previous path's rows, keep the prefix
        RowVec logits = prefill;
        paths[pi].reserve(horizon);
        for (std::size_t h = 0; h < horizon; ++h) {
            auto probs = softmax_row(logits);
            const int tokv = sample_value_token(probs, rng);
            paths[pi].push_back(tokv);
            if (h + 1 < horizon) {
                logits = inc_step(L, params_.data(), st, tokv);
            }
        }
    }
    return paths;
}

double SequenceModel::gradient_check(const std::vector<int>& ids,
                                     std::size_t context_len,
                                     std::size_t n_params,
                                     std::uint64_t seed) const {
    std::vector<double> grad(params_.size(), 0.0);
    loss_and_grad(ids, context_len, grad, 1.0);
    SequenceModel probe(*this);
    std::vector<double>& theta = probe.mutable_parameters();
    Rng rng(seed);
    const double step = 1e-4;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < n_params; ++k) {
        const auto j = static_cast<std::size_t>(rng.below(theta.size()));
        const double saved = theta[j];
        theta[j] = saved + step;
        const double lp = probe.loss(ids, context_len);
        theta[j] = saved - step;
        const double lm = probe.loss(ids, context_len);
        theta[j] = saved;
        const double fd = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(grad[j]), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - grad[j]) / denom);
    }
    return max_rel;
}

namespace {

// One SGD step over a sampled batch of encoded windows; returns the
// batch-mean loss.
double training_step(SequenceModel& model, const std::vector<std::vector<double>>& values,
                     const Quantizer& quant, std::uint64_t step_seed,
                     std::vector<double>& grad) {
    const ModelConfig& cfg = model.config();
    const std::size_t ctx = cfg.train_context();
    const std::size_t window = ctx + cfg.train_horizon;
    Rng rng(step_seed);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_sum = 0.0;
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto si = static_cast<std::size_t>(rng.below(values.size()));
        const std::vector<double>& series = values[si];
        const auto origin =
            static_cast<std::size_t>(rng.below(series.size() - window + 1));
        std::span<const double> slice(series.data() + origin, window);
        TokenSequence seq = encode_with_context(slice, ctx, quant);
        seq.ids.push_back(Vocabulary::eos_id());
        loss_sum += inv_b * model.loss_and_grad(seq.ids, ctx, grad, inv_b);
    }
    const double norm = std::sqrt(
        std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
    const double scale =
        norm > 1.0 ? cfg.learning_rate / norm : cfg.learning_rate;
    std::vector<double>& theta = model.mutable_parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= scale * grad[i];
        if (!std::isfinite(theta[i])) {
            throw NumericalError("training produced non-finite parameters");
        }
    }
    return loss_sum;
}

void run_training(SequenceModel& model, const std::vector<TimeSeries>& corpus,
                  const Quantizer& quant, std::size_t steps, std::uint64_t seed,
                  TrainStats* stats) {
    const ModelConfig& cfg = model.config();
    if (corpus.empty()) {
        throw DataError("empty training corpus");
    }
    const std::size_t window = cfg.train_context() + cfg.train_horizon;
    std::vector<std::vector<double>> values;
    values.reserve(corpus.size());
    for (const TimeSeries& s : corpus) {
        if (!s.complete()) {
            throw DataError("training series has missing values");
        }
        if (s.size() < window) {
            throw TooShortError("series shorter than one training window");
        }
        values.push_back(s.dense_values());
    }
    if (static_cast<int>(cfg.vocab_size) != quant.vocabulary().size()) {
        throw ShapeError("tokenizer vocabulary does not match model config");
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> grad(model.parameters().size(), 0.0);
    TrainStats local;
    for (std::size_t step = 1; step <= steps; ++step) {
        const double loss =
            training_step(model, values, quant, derive_seed(seed, step), grad);
        if (!std::isfinite(loss)) {
            throw NumericalError("training loss diverged");
        }
        local.loss_history.push_back(loss);
        local.final_loss = loss;
    }
    local.steps = steps;
    local.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (stats) *stats = std::move(local);
}

} // namespace

SequenceModel train(const std::vector<TimeSeries>& corpus, const ModelConfig& cfg,
                    const TokenizerConfig& tok, TrainStats* stats) {
    cfg.validate();
    SequenceModel model(cfg);
    run_training(model, corpus, tok.build(), cfg.max_steps, cfg.seed, stats);
    return model;
}

SequenceModel fine_tune(SequenceModel model, const std::vector<TimeSeries>& corpus,
                        const TokenizerConfig& tok, std::size_t steps,
                        std::uint64_t seed, TrainStats* stats) {
    run_training(model, corpus, tok.build(), steps, seed, stats);
    return model;
}

Forecast forecast(const SequenceModel& model, const TokenizerConfig& tok,
                  std::span<const double> raw_context, std::size_t horizon,
                  std::size_t n_samples, std::uint64_t seed, bool nonneg_clamp) {
    if (raw_context.empty()) {
        throw EmptyContextError("forecast needs a nonempty context");
    }
    if (horizon < 1 || n_samples < 1) {
        throw DomainError("horizon and n_samples must be >= 1");
    }
    const std::size_t cap = model.config().context_length;
    if (horizon >= cap) {
        throw ContextOverflowError("horizon exceeds positional capacity");
    }
    const std::size_t max_ctx = cap - horizon;
    std::span<const double> ctx = raw_context.size() > max_ctx
                                      ? raw_context.subspan(raw_context.size() - max_ctx)
                                      : raw_context;
    const Quantizer quant = tok.build();
    if (static_cast<int>(model.config().vocab_size) != quant.vocabulary().size()) {
        throw ShapeError("tokenizer vocabulary does not match model config");
    }
    const TokenSequence seq = encode(ctx, quant);
    const auto token_paths = model.sample_paths(seq.ids, horizon, n_samples, seed);
    const Vocabulary vocab = quant.vocabulary();
    std::vector<std::vector<double>> paths(token_paths.size());
    for (std::size_t p = 0; p < token_paths.size(); ++p) {
        paths[p].reserve(horizon);
        for (int id : token_paths[p]) {
            paths[p].push_back(
                seq.scaler.to_value(quant.dequantize(vocab.token_to_bin(id))));
        }
    }
    return make_forecast(std::move(paths), nonneg_clamp);
}

} // namespace wavecast
