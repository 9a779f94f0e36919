#include "wavecast/gp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wavecast/rng.hpp"

namespace wavecast {

namespace {

constexpr std::size_t kMaxBlock = 4096;
constexpr std::size_t kFade = 64;
constexpr double kPi = 3.141592653589793;

// One zero-mean sample on hours offset..offset+n-1.
std::vector<double> sample_block(const KernelSpec& spec, std::size_t offset,
                                 std::size_t n, double span_hours,
                                 std::uint64_t seed) {
    const std::vector<double> cov = build_covariance(spec, offset, n, span_hours);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        K(cov.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

    Eigen::MatrixXd L;
    bool ok = false;
    for (double jitter = 1e-8; jitter <= 1.5e-4; jitter *= 10.0) {
        Eigen::MatrixXd Kj = K;
        Kj.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(Kj);
        if (llt.info() == Eigen::Success) {
            L = llt.matrixL();
            ok = true;
            break;
        }
    }
    if (!ok) {
        throw NumericalError("GP covariance failed to factorize at max jitter");
    }

    Rng rng(seed);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    Eigen::VectorXd f = L * z;
    return std::vector<double>(f.data(), f.data() + f.size());
}

} // namespace

KernelSpec KernelSpec::rbf(double length_scale, double variance) {
    KernelSpec k;
    k.kind = Kind::Rbf;
    k.length_scale = length_scale;
    k.variance = variance;
    return k;
}

KernelSpec KernelSpec::periodic(double period, double length_scale,
                                double variance) {
    KernelSpec k;
    k.kind = Kind::Periodic;
    k.period = period;
    k.length_scale = length_scale;
    k.variance = variance;
    return k;
}

KernelSpec KernelSpec::linear(double variance) {
    KernelSpec k;
    k.kind = Kind::Linear;
    k.variance = variance;
    return k;
}

KernelSpec KernelSpec::white(double variance) {
    KernelSpec k;
    k.kind = Kind::White;
    k.variance = variance;
    return k;
}

KernelSpec KernelSpec::sum(std::vector<KernelSpec> children) {
    KernelSpec k;
    k.kind = Kind::Sum;
    k.children = std::move(children);
    return k;
}

KernelSpec KernelSpec::product(std::vector<KernelSpec> children) {
    KernelSpec k;
    k.kind = Kind::Product;
    k.children = std::move(children);
    return k;
}

void KernelSpec::validate(std::size_t depth) const {
    if (depth > 3) {
        throw DomainError("kernel composition deeper than 3");
    }
    if (kind == Kind::Sum || kind == Kind::Product) {
        if (children.size() < 2) {
            throw DomainError("kernel composition needs >= 2 children");
        }
        for (const auto& c : children) c.validate(depth + 1);
        return;
    }
    if (!children.empty()) {
        throw DomainError("leaf kernels take no children");
    }
    if (!(variance > 0.0)) throw DomainError("kernel variance must be > 0");
    if (kind == Kind::Rbf || kind == Kind::Periodic) {
        if (!(length_scale > 0.0)) throw DomainError("length scale must be > 0");
    }
    if (kind == Kind::Periodic && !(period > 0.0)) {
        throw DomainError("period must be > 0");
    }
}

double kernel_value(const KernelSpec& spec, double t1, double t2,
                    double span_hours) {
    switch (spec.kind) {
        case KernelSpec::Kind::Rbf: {
            const double d = t1 - t2;
            return spec.variance *
                   std::exp(-d * d / (2.0 * spec.length_scale * spec.length_scale));
        }
        case KernelSpec::Kind::Periodic: {
            const double s = std::sin(kPi * std::abs(t1 - t2) / spec.period);
            return spec.variance *
                   std::exp(-2.0 * s * s /
                            (spec.length_scale * spec.length_scale));
        }
        case KernelSpec::Kind::Linear: {
            // Hour indices centered and normalized by the series span, so
            // sampled trends stay within about +-sqrt(variance)/2.
            const double u1 = (t1 - 0.5 * span_hours) / span_hours;
            const double u2 = (t2 - 0.5 * span_hours) / span_hours;
            return spec.variance * u1 * u2;
        }
        case KernelSpec::Kind::White:
            return t1 == t2 ? spec.variance : 0.0;
        case KernelSpec::Kind::Sum: {
            double acc = 0.0;
            for (const auto& c : spec.children) {
                acc += kernel_value(c, t1, t2, span_hours);
            }
            return acc;
        }
        case KernelSpec::Kind::Product: {
            double acc = 1.0;
            for (const auto& c : spec.children) {
                acc *= kernel_value(c, t1, t2, span_hours);
            }
            return acc;
        }
    }
    throw DomainError("unknown kernel kind");
}

std::vector<double> build_covariance(const KernelSpec& spec, std::size_t offset,
                                     std::size_t n, double span_hours) {
    std::vector<double> cov(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t1 = static_cast<double>(offset + i);
        for (std::size_t j = i; j < n; ++j) {
            const auto t2 = static_cast<double>(offset + j);
            const double v = kernel_value(spec, t1, t2, span_hours);
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    return cov;
}

TimeSeries gen_gp_series(const KernelSpec& spec, std::size_t length,
                         std::uint64_t seed, const NonnegShaping* shaping,
                         std::string station_id, std::int64_t base_timestamp) {
    spec.validate();
    if (length < 2) {
        throw TooShortError("GP series needs length >= 2");
    }
    const auto span = static_cast<double>(length);
    std::vector<double> values;
    values.reserve(length);

    std::size_t block_index = 0;
    std::vector<double> block =
        sample_block(spec, 0, std::min(length, kMaxBlock), span,
                     derive_seed(seed, block_index));
    values = block;
    while (values.size() < length) {
        ++block_index;
        const std::size_t start = values.size() - kFade;
        const std::size_t n = std::min(kMaxBlock, length - start);
        block = sample_block(spec, start, n, span, derive_seed(seed, block_index));
        for (std::size_t i = 0; i < kFade; ++i) {
            const double w = static_cast<double>(i + 1) /
                             static_cast<double>(kFade + 1);
            values[start + i] = (1.0 - w) * values[start + i] + w * block[i];
        }
        values.insert(values.end(), block.begin() + kFade, block.end());
    }

    if (shaping) {
        const double mn = *std::min_element(values.begin(), values.end());
        for (double& v : values) v += shaping->floor - mn;
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted[(sorted.size() - 1) / 2];
        const double k = shaping->target_median / median;
        for (double& v : values) v *= k;
    }

    std::vector<std::int64_t> ts(length);
    std::vector<std::optional<double>> vals(length);
    for (std::size_t i = 0; i < length; ++i) {
        ts[i] = base_timestamp + static_cast<std::int64_t>(i) * 3600;
        vals[i] = values[i];
    }
    return TimeSeries(std::move(station_id), std::move(ts), std::move(vals), 3600);
}

const std::vector<KernelSpec>& corpus_kernel_bank() {
    static const std::vector<KernelSpec> bank = [] {
        const KernelSpec w = KernelSpec::white(0.01);
        std::vector<KernelSpec> b;
        b.push_back(KernelSpec::sum({KernelSpec::rbf(12.0), w}));
        b.push_back(KernelSpec::sum({KernelSpec::periodic(24.0), w}));
        b.push_back(KernelSpec::sum({KernelSpec::periodic(168.0), w}));
        b.push_back(KernelSpec::sum({KernelSpec::linear(1.0), w}));
        b.push_back(
            KernelSpec::sum({KernelSpec::rbf(12.0), KernelSpec::periodic(24.0), w}));
        b.push_back(KernelSpec::sum(
            {KernelSpec::product({KernelSpec::rbf(24.0), KernelSpec::periodic(24.0)}),
             w}));
        b.push_back(KernelSpec::sum(
            {KernelSpec::periodic(24.0), KernelSpec::periodic(168.0), w}));
        b.push_back(
            KernelSpec::sum({KernelSpec::linear(1.0), KernelSpec::periodic(24.0), w}));
        b.push_back(KernelSpec::sum({KernelSpec::rbf(48.0), KernelSpec::linear(1.0), w}));
        for (const auto& k : b) k.validate();
        return b;
    }();
    return bank;
}

std::vector<TimeSeries> gen_corpus(std::size_t n_series, std::size_t length,
                                   std::uint64_t seed,
                                   const NonnegShaping* shaping) {
    if (n_series < 1) {
        throw DomainError("corpus needs n_series >= 1");
    }
    const auto& bank = corpus_kernel_bank();
    std::vector<TimeSeries> out;
    out.reserve(n_series);
    char name[40];
    for (std::size_t i = 0; i < n_series; ++i) {
        Rng pick(derive_seed(seed, 2 * i));
        const KernelSpec& spec = bank[pick.below(bank.size())];
        NonnegShaping local;
        const NonnegShaping* use = nullptr;
        if (shaping) {
            local = *shaping;
            local.target_median = 0.5 + 2.0 * pick.uniform();
            use = &local;
        }
        std::snprintf(name, sizeof(name), "synthetic-%03zu", i);
        out.push_back(gen_gp_series(spec, length, derive_seed(seed, 2 * i + 1),
                                    use, name));
    }
    return out;
}

} // namespace wavecast
