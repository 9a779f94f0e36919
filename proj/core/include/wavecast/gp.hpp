#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wavecast/series.hpp"

namespace wavecast {

/// Covariance kernel over hourly time indices, composable as sums and
/// products up to depth 3. Leaves: rbf, periodic, linear, white.
struct KernelSpec {
    enum class Kind { Rbf, Periodic, Linear, White, Sum, Product };

    Kind kind = Kind::Rbf;
    double variance = 1.0;
    double length_scale = 12.0;  // hours (rbf), unitless width (periodic)
    double period = 24.0;        // hours
    std::vector<KernelSpec> children;

    static KernelSpec rbf(double length_scale, double variance = 1.0);
    static KernelSpec periodic(double period, double length_scale = 1.0,
                               double variance = 1.0);
    static KernelSpec linear(double variance = 1.0);
    static KernelSpec white(double variance = 1.0);
    static KernelSpec sum(std::vector<KernelSpec> children);
    static KernelSpec product(std::vector<KernelSpec> children);

    void validate(std::size_t depth = 1) const;
};

/// k(t1, t2) for absolute hour indices, normalized internally for the
/// linear leaf by `span_hours` so trend magnitudes stay desk-scale.
double kernel_value(const KernelSpec& spec, double t1, double t2,
                    double span_hours);

/// Dense row-major n x n covariance over hours offset..offset+n-1.
/// Symmetric by construction.
std::vector<double> build_covariance(const KernelSpec& spec, std::size_t offset,
                                     std::size_t n, double span_hours);

/// Affine post-shaping to a nonnegative wave-like range: min shifted to
/// `floor`, then rescaled so the median matches `target_median`.
struct NonnegShaping {
    double floor = 0.1;
    double target_median = 1.0;
};

/// One GP sample path on an hourly grid. Long series are assembled from
/// independent blocks of at most 4096 points joined by a 64-point linear
/// cross-fade; the factorization escalates diagonal jitter from 1e-8 by
/// factors of 10 up to 1e-4 before giving up with NumericalError.
TimeSeries gen_gp_series(const KernelSpec& spec, std::size_t length,
                         std::uint64_t seed,
                         const NonnegShaping* shaping = nullptr,
                         std::string station_id = "synthetic",
                         std::int64_t base_timestamp = 1514764800);

/// The fixed kernel bank used for corpus draws: the four leaf kinds plus
/// two-term sums/products, each with a small white term on top.
const std::vector<KernelSpec>& corpus_kernel_bank();

/// The bank entry gen_corpus assigns to series i under this master seed.
/// Exposed so the pick distribution is checkable without sampling paths.
const KernelSpec& corpus_kernel_for(std::uint64_t seed, std::size_t i);

/// n_series independent draws with per-series seeds derived from the
/// master seed by counter; kernels drawn uniformly from the bank. With
/// shaping, each series gets a target median in [0.5, 2.5).
std::vector<TimeSeries> gen_corpus(std::size_t n_series, std::size_t length,
                                   std::uint64_t seed,
                                   const NonnegShaping* shaping = nullptr);

} // namespace wavecast
