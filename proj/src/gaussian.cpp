#include "gaussian.hpp"

#include <cmath>
#include <limits>

namespace bbq {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

double phi(double v) {
    require(std::isfinite(v), ErrorCode::domain, "phi requires finite input");
    return 0.5 * (1.0 + std::erf(v / kSqrt2));
}

double phi_pdf(double v) {
    return kInvSqrt2Pi * std::exp(-0.5 * v * v);
}

/*
 * Acklam's inverse normal CDF approximation (P. J. Acklam, "An algorithm for
 * computing the inverse normal cumulative distribution function", 2003).
 * Relative error below 1.15e-9 on its own; the Newton step against phi()
 * brings it to machine precision away from the extreme tails.
 */
double phi_inv(double p) {
    require(std::isfinite(p) && p > 0.0 && p < 1.0, ErrorCode::domain,
            "phi_inv domain is the open interval (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Newton step: x -= (Phi(x) - p)/pdf(x).
    double pdf = phi_pdf(x);
    if (pdf > 0.0) x -= (phi(x) - p) / pdf;
    return x;
}

InvCdfTable build_inv_cdf_table(int bits) {
    require(bits >= 1 && bits <= 4, ErrorCode::invalid_argument,
            "inverse CDF table supports 1..4 bits");
    const int n = 1 << bits;
    InvCdfTable table;
    table.bits = bits;
    table.boundaries.resize(n);
    table.boundaries[0] = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < n; ++i)
        table.boundaries[i] = phi_inv(static_cast<double>(i) / static_cast<double>(n));
    // Pin the exact symmetries so downstream comparisons are bit-stable.
    table.boundaries[n / 2] = 0.0;
    for (int i = 1; i < n / 2; ++i) table.boundaries[i] = -table.boundaries[n - i];
    return table;
}

namespace {

struct ZetaMoments {
    // Sample moments of v ~ N(0,1) and g = 2*Phi(v) - 1.
    double sum_vv = 0.0;
    double sum_vg = 0.0;
    double sum_gg = 0.0;
    int64_t n = 0;
};

ZetaMoments accumulate_zeta_moments(int64_t num_samples, uint64_t seed) {
    require(num_samples >= 1000000, ErrorCode::invalid_argument,
            "zeta* estimation needs at least 1e6 samples");
    Rng rng(derive_seed(seed, 0xbe11));
    ZetaMoments m;
    for (int64_t i = 0; i < num_samples; ++i) {
        double v = sample_standard_normal(rng);
        double g = 2.0 * phi(v) - 1.0;
        m.sum_vv += v * v;
        m.sum_vg += v * g;
        m.sum_gg += g * g;
    }
    m.n = num_samples;
    return m;
}

double sample_mse(const ZetaMoments& m, double zeta) {
    return (m.sum_vv - 2.0 * zeta * m.sum_vg + zeta * zeta * m.sum_gg) /
           static_cast<double>(m.n);
}

}  // namespace

ZetaEstimate estimate_zeta_star(int64_t num_samples, uint64_t seed) {
    ZetaMoments m = accumulate_zeta_moments(num_samples, seed);
    ZetaEstimate est;
    est.zeta_star = m.sum_vg / m.sum_gg;  // least-squares optimum for this sample
    est.mse_at_optimum = sample_mse(m, est.zeta_star);
    est.num_samples = num_samples;
    est.seed = seed;
    return est;
}

ZetaEstimate estimate_zeta_star_gd(int64_t num_samples, uint64_t seed, double lr,
                                   int iterations) {
    ZetaMoments m = accumulate_zeta_moments(num_samples, seed);
    double zeta = 1.0;
    const double inv_n = 1.0 / static_cast<double>(m.n);
    for (int it = 0; it < iterations; ++it) {
        double grad = (2.0 * zeta * m.sum_gg - 2.0 * m.sum_vg) * inv_n;
        zeta -= lr * grad;
    }
    ZetaEstimate est;
    est.zeta_star = zeta;
    est.mse_at_optimum = sample_mse(m, zeta);
    est.num_samples = num_samples;
    est.seed = seed;
    return est;
}

double sample_standard_normal(Rng& rng) {
    return phi_inv(rng.uniform01());
}

std::vector<double> sample_standard_normal(Rng& rng, size_t n) {
    std::vector<double> out(n);
    for (double& v : out) v = sample_standard_normal(rng);
    return out;
}

}  // namespace bbq
