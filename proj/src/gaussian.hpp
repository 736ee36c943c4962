#pragma once

#include <cstdint>
#include <vector>

#include "rng.hpp"

namespace bbq {

// Standard Gaussian CDF, Phi(v) = (1 + erf(v/sqrt(2)))/2.
double phi(double v);

// Standard Gaussian PDF.
double phi_pdf(double v);

// Inverse CDF on (0,1). Acklam's rational approximation polished with one
// Newton step against phi(), which pins the result to the CDF used
// everywhere else; |phi(phi_inv(p)) - p| <= 1e-9 across the open interval.
double phi_inv(double p);

// Quantization bin boundaries Phi^-1(i/2^b) for i = 0..2^b-1. boundaries[0]
// is the -inf sentinel; the table is strictly increasing and symmetric
// about its midpoint, boundaries[2^(b-1)] == 0.
struct InvCdfTable {
    int bits = 0;
    std::vector<double> boundaries;
};

InvCdfTable build_inv_cdf_table(int bits);

// Magnitude-matching constant: argmin over zeta of
// E[(v - zeta*(2*Phi(v)-1))^2] for v ~ N(0,1), estimated by Monte Carlo.
struct ZetaEstimate {
    double zeta_star = 0.0;
    double mse_at_optimum = 0.0;
    int64_t num_samples = 0;
    uint64_t seed = 0;
};

// Reference value used for scale initialization (gamma = zeta* sigma0);
// estimate_zeta_star reproduces it to within +/-0.01.
inline constexpr double kZetaStar = 1.694;

ZetaEstimate estimate_zeta_star(int64_t num_samples, uint64_t seed);

// Same objective minimized by literal gradient descent. The sample MSE is a
// quadratic in zeta, so the descent runs on the accumulated moments rather
// than a second pass over the stream; it converges to the closed-form
// optimum of the same sample.
ZetaEstimate estimate_zeta_star_gd(int64_t num_samples, uint64_t seed, double lr = 0.1,
                                   int iterations = 2000);

// Standard normal draw by inverse-transform sampling.
double sample_standard_normal(Rng& rng);
std::vector<double> sample_standard_normal(Rng& rng, size_t n);

}  // namespace bbq
