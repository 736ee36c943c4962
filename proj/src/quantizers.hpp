#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gaussian.hpp"
#include "hadamard.hpp"
#include "quantized_tensor.hpp"

namespace bbq {

// Scale groups: per-tensor = one group covering everything, per-channel =
// one group per row of the trailing-dimension layout.
size_t scale_group_count(const std::vector<size_t>& shape, Granularity granularity);
size_t scale_group_size(const std::vector<size_t>& shape, Granularity granularity);

// Learnable dequantization scale(s). gamma is initialized to zeta* sigma0 so
// dequantized values start with roughly the input's average magnitude; d is
// the element count governed by each gamma and feeds the 1/sqrt(d) gradient
// scaling.
struct ScaleParam {
    std::vector<double> gamma;
    std::vector<double> sigma0;
    size_t d = 0;
    bool learnable = true;
    bool degenerate_warning = false;  // any gamma fell back to the epsilon floor
};

ScaleParam make_scale_param(const std::vector<double>& sigma0, size_t d,
                            double zeta = kZetaStar);

// Everything the backward pass needs from a forward call.
struct QuantizeTrace {
    std::vector<size_t> shape;
    Granularity granularity = Granularity::per_tensor;
    int bits = 4;
    double zero_point = 0.0;
    size_t block = 0;
    std::vector<double> v;      // post-HT, post-RMS values
    std::vector<double> sigma;  // per group; 0 marks a degenerate slice
    std::vector<double> codes;  // q values (continuous when smooth)
    std::vector<uint8_t> bins;  // empty when smooth
    bool smooth = false;
};

// sigma measured per group (RMS of the Hadamard-transformed values).
// Degenerate groups (RMS < 1e-12) quantize as v = 0 and are marked by
// sigma = 0 in the trace.
//
// `smooth` replaces the floor with identity; used by gradient checks only.
// `inv_sigma_override` substitutes a fixed 1/sigma (the BBQ-Fast path).
QuantizeTrace bbq_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                                 const QuantConfig& cfg, bool smooth = false,
                                 const double* inv_sigma_override = nullptr);

// Dequantized values for a trace: xhat = gamma/2^(b-1) * q, broadcast per
// the granularity. No inverse Hadamard transform is applied.
std::vector<double> bbq_dequantize_values(const QuantizeTrace& trace,
                                          const std::vector<double>& gamma);

QuantizedTensor trace_to_quantized(const QuantizeTrace& trace, Method method,
                                   const std::vector<double>& gamma);

struct BbqGrads {
    std::vector<double> x;      // same layout as the forward input
    std::vector<double> gamma;  // per group, already divided by sqrt(d)
};

// Straight-through backward: the floor is treated as identity so gradients
// flow through xhat = gamma/2^(b-1) * (2^b Phi(v) - 2^(b-1) - z), through the
// RMS normalization with the full quotient rule (sigma depends on HT(x)),
// and back through the self-adjoint Hadamard transform. gamma's gradient
// uses the emitted codes directly and is scaled by 1/sqrt(d).
BbqGrads bbq_backward(const std::vector<double>& grad_out, const QuantizeTrace& trace,
                      const ScaleParam& scale);

// Tensor-level wrappers around the double-precision core.
std::pair<QuantizedTensor, QuantizeTrace> bbq_quantize(const Tensor& x, const QuantConfig& cfg,
                                                       const ScaleParam& scale,
                                                       const HadamardPlan& plan);
Tensor bbq_dequantize(const QuantizedTensor& qt);

// --------------------------------------------------------------------------
// BBQ-Fast: exponential moving average of 1/sigma replaces the exact RMS at
// inference time. E <- beta*E + (1-beta)/sigma, beta = 0.99; first use seeds
// E = 1/sigma directly.
struct EmaState {
    double e_inv_sigma = 0.0;
    double beta = 0.99;
    bool initialized = false;
};

void bbq_fast_update(EmaState& ema, double sigma);

QuantizeTrace bbq_fast_quantize_trace(const std::vector<double>& x,
                                      const std::vector<size_t>& shape, const QuantConfig& cfg,
                                      const EmaState& ema, bool smooth = false);
QuantizedTensor bbq_fast_quantize(const Tensor& x, const QuantConfig& cfg, const EmaState& ema,
                                  const std::vector<double>& gamma, const HadamardPlan& plan);

// --------------------------------------------------------------------------
// LSQ: q = round-half-even(clip(x/s, -2^(b-1), 2^(b-1)-1)), xhat = s*q.
struct LsqConfig {
    double s = 1.0;
    int bits = 4;
};

struct LsqTrace {
    std::vector<size_t> shape;
    int bits = 4;
    double s = 1.0;
    std::vector<double> v;        // x/s
    std::vector<double> codes;    // integer q
    std::vector<uint8_t> in_range;
};

std::pair<QuantizedTensor, LsqTrace> lsq_quantize(const Tensor& x, const LsqConfig& cfg);
LsqTrace lsq_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                            const LsqConfig& cfg);
Tensor lsq_dequantize(const QuantizedTensor& qt);
std::vector<double> lsq_dequantize_values(const LsqTrace& trace);

struct LsqGrads {
    std::vector<double> x;
    double s = 0.0;  // scaled by 1/sqrt(d * (2^(b-1)-1))
};

LsqGrads lsq_backward(const std::vector<double>& grad_out, const LsqTrace& trace);

// Reference step-size initialization: s0 = 2 E|x| / sqrt(2^(b-1)-1).
double lsq_init_step(const std::vector<double>& x, int bits);

// --------------------------------------------------------------------------
// QuEST: f(x) = HT(x)/(alpha* sigma) - 1/2, uniform round/clip, inverse
// f^-1(q) = HT(alpha* sigma (q + 1/2)). STE backward masks elements whose
// rounding error |f(x) - q| exceeds the trust factor T = alpha*/(2^b - 1).
struct QuestConfig {
    double alpha_star = 1.0;
    int bits = 4;
    size_t block = 128;
    Granularity granularity = Granularity::per_tensor;
};

struct QuestTrace {
    std::vector<size_t> shape;
    Granularity granularity = Granularity::per_tensor;
    int bits = 4;
    double alpha_star = 1.0;
    size_t block = 0;
    std::vector<double> f;      // pre-rounding transformed values
    std::vector<double> sigma;  // per group
    std::vector<double> codes;
    std::vector<uint8_t> trusted;
};

std::pair<QuantizedTensor, QuestTrace> quest_quantize(const Tensor& x, const QuestConfig& cfg,
                                                      const HadamardPlan& plan);
QuestTrace quest_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                                const QuestConfig& cfg);
Tensor quest_dequantize(const QuantizedTensor& qt);
std::vector<double> quest_dequantize_values(const QuestTrace& trace);

// grad_x = HT(mask * HT(grad_out)); alpha* and sigma cancel.
std::vector<double> quest_backward(const std::vector<double>& grad_out, const QuestTrace& trace);

// Optimal uniform clip scale per bit width: argmin over alpha of
// E[(v - dequant(quant(v)))^2] for v ~ N(0,1), searched on a 0.001 grid over
// [0.5, 5] with exact per-cell Gaussian integrals. Cached per b.
double quest_alpha_star(int bits);

// --------------------------------------------------------------------------
// Generic quantile/codebook quantizer: i = floor(2^b Phi(x/sigma)),
// dequant = sigma * T[i].
struct Codebook {
    std::vector<double> values;  // strictly increasing, size 2^b
    int bits() const;
};

Codebook make_codebook(std::vector<double> values);
// Mid-bin Gaussian quantiles Phi^-1((i+1/2)/2^b), abs-max normalized to
// [-1, 1]: the NormalFloat-style baseline.
Codebook build_nf_codebook(int bits);

QuantizedTensor codebook_quantize(const Tensor& x, const Codebook& cb, double sigma);
std::vector<uint8_t> codebook_quantize_bins(const std::vector<double>& x, const Codebook& cb,
                                            double sigma);
Tensor codebook_dequantize(const QuantizedTensor& qt);

}  // namespace bbq
