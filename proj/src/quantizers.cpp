#include "quantizers.hpp"

#include <algorithm>
#include <cmath>

namespace bbq {

namespace {

constexpr double kDegenerateSigma = 1e-12;
constexpr double kGammaFloor = 1e-6;

struct GroupLayout {
    size_t count;  // number of scale groups
    size_t size;   // elements per group (groups are contiguous)
};

GroupLayout group_layout(const std::vector<size_t>& shape, Granularity granularity) {
    size_t numel = shape_numel(shape);
    if (granularity == Granularity::per_tensor) return {1, numel};
    size_t last = shape.empty() ? 1 : shape.back();
    return {numel / last, last};
}

double round_half_even(double v) {
    // nearbyint honours the default FE_TONEAREST mode (ties to even).
    return std::nearbyint(v);
}

}  // namespace

size_t scale_group_count(const std::vector<size_t>& shape, Granularity granularity) {
    return group_layout(shape, granularity).count;
}

size_t scale_group_size(const std::vector<size_t>& shape, Granularity granularity) {
    return group_layout(shape, granularity).size;
}

ScaleParam make_scale_param(const std::vector<double>& sigma0, size_t d, double zeta) {
    require(!sigma0.empty(), ErrorCode::invalid_argument, "sigma0 must be non-empty");
    require(d > 0, ErrorCode::invalid_argument, "scale param needs d > 0");
    ScaleParam p;
    p.sigma0 = sigma0;
    p.gamma.resize(sigma0.size());
    p.d = d;
    for (size_t g = 0; g < sigma0.size(); ++g) {
        if (sigma0[g] < kDegenerateSigma) {
            p.gamma[g] = kGammaFloor;
            p.degenerate_warning = true;
        } else {
            p.gamma[g] = zeta * sigma0[g];
        }
    }
    return p;
}

QuantizeTrace bbq_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                                 const QuantConfig& cfg, bool smooth,
                                 const double* inv_sigma_override) {
    validate_quant_config(cfg);
    require(shape_numel(shape) == x.size(), ErrorCode::shape_mismatch,
            "data length does not match shape");
    size_t last = shape.empty() ? 1 : shape.back();
    require(last % cfg.block == 0, ErrorCode::invalid_argument,
            "trailing dimension " + std::to_string(last) + " not divisible by block " +
                std::to_string(cfg.block));
    if (inv_sigma_override)
        require(cfg.granularity == Granularity::per_tensor, ErrorCode::invalid_argument,
                "EMA-based quantization is per-tensor only");

    QuantizeTrace trace;
    trace.shape = shape;
    trace.granularity = cfg.granularity;
    trace.bits = cfg.bits;
    trace.zero_point = zero_point_for_bits(cfg.bits);
    trace.block = cfg.block;
    trace.smooth = smooth;

    trace.v = x;
    fwht_blocked_inplace(trace.v, cfg.block);

    const GroupLayout groups = group_layout(shape, cfg.granularity);
    trace.sigma.resize(groups.count);
    for (size_t g = 0; g < groups.count; ++g) {
        double* slice = trace.v.data() + g * groups.size;
        double inv_sigma;
        if (inv_sigma_override) {
            require(*inv_sigma_override > 0.0, ErrorCode::domain, "1/sigma must be positive");
            trace.sigma[g] = 1.0 / *inv_sigma_override;
            inv_sigma = *inv_sigma_override;
        } else {
            double sumsq = 0.0;
            for (size_t i = 0; i < groups.size; ++i) sumsq += slice[i] * slice[i];
            double sigma = std::sqrt(sumsq / static_cast<double>(groups.size));
            if (sigma < kDegenerateSigma) {
                // All-zero slice: define v = 0 so every element lands in the
                // Phi(0) bin instead of propagating NaNs.
                trace.sigma[g] = 0.0;
                for (size_t i = 0; i < groups.size; ++i) slice[i] = 0.0;
                continue;
            }
            trace.sigma[g] = sigma;
            inv_sigma = 1.0 / sigma;
        }
        for (size_t i = 0; i < groups.size; ++i) slice[i] *= inv_sigma;
    }

    const int n_codes = 1 << cfg.bits;
    const double half = static_cast<double>(1 << (cfg.bits - 1));
    trace.codes.resize(x.size());
    if (!smooth) trace.bins.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double u = static_cast<double>(n_codes) * phi(trace.v[i]);
        if (smooth) {
            trace.codes[i] = u - half - trace.zero_point;
        } else {
            // Phi can round to 1.0, pushing the floor to 2^b; clamp to the
            // top bin so the formula agrees with the binary-search kernel.
            int bin = static_cast<int>(std::floor(u));
            bin = std::clamp(bin, 0, n_codes - 1);
            trace.bins[i] = static_cast<uint8_t>(bin);
            trace.codes[i] = code_value_of_bin(bin, cfg.bits, trace.zero_point);
        }
    }
    return trace;
}

std::vector<double> bbq_dequantize_values(const QuantizeTrace& trace,
                                          const std::vector<double>& gamma) {
    const GroupLayout groups = group_layout(trace.shape, trace.granularity);
    require(gamma.size() == groups.count, ErrorCode::shape_mismatch,
            "gamma count does not match scale groups");
    const double inv_half = 1.0 / static_cast<double>(1 << (trace.bits - 1));
    std::vector<double> out(trace.codes.size());
    for (size_t g = 0; g < groups.count; ++g) {
        double s = gamma[g] * inv_half;
        const size_t base = g * groups.size;
        for (size_t i = 0; i < groups.size; ++i) out[base + i] = s * trace.codes[base + i];
    }
    return out;
}

QuantizedTensor trace_to_quantized(const QuantizeTrace& trace, Method method,
                                   const std::vector<double>& gamma) {
    require(!trace.smooth, ErrorCode::invalid_argument,
            "smooth traces have no discrete codes to pack");
    QuantizedTensor qt;
    qt.shape = trace.shape;
    qt.method = method;
    qt.encoding = Encoding::raw_codes;
    qt.bits = trace.bits;
    qt.zero_point = trace.zero_point;
    qt.block = trace.block;
    qt.packed = pack_nibbles(trace.bins);
    qt.scales = gamma;
    qt.scale_axis =
        trace.granularity == Granularity::per_channel ? ScaleAxis::row : ScaleAxis::tensor;
    validate_quantized(qt);
    return qt;
}

BbqGrads bbq_backward(const std::vector<double>& grad_out, const QuantizeTrace& trace,
                      const ScaleParam& scale) {
    require(grad_out.size() == trace.codes.size(), ErrorCode::shape_mismatch,
            "grad_out length does not match trace");
    const GroupLayout groups = group_layout(trace.shape, trace.granularity);
    require(scale.gamma.size() == groups.count, ErrorCode::shape_mismatch,
            "scale param does not match trace groups");
    require(scale.d > 0, ErrorCode::invalid_argument, "scale param missing element count d");

    BbqGrads grads;
    grads.x.assign(grad_out.size(), 0.0);
    grads.gamma.assign(groups.count, 0.0);
    const double inv_half = 1.0 / static_cast<double>(1 << (trace.bits - 1));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(scale.d));

    for (size_t g = 0; g < groups.count; ++g) {
        const size_t base = g * groups.size;
        const double gamma = scale.gamma[g];
        const double sigma = trace.sigma[g];

        double dgamma = 0.0;
        for (size_t i = base; i < base + groups.size; ++i)
            dgamma += grad_out[i] * trace.codes[i];
        grads.gamma[g] = dgamma * inv_half * inv_sqrt_d;

        if (sigma <= 0.0) continue;  // degenerate slice: no gradient to x

        // u = dL/dv through xhat = gamma/2^(b-1) (2^b Phi(v) - ...).
        double sum_uv = 0.0;
        for (size_t i = base; i < base + groups.size; ++i) {
            double u = grad_out[i] * 2.0 * gamma * phi_pdf(trace.v[i]);
            grads.x[i] = u;
            sum_uv += u * trace.v[i];
        }
        const double inv_sigma = 1.0 / sigma;
        const double mean_uv = sum_uv / static_cast<double>(groups.size);
        for (size_t i = base; i < base + groups.size; ++i)
            grads.x[i] = (grads.x[i] - trace.v[i] * mean_uv) * inv_sigma;
    }
    // Adjoint of the orthonormal blocked transform is the transform itself.
    fwht_blocked_inplace(grads.x, trace.block);
    return grads;
}

std::pair<QuantizedTensor, QuantizeTrace> bbq_quantize(const Tensor& x, const QuantConfig& cfg,
                                                       const ScaleParam& scale,
                                                       const HadamardPlan& plan) {
    QuantConfig c = cfg;
    c.block = plan.block_size;
    QuantizeTrace trace = bbq_quantize_trace(x.to_double(), x.shape(), c);
    QuantizedTensor qt = trace_to_quantized(trace, cfg.method, scale.gamma);
    return {std::move(qt), std::move(trace)};
}

Tensor bbq_dequantize(const QuantizedTensor& qt) {
    require(qt.method == Method::bbq || qt.method == Method::bbq_fast, ErrorCode::invalid_argument,
            "tensor was not quantized with bbq");
    validate_quantized(qt);
    std::vector<double> codes = code_values(qt);
    const double inv_half = 1.0 / static_cast<double>(1 << (qt.bits - 1));
    const size_t last = qt.last_dim();
    std::vector<double> out(codes.size());
    for (size_t i = 0; i < codes.size(); ++i) {
        size_t group = 0;
        if (qt.scale_axis == ScaleAxis::row) group = i / last;
        else if (qt.scale_axis == ScaleAxis::col) group = i % last;
        out[i] = qt.scales[group] * inv_half * codes[i];
    }
    return Tensor::from_double(qt.shape, out);
}

// ---------------------------------------------------------------------------

void bbq_fast_update(EmaState& ema, double sigma) {
    require(sigma > 0.0, ErrorCode::domain, "EMA update needs sigma > 0");
    if (!ema.initialized) {
        ema.e_inv_sigma = 1.0 / sigma;
        ema.initialized = true;
        return;
    }
    ema.e_inv_sigma = ema.beta * ema.e_inv_sigma + (1.0 - ema.beta) * (1.0 / sigma);
}

QuantizeTrace bbq_fast_quantize_trace(const std::vector<double>& x,
                                      const std::vector<size_t>& shape, const QuantConfig& cfg,
                                      const EmaState& ema, bool smooth) {
    require(ema.initialized, ErrorCode::invalid_argument, "EMA state not initialized");
    return bbq_quantize_trace(x, shape, cfg, smooth, &ema.e_inv_sigma);
}

QuantizedTensor bbq_fast_quantize(const Tensor& x, const QuantConfig& cfg, const EmaState& ema,
                                  const std::vector<double>& gamma, const HadamardPlan& plan) {
    QuantConfig c = cfg;
    c.block = plan.block_size;
    QuantizeTrace trace = bbq_fast_quantize_trace(x.to_double(), x.shape(), c, ema);
    return trace_to_quantized(trace, Method::bbq_fast, gamma);
}

// ---------------------------------------------------------------------------

LsqTrace lsq_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                            const LsqConfig& cfg) {
    require(cfg.bits >= 2 && cfg.bits <= 4, ErrorCode::invalid_argument,
            "lsq supports 2..4 bits (1-bit unsupported)");
    require(cfg.s > 0.0, ErrorCode::domain, "lsq step size must be positive");
    require(shape_numel(shape) == x.size(), ErrorCode::shape_mismatch,
            "data length does not match shape");
    LsqTrace trace;
    trace.shape = shape;
    trace.bits = cfg.bits;
    trace.s = cfg.s;
    trace.v.resize(x.size());
    trace.codes.resize(x.size());
    trace.in_range.resize(x.size());
    const double lo = -static_cast<double>(1 << (cfg.bits - 1));
    const double hi = static_cast<double>(1 << (cfg.bits - 1)) - 1.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double v = x[i] / cfg.s;
        trace.v[i] = v;
        trace.in_range[i] = (v >= lo && v <= hi) ? 1 : 0;
        trace.codes[i] = round_half_even(std::clamp(v, lo, hi));
    }
    return trace;
}

std::pair<QuantizedTensor, LsqTrace> lsq_quantize(const Tensor& x, const LsqConfig& cfg) {
    LsqTrace trace = lsq_quantize_trace(x.to_double(), x.shape(), cfg);
    QuantizedTensor qt;
    qt.shape = x.shape();
    qt.method = Method::lsq;
    qt.encoding = Encoding::raw_codes;
    qt.bits = cfg.bits;
    qt.zero_point = 0.0;
    qt.block = 0;
    std::vector<uint8_t> bins(trace.codes.size());
    const int half = 1 << (cfg.bits - 1);
    for (size_t i = 0; i < trace.codes.size(); ++i)
        bins[i] = static_cast<uint8_t>(static_cast<int>(trace.codes[i]) + half);
    qt.packed = pack_nibbles(bins);
    qt.scales = {cfg.s};
    qt.scale_axis = ScaleAxis::tensor;
    return {std::move(qt), std::move(trace)};
}

std::vector<double> lsq_dequantize_values(const LsqTrace& trace) {
    std::vector<double> out(trace.codes.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = trace.s * trace.codes[i];
    return out;
}

Tensor lsq_dequantize(const QuantizedTensor& qt) {
    require(qt.method == Method::lsq, ErrorCode::invalid_argument,
            "tensor was not quantized with lsq");
    std::vector<double> codes = code_values(qt);
    for (double& c : codes) c *= qt.scales[0];
    return Tensor::from_double(qt.shape, codes);
}

LsqGrads lsq_backward(const std::vector<double>& grad_out, const LsqTrace& trace) {
    require(grad_out.size() == trace.codes.size(), ErrorCode::shape_mismatch,
            "grad_out length does not match trace");
    LsqGrads grads;
    grads.x.assign(grad_out.size(), 0.0);
    double ds = 0.0;
    for (size_t i = 0; i < grad_out.size(); ++i) {
        if (trace.in_range[i]) {
            grads.x[i] = grad_out[i];
            ds += grad_out[i] * (trace.codes[i] - trace.v[i]);
        } else {
            ds += grad_out[i] * trace.codes[i];
        }
    }
    const double qp = static_cast<double>(1 << (trace.bits - 1)) - 1.0;
    grads.s = ds / std::sqrt(static_cast<double>(grad_out.size()) * qp);
    return grads;
}

double lsq_init_step(const std::vector<double>& x, int bits) {
    require(bits >= 2 && bits <= 4, ErrorCode::invalid_argument, "lsq supports 2..4 bits");
    double mean_abs = 0.0;
    for (double v : x) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(x.size());
    double qp = static_cast<double>(1 << (bits - 1)) - 1.0;
    double s = 2.0 * mean_abs / std::sqrt(qp);
    return s > 0.0 ? s : 1.0;
}

// ---------------------------------------------------------------------------

QuestTrace quest_quantize_trace(const std::vector<double>& x, const std::vector<size_t>& shape,
                                const QuestConfig& cfg) {
    require(cfg.bits >= 1 && cfg.bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    require(cfg.alpha_star > 0.0, ErrorCode::domain, "alpha* must be positive");
    require(shape_numel(shape) == x.size(), ErrorCode::shape_mismatch,
            "data length does not match shape");
    size_t last = shape.empty() ? 1 : shape.back();
    require(last % cfg.block == 0, ErrorCode::invalid_argument,
            "trailing dimension not divisible by block");

    QuestTrace trace;
    trace.shape = shape;
    trace.granularity = cfg.granularity;
    trace.bits = cfg.bits;
    trace.alpha_star = cfg.alpha_star;
    trace.block = cfg.block;

    trace.f = x;
    fwht_blocked_inplace(trace.f, cfg.block);

    const GroupLayout groups = group_layout(shape, cfg.granularity);
    trace.sigma.resize(groups.count);
    for (size_t g = 0; g < groups.count; ++g) {
        double* slice = trace.f.data() + g * groups.size;
        double sumsq = 0.0;
        for (size_t i = 0; i < groups.size; ++i) sumsq += slice[i] * slice[i];
        double sigma = std::sqrt(sumsq / static_cast<double>(groups.size));
        trace.sigma[g] = std::max(sigma, kDegenerateSigma);
        const double inv = 1.0 / (cfg.alpha_star * trace.sigma[g]);
        for (size_t i = 0; i < groups.size; ++i) slice[i] = slice[i] * inv - 0.5;
    }

    const double lo = -static_cast<double>(1 << (cfg.bits - 1));
    const double hi = static_cast<double>(1 << (cfg.bits - 1)) - 1.0;
    const double trust = cfg.alpha_star / (static_cast<double>(1 << cfg.bits) - 1.0);
    trace.codes.resize(x.size());
    trace.trusted.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double q = round_half_even(std::clamp(trace.f[i], lo, hi));
        trace.codes[i] = q;
        trace.trusted[i] = std::abs(trace.f[i] - q) <= trust ? 1 : 0;
    }
    return trace;
}

std::pair<QuantizedTensor, QuestTrace> quest_quantize(const Tensor& x, const QuestConfig& cfg,
                                                      const HadamardPlan& plan) {
    QuestConfig c = cfg;
    c.block = plan.block_size;
    QuestTrace trace = quest_quantize_trace(x.to_double(), x.shape(), c);
    QuantizedTensor qt;
    qt.shape = x.shape();
    qt.method = Method::quest;
    qt.encoding = Encoding::raw_codes;
    qt.bits = cfg.bits;
    qt.zero_point = 0.0;
    qt.block = c.block;
    std::vector<uint8_t> bins(trace.codes.size());
    const int half = 1 << (cfg.bits - 1);
    for (size_t i = 0; i < trace.codes.size(); ++i)
        bins[i] = static_cast<uint8_t>(static_cast<int>(trace.codes[i]) + half);
    qt.packed = pack_nibbles(bins);
    qt.scales.resize(trace.sigma.size());
    for (size_t g = 0; g < trace.sigma.size(); ++g)
        qt.scales[g] = cfg.alpha_star * trace.sigma[g];
    qt.scale_axis =
        cfg.granularity == Granularity::per_channel ? ScaleAxis::row : ScaleAxis::tensor;
    return {std::move(qt), std::move(trace)};
}

std::vector<double> quest_dequantize_values(const QuestTrace& trace) {
    const GroupLayout groups = group_layout(trace.shape, trace.granularity);
    std::vector<double> out(trace.codes.size());
    for (size_t g = 0; g < groups.count; ++g) {
        const double s = trace.alpha_star * trace.sigma[g];
        const size_t base = g * groups.size;
        for (size_t i = 0; i < groups.size; ++i)
            out[base + i] = s * (trace.codes[base + i] + 0.5);
    }
    fwht_blocked_inplace(out, trace.block);
    return out;
}

Tensor quest_dequantize(const QuantizedTensor& qt) {
    require(qt.method == Method::quest, ErrorCode::invalid_argument,
            "tensor was not quantized with quest");
    validate_quantized(qt);
    std::vector<double> codes = code_values(qt);
    const size_t last = qt.last_dim();
    for (size_t i = 0; i < codes.size(); ++i) {
        size_t group = qt.scale_axis == ScaleAxis::row ? i / last : 0;
        codes[i] = qt.scales[group] * (codes[i] + 0.5);
    }
    fwht_blocked_inplace(codes, qt.block);
    return Tensor::from_double(qt.shape, codes);
}

std::vector<double> quest_backward(const std::vector<double>& grad_out,
                                   const QuestTrace& trace) {
    require(grad_out.size() == trace.codes.size(), ErrorCode::shape_mismatch,
            "grad_out length does not match trace");
    std::vector<double> g = grad_out;
    fwht_blocked_inplace(g, trace.block);
    for (size_t i = 0; i < g.size(); ++i)
        if (!trace.trusted[i]) g[i] = 0.0;
    fwht_blocked_inplace(g, trace.block);
    return g;
}

namespace {

// E[(v - vhat(v))^2] for v ~ N(0,1) under uniform rounding with step alpha,
// via exact Gaussian moments per quantization cell.
double quest_mse(double alpha, int bits) {
    const int half = 1 << (bits - 1);
    double mse = 0.0;
    for (int q = -half; q < half; ++q) {
        const bool lowest = (q == -half);    // cell extends to -inf
        const bool highest = (q == half - 1);  // cell extends to +inf
        const double lo = lowest ? 0.0 : alpha * q;
        const double hi = highest ? 0.0 : alpha * (q + 1);
        const double level = alpha * (q + 0.5);
        double cdf_lo = lowest ? 0.0 : phi(lo);
        double cdf_hi = highest ? 1.0 : phi(hi);
        double pdf_lo = lowest ? 0.0 : phi_pdf(lo);
        double pdf_hi = highest ? 0.0 : phi_pdf(hi);
        double i0 = cdf_hi - cdf_lo;
        double i1 = pdf_lo - pdf_hi;
        double i2 = i0 + (lowest ? 0.0 : lo * pdf_lo) - (highest ? 0.0 : hi * pdf_hi);
        mse += i2 - 2.0 * level * i1 + level * level * i0;
    }
    return mse;
}

}  // namespace

double quest_alpha_star(int bits) {
    require(bits >= 1 && bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    static double cache[5] = {0, 0, 0, 0, 0};
    if (cache[bits] > 0.0) return cache[bits];
    // 0.001 grid; the lower end must sit below the 16-level optimum (~0.335).
    double best_alpha = 0.05;
    double best_mse = quest_mse(best_alpha, bits);
    for (int step = 1; step <= 4950; ++step) {
        double alpha = 0.05 + 0.001 * step;
        double mse = quest_mse(alpha, bits);
        if (mse < best_mse) {
            best_mse = mse;
            best_alpha = alpha;
        }
    }
    cache[bits] = best_alpha;
    return best_alpha;
}

// ---------------------------------------------------------------------------

int Codebook::bits() const {
    size_t n = values.size();
    int b = 0;
    while ((1u << b) < n) ++b;
    return b;
}

Codebook make_codebook(std::vector<double> values) {
    require(values.size() >= 2 && values.size() <= 16 && is_power_of_two(values.size()),
            ErrorCode::invalid_argument, "codebook size must be 2^b with b in 1..4");
    for (size_t i = 1; i < values.size(); ++i)
        require(values[i] > values[i - 1], ErrorCode::invalid_argument,
                "codebook values must be strictly increasing");
    Codebook cb;
    cb.values = std::move(values);
    return cb;
}

Codebook build_nf_codebook(int bits) {
    require(bits >= 1 && bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    const size_t n = static_cast<size_t>(1) << bits;
    std::vector<double> vals(n);
    for (size_t i = 0; i < n; ++i)
        vals[i] = phi_inv((static_cast<double>(i) + 0.5) / static_cast<double>(n));
    const double norm = -vals[0];  // symmetric quantiles: max |.| is the first
    for (size_t i = 0; i < n / 2; ++i) {
        vals[i] /= norm;
        vals[n - 1 - i] = -vals[i];  // pin exact symmetry, endpoints at +/-1
    }
    return make_codebook(std::move(vals));
}

std::vector<uint8_t> codebook_quantize_bins(const std::vector<double>& x, const Codebook& cb,
                                            double sigma) {
    require(sigma > 0.0, ErrorCode::domain, "codebook quantization needs sigma > 0");
    const int n = static_cast<int>(cb.values.size());
    std::vector<uint8_t> bins(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        int bin = static_cast<int>(std::floor(n * phi(x[i] / sigma)));
        bins[i] = static_cast<uint8_t>(std::clamp(bin, 0, n - 1));
    }
    return bins;
}

QuantizedTensor codebook_quantize(const Tensor& x, const Codebook& cb, double sigma) {
    QuantizedTensor qt;
    qt.shape = x.shape();
    qt.method = Method::codebook;
    qt.encoding = Encoding::raw_codes;
    qt.bits = cb.bits();
    qt.zero_point = 0.0;
    qt.block = 0;
    qt.packed = pack_nibbles(codebook_quantize_bins(x.to_double(), cb, sigma));
    qt.scales = {sigma};
    qt.scale_axis = ScaleAxis::tensor;
    qt.codebook = cb.values;
    return qt;
}

Tensor codebook_dequantize(const QuantizedTensor& qt) {
    require(qt.method == Method::codebook, ErrorCode::invalid_argument,
            "tensor was not quantized with a codebook");
    std::vector<double> values = code_values(qt);
    for (double& v : values) v *= qt.scales[0];
    return Tensor::from_double(qt.shape, values);
}

}  // namespace bbq
