#include "kernelsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace bbq {

namespace {

constexpr std::array<double, 16> kInt4Values = {0, 1, 2,  3,  4,  5,  6,  7,
                                                -8, -7, -6, -5, -4, -3, -2, -1};
constexpr std::array<double, 16> kMxFp4Values = {0,  0.5,  1,  1.5,  2,  3,  4,  6,
                                                 -0, -0.5, -1, -1.5, -2, -3, -4, -6};

}  // namespace

const std::array<double, 16>& nibble_value_table(Encoding encoding) {
    switch (encoding) {
        case Encoding::int4: return kInt4Values;
        case Encoding::mxfp4: return kMxFp4Values;
        case Encoding::raw_codes: break;
    }
    fail(ErrorCode::encoding, "raw codes have no value table");
}

double decode_nibble(Encoding encoding, uint8_t pattern) {
    require(pattern < 16, ErrorCode::encoding, "nibble pattern out of range");
    return nibble_value_table(encoding)[pattern];
}

bool nibble_representable(Encoding encoding, double value) {
    const auto& table = nibble_value_table(encoding);
    for (double t : table)
        if (t == value) return true;
    return false;
}

uint8_t encode_nibble(Encoding encoding, double value) {
    if (value == 0.0) return 0;  // never emit the MXFP4 negative-zero pattern
    const auto& table = nibble_value_table(encoding);
    for (uint8_t p = 0; p < 16; ++p)
        if (table[p] == value) return p;
    fail(ErrorCode::encoding, "code value " + std::to_string(value) + " not representable as " +
                                  encoding_name(encoding));
}

std::vector<uint8_t> binsearch_bins(const std::vector<double>& v, const InvCdfTable& table) {
    const int n = 1 << table.bits;
    std::vector<uint8_t> bins(v.size());
    for (size_t t = 0; t < v.size(); ++t) {
        // b comparisons, most-significant bin bit first; boundaries[0] is
        // -inf so bin 0 needs no test.
        int i = 0;
        for (int step = n >> 1; step >= 1; step >>= 1)
            if (v[t] >= table.boundaries[i + step]) i += step;
        bins[t] = static_cast<uint8_t>(i);
    }
    return bins;
}

std::vector<double> binsearch_quantize(const std::vector<double>& v, const InvCdfTable& table,
                                       const QuantConfig& cfg) {
    require(table.bits == cfg.bits, ErrorCode::invalid_argument,
            "table built for different precision");
    std::vector<uint8_t> bins = binsearch_bins(v, table);
    const double z = zero_point_for_bits(cfg.bits);
    std::vector<double> codes(bins.size());
    for (size_t i = 0; i < bins.size(); ++i) codes[i] = code_value_of_bin(bins[i], cfg.bits, z);
    return codes;
}

QuantizedTensor encode_codes(const QuantizedTensor& qt, Encoding encoding) {
    validate_quantized(qt);
    if (encoding == qt.encoding) return qt;
    QuantizedTensor out = qt;
    out.encoding = encoding;
    if (encoding == Encoding::raw_codes) {
        out.packed = pack_nibbles(bin_indices(qt));
        return out;
    }
    require(qt.method != Method::codebook, ErrorCode::encoding,
            "codebook entries are indices, not int4/mxfp4 values");
    std::vector<double> values = code_values(qt);
    std::vector<uint8_t> nibbles(values.size());
    for (size_t i = 0; i < values.size(); ++i) nibbles[i] = encode_nibble(encoding, values[i]);
    out.packed = pack_nibbles(nibbles);
    return out;
}

std::vector<double> decode_codes(const QuantizedTensor& qt) {
    return code_values(qt);
}

QuantizedTensor transpose_quantized(const QuantizedTensor& qt) {
    require(qt.shape.size() == 2, ErrorCode::shape_mismatch, "transpose expects a 2-D tensor");
    const size_t rows = qt.shape[0], cols = qt.shape[1];
    std::vector<uint8_t> nibbles = unpack_nibbles(qt.packed, qt.numel());
    std::vector<uint8_t> t(nibbles.size());
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) t[c * rows + r] = nibbles[r * cols + c];
    QuantizedTensor out = qt;
    out.shape = {cols, rows};
    out.packed = pack_nibbles(t);
    if (qt.scale_axis == ScaleAxis::row) out.scale_axis = ScaleAxis::col;
    else if (qt.scale_axis == ScaleAxis::col) out.scale_axis = ScaleAxis::row;
    return out;
}

namespace {

// Per-element dequantization multiplier: gamma/2^(b-1) for bbq, s for lsq.
double element_scale(const QuantizedTensor& qt, size_t group) {
    switch (qt.method) {
        case Method::bbq:
        case Method::bbq_fast:
            return qt.scales[group] / static_cast<double>(1 << (qt.bits - 1));
        case Method::lsq:
            return qt.scales[group];
        default:
            fail(ErrorCode::invalid_argument,
                 "matmul needs an affine dequantization (bbq/bbq-fast/lsq)");
    }
}

void check_matmul_operands(const QuantizedTensor& a, const QuantizedTensor& w) {
    validate_quantized(a);
    validate_quantized(w);
    require(a.shape.size() == 2 && w.shape.size() == 2, ErrorCode::shape_mismatch,
            "matmul expects 2-D operands");
    require(a.shape[1] == w.shape[0], ErrorCode::shape_mismatch,
            "inner dimensions do not match: " + shape_to_string(a.shape) + " x " +
                shape_to_string(w.shape));
    require(a.encoding == w.encoding, ErrorCode::encoding,
            "operands use different encodings (" + encoding_name(a.encoding) + " vs " +
                encoding_name(w.encoding) + ")");
    require(a.scale_axis != ScaleAxis::col, ErrorCode::invalid_argument,
            "left operand scales must be per-tensor or per-row");
    require(w.scale_axis != ScaleAxis::row, ErrorCode::invalid_argument,
            "right operand scales must be per-tensor or per-column");
}

}  // namespace

std::vector<int32_t> lowprec_matmul_i32(const QuantizedTensor& a, const QuantizedTensor& w) {
    check_matmul_operands(a, w);
    require(a.encoding == Encoding::int4, ErrorCode::encoding,
            "integer accumulation is the int4 path");
    const size_t m = a.shape[0], k = a.shape[1], n = w.shape[1];
    std::vector<uint8_t> an = unpack_nibbles(a.packed, m * k);
    std::vector<uint8_t> wn = unpack_nibbles(w.packed, k * n);
    std::vector<int8_t> ai(an.size()), wi(wn.size());
    for (size_t i = 0; i < an.size(); ++i)
        ai[i] = static_cast<int8_t>(an[i] < 8 ? an[i] : static_cast<int>(an[i]) - 16);
    for (size_t i = 0; i < wn.size(); ++i)
        wi[i] = static_cast<int8_t>(wn[i] < 8 ? wn[i] : static_cast<int>(wn[i]) - 16);

    std::vector<int32_t> acc(m * n, 0);
    for (size_t r = 0; r < m; ++r)
        for (size_t kk = 0; kk < k; ++kk) {
            const int32_t av = ai[r * k + kk];
            const int8_t* wrow = wi.data() + kk * n;
            int32_t* out = acc.data() + r * n;
            for (size_t c = 0; c < n; ++c) out[c] += av * wrow[c];
        }
    return acc;
}

Tensor lowprec_matmul(const QuantizedTensor& a, const QuantizedTensor& w) {
    check_matmul_operands(a, w);
    const size_t m = a.shape[0], k = a.shape[1], n = w.shape[1];
    std::vector<double> out(m * n);

    auto a_scale = [&](size_t r) {
        return element_scale(a, a.scale_axis == ScaleAxis::row ? r : 0);
    };
    auto w_scale = [&](size_t c) {
        return element_scale(w, w.scale_axis == ScaleAxis::col ? c : 0);
    };

    if (a.encoding == Encoding::int4) {
        std::vector<int32_t> acc = lowprec_matmul_i32(a, w);
        for (size_t r = 0; r < m; ++r)
            for (size_t c = 0; c < n; ++c)
                out[r * n + c] = static_cast<double>(acc[r * n + c]) * a_scale(r) * w_scale(c);
        return Tensor::from_double({m, n}, out);
    }

    // MXFP4/raw path: code values are small multiples of 0.25, so float
    // accumulation is exact for any realistic K.
    std::vector<double> av = decode_codes(a);
    std::vector<double> wv = decode_codes(w);
    std::vector<float> af(av.begin(), av.end()), wf(wv.begin(), wv.end());
    std::vector<float> acc(m * n, 0.0f);
    for (size_t r = 0; r < m; ++r)
        for (size_t kk = 0; kk < k; ++kk) {
            const float avf = af[r * k + kk];
            const float* wrow = wf.data() + kk * n;
            float* orow = acc.data() + r * n;
            for (size_t c = 0; c < n; ++c) orow[c] += avf * wrow[c];
        }
    for (size_t r = 0; r < m; ++r)
        for (size_t c = 0; c < n; ++c)
            out[r * n + c] = static_cast<double>(acc[r * n + c]) * a_scale(r) * w_scale(c);
    return Tensor::from_double({m, n}, out);
}

QuantizedTensor quantize_kernel_sim(const Tensor& x, const HadamardPlan& plan,
                                    const InvCdfTable& table, const EmaState& ema,
                                    const QuantConfig& cfg, const std::vector<double>& gamma,
                                    Encoding encoding) {
    validate_plan(plan);
    require(ema.initialized, ErrorCode::invalid_argument, "EMA state not initialized");
    require(table.bits == cfg.bits, ErrorCode::invalid_argument,
            "table built for different precision");
    require(x.last_dim() % plan.block_size == 0, ErrorCode::invalid_argument,
            "trailing dimension not divisible by block size");

    std::vector<double> v = x.to_double();
    fwht_blocked_inplace(v, plan.block_size);
    for (double& e : v) e *= ema.e_inv_sigma;

    QuantizedTensor qt;
    qt.shape = x.shape();
    qt.method = Method::bbq_fast;
    qt.encoding = Encoding::raw_codes;
    qt.bits = cfg.bits;
    qt.zero_point = zero_point_for_bits(cfg.bits);
    qt.block = plan.block_size;
    qt.packed = pack_nibbles(binsearch_bins(v, table));
    qt.scales = gamma;
    qt.scale_axis = ScaleAxis::tensor;
    validate_quantized(qt);
    return encode_codes(qt, encoding);
}

MacCounts count_macs(size_t m, size_t n, size_t k, size_t block) {
    MacCounts counts;
    const size_t log2h = static_cast<size_t>(std::countr_zero(block));
    counts.hadamard = static_cast<uint64_t>(m) * k * log2h;
    counts.quantize = static_cast<uint64_t>(m) * k;
    counts.matmul = static_cast<uint64_t>(m) * n * k;
    return counts;
}

}  // namespace bbq
