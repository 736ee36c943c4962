#include "quantized_tensor.hpp"

#include <algorithm>
#include <cmath>

#include "hadamard.hpp"
#include "kernelsim.hpp"

namespace bbq {

std::string method_name(Method m) {
    switch (m) {
        case Method::bbq: return "bbq";
        case Method::bbq_fast: return "bbq-fast";
        case Method::lsq: return "lsq";
        case Method::quest: return "quest";
        case Method::codebook: return "codebook";
    }
    return "?";
}

std::string granularity_name(Granularity g) {
    return g == Granularity::per_tensor ? "per-tensor" : "per-channel";
}

std::string encoding_name(Encoding e) {
    switch (e) {
        case Encoding::raw_codes: return "raw";
        case Encoding::int4: return "int4";
        case Encoding::mxfp4: return "mxfp4";
    }
    return "?";
}

std::string scale_axis_name(ScaleAxis a) {
    switch (a) {
        case ScaleAxis::tensor: return "tensor";
        case ScaleAxis::row: return "row";
        case ScaleAxis::col: return "col";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "bbq") return Method::bbq;
    if (s == "bbq-fast" || s == "bbq_fast") return Method::bbq_fast;
    if (s == "lsq") return Method::lsq;
    if (s == "quest") return Method::quest;
    if (s == "codebook") return Method::codebook;
    fail(ErrorCode::invalid_argument, "unknown method '" + s + "'");
}

Granularity parse_granularity(const std::string& s) {
    if (s == "per-tensor" || s == "per_tensor") return Granularity::per_tensor;
    if (s == "per-channel" || s == "per_channel") return Granularity::per_channel;
    fail(ErrorCode::invalid_argument, "unknown granularity '" + s + "'");
}

Encoding parse_encoding(const std::string& s) {
    if (s == "raw") return Encoding::raw_codes;
    if (s == "int4") return Encoding::int4;
    if (s == "mxfp4") return Encoding::mxfp4;
    fail(ErrorCode::invalid_argument, "unknown encoding '" + s + "'");
}

ScaleAxis parse_scale_axis(const std::string& s) {
    if (s == "tensor") return ScaleAxis::tensor;
    if (s == "row") return ScaleAxis::row;
    if (s == "col") return ScaleAxis::col;
    fail(ErrorCode::invalid_argument, "unknown scale axis '" + s + "'");
}

double zero_point_for_bits(int bits) {
    require(bits >= 1 && bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    return bits >= 3 ? 0.0 : -0.5;
}

void validate_quant_config(const QuantConfig& cfg) {
    require(cfg.bits >= 1 && cfg.bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    require(is_power_of_two(cfg.block), ErrorCode::invalid_argument,
            "block must be a power of two");
    if (cfg.method == Method::lsq)
        require(cfg.bits >= 2, ErrorCode::invalid_argument, "lsq does not support 1-bit");
}

std::vector<uint8_t> pack_nibbles(const std::vector<uint8_t>& nibbles) {
    std::vector<uint8_t> packed((nibbles.size() + 1) / 2, 0);
    for (size_t i = 0; i < nibbles.size(); ++i) {
        require(nibbles[i] < 16, ErrorCode::encoding, "nibble value out of range");
        if (i % 2 == 0)
            packed[i / 2] |= nibbles[i];
        else
            packed[i / 2] |= static_cast<uint8_t>(nibbles[i] << 4);
    }
    return packed;
}

std::vector<uint8_t> unpack_nibbles(const std::vector<uint8_t>& packed, size_t count) {
    require(packed.size() == (count + 1) / 2, ErrorCode::encoding,
            "packed byte count does not match element count");
    std::vector<uint8_t> nibbles(count);
    for (size_t i = 0; i < count; ++i) {
        uint8_t byte = packed[i / 2];
        nibbles[i] = (i % 2 == 0) ? (byte & 0x0f) : (byte >> 4);
    }
    return nibbles;
}

std::vector<uint8_t> bin_indices(const QuantizedTensor& qt) {
    std::vector<uint8_t> nibbles = unpack_nibbles(qt.packed, qt.numel());
    if (qt.encoding == Encoding::raw_codes) {
        for (uint8_t n : nibbles)
            require(n < (1u << qt.bits), ErrorCode::encoding, "raw code out of range for bits");
        return nibbles;
    }
    // Decode the pattern to its numeric value, then invert
    // code = bin - 2^(b-1) - z.
    const double offset = static_cast<double>(1 << (qt.bits - 1)) + qt.zero_point;
    for (uint8_t& n : nibbles) {
        double value = decode_nibble(qt.encoding, n);
        double bin = value + offset;
        double rounded = std::nearbyint(bin);
        require(std::abs(bin - rounded) < 1e-9 && rounded >= 0 && rounded < (1 << qt.bits),
                ErrorCode::encoding, "decoded code does not map to a valid bin");
        n = static_cast<uint8_t>(rounded);
    }
    return nibbles;
}

double code_value_of_bin(int bin, int bits, double zero_point) {
    return static_cast<double>(bin) - static_cast<double>(1 << (bits - 1)) - zero_point;
}

std::vector<double> code_values(const QuantizedTensor& qt) {
    std::vector<uint8_t> bins = bin_indices(qt);
    std::vector<double> values(bins.size());
    if (qt.method == Method::codebook) {
        require(qt.codebook.size() == (1u << qt.bits), ErrorCode::encoding,
                "codebook size does not match bits");
        for (size_t i = 0; i < bins.size(); ++i) values[i] = qt.codebook[bins[i]];
        return values;
    }
    for (size_t i = 0; i < bins.size(); ++i)
        values[i] = code_value_of_bin(bins[i], qt.bits, qt.zero_point);
    return values;
}

std::vector<double> code_value_set(int bits, double zero_point) {
    std::vector<double> set(static_cast<size_t>(1) << bits);
    for (size_t i = 0; i < set.size(); ++i)
        set[i] = code_value_of_bin(static_cast<int>(i), bits, zero_point);
    return set;
}

void validate_quantized(const QuantizedTensor& qt) {
    require(qt.bits >= 1 && qt.bits <= 4, ErrorCode::encoding, "bits must be in 1..4");
    require(qt.packed.size() == (qt.numel() + 1) / 2, ErrorCode::encoding,
            "packed length does not match shape");
    size_t groups = 1;
    switch (qt.scale_axis) {
        case ScaleAxis::tensor: groups = 1; break;
        case ScaleAxis::row: groups = qt.rows(); break;
        case ScaleAxis::col: groups = qt.last_dim(); break;
    }
    require(qt.scales.size() == groups, ErrorCode::encoding,
            "scale count does not match scale axis");
}

}  // namespace bbq
