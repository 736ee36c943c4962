#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace bbq {

enum class Method { bbq, bbq_fast, lsq, quest, codebook };
enum class Granularity { per_tensor, per_channel };
enum class Encoding { raw_codes, int4, mxfp4 };
// Which axis the scale groups run over. Quantizing a [rows, cols] tensor
// per-channel yields one scale per row; transposing for matmul flips it.
enum class ScaleAxis { tensor, row, col };

std::string method_name(Method m);
std::string granularity_name(Granularity g);
std::string encoding_name(Encoding e);
std::string scale_axis_name(ScaleAxis a);

Method parse_method(const std::string& s);
Granularity parse_granularity(const std::string& s);
Encoding parse_encoding(const std::string& s);
ScaleAxis parse_scale_axis(const std::string& s);

// Zero point z: 0 for b in {3,4} (zero exactly representable), -0.5 for
// b in {1,2} (codes stay zero-mean).
double zero_point_for_bits(int bits);

struct QuantConfig {
    Method method = Method::bbq;
    int bits = 4;
    size_t block = 128;  // Hadamard block H
    Granularity granularity = Granularity::per_tensor;
};

void validate_quant_config(const QuantConfig& cfg);

// Packed 4-bit codes plus the scale state needed to dequantize. Nibble
// semantics depend on `encoding`:
//   raw_codes : nibble = bin index in 0..2^b-1
//   int4      : nibble = two's-complement of the integer code value
//   mxfp4     : nibble = MX FP4 pattern whose value equals the code value
// Element 2k sits in the low nibble, 2k+1 in the high nibble.
//
// `scales` is the per-group scale parameter; its meaning follows `method`:
// gamma for bbq/bbq_fast (element scale gamma/2^(b-1)), step size s for lsq,
// alpha* times sigma for quest, sigma for codebook.
struct QuantizedTensor {
    std::vector<size_t> shape;
    Method method = Method::bbq;
    Encoding encoding = Encoding::raw_codes;
    int bits = 4;
    double zero_point = 0.0;
    size_t block = 0;  // Hadamard block used at quantization time (0 = none)
    std::vector<uint8_t> packed;
    std::vector<double> scales;
    ScaleAxis scale_axis = ScaleAxis::tensor;
    std::vector<double> codebook;  // populated only for Method::codebook

    size_t numel() const { return shape_numel(shape); }
    size_t last_dim() const { return shape.empty() ? 1 : shape.back(); }
    size_t rows() const { return shape.empty() ? 1 : numel() / shape.back(); }
};

// Two 4-bit fields per byte, low nibble first. Values must fit in 4 bits.
std::vector<uint8_t> pack_nibbles(const std::vector<uint8_t>& nibbles);
std::vector<uint8_t> unpack_nibbles(const std::vector<uint8_t>& packed, size_t count);

// Bin indices (0..2^b-1) regardless of encoding.
std::vector<uint8_t> bin_indices(const QuantizedTensor& qt);
// Numeric code values: bin - 2^(b-1) - z, or the codebook entry for
// Method::codebook.
std::vector<double> code_values(const QuantizedTensor& qt);
double code_value_of_bin(int bin, int bits, double zero_point);

// The set of representable code values for (bits, z), ascending.
std::vector<double> code_value_set(int bits, double zero_point);

void validate_quantized(const QuantizedTensor& qt);

}  // namespace bbq
