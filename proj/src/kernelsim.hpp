#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gaussian.hpp"
#include "quantizers.hpp"
#include "quantized_tensor.hpp"

namespace bbq {

// 4-bit pattern -> numeric value, indexed by the raw nibble:
//   int4  : two's complement, -8..7
//   mxfp4 : {0, 0.5, 1, 1.5, 2, 3, 4, 6} with sign in the top bit; both
//           0b0000 and 0b1000 decode to zero
const std::array<double, 16>& nibble_value_table(Encoding encoding);
double decode_nibble(Encoding encoding, uint8_t pattern);
// Pattern whose value equals `value` exactly; throws ErrorCode::encoding if
// the value is not representable. Zero always encodes as 0b0000 (the
// negative-zero pattern 0b1000 is accepted on decode but never emitted).
uint8_t encode_nibble(Encoding encoding, double value);
bool nibble_representable(Encoding encoding, double value);

// Bin index per element by b comparisons against the precomputed
// Phi^-1(i/2^b) boundaries; left-closed bins (v >= boundary selects the
// upper bin), matching the floor formula except within rounding distance of
// a boundary.
std::vector<uint8_t> binsearch_bins(const std::vector<double>& v, const InvCdfTable& table);
// Same, returning code values i - 2^(b-1) - z.
std::vector<double> binsearch_quantize(const std::vector<double>& v, const InvCdfTable& table,
                                       const QuantConfig& cfg);

// Re-encode between raw/int4/mxfp4 nibble layouts. Every code value must be
// representable in the target encoding (for BBQ codes that reproduces the
// per-precision INT4/MXFP4 support matrix: b=4 int4-only, b=3 either,
// b in {1,2} mxfp4-only).
QuantizedTensor encode_codes(const QuantizedTensor& qt, Encoding encoding);
std::vector<double> decode_codes(const QuantizedTensor& qt);

// Swaps a 2-D quantized tensor's axes (codes repacked, scale axis flipped).
QuantizedTensor transpose_quantized(const QuantizedTensor& qt);

// q_a [M,K] times q_w [K,N] with the scale epilogue: INT4 pairs accumulate
// exactly in int32 and are scaled once per output element by s_a * s_w;
// MXFP4/raw pairs decode to exactly-representable reals and accumulate in
// 32-bit floats. a's scales may be per-tensor or per-row, w's per-tensor or
// per-column, so dequantization folds into the epilogue.
Tensor lowprec_matmul(const QuantizedTensor& a, const QuantizedTensor& w);
// Raw INT4 accumulators, before scaling (exactness checks).
std::vector<int32_t> lowprec_matmul_i32(const QuantizedTensor& a, const QuantizedTensor& w);

// The inference quantization kernel: blocked Hadamard transform, multiply by
// the EMA'd 1/sigma, binary-search against the Phi^-1 table, pack into the
// requested encoding. Matches bbq_fast_quantize + encode_codes element-wise.
QuantizedTensor quantize_kernel_sim(const Tensor& x, const HadamardPlan& plan,
                                    const InvCdfTable& table, const EmaState& ema,
                                    const QuantConfig& cfg, const std::vector<double>& gamma,
                                    Encoding encoding);

// Multiply-accumulate counts for the bench report.
struct MacCounts {
    uint64_t hadamard = 0;   // butterfly add/sub pairs
    uint64_t quantize = 0;   // per-element compare chains
    uint64_t matmul = 0;     // M*N*K
};

MacCounts count_macs(size_t m, size_t n, size_t k, size_t block);

}  // namespace bbq
