#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "quantized_tensor.hpp"

namespace bbq {

// Code-occupancy histogram over the 2^b representable codes; mergeable so
// per-layer histograms pool into a model-level one.
struct CodeHistogram {
    int bits = 0;
    std::array<uint64_t, 16> counts{};
    uint64_t total = 0;

    void add(uint8_t bin);
    void merge(const CodeHistogram& other);
};

CodeHistogram histogram_from_bins(const std::vector<uint8_t>& bins, int bits);
CodeHistogram histogram_from_quantized(const QuantizedTensor& qt);

// Empirical Shannon entropy in bits, 0*log0 = 0; bounded by the precision b.
double entropy_bits(const CodeHistogram& hist);
double entropy(const QuantizedTensor& qt);

}  // namespace bbq
