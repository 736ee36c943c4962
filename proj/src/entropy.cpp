#include "entropy.hpp"

#include <cmath>

namespace bbq {

void CodeHistogram::add(uint8_t bin) {
    require(bin < (1u << bits), ErrorCode::invalid_argument, "bin out of range for histogram");
    ++counts[bin];
    ++total;
}

void CodeHistogram::merge(const CodeHistogram& other) {
    require(bits == other.bits, ErrorCode::invalid_argument,
            "cannot merge histograms of different precision");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    total += other.total;
}

CodeHistogram histogram_from_bins(const std::vector<uint8_t>& bins, int bits) {
    require(bits >= 1 && bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    require(!bins.empty(), ErrorCode::invalid_argument, "entropy of an empty code set");
    CodeHistogram hist;
    hist.bits = bits;
    for (uint8_t b : bins) hist.add(b);
    return hist;
}

CodeHistogram histogram_from_quantized(const QuantizedTensor& qt) {
    return histogram_from_bins(bin_indices(qt), qt.bits);
}

double entropy_bits(const CodeHistogram& hist) {
    require(hist.total > 0, ErrorCode::invalid_argument, "entropy of an empty code set");
    const double inv_total = 1.0 / static_cast<double>(hist.total);
    double h = 0.0;
    for (int i = 0; i < (1 << hist.bits); ++i) {
        if (hist.counts[i] == 0) continue;
        double p = static_cast<double>(hist.counts[i]) * inv_total;
        h -= p * std::log2(p);
    }
    return h;
}

double entropy(const QuantizedTensor& qt) {
    return entropy_bits(histogram_from_quantized(qt));
}

}  // namespace bbq
