#include "hadamard.hpp"

#include <bit>
#include <cmath>

namespace bbq {

bool is_power_of_two(size_t n) {
    return n > 0 && (n & (n - 1)) == 0;
}

void validate_plan(const HadamardPlan& plan) {
    require(is_power_of_two(plan.block_size), ErrorCode::invalid_argument,
            "Hadamard block size must be a power of two, got " +
                std::to_string(plan.block_size));
}

void fwht_inplace(std::span<double> block) {
    const size_t n = block.size();
    for (size_t stride = 1; stride < n; stride <<= 1) {
        for (size_t base = 0; base < n; base += 2 * stride) {
            for (size_t j = base; j < base + stride; ++j) {
                double a = block[j];
                double b = block[j + stride];
                block[j] = a + b;
                block[j + stride] = a - b;
            }
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : block) v *= scale;
}

void fwht_blocked_inplace(std::span<double> data, size_t h) {
    require(is_power_of_two(h), ErrorCode::invalid_argument,
            "Hadamard block size must be a power of two");
    require(data.size() % h == 0, ErrorCode::invalid_argument,
            "data length not divisible by Hadamard block size");
    for (size_t off = 0; off < data.size(); off += h) fwht_inplace(data.subspan(off, h));
}

Tensor fwht_blocked(const Tensor& x, const HadamardPlan& plan) {
    validate_plan(plan);
    require(x.last_dim() % plan.block_size == 0, ErrorCode::invalid_argument,
            "trailing dimension " + std::to_string(x.last_dim()) +
                " not divisible by block size " + std::to_string(plan.block_size));
    std::vector<double> buf = x.to_double();
    fwht_blocked_inplace(buf, plan.block_size);
    return Tensor::from_double(x.shape(), buf);
}

Tensor hadamard_matrix(size_t h) {
    require(is_power_of_two(h), ErrorCode::invalid_argument,
            "Hadamard matrix size must be a power of two");
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(h)));
    std::vector<float> m(h * h);
    for (size_t i = 0; i < h; ++i)
        for (size_t j = 0; j < h; ++j)
            m[i * h + j] = (std::popcount(i & j) & 1) ? -scale : scale;
    return Tensor({h, h}, std::move(m));
}

}  // namespace bbq
