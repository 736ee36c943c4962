#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace bbq {

// Block-wise orthonormal Walsh-Hadamard transform along the trailing
// (input-channel) dimension. The implied block matrix is the Sylvester
// construction scaled by 1/sqrt(H): entry (i,j) = (-1)^popcount(i&j)/sqrt(H).
// With that scaling the transform is symmetric, orthonormal, and an
// involution, so it serves as its own inverse and its own adjoint.
struct HadamardPlan {
    size_t block_size = 128;
};

bool is_power_of_two(size_t n);
void validate_plan(const HadamardPlan& plan);

// In-place orthonormal FWHT of one contiguous block of length plan-size.
void fwht_inplace(std::span<double> block);

// Applies fwht_inplace to every consecutive h-element block. `n` must be a
// multiple of h; callers arrange data so trailing-dimension slices are
// contiguous (row-major tensors already are).
void fwht_blocked_inplace(std::span<double> data, size_t h);

Tensor fwht_blocked(const Tensor& x, const HadamardPlan& plan);

// Explicit H x H orthonormal Hadamard matrix, row-major.
Tensor hadamard_matrix(size_t h);

}  // namespace bbq
