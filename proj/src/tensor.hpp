#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "common.hpp"

namespace bbq {

// Dense row-major real32 tensor. Values are validated to be finite at
// construction; instances are immutable by convention after they are built
// (all transforms return new tensors).
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<size_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<size_t> shape);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t ndim() const { return shape_.size(); }
    size_t numel() const { return data_.size(); }
    // Size of the trailing (contiguous) dimension; 1 for rank-0.
    size_t last_dim() const { return shape_.empty() ? 1 : shape_.back(); }
    // Number of trailing-dimension slices (numel / last_dim).
    size_t rows() const { return shape_.empty() ? 1 : numel() / last_dim(); }

    const std::vector<float>& data() const { return data_; }
    float operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::vector<double> to_double() const;
    static Tensor from_double(std::vector<size_t> shape, const std::vector<double>& values);

private:
    std::vector<size_t> shape_;
    std::vector<float> data_;
};

size_t shape_numel(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

}  // namespace bbq
