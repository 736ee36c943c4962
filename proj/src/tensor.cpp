#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace bbq {

size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (size_t d : shape_)
        require(d > 0, ErrorCode::invalid_argument, "tensor dimensions must be positive");
    require(shape_numel(shape_) == data_.size(), ErrorCode::invalid_argument,
            "tensor data length does not match shape " + shape_to_string(shape_));
    for (float v : data_)
        require(std::isfinite(v), ErrorCode::invalid_argument,
                "tensor values must be finite (NaN/Inf rejected)");
}

Tensor Tensor::zeros(std::vector<size_t> shape) {
    size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

std::vector<double> Tensor::to_double() const {
    return std::vector<double>(data_.begin(), data_.end());
}

Tensor Tensor::from_double(std::vector<size_t> shape, const std::vector<double>& values) {
    std::vector<float> f(values.size());
    for (size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
    return Tensor(std::move(shape), std::move(f));
}

}  // namespace bbq
