#include "dpcl/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace dpcl {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    if (shape_.empty() || shape_.size() > 2)
        throw std::invalid_argument("Tensor: rank must be 1 or 2");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 2)
        throw std::invalid_argument("Tensor: rank must be 1 or 2");
    if (shape_product(shape_) != data_.size())
        throw std::invalid_argument("Tensor: shape does not match data size");
}

Tensor Tensor::from_vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::invalid_argument("Tensor::rows: rank-2 only");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::invalid_argument("Tensor::cols: rank-2 only");
    return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    if (rank() != 2 || r >= shape_[0] || c >= shape_[1])
        throw std::out_of_range("Tensor::at: bad index");
    return data_[r * shape_[1] + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    if (rank() != 2 || r >= shape_[0] || c >= shape_[1])
        throw std::out_of_range("Tensor::at: bad index");
    return data_[r * shape_[1] + c];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace dpcl
