#pragma once

#include <cstddef>

#include "dpcl/tensor.hpp"

namespace dpcl {

// Numerically stable softmax (max-subtraction before exponentiation).
Tensor softmax(const Tensor& logits);

// log(sum(exp(logits))) with the same stabilization.
double log_sum_exp(const Tensor& logits);

// Shannon entropy in nats with the 0*log(0) = 0 convention. Validates that
// the input is a probability vector (entries >= 0, sum within 1e-9 of 1).
double entropy(const Tensor& probabilities);

// One-hot vector of length `classes`.
Tensor one_hot(int label, std::size_t classes);

// Index of the largest entry; ties resolve to the smallest index.
std::size_t argmax(const Tensor& values);

}  // namespace dpcl
