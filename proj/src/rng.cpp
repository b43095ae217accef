#include "dpcl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpcl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer; bijective with strong avalanche.
std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

std::uint64_t hash_scope(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

RngState::RngState(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)) {}

RngState::RngState(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

RngState RngState::substream(std::string_view scope) const {
    return RngState(seed_, mix64(key_ ^ hash_scope(scope)));
}

RngState RngState::substream(std::string_view scope, std::uint64_t index) const {
    return RngState(seed_, mix64(mix64(key_ ^ hash_scope(scope)) + kGolden * (index + 1)));
}

std::uint64_t RngState::next_u64() {
    return mix64(key_ + kGolden * ++counter_);
}

double RngState::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_unit_open() {
    return 1.0 - next_unit();
}

double RngState::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(next_unit_open()));
    double theta = 2.0 * std::numbers::pi * next_unit();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t RngState::next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("RngState::next_below: bound must be positive");
    // Rejection below the wrap-around threshold keeps the draw unbiased.
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

Tensor sample_gaussian(RngState& rng, const std::vector<std::size_t>& shape) {
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.next_gaussian();
    return out;
}

double sample_gamma(RngState& rng, double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("sample_gamma: shape must be positive");
    if (shape < 1.0) {
        double boost = std::pow(rng.next_unit_open(), 1.0 / shape);
        return sample_gamma(rng, shape + 1.0) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = rng.next_gaussian();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = rng.next_unit_open();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double sample_beta(RngState& rng, double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw std::invalid_argument("sample_beta: alpha and beta must be positive");
    for (;;) {
        double a = sample_gamma(rng, alpha);
        double b = sample_gamma(rng, beta);
        double s = a + b;
        if (s > 0.0) return a / s;  // retry on the (vanishing) double-underflow case
    }
}

std::vector<std::size_t> sample_permutation(RngState& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace dpcl
