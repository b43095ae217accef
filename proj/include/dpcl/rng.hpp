#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dpcl/tensor.hpp"

namespace dpcl {

// Counter-based generator: every output is a hash of (key, counter), and
// substreams derive fresh keys from (parent key, scope string, index). Two
// properties the rest of the engine leans on:
//   - identical seeds reproduce identical draw sequences, and
//   - a consumer added to one substream never shifts the values another
//     substream sees, because streams never share a counter.
class RngState {
public:
    explicit RngState(std::uint64_t seed);

    RngState substream(std::string_view scope) const;
    RngState substream(std::string_view scope, std::uint64_t index) const;

    std::uint64_t next_u64();
    double next_unit();       // uniform in [0, 1)
    double next_unit_open();  // uniform in (0, 1]
    double next_gaussian();   // standard normal, Box-Muller
    std::uint64_t next_below(std::uint64_t bound);  // uniform in [0, bound)

    std::uint64_t seed() const { return seed_; }

private:
    RngState(std::uint64_t seed, std::uint64_t key);

    std::uint64_t seed_ = 0;  // base experiment seed, kept for checkpoints
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;  // second Box-Muller value
    bool has_spare_ = false;
};

// Tensor of i.i.d. standard normal draws.
Tensor sample_gaussian(RngState& rng, const std::vector<std::size_t>& shape);

// Marsaglia-Tsang gamma (unit scale); shapes below 1 use the boost identity.
double sample_gamma(RngState& rng, double shape);

// Beta(alpha, beta) as a ratio of two gamma draws.
double sample_beta(RngState& rng, double alpha, double beta);

// Uniform random permutation of {0, ..., n-1} (Fisher-Yates).
std::vector<std::size_t> sample_permutation(RngState& rng, std::size_t n);

}  // namespace dpcl
