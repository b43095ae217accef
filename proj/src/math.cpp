#include "dpcl/math.hpp"

#include <cmath>
#include <stdexcept>

namespace dpcl {

namespace {

void check_distribution(const Tensor& p, const char* who) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0))
            throw std::invalid_argument(std::string(who) + ": negative probability entry");
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": probabilities do not sum to 1");
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() == 0)
        throw std::invalid_argument("softmax: non-empty rank-1 input required");
    double m = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    Tensor out(logits.shape());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

double log_sum_exp(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() == 0)
        throw std::invalid_argument("log_sum_exp: non-empty rank-1 input required");
    double m = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - m);
    return m + std::log(sum);
}

double entropy(const Tensor& probabilities) {
    if (probabilities.rank() != 1 || probabilities.size() == 0)
        throw std::invalid_argument("entropy: non-empty rank-1 input required");
    check_distribution(probabilities, "entropy");
    double h = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        double p = probabilities[i];
        if (p > 0.0) h -= p * std::log(p);
    }
    // Entries a hair above 1 (sum tolerance) can leave a tiny negative residue.
    if (h < 0.0 && h > -1e-9) h = 0.0;
    return h;
}

Tensor one_hot(int label, std::size_t classes) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
        throw std::invalid_argument("one_hot: label out of range");
    Tensor out({classes});
    out[static_cast<std::size_t>(label)] = 1.0;
    return out;
}

std::size_t argmax(const Tensor& values) {
    if (values.size() == 0) throw std::invalid_argument("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

}  // namespace dpcl
