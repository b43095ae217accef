#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "dpcl/network.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/tensor.hpp"

namespace dpcl {

// Epistemic information score of an ensemble prediction: entropy of the mean
// minus mean of the entropies. p_bar must be the arithmetic mean of
// branch_ps (checked to 1e-6). Nonnegative up to rounding.
double mutual_information(const Tensor& p_bar, const std::vector<Tensor>& branch_ps);

struct MemoryEntry {
    Tensor x;
    int label = -1;
    double history = 0.0;  // EMA of information scores while in memory
    long insert_iteration = 0;
};

enum class InsertOutcome { Appended, Replaced, Skipped };

struct InsertResult {
    InsertOutcome outcome = InsertOutcome::Skipped;
    std::size_t victim_slot = static_cast<std::size_t>(-1);  // set when Replaced
};

// Class-balanced replay memory. Insertion below capacity appends; at capacity
// the candidate competes against the lowest-history member of the most
// populous class. A reservoir policy is provided for the replay baseline.
class ReplayMemory {
public:
    ReplayMemory() = default;
    ReplayMemory(std::size_t capacity, std::size_t num_classes);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t num_classes() const { return class_counts_.size(); }
    const MemoryEntry& entry(std::size_t slot) const;
    std::size_t class_count(int label) const;

    // History-based insertion. Ties: most populous class resolves to the
    // smallest class id; victim resolves min history, then oldest insertion,
    // then smallest slot.
    InsertResult insert_by_information(Tensor x, int label, double info, long iteration);

    // Classic reservoir sampling over the stream arrival index.
    InsertResult insert_reservoir(Tensor x, int label, long iteration, std::size_t arrival_index,
                                  RngState& rng);

    // EMA of the information score for one member.
    void update_history(std::size_t slot, double info, double gamma);

    double mean_history() const;  // 0 when empty

private:
    std::size_t capacity_ = 0;
    std::vector<MemoryEntry> entries_;
    std::vector<std::size_t> class_counts_;
};

enum class LrMode { MainText, Appendix, Off };

// Multiplicative learning-rate adaptation gated on snapshot updates. The rate
// is tracked as an integer exponent over omega so opposite updates cancel
// exactly.
class LrState {
public:
    LrState() = default;
    LrState(double initial_rate, double omega, LrMode mode);

    double rate() const { return rate_; }
    double omega() const { return omega_; }
    LrMode mode() const { return mode_; }
    long exponent() const { return exponent_; }
    double previous_mean() const { return prev_mean_; }

    // No-op unless a snapshot mean was updated this iteration. MainText
    // scales up on strictly increasing mean history (omega > 1); Appendix
    // scales by omega on non-decreasing history (omega < 1).
    void adapt(const ReplayMemory& memory, bool any_mean_updated);

    void restore(long exponent, double previous_mean);

private:
    double initial_ = 0.0;
    double omega_ = 1.0;
    LrMode mode_ = LrMode::Off;
    double rate_ = 0.0;
    long exponent_ = 0;
    double prev_mean_ = 0.0;
};

// FIFO of the most recent stream samples (capacity batch_size / 2).
class StreamBuffer {
public:
    explicit StreamBuffer(std::size_t capacity);

    void push(Tensor x, int label);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    struct Item {
        Tensor x;
        int label;
    };
    const Item& newest(std::size_t i) const;  // i = 0 is the most recent

private:
    std::size_t capacity_ = 0;
    std::deque<Item> items_;
};

// Half stream buffer (newest first), half memory (uniform without
// replacement); short sides are padded from the other source. The batch only
// comes up short when both sources together cannot fill it.
std::vector<BatchSample> draw_training_batch(const ReplayMemory& memory, const StreamBuffer& buffer,
                                             std::size_t batch_size, RngState& rng);

}  // namespace dpcl
