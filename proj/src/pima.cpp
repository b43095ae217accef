#include "dpcl/pima.hpp"

#include <cmath>
#include <stdexcept>

#include "dpcl/math.hpp"

namespace dpcl {

double mutual_information(const Tensor& p_bar, const std::vector<Tensor>& branch_ps) {
    if (branch_ps.empty())
        throw std::invalid_argument("mutual_information: no branch predictions");
    for (const Tensor& p : branch_ps)
        if (!p.same_shape(p_bar))
            throw std::invalid_argument("mutual_information: shape mismatch");
    const double n = static_cast<double>(branch_ps.size());
    for (std::size_t c = 0; c < p_bar.size(); ++c) {
        double m = 0.0;
        for (const Tensor& p : branch_ps) m += p[c];
        if (std::abs(p_bar[c] - m / n) > 1e-6)
            throw std::invalid_argument("mutual_information: p_bar is not the branch mean");
    }
    double mean_h = 0.0;
    for (const Tensor& p : branch_ps) mean_h += entropy(p);
    return entropy(p_bar) - mean_h / n;
}

ReplayMemory::ReplayMemory(std::size_t capacity, std::size_t num_classes)
    : capacity_(capacity), class_counts_(num_classes, 0) {
    entries_.reserve(capacity);
}

const MemoryEntry& ReplayMemory::entry(std::size_t slot) const {
    if (slot >= entries_.size()) throw std::out_of_range("ReplayMemory: slot out of range");
    return entries_[slot];
}

std::size_t ReplayMemory::class_count(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= class_counts_.size())
        throw std::invalid_argument("ReplayMemory: label out of range");
    return class_counts_[static_cast<std::size_t>(label)];
}

InsertResult ReplayMemory::insert_by_information(Tensor x, int label, double info,
                                                 long iteration) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_counts_.size())
        throw std::invalid_argument("ReplayMemory: label out of range");
    if (entries_.size() < capacity_) {
        entries_.push_back({std::move(x), label, info, iteration});
        ++class_counts_[static_cast<std::size_t>(label)];
        return {InsertOutcome::Appended, entries_.size() - 1};
    }
    if (capacity_ == 0) return {InsertOutcome::Skipped, static_cast<std::size_t>(-1)};

    // Most populous class; ties resolve to the smallest class id.
    std::size_t crowded = 0;
    for (std::size_t c = 1; c < class_counts_.size(); ++c)
        if (class_counts_[c] > class_counts_[crowded]) crowded = c;

    // Lowest-history member of that class; ties prefer the older insertion,
    // then the smaller slot (scan order).
    std::size_t victim = static_cast<std::size_t>(-1);
    for (std::size_t s = 0; s < entries_.size(); ++s) {
        const MemoryEntry& e = entries_[s];
        if (static_cast<std::size_t>(e.label) != crowded) continue;
        if (victim == static_cast<std::size_t>(-1) ||
            e.history < entries_[victim].history ||
            (e.history == entries_[victim].history &&
             e.insert_iteration < entries_[victim].insert_iteration))
            victim = s;
    }
    if (victim == static_cast<std::size_t>(-1))
        throw std::logic_error("ReplayMemory: count bookkeeping out of sync");

    if (!(info > entries_[victim].history))
        return {InsertOutcome::Skipped, static_cast<std::size_t>(-1)};

    --class_counts_[static_cast<std::size_t>(entries_[victim].label)];
    entries_[victim] = {std::move(x), label, info, iteration};
    ++class_counts_[static_cast<std::size_t>(label)];
    return {InsertOutcome::Replaced, victim};
}

InsertResult ReplayMemory::insert_reservoir(Tensor x, int label, long iteration,
                                            std::size_t arrival_index, RngState& rng) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_counts_.size())
        throw std::invalid_argument("ReplayMemory: label out of range");
    if (entries_.size() < capacity_) {
        entries_.push_back({std::move(x), label, 0.0, iteration});
        ++class_counts_[static_cast<std::size_t>(label)];
        return {InsertOutcome::Appended, entries_.size() - 1};
    }
    if (capacity_ == 0) return {InsertOutcome::Skipped, static_cast<std::size_t>(-1)};
    std::uint64_t j = rng.next_below(static_cast<std::uint64_t>(arrival_index) + 1);
    if (j >= capacity_) return {InsertOutcome::Skipped, static_cast<std::size_t>(-1)};
    std::size_t slot = static_cast<std::size_t>(j);
    --class_counts_[static_cast<std::size_t>(entries_[slot].label)];
    entries_[slot] = {std::move(x), label, 0.0, iteration};
    ++class_counts_[static_cast<std::size_t>(label)];
    return {InsertOutcome::Replaced, slot};
}

void ReplayMemory::update_history(std::size_t slot, double info, double gamma) {
    if (slot >= entries_.size())
        throw std::out_of_range("ReplayMemory::update_history: unknown sample");
    if (!(gamma > 0.0) || gamma > 1.0)
        throw std::invalid_argument("ReplayMemory::update_history: gamma must be in (0, 1]");
    MemoryEntry& e = entries_[slot];
    e.history = (1.0 - gamma) * e.history + gamma * info;
}

double ReplayMemory::mean_history() const {
    if (entries_.empty()) return 0.0;
    double sum = 0.0;
    for (const MemoryEntry& e : entries_) sum += e.history;
    return sum / static_cast<double>(entries_.size());
}

LrState::LrState(double initial_rate, double omega, LrMode mode)
    : initial_(initial_rate), omega_(omega), mode_(mode), rate_(initial_rate) {
    if (!(initial_rate > 0.0)) throw std::invalid_argument("LrState: rate must be positive");
    if (mode == LrMode::MainText && !(omega > 1.0))
        throw std::invalid_argument("LrState: main-text mode needs omega > 1");
    if (mode == LrMode::Appendix && !(omega > 0.0 && omega < 1.0))
        throw std::invalid_argument("LrState: appendix mode needs omega in (0, 1)");
}

void LrState::adapt(const ReplayMemory& memory, bool any_mean_updated) {
    if (mode_ == LrMode::Off || !any_mean_updated) return;
    double current = memory.mean_history();
    bool scale_up;
    if (mode_ == LrMode::MainText) {
        scale_up = current > prev_mean_;  // faster on rising information
    } else {
        scale_up = current >= prev_mean_;  // omega < 1: slower on rising information
    }
    exponent_ += scale_up ? 1 : -1;
    rate_ = initial_ * std::pow(omega_, static_cast<double>(exponent_));
    prev_mean_ = current;
}

void LrState::restore(long exponent, double previous_mean) {
    exponent_ = exponent;
    prev_mean_ = previous_mean;
    rate_ = initial_ * std::pow(omega_, static_cast<double>(exponent_));
}

StreamBuffer::StreamBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("StreamBuffer: capacity must be positive");
}

void StreamBuffer::push(Tensor x, int label) {
    items_.push_back({std::move(x), label});
    if (items_.size() > capacity_) items_.pop_front();
}

const StreamBuffer::Item& StreamBuffer::newest(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("StreamBuffer: index out of range");
    return items_[items_.size() - 1 - i];
}

std::vector<BatchSample> draw_training_batch(const ReplayMemory& memory, const StreamBuffer& buffer,
                                             std::size_t batch_size, RngState& rng) {
    if (batch_size == 0 || batch_size % 2 != 0)
        throw std::invalid_argument("draw_training_batch: batch size must be positive and even");
    const std::size_t S = buffer.size();
    const std::size_t M = memory.size();
    if (S + M == 0)
        throw std::invalid_argument("draw_training_batch: both sources empty");

    const std::size_t half = batch_size / 2;
    const std::size_t stream_take = std::min(half, S);
    const std::size_t mem_take = std::min(batch_size - stream_take, M);
    const std::size_t extra_stream = std::min(batch_size - stream_take - mem_take, S - stream_take);

    std::vector<BatchSample> batch;
    batch.reserve(stream_take + mem_take + extra_stream);
    for (std::size_t i = 0; i < stream_take; ++i) {
        const auto& item = buffer.newest(i);
        batch.push_back({item.x, item.label, -1});
    }
    if (mem_take > 0) {
        // Partial Fisher-Yates for a uniform draw without replacement.
        std::vector<std::size_t> idx(M);
        for (std::size_t i = 0; i < M; ++i) idx[i] = i;
        for (std::size_t i = 0; i < mem_take; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.next_below(M - i));
            std::swap(idx[i], idx[j]);
            const MemoryEntry& e = memory.entry(idx[i]);
            batch.push_back({e.x, e.label, static_cast<int>(idx[i])});
        }
    }
    for (std::size_t i = 0; i < extra_stream; ++i) {
        const auto& item = buffer.newest(stream_take + i);
        batch.push_back({item.x, item.label, -1});
    }
    return batch;
}

}  // namespace dpcl
