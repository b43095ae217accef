#pragma once

#include <cstddef>
#include <deque>
#include <utility>
#include <vector>

#include "dpcl/network.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/tensor.hpp"

namespace dpcl {

struct BscConfig {
    std::size_t num_heads = 5;
    long period = 20;           // iterations between weight snapshots per class
    std::size_t rank = 10;      // A: deviation columns retained
    std::size_t mc_samples = 10;  // R: Monte Carlo draws per prediction
    bool enabled = true;        // false: deterministic raw-weight inference
};

// Streaming first/second moments plus a FIFO of deviation columns for one
// classifier node (one class of one head). Deviations are taken against the
// mean as of their own snapshot.
struct SwagNodeStats {
    Tensor mean;
    Tensor sq_mean;
    std::deque<Tensor> deviations;  // newest at the back
    long snapshots = 0;
};

// Folds one weight snapshot into the running stats; the oldest deviation
// column is dropped once more than max_columns are held.
void swag_update(SwagNodeStats& stats, const Tensor& phi, std::size_t max_columns);

// Draws one weight vector from the half-diagonal, half-low-rank Gaussian
// around the snapshot mean. rank_a is the column capacity A; it fixes the
// low-rank normalization even while fewer columns are held.
Tensor swag_sample(const SwagNodeStats& stats, std::size_t rank_a, RngState& rng);

// Per-head, per-class snapshot statistics and the stochastic inference path.
// Classes never encountered fall back to the raw current weights.
class BscState {
public:
    BscState() = default;
    BscState(BscConfig cfg, std::size_t num_classes);

    const BscConfig& config() const { return cfg_; }
    std::size_t num_classes() const { return first_seen_.size(); }

    bool class_registered(int cls) const;
    long first_seen(int cls) const;  // -1 when never encountered

    // Records the first-encounter iteration and takes the initial snapshot.
    void register_class(int cls, long iteration, const BranchedHeads& heads);

    // Snapshots every class whose period elapsed; returns whether any mean
    // was updated this iteration.
    bool take_due_snapshots(long iteration, const BranchedHeads& heads);

    const SwagNodeStats& stats(std::size_t head, int cls) const;
    SwagNodeStats& stats_mut(std::size_t head, int cls);
    void restore_first_seen(int cls, long iteration);

    // Mean over R Monte Carlo softmax evaluations with per-class independent
    // weight draws; raw-weight softmax when disabled or nothing snapshotted.
    Tensor predict_branch(std::size_t head, const Tensor& feature, const BranchedHeads& heads,
                          RngState& rng) const;

    // Ensemble mean over heads plus the per-head predictions.
    std::pair<Tensor, std::vector<Tensor>> predict_ensemble(const Tensor& feature,
                                                            const BranchedHeads& heads,
                                                            RngState& rng) const;

private:
    BscConfig cfg_;
    std::vector<long> first_seen_;
    std::vector<std::vector<SwagNodeStats>> stats_;  // [head][class]
};

// Full inference path: encoder feature, then the head ensemble.
std::pair<Tensor, std::vector<Tensor>> predict_ensemble(const MlpModel& model, const BscState& bsc,
                                                        const Tensor& x, RngState& rng);

}  // namespace dpcl
