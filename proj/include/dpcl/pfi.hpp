#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "dpcl/network.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/tensor.hpp"

namespace dpcl {

// Perturbed feature interpolation: loss-scaled elementwise noise on a random
// intermediate representation plus convex mixing across a random batch
// permutation.
struct PfiConfig {
    double sigma_m = 0.2;  // multiplicative noise scale
    double sigma_a = 0.4;  // additive noise scale
    double alpha = 1.0;    // Beta parameters for the mixing weight
    double beta = 1.0;
    double ema_coeff = 0.1;        // rho for the per-class loss average
    bool per_sample_zeta = false;  // draw one zeta per slot instead of per batch
    double force_zeta = -1.0;      // in [0,1] pins zeta; negative samples Beta
};

// Per-class loss EMA plus first-encounter iterations. The loss average drives
// how hard a class's features get perturbed; a fresh class gets full scale.
class ClassLossTracker {
public:
    ClassLossTracker() = default;
    explicit ClassLossTracker(double ema_coeff);

    double ema_coeff() const { return ema_coeff_; }

    // Records the first-encounter iteration; returns false if already known.
    bool register_first_seen(int label, long iteration);
    bool is_registered(int label) const;
    long first_seen_iteration(int label) const;
    bool has_loss(int label) const;
    double average_loss(int label) const;

    // EMA update; the first recorded loss initializes the average outright.
    void update(int label, double loss);

    struct Entry {
        int label = 0;
        long first_seen = 0;
        double avg_loss = 0.0;
        bool has_loss = false;
    };
    std::vector<Entry> entries() const;  // ordered by label
    void restore(const Entry& e);

private:
    struct Record {
        long first_seen = 0;
        double avg_loss = 0.0;
        bool has_loss = false;
    };
    double ema_coeff_ = 0.1;
    std::map<int, Record> records_;
};

// Noise scales (mu_m, mu_a) for one sample: full (sigma_m, sigma_a) on the
// first-encounter iteration, arctan-squashed loss scaling afterwards.
std::pair<double, double> noise_scales(const PfiConfig& cfg, const ClassLossTracker& tracker,
                                       int label, long iteration);

// (1 + mu_m * xi_m) * f + mu_a * xi_a, elementwise.
Tensor perturb_features(const Tensor& f, double mu_m, double mu_a, const Tensor& xi_m,
                        const Tensor& xi_a);

// Convex combination of two feature/label pairs; zeta in [0,1]. The endpoints
// return the corresponding pair exactly.
std::pair<Tensor, Tensor> mix_features(const Tensor& fa, const Tensor& fb, const Tensor& ya,
                                       const Tensor& yb, double zeta);

// Test hooks: any stochastic choice can be pinned.
struct PfiOverrides {
    std::optional<std::size_t> split_layer;
    std::optional<double> zeta;
    std::optional<std::vector<std::size_t>> partner;
    std::optional<std::vector<std::pair<Tensor, Tensor>>> noise;  // (xi_m, xi_a) per sample
};

// Draws the stochastic inputs for one batch: split layer uniform over 0..L,
// one Beta mixing weight (or one per slot), a uniform partner permutation and
// per-sample Gaussian noise, with scales from the class-loss tracker. New
// labels in the batch are registered at `iteration`.
MixedForwardPlan make_pfi_plan(const PfiConfig& cfg, ClassLossTracker& tracker,
                               const std::vector<BatchSample>& batch, const MlpEncoder& encoder,
                               std::size_t num_classes, RngState& rng, long iteration,
                               const PfiOverrides& overrides = {});

// Plan plus execution: perturb, mix, and push through suffix and all heads.
ForwardTape pfi_batch(const MlpModel& model, const std::vector<BatchSample>& batch,
                      const PfiConfig& cfg, ClassLossTracker& tracker, std::size_t num_classes,
                      RngState& rng, long iteration, const PfiOverrides& overrides = {});

}  // namespace dpcl
