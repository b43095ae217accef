#include "dpcl/pfi.hpp"

#include <cmath>
#include <stdexcept>

#include "dpcl/math.hpp"

namespace dpcl {

namespace {

Tensor blend(const Tensor& a, const Tensor& b, double zeta) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = zeta * a[i] + (1.0 - zeta) * b[i];
    return out;
}

}  // namespace

ClassLossTracker::ClassLossTracker(double ema_coeff) : ema_coeff_(ema_coeff) {
    if (!(ema_coeff > 0.0) || ema_coeff > 1.0)
        throw std::invalid_argument("ClassLossTracker: ema coefficient must be in (0, 1]");
}

bool ClassLossTracker::register_first_seen(int label, long iteration) {
    auto [it, inserted] = records_.try_emplace(label);
    if (inserted) it->second.first_seen = iteration;
    return inserted;
}

bool ClassLossTracker::is_registered(int label) const {
    return records_.count(label) > 0;
}

long ClassLossTracker::first_seen_iteration(int label) const {
    auto it = records_.find(label);
    if (it == records_.end())
        throw std::invalid_argument("ClassLossTracker: unknown class");
    return it->second.first_seen;
}

bool ClassLossTracker::has_loss(int label) const {
    auto it = records_.find(label);
    return it != records_.end() && it->second.has_loss;
}

double ClassLossTracker::average_loss(int label) const {
    auto it = records_.find(label);
    if (it == records_.end())
        throw std::invalid_argument("ClassLossTracker: unknown class");
    return it->second.avg_loss;
}

void ClassLossTracker::update(int label, double loss) {
    if (!(loss >= 0.0))
        throw std::invalid_argument("ClassLossTracker::update: loss must be nonnegative");
    auto it = records_.find(label);
    if (it == records_.end())
        throw std::invalid_argument("ClassLossTracker::update: unknown class");
    Record& r = it->second;
    if (!r.has_loss) {
        r.avg_loss = loss;
        r.has_loss = true;
    } else {
        r.avg_loss = (1.0 - ema_coeff_) * r.avg_loss + ema_coeff_ * loss;
    }
}

std::vector<ClassLossTracker::Entry> ClassLossTracker::entries() const {
    std::vector<Entry> out;
    out.reserve(records_.size());
    for (const auto& [label, r] : records_)
        out.push_back({label, r.first_seen, r.avg_loss, r.has_loss});
    return out;
}

void ClassLossTracker::restore(const Entry& e) {
    records_[e.label] = {e.first_seen, e.avg_loss, e.has_loss};
}

std::pair<double, double> noise_scales(const PfiConfig& cfg, const ClassLossTracker& tracker,
                                       int label, long iteration) {
    if (!tracker.is_registered(label))
        throw std::invalid_argument("noise_scales: unknown class");
    // Full scale on the first-encounter iteration, and until a loss exists
    // for classes that entered a batch without ever being a dominant label.
    if (tracker.first_seen_iteration(label) == iteration || !tracker.has_loss(label))
        return {cfg.sigma_m, cfg.sigma_a};
    double squash = std::atan(tracker.average_loss(label));
    return {cfg.sigma_m * squash, cfg.sigma_a * squash};
}

Tensor perturb_features(const Tensor& f, double mu_m, double mu_a, const Tensor& xi_m,
                        const Tensor& xi_a) {
    if (!f.same_shape(xi_m) || !f.same_shape(xi_a))
        throw std::invalid_argument("perturb_features: shape mismatch");
    Tensor out(f.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 + mu_m * xi_m[i]) * f[i] + mu_a * xi_a[i];
    return out;
}

std::pair<Tensor, Tensor> mix_features(const Tensor& fa, const Tensor& fb, const Tensor& ya,
                                       const Tensor& yb, double zeta) {
    if (!fa.same_shape(fb)) throw std::invalid_argument("mix_features: feature shape mismatch");
    if (!ya.same_shape(yb)) throw std::invalid_argument("mix_features: label shape mismatch");
    if (!(zeta >= 0.0) || !(zeta <= 1.0))
        throw std::invalid_argument("mix_features: zeta must be in [0, 1]");
    if (zeta == 1.0) return {fa, ya};
    if (zeta == 0.0) return {fb, yb};
    return {blend(fa, fb, zeta), blend(ya, yb, zeta)};
}

MixedForwardPlan make_pfi_plan(const PfiConfig& cfg, ClassLossTracker& tracker,
                               const std::vector<BatchSample>& batch, const MlpEncoder& encoder,
                               std::size_t num_classes, RngState& rng, long iteration,
                               const PfiOverrides& overrides) {
    const std::size_t B = batch.size();
    if (B == 0) throw std::invalid_argument("make_pfi_plan: empty batch");
    for (const BatchSample& s : batch)
        tracker.register_first_seen(s.label, iteration);

    MixedForwardPlan plan;
    const std::size_t L = encoder.layer_count();
    if (overrides.split_layer) {
        if (*overrides.split_layer > L)
            throw std::invalid_argument("make_pfi_plan: forced split layer out of range");
        plan.split_layer = *overrides.split_layer;
    } else {
        RngState lr = rng.substream("layer");
        plan.split_layer = static_cast<std::size_t>(lr.next_below(L + 1));
    }

    plan.zeta.resize(B);
    if (overrides.zeta) {
        std::fill(plan.zeta.begin(), plan.zeta.end(), *overrides.zeta);
    } else if (cfg.force_zeta >= 0.0) {
        if (cfg.force_zeta > 1.0)
            throw std::invalid_argument("make_pfi_plan: forced zeta out of [0, 1]");
        std::fill(plan.zeta.begin(), plan.zeta.end(), cfg.force_zeta);
    } else if (cfg.per_sample_zeta) {
        for (std::size_t k = 0; k < B; ++k) {
            RngState zr = rng.substream("zeta", k);
            plan.zeta[k] = sample_beta(zr, cfg.alpha, cfg.beta);
        }
    } else {
        RngState zr = rng.substream("zeta");
        std::fill(plan.zeta.begin(), plan.zeta.end(), sample_beta(zr, cfg.alpha, cfg.beta));
    }

    if (overrides.partner) {
        if (overrides.partner->size() != B)
            throw std::invalid_argument("make_pfi_plan: forced partner list size mismatch");
        plan.partner = *overrides.partner;
    } else {
        RngState pr = rng.substream("perm");
        plan.partner = sample_permutation(pr, B);
    }

    const std::size_t width = encoder.width_after(plan.split_layer);
    plan.mu_m.resize(B);
    plan.mu_a.resize(B);
    plan.xi_m.resize(B);
    plan.xi_a.resize(B);
    for (std::size_t k = 0; k < B; ++k) {
        auto [mu_m, mu_a] = noise_scales(cfg, tracker, batch[k].label, iteration);
        plan.mu_m[k] = mu_m;
        plan.mu_a[k] = mu_a;
        if (mu_m == 0.0 && mu_a == 0.0) continue;  // noise-free sample, draw nothing
        if (overrides.noise) {
            if (overrides.noise->size() != B)
                throw std::invalid_argument("make_pfi_plan: forced noise list size mismatch");
            plan.xi_m[k] = (*overrides.noise)[k].first;
            plan.xi_a[k] = (*overrides.noise)[k].second;
        } else {
            RngState nr = rng.substream("noise", k);
            plan.xi_m[k] = sample_gaussian(nr, {width});
            plan.xi_a[k] = sample_gaussian(nr, {width});
        }
    }

    plan.mixed_labels.resize(B);
    for (std::size_t k = 0; k < B; ++k) {
        Tensor ya = one_hot(batch[k].label, num_classes);
        double z = plan.zeta[k];
        if (z == 1.0) {
            plan.mixed_labels[k] = std::move(ya);
        } else {
            Tensor yb = one_hot(batch[plan.partner[k]].label, num_classes);
            plan.mixed_labels[k] = blend(ya, yb, z);
        }
    }
    return plan;
}

ForwardTape pfi_batch(const MlpModel& model, const std::vector<BatchSample>& batch,
                      const PfiConfig& cfg, ClassLossTracker& tracker, std::size_t num_classes,
                      RngState& rng, long iteration, const PfiOverrides& overrides) {
    MixedForwardPlan plan =
        make_pfi_plan(cfg, tracker, batch, model.encoder, num_classes, rng, iteration, overrides);
    return mixed_forward(model, batch, plan);
}

}  // namespace dpcl
