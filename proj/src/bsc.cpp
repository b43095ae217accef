#include "dpcl/bsc.hpp"

#include <cmath>
#include <stdexcept>

#include "dpcl/math.hpp"

namespace dpcl {

void swag_update(SwagNodeStats& stats, const Tensor& phi, std::size_t max_columns) {
    if (max_columns == 0) throw std::invalid_argument("swag_update: max_columns must be positive");
    const long k = stats.snapshots;
    if (k == 0) {
        stats.mean = phi;
        stats.sq_mean = Tensor(phi.shape());
        for (std::size_t i = 0; i < phi.size(); ++i) stats.sq_mean[i] = phi[i] * phi[i];
    } else {
        if (!stats.mean.same_shape(phi))
            throw std::invalid_argument("swag_update: snapshot shape mismatch");
        const double kk = static_cast<double>(k);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            stats.mean[i] = (kk * stats.mean[i] + phi[i]) / (kk + 1.0);
            stats.sq_mean[i] = (kk * stats.sq_mean[i] + phi[i] * phi[i]) / (kk + 1.0);
        }
    }
    Tensor dev(phi.shape());
    for (std::size_t i = 0; i < phi.size(); ++i) dev[i] = phi[i] - stats.mean[i];
    stats.deviations.push_back(std::move(dev));
    if (stats.deviations.size() > max_columns) stats.deviations.pop_front();
    stats.snapshots = k + 1;
}

Tensor swag_sample(const SwagNodeStats& stats, std::size_t rank_a, RngState& rng) {
    if (stats.snapshots == 0)
        throw std::invalid_argument("swag_sample: no snapshots recorded");
    const std::size_t n = stats.mean.size();
    Tensor out = stats.mean;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < n; ++i) {
        double var = stats.sq_mean[i] - stats.mean[i] * stats.mean[i];
        if (var < 0.0) var = 0.0;  // clamp rounding residue
        out[i] += inv_sqrt2 * std::sqrt(var) * rng.next_gaussian();
    }
    if (!stats.deviations.empty() && rank_a >= 2) {
        const double norm = 1.0 / std::sqrt(2.0 * static_cast<double>(rank_a - 1));
        for (const Tensor& col : stats.deviations) {
            double z = rng.next_gaussian() * norm;
            for (std::size_t i = 0; i < n; ++i) out[i] += col[i] * z;
        }
    }
    return out;
}

BscState::BscState(BscConfig cfg, std::size_t num_classes) : cfg_(cfg) {
    if (cfg.num_heads == 0) throw std::invalid_argument("BscState: need at least one head");
    if (cfg.period <= 0) throw std::invalid_argument("BscState: period must be positive");
    if (cfg.rank < 2) throw std::invalid_argument("BscState: rank must be at least 2");
    if (cfg.mc_samples == 0) throw std::invalid_argument("BscState: need at least one MC sample");
    first_seen_.assign(num_classes, -1);
    stats_.assign(cfg.num_heads, std::vector<SwagNodeStats>(num_classes));
}

bool BscState::class_registered(int cls) const {
    return cls >= 0 && static_cast<std::size_t>(cls) < first_seen_.size() &&
           first_seen_[static_cast<std::size_t>(cls)] >= 0;
}

long BscState::first_seen(int cls) const {
    if (cls < 0 || static_cast<std::size_t>(cls) >= first_seen_.size())
        throw std::invalid_argument("BscState: class out of range");
    return first_seen_[static_cast<std::size_t>(cls)];
}

void BscState::register_class(int cls, long iteration, const BranchedHeads& heads) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= first_seen_.size())
        throw std::invalid_argument("BscState: class out of range");
    if (first_seen_[static_cast<std::size_t>(cls)] >= 0)
        throw std::invalid_argument("BscState: class already registered");
    first_seen_[static_cast<std::size_t>(cls)] = iteration;
    for (std::size_t h = 0; h < stats_.size(); ++h)
        swag_update(stats_[h][static_cast<std::size_t>(cls)],
                    heads.node_params(h, static_cast<std::size_t>(cls)), cfg_.rank);
}

bool BscState::take_due_snapshots(long iteration, const BranchedHeads& heads) {
    bool any = false;
    for (std::size_t cls = 0; cls < first_seen_.size(); ++cls) {
        long t0 = first_seen_[cls];
        if (t0 < 0 || iteration <= t0) continue;
        if ((iteration - t0) % cfg_.period != 0) continue;
        for (std::size_t h = 0; h < stats_.size(); ++h)
            swag_update(stats_[h][cls], heads.node_params(h, cls), cfg_.rank);
        any = true;
    }
    return any;
}

const SwagNodeStats& BscState::stats(std::size_t head, int cls) const {
    if (head >= stats_.size() || cls < 0 || static_cast<std::size_t>(cls) >= first_seen_.size())
        throw std::invalid_argument("BscState: node out of range");
    return stats_[head][static_cast<std::size_t>(cls)];
}

SwagNodeStats& BscState::stats_mut(std::size_t head, int cls) {
    if (head >= stats_.size() || cls < 0 || static_cast<std::size_t>(cls) >= first_seen_.size())
        throw std::invalid_argument("BscState: node out of range");
    return stats_[head][static_cast<std::size_t>(cls)];
}

void BscState::restore_first_seen(int cls, long iteration) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= first_seen_.size())
        throw std::invalid_argument("BscState: class out of range");
    first_seen_[static_cast<std::size_t>(cls)] = iteration;
}

Tensor BscState::predict_branch(std::size_t head, const Tensor& feature,
                                const BranchedHeads& heads, RngState& rng) const {
    if (head >= stats_.size()) throw std::invalid_argument("predict_branch: head out of range");
    if (!cfg_.enabled) return softmax(heads.logits(head, feature));

    const std::size_t C = first_seen_.size();
    const std::size_t q = heads.feature_dim();
    Tensor acc({C});
    Tensor logits({C});
    for (std::size_t r = 0; r < cfg_.mc_samples; ++r) {
        for (std::size_t cls = 0; cls < C; ++cls) {
            const SwagNodeStats& st = stats_[head][cls];
            if (st.snapshots > 0) {
                Tensor phi = swag_sample(st, cfg_.rank, rng);
                double s = phi[q];
                for (std::size_t j = 0; j < q; ++j) s += phi[j] * feature[j];
                logits[cls] = s;
            } else {
                // Cold start: this class has no snapshots yet.
                const LinearHead& hd = heads.heads()[head];
                double s = hd.b[cls];
                const double* row = hd.w.values().data() + cls * q;
                for (std::size_t j = 0; j < q; ++j) s += row[j] * feature[j];
                logits[cls] = s;
            }
        }
        Tensor p = softmax(logits);
        for (std::size_t c = 0; c < C; ++c) acc[c] += p[c];
    }
    for (std::size_t c = 0; c < C; ++c) acc[c] /= static_cast<double>(cfg_.mc_samples);
    return acc;
}

std::pair<Tensor, std::vector<Tensor>> BscState::predict_ensemble(const Tensor& feature,
                                                                  const BranchedHeads& heads,
                                                                  RngState& rng) const {
    const std::size_t N = stats_.size();
    std::vector<Tensor> branch_ps;
    branch_ps.reserve(N);
    for (std::size_t n = 0; n < N; ++n) {
        RngState hr = rng.substream("branch", n);
        branch_ps.push_back(predict_branch(n, feature, heads, hr));
    }
    Tensor mean(branch_ps[0].shape());
    for (const Tensor& p : branch_ps)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] /= static_cast<double>(N);
    return {std::move(mean), std::move(branch_ps)};
}

std::pair<Tensor, std::vector<Tensor>> predict_ensemble(const MlpModel& model, const BscState& bsc,
                                                        const Tensor& x, RngState& rng) {
    Tensor feature = model.encoder.forward(x);
    return bsc.predict_ensemble(feature, model.heads, rng);
}

}  // namespace dpcl
