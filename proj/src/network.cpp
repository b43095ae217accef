#include "dpcl/network.hpp"

#include <cmath>
#include <stdexcept>

#include "dpcl/math.hpp"
#include "dpcl/pfi.hpp"

namespace dpcl {

namespace {

Tensor he_uniform(std::size_t rows, std::size_t cols, RngState& rng) {
    double fan_in = static_cast<double>(cols > 0 ? cols : 1);
    double limit = std::sqrt(6.0 / fan_in);
    Tensor w({rows, cols});
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = (2.0 * rng.next_unit() - 1.0) * limit;
    return w;
}

Tensor apply_dense(const DenseLayer& layer, const Tensor& in) {
    const std::size_t rows = layer.w.rows();
    const std::size_t cols = layer.w.cols();
    if (in.size() != cols)
        throw std::invalid_argument("MlpEncoder: input width does not match layer");
    Tensor out({rows});
    const auto& w = layer.w.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = layer.b[r];
        const double* row = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) s += row[c] * in[c];
        out[r] = (layer.act == Activation::Relu && s < 0.0) ? 0.0 : s;
    }
    return out;
}

// Backprop through one dense layer: scales the incoming gradient by the
// activation derivative, accumulates parameter gradients, returns the
// gradient at the layer input. `post` is the recorded post-activation output.
Tensor dense_backward(const DenseLayer& layer, const Tensor& input, const Tensor& post,
                      const Tensor& gout, Tensor& gw, Tensor& gb) {
    const std::size_t rows = layer.w.rows();
    const std::size_t cols = layer.w.cols();
    Tensor gin({cols});
    const auto& w = layer.w.values();
    auto& gwv = gw.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double gz = gout[r];
        if (layer.act == Activation::Relu && post[r] <= 0.0) gz = 0.0;
        if (gz == 0.0) continue;
        gb[r] += gz;
        const double* row = w.data() + r * cols;
        double* grow = gwv.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            grow[c] += gz * input[c];
            gin[c] += row[c] * gz;
        }
    }
    return gin;
}

}  // namespace

MlpEncoder::MlpEncoder(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t feature_dim, RngState rng)
    : input_dim_(input_dim) {
    if (input_dim == 0 || feature_dim == 0)
        throw std::invalid_argument("MlpEncoder: zero width");
    std::vector<std::size_t> widths = hidden;
    widths.push_back(feature_dim);
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] == 0) throw std::invalid_argument("MlpEncoder: zero width");
        RngState lr = rng.substream("layer", i);
        DenseLayer layer;
        layer.w = he_uniform(widths[i], in, lr);
        layer.b = Tensor({widths[i]});
        layer.act = (i + 1 == widths.size()) ? Activation::Identity : Activation::Relu;
        layers_.push_back(std::move(layer));
        in = widths[i];
    }
}

std::size_t MlpEncoder::feature_dim() const {
    if (layers_.empty()) throw std::invalid_argument("MlpEncoder: empty model");
    return layers_.back().w.rows();
}

std::size_t MlpEncoder::width_after(std::size_t l) const {
    if (l > layers_.size()) throw std::invalid_argument("MlpEncoder: layer index out of range");
    return l == 0 ? input_dim_ : layers_[l - 1].w.rows();
}

Tensor MlpEncoder::forward_partial(const Tensor& x, std::size_t l) const {
    if (l > layers_.size()) throw std::invalid_argument("forward_partial: layer index out of range");
    if (x.size() != input_dim_) throw std::invalid_argument("forward_partial: input width mismatch");
    Tensor h = x;
    for (std::size_t i = 0; i < l; ++i) h = apply_dense(layers_[i], h);
    return h;
}

Tensor MlpEncoder::forward_from(const Tensor& f_l, std::size_t l) const {
    if (l > layers_.size()) throw std::invalid_argument("forward_from: layer index out of range");
    if (f_l.size() != width_after(l)) throw std::invalid_argument("forward_from: width mismatch");
    Tensor h = f_l;
    for (std::size_t i = l; i < layers_.size(); ++i) h = apply_dense(layers_[i], h);
    return h;
}

Tensor MlpEncoder::forward(const Tensor& x) const {
    return forward_from(x, 0);
}

BranchedHeads::BranchedHeads(std::size_t count, std::size_t feature_dim, std::size_t classes,
                             RngState rng)
    : feature_dim_(feature_dim), classes_(classes) {
    if (count == 0 || classes == 0)
        throw std::invalid_argument("BranchedHeads: need at least one head and one class");
    for (std::size_t n = 0; n < count; ++n) {
        RngState hr = rng.substream("head", n);
        LinearHead head;
        head.w = he_uniform(classes, feature_dim, hr);
        head.b = Tensor({classes});
        heads_.push_back(std::move(head));
    }
}

Tensor BranchedHeads::logits(std::size_t head, const Tensor& feature) const {
    if (head >= heads_.size()) throw std::invalid_argument("BranchedHeads: head out of range");
    if (feature.size() != feature_dim_)
        throw std::invalid_argument("BranchedHeads: feature width mismatch");
    const LinearHead& h = heads_[head];
    Tensor out({classes_});
    const auto& w = h.w.values();
    for (std::size_t c = 0; c < classes_; ++c) {
        double s = h.b[c];
        const double* row = w.data() + c * feature_dim_;
        for (std::size_t j = 0; j < feature_dim_; ++j) s += row[j] * feature[j];
        out[c] = s;
    }
    return out;
}

Tensor BranchedHeads::node_params(std::size_t head, std::size_t cls) const {
    if (head >= heads_.size() || cls >= classes_)
        throw std::invalid_argument("BranchedHeads: node out of range");
    const LinearHead& h = heads_[head];
    Tensor phi({feature_dim_ + 1});
    for (std::size_t j = 0; j < feature_dim_; ++j) phi[j] = h.w.at(cls, j);
    phi[feature_dim_] = h.b[cls];
    return phi;
}

void BranchedHeads::set_node_params(std::size_t head, std::size_t cls, const Tensor& phi) {
    if (head >= heads_.size() || cls >= classes_)
        throw std::invalid_argument("BranchedHeads: node out of range");
    if (phi.size() != feature_dim_ + 1)
        throw std::invalid_argument("BranchedHeads: parameter vector length mismatch");
    LinearHead& h = heads_[head];
    for (std::size_t j = 0; j < feature_dim_; ++j) h.w.at(cls, j) = phi[j];
    h.b[cls] = phi[feature_dim_];
}

std::vector<Tensor*> parameters(MlpModel& model) {
    std::vector<Tensor*> out;
    for (auto& layer : model.encoder.layers()) {
        out.push_back(&layer.w);
        out.push_back(&layer.b);
    }
    for (auto& head : model.heads.heads()) {
        out.push_back(&head.w);
        out.push_back(&head.b);
    }
    return out;
}

std::vector<const Tensor*> parameters(const MlpModel& model) {
    std::vector<const Tensor*> out;
    for (const auto& layer : model.encoder.layers()) {
        out.push_back(&layer.w);
        out.push_back(&layer.b);
    }
    for (const auto& head : model.heads.heads()) {
        out.push_back(&head.w);
        out.push_back(&head.b);
    }
    return out;
}

double soft_cross_entropy(const Tensor& logits, const Tensor& soft_label) {
    if (!logits.same_shape(soft_label))
        throw std::invalid_argument("soft_cross_entropy: shape mismatch");
    double sum = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < soft_label.size(); ++i) {
        if (!(soft_label[i] >= 0.0))
            throw std::invalid_argument("soft_cross_entropy: negative label entry");
        sum += soft_label[i];
        dot += soft_label[i] * logits[i];
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("soft_cross_entropy: label is not a distribution");
    return log_sum_exp(logits) - dot;
}

ForwardTape mixed_forward(const MlpModel& model, const std::vector<BatchSample>& batch,
                          const MixedForwardPlan& plan) {
    const std::size_t B = batch.size();
    const std::size_t L = model.encoder.layer_count();
    if (B == 0) throw std::invalid_argument("mixed_forward: empty batch");
    if (plan.split_layer > L) throw std::invalid_argument("mixed_forward: split layer out of range");
    if (plan.zeta.size() != B || plan.partner.size() != B || plan.mu_m.size() != B ||
        plan.mu_a.size() != B || plan.xi_m.size() != B || plan.xi_a.size() != B ||
        plan.mixed_labels.size() != B)
        throw std::invalid_argument("mixed_forward: plan does not match batch size");

    const std::size_t l = plan.split_layer;
    ForwardTape tape;
    tape.split_layer = l;
    tape.zeta = plan.zeta;
    tape.partner = plan.partner;
    tape.mixed_labels = plan.mixed_labels;

    // Prefix activations and per-sample perturbation.
    std::vector<Tensor> perturbed(B);
    tape.prefix.resize(B);
    tape.mult_mask.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
        auto& fs = tape.prefix[i];
        fs.reserve(l + 1);
        fs.push_back(batch[i].x);
        for (std::size_t j = 0; j < l; ++j)
            fs.push_back(apply_dense(model.encoder.layers()[j], fs.back()));
        if (plan.mu_m[i] == 0.0 && plan.mu_a[i] == 0.0) {
            perturbed[i] = fs.back();
        } else {
            perturbed[i] =
                perturb_features(fs.back(), plan.mu_m[i], plan.mu_a[i], plan.xi_m[i], plan.xi_a[i]);
            Tensor mask(plan.xi_m[i].shape());
            for (std::size_t j = 0; j < mask.size(); ++j)
                mask[j] = 1.0 + plan.mu_m[i] * plan.xi_m[i][j];
            tape.mult_mask[i] = std::move(mask);
        }
    }

    // Convex mixing, then suffix layers and heads per slot.
    tape.mixed.resize(B);
    tape.suffix.resize(B);
    tape.feature.resize(B);
    tape.head_logits.resize(B);
    const std::size_t N = model.heads.count();
    for (std::size_t k = 0; k < B; ++k) {
        double z = plan.zeta[k];
        if (z == 1.0) {
            tape.mixed[k] = perturbed[k];
        } else {
            std::size_t p = plan.partner[k];
            if (p >= B) throw std::invalid_argument("mixed_forward: partner index out of range");
            const Tensor& fa = perturbed[k];
            const Tensor& fb = perturbed[p];
            Tensor m(fa.shape());
            for (std::size_t j = 0; j < m.size(); ++j) m[j] = z * fa[j] + (1.0 - z) * fb[j];
            tape.mixed[k] = std::move(m);
        }
        auto& fs = tape.suffix[k];
        fs.reserve(L - l);
        const Tensor* cur = &tape.mixed[k];
        for (std::size_t j = l; j < L; ++j) {
            fs.push_back(apply_dense(model.encoder.layers()[j], *cur));
            cur = &fs.back();
        }
        tape.feature[k] = *cur;
        tape.head_logits[k].reserve(N);
        for (std::size_t n = 0; n < N; ++n)
            tape.head_logits[k].push_back(model.heads.logits(n, tape.feature[k]));
    }
    return tape;
}

double batch_loss(const ForwardTape& tape) {
    if (tape.head_logits.empty()) throw std::invalid_argument("batch_loss: no recorded forward");
    double total = 0.0;
    for (std::size_t k = 0; k < tape.head_logits.size(); ++k) {
        double slot = 0.0;
        for (const Tensor& logits : tape.head_logits[k])
            slot += soft_cross_entropy(logits, tape.mixed_labels[k]);
        total += slot / static_cast<double>(tape.head_logits[k].size());
    }
    return total / static_cast<double>(tape.head_logits.size());
}

ModelGrads backward(const MlpModel& model, const ForwardTape& tape) {
    if (tape.prefix.empty()) throw std::invalid_argument("backward: no recorded forward");
    const std::size_t B = tape.prefix.size();
    const std::size_t L = model.encoder.layer_count();
    const std::size_t N = model.heads.count();
    const std::size_t l = tape.split_layer;
    const double scale = 1.0 / static_cast<double>(B * N);

    ModelGrads grads;
    auto params = parameters(const_cast<MlpModel&>(model));
    grads.tensors.reserve(params.size());
    for (Tensor* p : params) grads.tensors.emplace_back(p->shape());
    // Layout mirrors parameters(): encoder (w,b) pairs, then head (w,b) pairs.
    auto enc_gw = [&](std::size_t i) -> Tensor& { return grads.tensors[2 * i]; };
    auto enc_gb = [&](std::size_t i) -> Tensor& { return grads.tensors[2 * i + 1]; };
    auto head_gw = [&](std::size_t n) -> Tensor& { return grads.tensors[2 * L + 2 * n]; };
    auto head_gb = [&](std::size_t n) -> Tensor& { return grads.tensors[2 * L + 2 * n + 1]; };

    std::vector<Tensor> gpre(B);
    const std::size_t mix_width = model.encoder.width_after(l);
    for (std::size_t i = 0; i < B; ++i) gpre[i] = Tensor({mix_width});

    const std::size_t q = model.heads.feature_dim();
    for (std::size_t k = 0; k < B; ++k) {
        // Heads: dL/dlogits = (softmax - target) / (B*N).
        Tensor gfeat({q});
        for (std::size_t n = 0; n < N; ++n) {
            Tensor p = softmax(tape.head_logits[k][n]);
            const LinearHead& head = model.heads.heads()[n];
            auto& gw = head_gw(n).values();
            for (std::size_t c = 0; c < p.size(); ++c) {
                double delta = (p[c] - tape.mixed_labels[k][c]) * scale;
                if (delta == 0.0) continue;
                head_gb(n)[c] += delta;
                const double* row = head.w.values().data() + c * q;
                double* grow = gw.data() + c * q;
                for (std::size_t j = 0; j < q; ++j) {
                    grow[j] += delta * tape.feature[k][j];
                    gfeat[j] += row[j] * delta;
                }
            }
        }

        // Suffix layers back to the mixed feature.
        Tensor g = std::move(gfeat);
        for (std::size_t i = L; i-- > l;) {
            const Tensor& input = (i == l) ? tape.mixed[k] : tape.suffix[k][i - l - 1];
            const Tensor& post = tape.suffix[k][i - l];
            g = dense_backward(model.encoder.layers()[i], input, post, g, enc_gw(i), enc_gb(i));
        }

        // Route through the mixing weights and perturbation masks into each
        // contributing sample's prefix gradient.
        double z = tape.zeta[k];
        auto route = [&](std::size_t sample, double weight) {
            if (weight == 0.0) return;
            Tensor& acc = gpre[sample];
            const Tensor& mask = tape.mult_mask[sample];
            if (mask.size() == 0) {
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * g[j];
            } else {
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * mask[j] * g[j];
            }
        };
        route(k, z);
        if (z != 1.0) route(tape.partner[k], 1.0 - z);
    }

    // Prefix layers per sample.
    if (l > 0) {
        for (std::size_t i = 0; i < B; ++i) {
            Tensor g = std::move(gpre[i]);
            for (std::size_t j = l; j-- > 0;) {
                const Tensor& input = tape.prefix[i][j];
                const Tensor& post = tape.prefix[i][j + 1];
                g = dense_backward(model.encoder.layers()[j], input, post, g, enc_gw(j), enc_gb(j));
            }
        }
    }
    return grads;
}

AdamState::AdamState(const std::vector<Tensor*>& params, AdamConfig cfg, double learning_rate)
    : cfg_(cfg), lr_(learning_rate) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamState::step(const std::vector<Tensor*>& params, const ModelGrads& grads) {
    if (params.size() != m_.size() || grads.tensors.size() != m_.size())
        throw std::invalid_argument("AdamState::step: parameter list mismatch");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads.tensors[i];
        if (!p.same_shape(g)) throw std::invalid_argument("AdamState::step: gradient shape mismatch");
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace dpcl
