#pragma once

#include <cstddef>
#include <vector>

#include "dpcl/rng.hpp"
#include "dpcl/tensor.hpp"

namespace dpcl {

enum class Activation { Relu, Identity };

struct DenseLayer {
    Tensor w;  // out x in
    Tensor b;  // out
    Activation act = Activation::Relu;
};

// Small fully connected encoder: ReLU hidden layers, identity feature layer.
// Layers are numbered 1..L; f^0 is the raw input and f^L the feature vector,
// so forward_partial(x, l) followed by forward_from(., l) is the full forward
// pass for any split point l, executed as the exact same sequence of float
// operations.
class MlpEncoder {
public:
    MlpEncoder() = default;
    MlpEncoder(std::size_t input_dim, const std::vector<std::size_t>& hidden,
               std::size_t feature_dim, RngState rng);

    std::size_t layer_count() const { return layers_.size(); }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t feature_dim() const;
    std::size_t width_after(std::size_t l) const;  // width of f^l, l in 0..L

    Tensor forward_partial(const Tensor& x, std::size_t l) const;
    Tensor forward_from(const Tensor& f_l, std::size_t l) const;
    Tensor forward(const Tensor& x) const;

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

private:
    std::size_t input_dim_ = 0;
    std::vector<DenseLayer> layers_;
};

struct LinearHead {
    Tensor w;  // classes x feature_dim
    Tensor b;  // classes
};

// N independently initialized linear classifier heads over the shared feature.
class BranchedHeads {
public:
    BranchedHeads() = default;
    BranchedHeads(std::size_t count, std::size_t feature_dim, std::size_t classes, RngState rng);

    std::size_t count() const { return heads_.size(); }
    std::size_t classes() const { return classes_; }
    std::size_t feature_dim() const { return feature_dim_; }

    Tensor logits(std::size_t head, const Tensor& feature) const;

    // Per-class parameter vector [w_row..., bias], length feature_dim + 1.
    Tensor node_params(std::size_t head, std::size_t cls) const;
    void set_node_params(std::size_t head, std::size_t cls, const Tensor& phi);

    std::vector<LinearHead>& heads() { return heads_; }
    const std::vector<LinearHead>& heads() const { return heads_; }

private:
    std::size_t feature_dim_ = 0;
    std::size_t classes_ = 0;
    std::vector<LinearHead> heads_;
};

struct MlpModel {
    MlpEncoder encoder;
    BranchedHeads heads;
};

// Flat parameter view in a fixed order (encoder layers w,b then heads w,b);
// gradient containers and the optimizer state align with this order.
std::vector<Tensor*> parameters(MlpModel& model);
std::vector<const Tensor*> parameters(const MlpModel& model);

struct ModelGrads {
    std::vector<Tensor> tensors;
};

// Cross entropy of a soft target against logits, computed via log-sum-exp.
double soft_cross_entropy(const Tensor& logits, const Tensor& soft_label);

struct BatchSample {
    Tensor x;
    int label = -1;
    int memory_slot = -1;  // >= 0 when drawn from replay memory
};

// Stochastic choices for one perturbed-and-mixed forward pass. Every random
// input lives here so tests can pin any of them; the forward/backward code is
// purely deterministic given a plan.
struct MixedForwardPlan {
    std::size_t split_layer = 0;         // l in 0..L
    std::vector<double> zeta;            // per slot; 1.0 disables mixing for the slot
    std::vector<std::size_t> partner;    // s_i, indices into the batch
    std::vector<double> mu_m, mu_a;      // per-sample noise scales
    std::vector<Tensor> xi_m, xi_a;      // per-sample draws; empty when both scales are 0
    std::vector<Tensor> mixed_labels;    // soft target per slot
};

// Activations recorded by mixed_forward, consumed by backward().
struct ForwardTape {
    std::size_t split_layer = 0;
    std::vector<double> zeta;
    std::vector<std::size_t> partner;
    std::vector<std::vector<Tensor>> prefix;  // per sample: f^0..f^l (post-activation)
    std::vector<Tensor> mult_mask;            // 1 + mu_m*xi_m per sample; empty when no noise
    std::vector<Tensor> mixed;                // f~^l per slot
    std::vector<std::vector<Tensor>> suffix;  // per slot: f^{l+1}..f^L
    std::vector<Tensor> feature;              // f^L per slot
    std::vector<std::vector<Tensor>> head_logits;  // [slot][head]
    std::vector<Tensor> mixed_labels;
};

// Runs the batch through the encoder with elementwise perturbation and convex
// feature mixing injected after layer plan.split_layer, then through all heads.
ForwardTape mixed_forward(const MlpModel& model, const std::vector<BatchSample>& batch,
                          const MixedForwardPlan& plan);

// Mean over batch slots of the head-averaged soft cross entropy.
double batch_loss(const ForwardTape& tape);

// Gradients of batch_loss with respect to every parameter. The perturbation
// masks and mixing weights are constants; gradients flow through both the
// suffix and, via the mixing partners, each sample's prefix.
ModelGrads backward(const MlpModel& model, const ForwardTape& tape);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction; moment tensors align with parameters(model).
class AdamState {
public:
    AdamState() = default;
    AdamState(const std::vector<Tensor*>& params, AdamConfig cfg, double learning_rate);

    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }
    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    void step(const std::vector<Tensor*>& params, const ModelGrads& grads);

    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(long step) { step_ = step; }

private:
    AdamConfig cfg_;
    double lr_ = 0.0;
    long step_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace dpcl
