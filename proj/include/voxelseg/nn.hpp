#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "voxelseg/tensor.hpp"

namespace voxelseg {

enum class Activation { Linear, Logistic, Tanh, Relu, Softmax };

struct ActivationSpec {
    Activation kind = Activation::Linear;
    double steepness = 1.0;   // logistic k
    double midpoint = 0.0;    // logistic x0
};

double activate_scalar(const ActivationSpec& act, double x);
double activate_grad_scalar(const ActivationSpec& act, double x);

/// Elementwise activation; Softmax normalizes over the whole tensor.
Tensor activate(const ActivationSpec& act, const Tensor& x);
/// Elementwise derivative at pre-activation x. Not defined for Softmax
/// (handled via its Jacobian in backward).
Tensor activate_grad(const ActivationSpec& act, const Tensor& x);

/// Single-node reference: act(w . x + b). Used by tests as an oracle.
double node_output(const std::vector<double>& weights, const std::vector<double>& inputs,
                   double bias, const ActivationSpec& act);

struct LayerSpec;

struct DenseSpec { int in = 0; int out = 0; ActivationSpec act; };
struct Conv2DSpec { int in_ch = 0; int out_maps = 0; int kh = 0; int kw = 0; ActivationSpec act; };
struct Conv3DSpec { int in_ch = 0; int out_maps = 0; int kd = 0; int kh = 0; int kw = 0; ActivationSpec act; };
struct MaxPool2DSpec { int ph = 0; int pw = 0; };
struct DropoutSpec { double rate = 0.5; };
struct FlattenSpec {};
/// Independent towers over disjoint inputs, outputs flattened and
/// concatenated in branch order.
struct ParallelSpec { std::vector<std::vector<LayerSpec>> branches; };

struct LayerSpec {
    std::variant<DenseSpec, Conv2DSpec, Conv3DSpec, MaxPool2DSpec,
                 DropoutSpec, FlattenSpec, ParallelSpec> v;
};

enum class LossKind { Mse, CrossEntropySoftmax };

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    LossKind loss = LossKind::CrossEntropySoftmax;
};

/// Parameter layout: traversal order of weighted layers (Parallel branches
/// in branch order at their position); per layer, weights then biases.
struct ParamSlot {
    const LayerSpec* layer;
    int offset;
    int weight_count;   // weights only; biases follow at offset + weight_count
    int bias_count;
    int fan_in;
    ActivationSpec act;
};

int param_count(const NetworkSpec& spec);
std::vector<ParamSlot> param_slots(const NetworkSpec& spec);

/// Validates layer composition for the given input shapes and returns the
/// output shape. Throws naming the offending layer index.
std::vector<int> infer_output_shape(const NetworkSpec& spec,
                                    const std::vector<std::vector<int>>& input_shapes);

struct LayerTape {
    Tensor input;                 // layer input (post previous activation)
    Tensor preact;                // z before activation (weighted layers)
    Tensor mask;                  // dropout mask
    std::vector<int> argmax;      // maxpool
    std::vector<std::vector<LayerTape>> branch_tapes;
    std::vector<int> branch_out_sizes;
};

struct Tape {
    std::vector<LayerTape> layers;
    Tensor output;
    bool train = false;
};

/// Runs the network. `inputs` has one tensor per Parallel branch when the
/// first layer is Parallel, otherwise exactly one tensor. In train mode a
/// Dropout layer draws its mask from `rng`; in infer mode Dropout is a
/// pass-through and `rng` may be null.
Tensor forward(const NetworkSpec& spec, const std::vector<double>& params,
               const std::vector<Tensor>& inputs, bool train,
               std::mt19937_64* rng, Tape* tape = nullptr);

/// Reverse-mode gradient of the loss with respect to every parameter.
/// `out_grad` is dL/dy at the network output, unless
/// `grad_at_preactivation` is set, in which case it is dL/dz of the final
/// weighted layer (the fused softmax + cross-entropy path).
std::vector<double> backward(const NetworkSpec& spec, const std::vector<double>& params,
                             const Tape& tape, const Tensor& out_grad,
                             bool grad_at_preactivation = false);

double loss_value(LossKind kind, const Tensor& output, const Tensor& target);
double loss_value_class(LossKind kind, const Tensor& output, int target_class);
/// dL/dy for Mse. For CrossEntropySoftmax use ce_softmax_preact_grad.
Tensor mse_grad(const Tensor& output, const Tensor& target);
/// (p - onehot): gradient at the pre-softmax activations.
Tensor ce_softmax_preact_grad(const Tensor& probs, int target_class);

Tensor dropout_mask(double rate, const std::vector<int>& shape, std::mt19937_64& rng);

/// Multiplies the outgoing weights of every layer fed by a Dropout layer
/// by (1 - rate) so infer-mode forward matches the train-time expectation.
std::vector<double> scale_weights_for_inference(const NetworkSpec& spec,
                                                const std::vector<double>& params);

// --- model file ("VSEGNET1") ------------------------------------------------

struct ModelMeta {
    std::string format;          // "stacked2d" | "triplanar" | "3d" | ""
    int patch_size = 0;
    int stack = 0;
    bool standardize = true;
    int min_blob = 500;
};

void save_model(const std::string& path, const NetworkSpec& spec,
                const std::vector<double>& params, const ModelMeta& meta);

struct LoadedModel {
    NetworkSpec spec;
    std::vector<double> params;
    ModelMeta meta;
};

LoadedModel load_model(const std::string& path);

} // namespace voxelseg
