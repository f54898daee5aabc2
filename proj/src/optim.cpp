#include "voxelseg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace voxelseg {

void OptimConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
    if (!(eta_plus > 1.0 && 1.0 > eta_minus && eta_minus > 0.0))
        throw std::invalid_argument("rprop requires eta+ > 1 > eta- > 0");
    if (!(delta_min <= delta0 && delta0 <= delta_max))
        throw std::invalid_argument("rprop requires delta_min <= delta0 <= delta_max");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
}

OptimState OptimState::init(const OptimConfig& cfg, size_t n) {
    OptimState s;
    if (cfg.algorithm == OptimAlgo::SgdMomentum) s.velocity.assign(n, 0.0);
    if (cfg.algorithm == OptimAlgo::Rprop) {
        s.step_size.assign(n, cfg.delta0);
        s.prev_sign.assign(n, 0);
    }
    return s;
}

static double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

std::vector<double> init_params(const NetworkSpec& spec, uint64_t seed) {
    std::vector<double> params(static_cast<size_t>(param_count(spec)), 0.0);
    std::mt19937_64 rng(seed);
    for (const auto& slot : param_slots(spec)) {
        const double a = slot.act.kind == Activation::Relu ? std::sqrt(2.0) : 1.0;
        const double bound = a / std::sqrt(static_cast<double>(slot.fan_in));
        for (int i = 0; i < slot.weight_count; ++i)
            params[static_cast<size_t>(slot.offset + i)] = (2.0 * unit_uniform(rng) - 1.0) * bound;
        // biases stay 0
    }
    return params;
}

std::vector<uint8_t> bias_mask(const NetworkSpec& spec) {
    std::vector<uint8_t> mask(static_cast<size_t>(param_count(spec)), 0);
    for (const auto& slot : param_slots(spec))
        for (int i = 0; i < slot.bias_count; ++i)
            mask[static_cast<size_t>(slot.offset + slot.weight_count + i)] = 1;
    return mask;
}

double reg_penalty(RegKind reg, double lambda, const std::vector<double>& params,
                   const std::vector<uint8_t>& bias) {
    if (reg == RegKind::None) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        if (bias[i]) continue;
        acc += reg == RegKind::L2 ? params[i] * params[i] : std::abs(params[i]);
    }
    return lambda * acc;
}

void add_reg_grad(RegKind reg, double lambda, const std::vector<double>& params,
                  const std::vector<uint8_t>& bias, std::vector<double>& grad) {
    if (reg == RegKind::None) return;
    for (size_t i = 0; i < params.size(); ++i) {
        if (bias[i]) continue;
        if (reg == RegKind::L2) {
            grad[i] += 2.0 * lambda * params[i];
        } else {
            if (params[i] > 0.0) grad[i] += lambda;
            else if (params[i] < 0.0) grad[i] -= lambda;
            // sign(0) = 0
        }
    }
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              const OptimConfig& cfg, OptimState& state) {
    if (grad.size() != params.size()) throw std::invalid_argument("gradient length mismatch");
    if (cfg.algorithm == OptimAlgo::SgdMomentum) {
        for (size_t i = 0; i < params.size(); ++i) {
            state.velocity[i] = cfg.momentum * state.velocity[i] - cfg.learning_rate * grad[i];
            params[i] += state.velocity[i];
        }
    } else {
        for (size_t i = 0; i < params.size(); ++i)
            params[i] -= cfg.learning_rate * grad[i];
    }
}

void rprop_step(std::vector<double>& params, const std::vector<double>& grad,
                const OptimConfig& cfg, OptimState& state) {
    if (grad.size() != params.size()) throw std::invalid_argument("gradient length mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const int sign = grad[i] > 0.0 ? 1 : (grad[i] < 0.0 ? -1 : 0);
        const int prod = sign * state.prev_sign[i];
        if (prod > 0) {
            state.step_size[i] = std::min(state.step_size[i] * cfg.eta_plus, cfg.delta_max);
            params[i] -= sign * state.step_size[i];
            state.prev_sign[i] = static_cast<int8_t>(sign);
        } else if (prod < 0) {
            state.step_size[i] = std::max(state.step_size[i] * cfg.eta_minus, cfg.delta_min);
            state.prev_sign[i] = 0;  // gradient treated as zero for the sign memory
        } else {
            params[i] -= sign * state.step_size[i];
            state.prev_sign[i] = static_cast<int8_t>(sign);
        }
    }
}

// Signature of every non-smooth decision in a forward pass: relu preactivation
// signs and maxpool argmax picks. Two evaluations with differing signatures
// straddle a kink, where a central difference no longer estimates the
// (one-sided) analytic derivative.
static void kink_signature(const std::vector<LayerSpec>& layers,
                           const std::vector<LayerTape>& tapes, std::vector<int>& out) {
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const auto& t = tapes[i];
        if (auto* p = std::get_if<ParallelSpec>(&l.v)) {
            for (size_t b = 0; b < p->branches.size(); ++b)
                kink_signature(p->branches[b], t.branch_tapes[b], out);
            continue;
        }
        const ActivationSpec* act = nullptr;
        if (auto* d = std::get_if<DenseSpec>(&l.v)) act = &d->act;
        else if (auto* c = std::get_if<Conv2DSpec>(&l.v)) act = &c->act;
        else if (auto* c = std::get_if<Conv3DSpec>(&l.v)) act = &c->act;
        if (act && act->kind == Activation::Relu)
            for (int j = 0; j < t.preact.size(); ++j) out.push_back(t.preact[j] > 0.0 ? 1 : 0);
        out.insert(out.end(), t.argmax.begin(), t.argmax.end());
    }
}

static double batch_loss(const NetworkSpec& spec, const std::vector<double>& params,
                         const std::vector<GradCheckSample>& batch, std::vector<int>* sig) {
    double acc = 0.0;
    if (sig) sig->clear();
    for (const auto& s : batch) {
        Tape tape;
        Tensor out = forward(spec, params, s.inputs, false, nullptr, sig ? &tape : nullptr);
        if (sig) kink_signature(spec.layers, tape.layers, *sig);
        acc += loss_value_class(spec.loss, out, s.target_class);
    }
    return acc / static_cast<double>(batch.size());
}

double gradient_check(const NetworkSpec& spec, const std::vector<double>& params,
                      const std::vector<GradCheckSample>& batch, double h,
                      int max_params_per_slot, uint64_t subset_seed) {
    if (h <= 0.0) throw std::invalid_argument("gradient_check: h must be > 0");
    const size_t n = params.size();
    std::vector<double> analytic(n, 0.0);
    for (const auto& s : batch) {
        Tape tape;
        Tensor out = forward(spec, params, s.inputs, false, nullptr, &tape);
        std::vector<double> g;
        if (spec.loss == LossKind::CrossEntropySoftmax) {
            g = backward(spec, params, tape, ce_softmax_preact_grad(out, s.target_class), true);
        } else {
            Tensor t = Tensor::zeros(out.shape());
            t[s.target_class] = 1.0;
            g = backward(spec, params, tape, mse_grad(out, t), false);
        }
        for (size_t i = 0; i < n; ++i) analytic[i] += g[i];
    }
    for (size_t i = 0; i < n; ++i) analytic[i] /= static_cast<double>(batch.size());

    std::vector<double> p = params;
    double worst = 0.0;
    std::vector<int> sigp, sigm;
    // Returns false when the ±h evaluations straddle a relu kink or a maxpool
    // argmax switch; the finite difference is meaningless there and the caller
    // tries another parameter instead.
    auto check_one = [&](int idx) -> bool {
        const double orig = p[static_cast<size_t>(idx)];
        p[static_cast<size_t>(idx)] = orig + h;
        const double lp = batch_loss(spec, p, batch, &sigp);
        p[static_cast<size_t>(idx)] = orig - h;
        const double lm = batch_loss(spec, p, batch, &sigm);
        p[static_cast<size_t>(idx)] = orig;
        if (sigp != sigm) return false;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = analytic[static_cast<size_t>(idx)];
        // The floor keeps central-difference roundoff (~eps*L/2h ~ 1e-11 here)
        // from dominating the ratio on near-zero gradients.
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
        worst = std::max(worst, std::abs(an - fd) / denom);
        return true;
    };

    if (max_params_per_slot <= 0) {
        for (size_t i = 0; i < n; ++i) check_one(static_cast<int>(i));
        return worst;
    }
    std::mt19937_64 rng(subset_seed);
    for (const auto& slot : param_slots(spec)) {
        const int total = slot.weight_count + slot.bias_count;
        auto draw = [&] { return slot.offset + static_cast<int>(rng() % static_cast<uint64_t>(total)); };
        for (int j = 0; j < std::min(max_params_per_slot, total); ++j) {
            int idx = draw();
            for (int retry = 0; retry < 8 && !check_one(idx); ++retry) idx = draw();
        }
        // always cover at least one bias
        for (int b = 0; b < slot.bias_count; ++b)
            if (check_one(slot.offset + slot.weight_count + b)) break;
    }
    return worst;
}

} // namespace voxelseg
