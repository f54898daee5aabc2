#pragma once

#include <cstdint>
#include <vector>

#include "voxelseg/nn.hpp"

namespace voxelseg {

enum class OptimAlgo { Sgd, SgdMomentum, Rprop };
enum class RegKind { None, L1, L2 };

struct OptimConfig {
    OptimAlgo algorithm = OptimAlgo::Sgd;
    double learning_rate = 0.01;
    double momentum = 0.9;           // used by SgdMomentum only
    double eta_plus = 1.2;
    double eta_minus = 0.5;
    double delta0 = 0.01;
    double delta_min = 1e-6;
    double delta_max = 50.0;
    RegKind reg = RegKind::None;
    double lambda = 0.0;

    void validate() const;
};

struct OptimState {
    std::vector<double> velocity;     // momentum
    std::vector<double> step_size;    // rprop per-weight step
    std::vector<int8_t> prev_sign;    // rprop sign memory

    static OptimState init(const OptimConfig& cfg, size_t n);
};

/// Weights ~ uniform(-a/sqrt(fan_in), a/sqrt(fan_in)); biases 0.
/// a = sqrt(2) for relu layers, 1 otherwise.
std::vector<double> init_params(const NetworkSpec& spec, uint64_t seed);

/// 1 for bias entries of the parameter vector, 0 for weights. Biases are
/// exempt from L1/L2 penalties.
std::vector<uint8_t> bias_mask(const NetworkSpec& spec);

double reg_penalty(RegKind reg, double lambda, const std::vector<double>& params,
                   const std::vector<uint8_t>& bias);
void add_reg_grad(RegKind reg, double lambda, const std::vector<double>& params,
                  const std::vector<uint8_t>& bias, std::vector<double>& grad);

/// v <- mu*v - L*grad; theta <- theta + v. mu = 0 is plain SGD.
void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              const OptimConfig& cfg, OptimState& state);

/// Sign-based step with per-weight adaptive sizes (iRPROP- style sign
/// handling: on a sign flip the step shrinks and the gradient is treated
/// as zero for that iteration). Full-batch gradients only.
void rprop_step(std::vector<double>& params, const std::vector<double>& grad,
                const OptimConfig& cfg, OptimState& state);

struct GradCheckSample {
    std::vector<Tensor> inputs;
    int target_class;
};

/// Max over checked parameters of |g_an - g_fd| / max(|g_an|,|g_fd|,1e-4),
/// central differences with step h. When max_params_per_slot > 0 a
/// deterministic random subset of that many parameters per weighted layer
/// is checked instead of every parameter.
double gradient_check(const NetworkSpec& spec, const std::vector<double>& params,
                      const std::vector<GradCheckSample>& batch, double h,
                      int max_params_per_slot = 0, uint64_t subset_seed = 0);

} // namespace voxelseg
