#include "voxelseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace voxelseg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// activations

double activate_scalar(const ActivationSpec& act, double x) {
    switch (act.kind) {
        case Activation::Linear: return x;
        case Activation::Logistic: return 1.0 / (1.0 + std::exp(-act.steepness * (x - act.midpoint)));
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Softmax:
            throw std::invalid_argument("softmax has no scalar form");
    }
    return 0.0;
}

double activate_grad_scalar(const ActivationSpec& act, double x) {
    switch (act.kind) {
        case Activation::Linear: return 1.0;
        case Activation::Logistic: {
            const double y = 1.0 / (1.0 + std::exp(-act.steepness * (x - act.midpoint)));
            return act.steepness * y * (1.0 - y);
        }
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;  // derivative at 0 defined as 0
        case Activation::Softmax:
            throw std::invalid_argument("softmax derivative is a Jacobian, not elementwise");
    }
    return 0.0;
}

static Tensor softmax(const Tensor& x) {
    Tensor y = x;
    double mx = *std::max_element(x.values().begin(), x.values().end());
    double sum = 0.0;
    for (int i = 0; i < y.size(); ++i) { y[i] = std::exp(x[i] - mx); sum += y[i]; }
    for (int i = 0; i < y.size(); ++i) y[i] /= sum;
    return y;
}

Tensor activate(const ActivationSpec& act, const Tensor& x) {
    if (act.kind == Activation::Softmax) return softmax(x);
    Tensor y = x;
    for (int i = 0; i < y.size(); ++i) y[i] = activate_scalar(act, x[i]);
    return y;
}

Tensor activate_grad(const ActivationSpec& act, const Tensor& x) {
    Tensor y = x;
    for (int i = 0; i < y.size(); ++i) y[i] = activate_grad_scalar(act, x[i]);
    return y;
}

double node_output(const std::vector<double>& weights, const std::vector<double>& inputs,
                   double bias, const ActivationSpec& act) {
    if (weights.size() != inputs.size())
        throw std::invalid_argument("node_output: weight/input length mismatch");
    double z = bias;
    for (size_t i = 0; i < weights.size(); ++i) z += weights[i] * inputs[i];
    return activate_scalar(act, z);
}

// ---------------------------------------------------------------------------
// parameter layout

static int layer_weight_count(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseSpec>(&l.v)) return d->in * d->out;
    if (auto* c = std::get_if<Conv2DSpec>(&l.v)) return c->out_maps * c->in_ch * c->kh * c->kw;
    if (auto* c = std::get_if<Conv3DSpec>(&l.v)) return c->out_maps * c->in_ch * c->kd * c->kh * c->kw;
    return 0;
}

static int layer_bias_count(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseSpec>(&l.v)) return d->out;
    if (auto* c = std::get_if<Conv2DSpec>(&l.v)) return c->out_maps;
    if (auto* c = std::get_if<Conv3DSpec>(&l.v)) return c->out_maps;
    return 0;
}

static void collect_slots(const std::vector<LayerSpec>& layers, int& pos,
                          std::vector<ParamSlot>* out) {
    for (const auto& l : layers) {
        if (auto* p = std::get_if<ParallelSpec>(&l.v)) {
            for (const auto& branch : p->branches) collect_slots(branch, pos, out);
            continue;
        }
        const int wc = layer_weight_count(l);
        const int bc = layer_bias_count(l);
        if (wc == 0 && bc == 0) continue;
        if (out) {
            ParamSlot s{};
            s.layer = &l;
            s.offset = pos;
            s.weight_count = wc;
            s.bias_count = bc;
            if (auto* d = std::get_if<DenseSpec>(&l.v)) { s.fan_in = d->in; s.act = d->act; }
            if (auto* c = std::get_if<Conv2DSpec>(&l.v)) { s.fan_in = c->in_ch * c->kh * c->kw; s.act = c->act; }
            if (auto* c = std::get_if<Conv3DSpec>(&l.v)) { s.fan_in = c->in_ch * c->kd * c->kh * c->kw; s.act = c->act; }
            out->push_back(s);
        }
        pos += wc + bc;
    }
}

int param_count(const NetworkSpec& spec) {
    int pos = 0;
    collect_slots(spec.layers, pos, nullptr);
    return pos;
}

std::vector<ParamSlot> param_slots(const NetworkSpec& spec) {
    std::vector<ParamSlot> slots;
    int pos = 0;
    collect_slots(spec.layers, pos, &slots);
    return slots;
}

// ---------------------------------------------------------------------------
// shape inference

static std::vector<int> infer_stack(const std::vector<LayerSpec>& layers,
                                    const std::vector<std::vector<int>>& inputs,
                                    int depth_base) {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    std::vector<int> shape;
    size_t start = 0;
    if (auto* p = std::get_if<ParallelSpec>(&layers[0].v)) {
        if (inputs.size() != p->branches.size())
            throw std::invalid_argument("layer 0: Parallel expects " +
                                        std::to_string(p->branches.size()) + " inputs, got " +
                                        std::to_string(inputs.size()));
        int total = 0;
        for (size_t b = 0; b < p->branches.size(); ++b) {
            auto s = infer_stack(p->branches[b], {inputs[b]}, depth_base);
            total += shape_product(s);
        }
        shape = {total};
        start = 1;
    } else {
        if (inputs.size() != 1)
            throw std::invalid_argument("non-parallel network expects exactly one input");
        shape = inputs[0];
    }
    for (size_t i = start; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = "layer " + std::to_string(depth_base + i);
        if (auto* d = std::get_if<DenseSpec>(&l.v)) {
            if (shape_product(shape) != d->in)
                throw std::invalid_argument(where + ": dense expects " + std::to_string(d->in) +
                                            " inputs, got " + std::to_string(shape_product(shape)));
            shape = {d->out};
        } else if (auto* c = std::get_if<Conv2DSpec>(&l.v)) {
            if (shape.size() != 3 || shape[0] != c->in_ch)
                throw std::invalid_argument(where + ": conv2d input must be [" +
                                            std::to_string(c->in_ch) + ",H,W]");
            if (c->kh > shape[1] || c->kw > shape[2])
                throw std::invalid_argument(where + ": conv2d kernel larger than input");
            shape = {c->out_maps, shape[1] - c->kh + 1, shape[2] - c->kw + 1};
        } else if (auto* c = std::get_if<Conv3DSpec>(&l.v)) {
            if (shape.size() != 4 || shape[0] != c->in_ch)
                throw std::invalid_argument(where + ": conv3d input must be [" +
                                            std::to_string(c->in_ch) + ",D,H,W]");
            if (c->kd > shape[1] || c->kh > shape[2] || c->kw > shape[3])
                throw std::invalid_argument(where + ": conv3d kernel larger than input");
            shape = {c->out_maps, shape[1] - c->kd + 1, shape[2] - c->kh + 1, shape[3] - c->kw + 1};
        } else if (auto* m = std::get_if<MaxPool2DSpec>(&l.v)) {
            if (shape.size() != 3 || shape[1] % m->ph != 0 || shape[2] % m->pw != 0)
                throw std::invalid_argument(where + ": maxpool extents not divisible");
            shape = {shape[0], shape[1] / m->ph, shape[2] / m->pw};
        } else if (std::get_if<DropoutSpec>(&l.v)) {
            // shape unchanged
        } else if (std::get_if<FlattenSpec>(&l.v)) {
            shape = {shape_product(shape)};
        } else if (std::get_if<ParallelSpec>(&l.v)) {
            throw std::invalid_argument(where + ": Parallel is only allowed as the first layer");
        }
    }
    return shape;
}

std::vector<int> infer_output_shape(const NetworkSpec& spec,
                                    const std::vector<std::vector<int>>& input_shapes) {
    return infer_stack(spec.layers, input_shapes, 0);
}

// ---------------------------------------------------------------------------
// forward

static double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

Tensor dropout_mask(double rate, const std::vector<int>& shape, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout rate must be in [0,1)");
    Tensor m = Tensor::zeros(shape);
    for (int i = 0; i < m.size(); ++i) m[i] = unit_uniform(rng) < rate ? 0.0 : 1.0;
    return m;
}

namespace {

struct ForwardCtx {
    const std::vector<double>* params;
    bool train;
    std::mt19937_64* rng;
};

Tensor forward_stack(const std::vector<LayerSpec>& layers, ForwardCtx& ctx, int& pos,
                     const std::vector<Tensor>& inputs, std::vector<LayerTape>* tapes,
                     int depth_base);

Tensor forward_layer(const LayerSpec& l, ForwardCtx& ctx, int& pos, const Tensor& x,
                     LayerTape* tape, const std::string& where) {
    const double* P = ctx.params->data();
    if (auto* d = std::get_if<DenseSpec>(&l.v)) {
        if (x.size() != d->in)
            throw std::invalid_argument(where + ": dense input size mismatch");
        Tensor z = Tensor::zeros({d->out});
        const double* w = P + pos;
        const double* b = P + pos + d->in * d->out;
        for (int o = 0; o < d->out; ++o) {
            double acc = b[o];
            const double* wrow = w + o * d->in;
            for (int i = 0; i < d->in; ++i) acc += wrow[i] * x[i];
            z[o] = acc;
        }
        pos += d->in * d->out + d->out;
        if (tape) { tape->input = x; tape->preact = z; }
        return activate(d->act, z);
    }
    if (auto* c = std::get_if<Conv2DSpec>(&l.v)) {
        const int kcount = c->out_maps * c->in_ch * c->kh * c->kw;
        Tensor kernels = Tensor::from_values({c->out_maps, c->in_ch, c->kh, c->kw},
                                             std::vector<double>(P + pos, P + pos + kcount));
        Tensor bias = Tensor::from_values({c->out_maps},
                                          std::vector<double>(P + pos + kcount, P + pos + kcount + c->out_maps));
        pos += kcount + c->out_maps;
        Tensor z = conv2d_valid(x, kernels, bias);
        if (tape) { tape->input = x; tape->preact = z; }
        return activate(c->act, z);
    }
    if (auto* c = std::get_if<Conv3DSpec>(&l.v)) {
        const int kcount = c->out_maps * c->in_ch * c->kd * c->kh * c->kw;
        Tensor kernels = Tensor::from_values({c->out_maps, c->in_ch, c->kd, c->kh, c->kw},
                                             std::vector<double>(P + pos, P + pos + kcount));
        Tensor bias = Tensor::from_values({c->out_maps},
                                          std::vector<double>(P + pos + kcount, P + pos + kcount + c->out_maps));
        pos += kcount + c->out_maps;
        Tensor z = conv3d_valid(x, kernels, bias);
        if (tape) { tape->input = x; tape->preact = z; }
        return activate(c->act, z);
    }
    if (auto* m = std::get_if<MaxPool2DSpec>(&l.v)) {
        auto r = maxpool2d(x, m->ph, m->pw);
        if (tape) { tape->input = x; tape->argmax = std::move(r.argmax); }
        return r.output;
    }
    if (auto* dr = std::get_if<DropoutSpec>(&l.v)) {
        if (!ctx.train) return x;
        if (!ctx.rng) throw std::invalid_argument(where + ": dropout in train mode needs an rng");
        Tensor mask = dropout_mask(dr->rate, x.shape(), *ctx.rng);
        Tensor y = x;
        for (int i = 0; i < y.size(); ++i) y[i] *= mask[i];
        if (tape) tape->mask = std::move(mask);
        return y;
    }
    if (std::get_if<FlattenSpec>(&l.v)) {
        if (tape) tape->input = x;
        return x.reshaped({x.size()});
    }
    throw std::invalid_argument(where + ": Parallel is only allowed as the first layer");
}

Tensor forward_stack(const std::vector<LayerSpec>& layers, ForwardCtx& ctx, int& pos,
                     const std::vector<Tensor>& inputs, std::vector<LayerTape>* tapes,
                     int depth_base) {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    Tensor x;
    size_t start = 0;
    if (auto* p = std::get_if<ParallelSpec>(&layers[0].v)) {
        if (inputs.size() != p->branches.size())
            throw std::invalid_argument("layer 0: Parallel input count mismatch");
        LayerTape ptape;
        std::vector<double> concat;
        for (size_t b = 0; b < p->branches.size(); ++b) {
            std::vector<LayerTape> btapes;
            Tensor by = forward_stack(p->branches[b], ctx, pos, {inputs[b]},
                                      tapes ? &btapes : nullptr, depth_base);
            ptape.branch_out_sizes.push_back(by.size());
            concat.insert(concat.end(), by.values().begin(), by.values().end());
            if (tapes) ptape.branch_tapes.push_back(std::move(btapes));
        }
        const int concat_size = static_cast<int>(concat.size());
        x = Tensor::from_values({concat_size}, std::move(concat));
        if (tapes) tapes->push_back(std::move(ptape));
        start = 1;
    } else {
        if (inputs.size() != 1)
            throw std::invalid_argument("non-parallel network expects exactly one input");
        x = inputs[0];
    }
    for (size_t i = start; i < layers.size(); ++i) {
        LayerTape t;
        const std::string where = "layer " + std::to_string(depth_base + i);
        x = forward_layer(layers[i], ctx, pos, x, tapes ? &t : nullptr, where);
        if (tapes) tapes->push_back(std::move(t));
    }
    return x;
}

} // namespace

Tensor forward(const NetworkSpec& spec, const std::vector<double>& params,
               const std::vector<Tensor>& inputs, bool train,
               std::mt19937_64* rng, Tape* tape) {
    if (static_cast<int>(params.size()) != param_count(spec))
        throw std::invalid_argument("parameter vector length does not match network spec");
    ForwardCtx ctx{&params, train, rng};
    int pos = 0;
    Tensor out = forward_stack(spec.layers, ctx, pos, inputs,
                               tape ? &tape->layers : nullptr, 0);
    if (tape) { tape->output = out; tape->train = train; }
    return out;
}

// ---------------------------------------------------------------------------
// backward

namespace {

int stack_param_count(const std::vector<LayerSpec>& layers) {
    int pos = 0;
    collect_slots(layers, pos, nullptr);
    return pos;
}

struct BackwardCtx {
    const std::vector<double>* params;
    std::vector<double>* grad;
};

// Returns dL/d(input). `delta` is dL/d(output of this layer); if
// `delta_at_preact` the activation-derivative step is skipped (delta is
// already dL/dz).
Tensor backward_layer(const LayerSpec& l, BackwardCtx& ctx, int base, const LayerTape& t,
                      Tensor delta, bool delta_at_preact) {
    const double* P = ctx.params->data();
    double* G = ctx.grad->data();
    if (auto* d = std::get_if<DenseSpec>(&l.v)) {
        Tensor dz = std::move(delta);
        if (!delta_at_preact) {
            if (d->act.kind == Activation::Softmax) {
                Tensor y = softmax(t.preact);
                double dot = 0.0;
                for (int i = 0; i < y.size(); ++i) dot += dz[i] * y[i];
                Tensor g = y;
                for (int i = 0; i < y.size(); ++i) g[i] = y[i] * (dz[i] - dot);
                dz = std::move(g);
            } else {
                for (int i = 0; i < dz.size(); ++i)
                    dz[i] *= activate_grad_scalar(d->act, t.preact[i]);
            }
        }
        const double* w = P + base;
        double* gw = G + base;
        double* gb = G + base + d->in * d->out;
        Tensor dx = Tensor::zeros(t.input.shape());
        for (int o = 0; o < d->out; ++o) {
            const double dzo = dz[o];
            gb[o] += dzo;
            const double* wrow = w + o * d->in;
            double* gwrow = gw + o * d->in;
            for (int i = 0; i < d->in; ++i) {
                gwrow[i] += dzo * t.input[i];
                dx[i] += dzo * wrow[i];
            }
        }
        return dx;
    }
    if (auto* c = std::get_if<Conv2DSpec>(&l.v)) {
        Tensor dz = std::move(delta);
        if (!delta_at_preact)
            for (int i = 0; i < dz.size(); ++i)
                dz[i] *= activate_grad_scalar(c->act, t.preact[i]);
        const int C = c->in_ch, K = c->out_maps, kh = c->kh, kw = c->kw;
        const int H = t.input.shape()[1], W = t.input.shape()[2];
        const int OH = H - kh + 1, OW = W - kw + 1;
        const int O = OH * OW;
        const int R = C * kh * kw;
        const double* ker = P + base;
        double* gker = G + base;
        double* gbias = G + base + K * R;
        // 2-d conv as a depth-1 3-d conv over the unfolded patch matrix
        std::vector<double>& cols = conv3d_col_buffer();
        cols.resize(static_cast<size_t>(R) * O);
        unfold3d(t.input.data(), C, 1, H, W, 1, kh, kw, cols.data());
        std::vector<double>& dcols = conv3d_dcol_buffer();
        dcols.assign(static_cast<size_t>(R) * O, 0.0);
        for (int k = 0; k < K; ++k) {
            const double* drow = dz.data() + k * O;
            for (int o = 0; o < O; ++o) gbias[k] += drow[o];
            double* gkrow = gker + k * R;
            const double* krow = ker + k * R;
            for (int r = 0; r < R; ++r) {
                const double* crow = cols.data() + static_cast<size_t>(r) * O;
                double* dcrow = dcols.data() + static_cast<size_t>(r) * O;
                const double kv = krow[r];
                double acc = 0.0;
                for (int o = 0; o < O; ++o) {
                    acc += drow[o] * crow[o];
                    dcrow[o] += kv * drow[o];
                }
                gkrow[r] += acc;
            }
        }
        Tensor dx = Tensor::zeros(t.input.shape());
        fold3d_add(dcols.data(), C, 1, H, W, 1, kh, kw, dx.data());
        return dx;
    }
    if (auto* c = std::get_if<Conv3DSpec>(&l.v)) {
        Tensor dz = std::move(delta);
        if (!delta_at_preact)
            for (int i = 0; i < dz.size(); ++i)
                dz[i] *= activate_grad_scalar(c->act, t.preact[i]);
        const int C = c->in_ch, K = c->out_maps, kd = c->kd, kh = c->kh, kw = c->kw;
        const int D = t.input.shape()[1], H = t.input.shape()[2], W = t.input.shape()[3];
        const int OD = D - kd + 1, OH = H - kh + 1, OW = W - kw + 1;
        const int O = OD * OH * OW;
        const int R = C * kd * kh * kw;
        const double* ker = P + base;
        double* gker = G + base;
        double* gbias = G + base + K * R;
        // same unfolded-patch form as the forward pass; both gradient
        // contractions then run over the contiguous output-position axis
        std::vector<double>& cols = conv3d_col_buffer();
        cols.resize(static_cast<size_t>(R) * O);
        unfold3d(t.input.data(), C, D, H, W, kd, kh, kw, cols.data());
        std::vector<double>& dcols = conv3d_dcol_buffer();
        dcols.assign(static_cast<size_t>(R) * O, 0.0);
        for (int k = 0; k < K; ++k) {
            const double* drow = dz.data() + k * O;
            for (int o = 0; o < O; ++o) gbias[k] += drow[o];
            double* gkrow = gker + k * R;
            const double* krow = ker + k * R;
            for (int r = 0; r < R; ++r) {
                const double* crow = cols.data() + static_cast<size_t>(r) * O;
                double* dcrow = dcols.data() + static_cast<size_t>(r) * O;
                const double kv = krow[r];
                double acc = 0.0;
                for (int o = 0; o < O; ++o) {
                    acc += drow[o] * crow[o];
                    dcrow[o] += kv * drow[o];
                }
                gkrow[r] += acc;
            }
        }
        Tensor dx = Tensor::zeros(t.input.shape());
        fold3d_add(dcols.data(), C, D, H, W, kd, kh, kw, dx.data());
        return dx;
    }
    if (std::get_if<MaxPool2DSpec>(&l.v)) {
        Tensor dx = Tensor::zeros(t.input.shape());
        for (int i = 0; i < delta.size(); ++i)
            dx[t.argmax[static_cast<size_t>(i)]] += delta[i];
        return dx;
    }
    if (std::get_if<DropoutSpec>(&l.v)) {
        if (t.mask.size() == 0) return delta;  // infer-mode tape
        Tensor dx = std::move(delta);
        for (int i = 0; i < dx.size(); ++i) dx[i] *= t.mask[i];
        return dx;
    }
    if (std::get_if<FlattenSpec>(&l.v)) {
        return delta.reshaped(t.input.shape());
    }
    throw std::invalid_argument("unexpected layer in backward");
}

// `last_at_preact` applies to the final layer of the outermost stack only.
std::vector<Tensor> backward_stack(const std::vector<LayerSpec>& layers, BackwardCtx& ctx,
                                   int base, const std::vector<LayerTape>& tapes,
                                   Tensor delta, bool last_at_preact) {
    if (tapes.size() != layers.size())
        throw std::invalid_argument("tape does not match network spec (stale tape?)");
    // per-layer param base offsets
    std::vector<int> bases(layers.size());
    {
        int pos = base;
        for (size_t i = 0; i < layers.size(); ++i) {
            bases[i] = pos;
            if (auto* p = std::get_if<ParallelSpec>(&layers[i].v)) {
                for (const auto& br : p->branches) pos += stack_param_count(br);
            } else {
                pos += layer_weight_count(layers[i]) + layer_bias_count(layers[i]);
            }
        }
    }
    for (size_t ri = layers.size(); ri-- > 0;) {
        const auto& l = layers[ri];
        const bool at_preact = last_at_preact && ri + 1 == layers.size();
        if (auto* p = std::get_if<ParallelSpec>(&l.v)) {
            if (ri != 0)
                throw std::invalid_argument("Parallel is only allowed as the first layer");
            const auto& t = tapes[ri];
            std::vector<Tensor> input_deltas;
            int off = 0;
            int bpos = bases[ri];
            for (size_t b = 0; b < p->branches.size(); ++b) {
                const int n = t.branch_out_sizes[b];
                std::vector<double> part(delta.data() + off, delta.data() + off + n);
                off += n;
                Tensor bdelta = Tensor::from_values({n}, std::move(part));
                auto din = backward_stack(p->branches[b], ctx, bpos, t.branch_tapes[b],
                                          std::move(bdelta), false);
                bpos += stack_param_count(p->branches[b]);
                input_deltas.push_back(std::move(din[0]));
            }
            return input_deltas;
        }
        delta = backward_layer(l, ctx, bases[ri], tapes[ri], std::move(delta), at_preact);
    }
    std::vector<Tensor> r;
    r.push_back(std::move(delta));
    return r;
}

} // namespace

std::vector<double> backward(const NetworkSpec& spec, const std::vector<double>& params,
                             const Tape& tape, const Tensor& out_grad,
                             bool grad_at_preactivation) {
    if (static_cast<int>(params.size()) != param_count(spec))
        throw std::invalid_argument("parameter vector length does not match network spec");
    std::vector<double> grad(params.size(), 0.0);
    BackwardCtx ctx{&params, &grad};
    if (grad_at_preactivation) {
        const auto& last = spec.layers.back();
        if (!std::holds_alternative<DenseSpec>(last.v) &&
            !std::holds_alternative<Conv2DSpec>(last.v) &&
            !std::holds_alternative<Conv3DSpec>(last.v))
            throw std::invalid_argument("pre-activation gradient requires a weighted final layer");
    }
    backward_stack(spec.layers, ctx, 0, tape.layers, out_grad, grad_at_preactivation);
    return grad;
}

// ---------------------------------------------------------------------------
// losses

double loss_value(LossKind kind, const Tensor& output, const Tensor& target) {
    if (kind != LossKind::Mse)
        throw std::invalid_argument("tensor-target loss is only defined for mse");
    if (!output.same_shape(target))
        throw std::invalid_argument("loss: output/target shape mismatch");
    double acc = 0.0;
    for (int i = 0; i < output.size(); ++i) {
        const double r = output[i] - target[i];
        acc += r * r;
    }
    return 0.5 * acc;
}

double loss_value_class(LossKind kind, const Tensor& output, int target_class) {
    if (target_class < 0 || target_class >= output.size())
        throw std::invalid_argument("loss: class index out of range");
    if (kind == LossKind::CrossEntropySoftmax)
        return -std::log(std::max(output[target_class], 1e-300));
    Tensor t = Tensor::zeros(output.shape());
    t[target_class] = 1.0;
    return loss_value(LossKind::Mse, output, t);
}

Tensor mse_grad(const Tensor& output, const Tensor& target) {
    if (!output.same_shape(target))
        throw std::invalid_argument("loss: output/target shape mismatch");
    Tensor g = output;
    for (int i = 0; i < g.size(); ++i) g[i] = output[i] - target[i];
    return g;
}

Tensor ce_softmax_preact_grad(const Tensor& probs, int target_class) {
    if (target_class < 0 || target_class >= probs.size())
        throw std::invalid_argument("loss: class index out of range");
    Tensor g = probs;
    g[target_class] -= 1.0;
    return g;
}

// ---------------------------------------------------------------------------
// inference weight scaling

std::vector<double> scale_weights_for_inference(const NetworkSpec& spec,
                                                const std::vector<double>& params) {
    std::vector<double> out = params;
    // Only the top-level trunk is scanned: dropout lives on dense outputs.
    int pos = 0;
    double pending_keep = -1.0;
    for (const auto& l : spec.layers) {
        if (auto* p = std::get_if<ParallelSpec>(&l.v)) {
            for (const auto& br : p->branches) pos += stack_param_count(br);
            continue;
        }
        if (auto* dr = std::get_if<DropoutSpec>(&l.v)) {
            pending_keep = 1.0 - dr->rate;
            continue;
        }
        const int wc = layer_weight_count(l);
        const int bc = layer_bias_count(l);
        if (wc > 0 && pending_keep >= 0.0) {
            for (int i = 0; i < wc; ++i) out[static_cast<size_t>(pos + i)] *= pending_keep;
            pending_keep = -1.0;
        }
        pos += wc + bc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// model file

static json act_to_json(const ActivationSpec& a) {
    const char* names[] = {"linear", "logistic", "tanh", "relu", "softmax"};
    json j{{"kind", names[static_cast<int>(a.kind)]}};
    if (a.kind == Activation::Logistic) { j["k"] = a.steepness; j["x0"] = a.midpoint; }
    return j;
}

static ActivationSpec act_from_json(const json& j) {
    ActivationSpec a;
    const std::string k = j.at("kind");
    if (k == "linear") a.kind = Activation::Linear;
    else if (k == "logistic") a.kind = Activation::Logistic;
    else if (k == "tanh") a.kind = Activation::Tanh;
    else if (k == "relu") a.kind = Activation::Relu;
    else if (k == "softmax") a.kind = Activation::Softmax;
    else throw std::runtime_error("unknown activation kind: " + k);
    if (a.kind == Activation::Logistic) {
        a.steepness = j.value("k", 1.0);
        a.midpoint = j.value("x0", 0.0);
    }
    return a;
}

static json layers_to_json(const std::vector<LayerSpec>& layers);

static json layer_to_json(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseSpec>(&l.v))
        return json{{"kind", "dense"}, {"in", d->in}, {"out", d->out}, {"act", act_to_json(d->act)}};
    if (auto* c = std::get_if<Conv2DSpec>(&l.v))
        return json{{"kind", "conv2d"}, {"in_ch", c->in_ch}, {"out_maps", c->out_maps},
                    {"kh", c->kh}, {"kw", c->kw}, {"act", act_to_json(c->act)}};
    if (auto* c = std::get_if<Conv3DSpec>(&l.v))
        return json{{"kind", "conv3d"}, {"in_ch", c->in_ch}, {"out_maps", c->out_maps},
                    {"kd", c->kd}, {"kh", c->kh}, {"kw", c->kw}, {"act", act_to_json(c->act)}};
    if (auto* m = std::get_if<MaxPool2DSpec>(&l.v))
        return json{{"kind", "maxpool2d"}, {"ph", m->ph}, {"pw", m->pw}};
    if (auto* dr = std::get_if<DropoutSpec>(&l.v))
        return json{{"kind", "dropout"}, {"rate", dr->rate}};
    if (std::get_if<FlattenSpec>(&l.v))
        return json{{"kind", "flatten"}};
    const auto& p = std::get<ParallelSpec>(l.v);
    json branches = json::array();
    for (const auto& br : p.branches) branches.push_back(layers_to_json(br));
    return json{{"kind", "parallel"}, {"branches", branches}};
}

static json layers_to_json(const std::vector<LayerSpec>& layers) {
    json arr = json::array();
    for (const auto& l : layers) arr.push_back(layer_to_json(l));
    return arr;
}

static std::vector<LayerSpec> layers_from_json(const json& arr);

static LayerSpec layer_from_json(const json& j) {
    const std::string k = j.at("kind");
    if (k == "dense") return {DenseSpec{j.at("in"), j.at("out"), act_from_json(j.at("act"))}};
    if (k == "conv2d") return {Conv2DSpec{j.at("in_ch"), j.at("out_maps"), j.at("kh"), j.at("kw"),
                                          act_from_json(j.at("act"))}};
    if (k == "conv3d") return {Conv3DSpec{j.at("in_ch"), j.at("out_maps"), j.at("kd"), j.at("kh"),
                                          j.at("kw"), act_from_json(j.at("act"))}};
    if (k == "maxpool2d") return {MaxPool2DSpec{j.at("ph"), j.at("pw")}};
    if (k == "dropout") return {DropoutSpec{j.at("rate")}};
    if (k == "flatten") return {FlattenSpec{}};
    if (k == "parallel") {
        ParallelSpec p;
        for (const auto& br : j.at("branches")) p.branches.push_back(layers_from_json(br));
        return {std::move(p)};
    }
    throw std::runtime_error("unknown layer kind: " + k);
}

static std::vector<LayerSpec> layers_from_json(const json& arr) {
    std::vector<LayerSpec> layers;
    for (const auto& j : arr) layers.push_back(layer_from_json(j));
    return layers;
}

static constexpr char kModelMagic[8] = {'V', 'S', 'E', 'G', 'N', 'E', 'T', '1'};

void save_model(const std::string& path, const NetworkSpec& spec,
                const std::vector<double>& params, const ModelMeta& meta) {
    if (static_cast<int>(params.size()) != param_count(spec))
        throw std::invalid_argument("save_model: params do not match spec");
    json manifest{
        {"version", 1},
        {"loss", spec.loss == LossKind::Mse ? "mse" : "cross_entropy_softmax"},
        {"layers", layers_to_json(spec.layers)},
        {"param_count", params.size()},
        {"patch_format", meta.format},
        {"patch_size", meta.patch_size},
        {"stack", meta.stack},
        {"standardize", meta.standardize},
        {"min_blob", meta.min_blob},
    };
    const std::string m = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kModelMagic, 8);
    const uint32_t mlen = static_cast<uint32_t>(m.size());
    f.write(reinterpret_cast<const char*>(&mlen), 4);
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    f.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open model file: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kModelMagic, 8) != 0)
        throw std::runtime_error("not a VSEGNET1 model file: " + path);
    uint32_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 4);
    std::string m(mlen, '\0');
    f.read(m.data(), mlen);
    if (!f) throw std::runtime_error("truncated model file: " + path);
    json manifest = json::parse(m);
    LoadedModel lm;
    lm.spec.layers = layers_from_json(manifest.at("layers"));
    lm.spec.loss = manifest.at("loss") == "mse" ? LossKind::Mse : LossKind::CrossEntropySoftmax;
    lm.meta.format = manifest.value("patch_format", "");
    lm.meta.patch_size = manifest.value("patch_size", 0);
    lm.meta.stack = manifest.value("stack", 0);
    lm.meta.standardize = manifest.value("standardize", true);
    lm.meta.min_blob = manifest.value("min_blob", 500);
    const size_t n = manifest.at("param_count");
    lm.params.resize(n);
    f.read(reinterpret_cast<char*>(lm.params.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw std::runtime_error("truncated model parameters: " + path);
    if (static_cast<int>(n) != param_count(lm.spec))
        throw std::runtime_error("model parameter count does not match manifest");
    return lm;
}

} // namespace voxelseg
