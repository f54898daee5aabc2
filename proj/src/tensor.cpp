#include "voxelseg/tensor.hpp"

#include <limits>
#include <numeric>
#include <sstream>

namespace voxelseg {

int shape_product(const std::vector<int>& shape) {
    int p = 1;
    for (int e : shape) p *= e;
    return p;
}

static void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
    for (int e : shape)
        if (e < 1) throw std::invalid_argument("tensor extents must be >= 1");
}

Tensor Tensor::zeros(std::vector<int> shape) {
    check_shape(shape);
    std::vector<double> data(static_cast<size_t>(shape_product(shape)), 0.0);
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    check_shape(shape);
    std::vector<double> data(static_cast<size_t>(shape_product(shape)), value);
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values) {
    check_shape(shape);
    if (static_cast<int>(values.size()) != shape_product(shape))
        throw std::invalid_argument("tensor value count does not match shape product");
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    check_shape(new_shape);
    if (shape_product(new_shape) != size())
        throw std::invalid_argument("reshape must preserve element count");
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul requires rank-2 tensors");
    const int m = a.shape()[0], k = a.shape()[1];
    const int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw std::invalid_argument("matmul inner dimensions disagree: " + a.shape_str() +
                                    " x " + b.shape_str());
    Tensor out = Tensor::zeros({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            const double* brow = pb + l * n;
            double* orow = po + i * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (input.rank() != 3 || kernels.rank() != 4)
        throw std::invalid_argument("conv2d_valid: input must be [C,H,W], kernels [K,C,kh,kw]");
    const int C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    const int K = kernels.shape()[0], KC = kernels.shape()[1];
    const int kh = kernels.shape()[2], kw = kernels.shape()[3];
    if (KC != C) throw std::invalid_argument("conv2d_valid: channel counts disagree");
    if (kh > H || kw > W) throw std::invalid_argument("conv2d_valid: kernel larger than input");
    if (bias.size() != K) throw std::invalid_argument("conv2d_valid: bias length != kernel count");

    const int OH = H - kh + 1, OW = W - kw + 1;
    Tensor out = Tensor::zeros({K, OH, OW});
    const double* in = input.data();
    const double* ker = kernels.data();
    double* po = out.data();

    // unfolded-patch form, same rationale as conv3d_valid: the kernel sum
    // runs over a contiguous output-position axis instead of rows of
    // length OW
    const int O = OH * OW;
    const int R = C * kh * kw;
    std::vector<double>& cols = conv3d_col_buffer();
    cols.resize(static_cast<size_t>(R) * O);
    unfold3d(in, C, 1, H, W, 1, kh, kw, cols.data());

    for (int k = 0; k < K; ++k) {
        double* orow = po + k * O;
        const double b = bias[k];
        for (int i = 0; i < O; ++i) orow[i] = b;
        const double* krow = ker + k * R;
        for (int r = 0; r < R; ++r) {
            const double kv = krow[r];
            const double* crow = cols.data() + static_cast<size_t>(r) * O;
            for (int o = 0; o < O; ++o) orow[o] += kv * crow[o];
        }
    }
    return out;
}

std::vector<double>& conv3d_col_buffer() {
    thread_local std::vector<double> buffer;
    return buffer;
}

std::vector<double>& conv3d_dcol_buffer() {
    thread_local std::vector<double> buffer;
    return buffer;
}

void fold3d_add(const double* cols, int C, int D, int H, int W, int kd, int kh, int kw,
                double* out) {
    const int OD = D - kd + 1, OH = H - kh + 1, OW = W - kw + 1;
    const int O = OD * OH * OW;
    const double* crow = cols;
    for (int c = 0; c < C; ++c) {
        double* omap = out + c * D * H * W;
        for (int kz = 0; kz < kd; ++kz)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    for (int oz = 0; oz < OD; ++oz) {
                        double* oslab = omap + (oz + kz) * H * W;
                        for (int oy = 0; oy < OH; ++oy) {
                            double* dst = oslab + (oy + ky) * W + kx;
                            const double* src = crow + (oz * OH + oy) * OW;
                            for (int ox = 0; ox < OW; ++ox) dst[ox] += src[ox];
                        }
                    }
                    crow += O;
                }
    }
}

void unfold3d(const double* in, int C, int D, int H, int W, int kd, int kh, int kw,
              double* cols) {
    const int OD = D - kd + 1, OH = H - kh + 1, OW = W - kw + 1;
    const int O = OD * OH * OW;
    double* crow = cols;
    for (int c = 0; c < C; ++c) {
        const double* imap = in + c * D * H * W;
        for (int kz = 0; kz < kd; ++kz)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    for (int oz = 0; oz < OD; ++oz) {
                        const double* islab = imap + (oz + kz) * H * W;
                        for (int oy = 0; oy < OH; ++oy) {
                            const double* src = islab + (oy + ky) * W + kx;
                            double* dst = crow + (oz * OH + oy) * OW;
                            for (int ox = 0; ox < OW; ++ox) dst[ox] = src[ox];
                        }
                    }
                    crow += O;
                }
    }
}

Tensor conv3d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (input.rank() != 4 || kernels.rank() != 5)
        throw std::invalid_argument("conv3d_valid: input must be [C,D,H,W], kernels [K,C,kd,kh,kw]");
    const int C = input.shape()[0], D = input.shape()[1], H = input.shape()[2], W = input.shape()[3];
    const int K = kernels.shape()[0], KC = kernels.shape()[1];
    const int kd = kernels.shape()[2], kh = kernels.shape()[3], kw = kernels.shape()[4];
    if (KC != C) throw std::invalid_argument("conv3d_valid: channel counts disagree");
    if (kd > D || kh > H || kw > W)
        throw std::invalid_argument("conv3d_valid: kernel larger than input");
    if (bias.size() != K) throw std::invalid_argument("conv3d_valid: bias length != kernel count");

    const int OD = D - kd + 1, OH = H - kh + 1, OW = W - kw + 1;
    Tensor out = Tensor::zeros({K, OD, OH, OW});
    const double* in = input.data();
    const double* ker = kernels.data();
    double* po = out.data();

    // im2col: the direct 7-loop form leaves inner loops of length OW (often
    // 1-3 at the sizes used here), so unfold patches once and drive the
    // kernel sum over a contiguous output-position axis instead.
    const int O = OD * OH * OW;
    const int P = C * kd * kh * kw;
    std::vector<double>& cols = conv3d_col_buffer();
    cols.resize(static_cast<size_t>(P) * O);
    unfold3d(in, C, D, H, W, kd, kh, kw, cols.data());

    for (int k = 0; k < K; ++k) {
        double* orow = po + k * O;
        const double b = bias[k];
        for (int i = 0; i < O; ++i) orow[i] = b;
        const double* krow = ker + k * P;
        for (int r = 0; r < P; ++r) {
            const double kv = krow[r];
            const double* crow = cols.data() + static_cast<size_t>(r) * O;
            for (int o = 0; o < O; ++o) orow[o] += kv * crow[o];
        }
    }
    return out;
}

MaxPoolResult maxpool2d(const Tensor& input, int ph, int pw) {
    if (input.rank() != 3)
        throw std::invalid_argument("maxpool2d: input must be [C,H,W]");
    if (ph < 1 || pw < 1) throw std::invalid_argument("maxpool2d: pool extents must be >= 1");
    const int C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    if (H % ph != 0 || W % pw != 0)
        throw std::invalid_argument("maxpool2d: extents not divisible by pool size");
    const int OH = H / ph, OW = W / pw;
    MaxPoolResult r{Tensor::zeros({C, OH, OW}), std::vector<int>(static_cast<size_t>(C * OH * OW))};
    const double* in = input.data();
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dy = 0; dy < ph; ++dy) {
                    for (int dx = 0; dx < pw; ++dx) {
                        const int idx = (c * H + oy * ph + dy) * W + ox * pw + dx;
                        if (in[idx] > best) { best = in[idx]; best_idx = idx; }
                    }
                }
                const int oidx = (c * OH + oy) * OW + ox;
                r.output[oidx] = best;
                r.argmax[static_cast<size_t>(oidx)] = best_idx;
            }
        }
    }
    return r;
}

} // namespace voxelseg
