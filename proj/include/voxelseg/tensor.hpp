#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxelseg {

/// Dense N-dimensional array of doubles, row-major (last index fastest).
/// Immutable by convention once handed to another module; the builders
/// below are the only intended mutation points.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from_values(std::vector<int> shape, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int size() const { return static_cast<int>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

    Tensor reshaped(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {}

    std::vector<int> shape_;
    std::vector<double> data_;
};

int shape_product(const std::vector<int>& shape);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid cross-correlation. input [C,H,W], kernels [K,C,kh,kw], bias [K]
/// -> [K, H-kh+1, W-kw+1]. No padding, no stride.
Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// 3D analogue. input [C,D,H,W], kernels [K,C,kd,kh,kw], bias [K].
Tensor conv3d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// conv3d internals, shared with the backward pass: per-thread scratch for
/// the unfolded patch matrix, and the unfold itself
/// ([C*kd*kh*kw, OD*OH*OW], output positions contiguous per row).
std::vector<double>& conv3d_col_buffer();
std::vector<double>& conv3d_dcol_buffer();
void unfold3d(const double* in, int C, int D, int H, int W, int kd, int kh, int kw,
              double* cols);
/// Scatter-add inverse of unfold3d.
void fold3d_add(const double* cols, int C, int D, int H, int W, int kd, int kh, int kw,
                double* out);

struct MaxPoolResult {
    Tensor output;              // [C, H/ph, W/pw]
    std::vector<int> argmax;    // flat input index per output element
};

/// Non-overlapping max pooling; extents must divide evenly.
/// Ties broken by first index in row-major scan order.
MaxPoolResult maxpool2d(const Tensor& input, int ph, int pw);

} // namespace voxelseg
