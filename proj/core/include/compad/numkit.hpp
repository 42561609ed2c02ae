#pragma once

#include <functional>
#include <span>

#include "compad/matrix.hpp"

namespace compad {

inline constexpr double kSigmoidEps = 1e-7;
inline constexpr double kDefaultLeakySlope = 0.2;

enum class ActivationKind { LeakyRelu, Sigmoid };

// Standard matrix product; throws DimensionError naming both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction; each output row sums to 1.
Matrix softmax_rows(const Matrix& m);

Matrix leaky_relu(const Matrix& m, double slope = kDefaultLeakySlope);
// Derivative mask of leaky_relu evaluated at the pre-activation input.
Matrix leaky_relu_grad(const Matrix& pre, double slope = kDefaultLeakySlope);

// Logistic function with outputs clamped to (kSigmoidEps, 1 - kSigmoidEps)
// so downstream log terms stay finite.
Matrix sigmoid(const Matrix& m);
double sigmoid_scalar(double x);

Matrix activation(const Matrix& m, ActivationKind kind, double slope = kDefaultLeakySlope);

// 1D convolution over a time-major signal (rows = positions, cols = channels).
// Kernels are stored flattened as (out_channels x in_channels*width): tap j of
// input channel c for output channel o lives at kernels(o, c*width + j).
// Padding is zero, (width-1)/2 per side, so the output keeps the input length.
// width must be odd.
Matrix conv1d(const Matrix& input, const Matrix& kernels, int kernel_width, const Matrix& bias);

struct Conv1dGrads {
  Matrix input;
  Matrix kernels;
  Matrix bias;
};

Conv1dGrads conv1d_backward(const Matrix& input, const Matrix& kernels, int kernel_width,
                            const Matrix& upstream);

// Central-difference gradient check. `loss` must be a deterministic function
// of the params' current values; params' grad fields must already hold the
// analytic gradients. Returns the max over all coordinates of
// |analytic - numeric| / max(1, |numeric|).
double check_gradient(const std::function<double()>& loss, std::span<Param* const> params,
                      double step = 1e-5);

}  // namespace compad
