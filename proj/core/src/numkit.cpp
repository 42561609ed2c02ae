#include "compad/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace compad {

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + ": non-finite value in result");
}

void require_valid_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu: slope must be in (0,1), got " + std::to_string(slope));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  require_finite(out, "matmul");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw DimensionError("softmax_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r) {
    double mx = m(r, 0);
    for (int c = 1; c < m.cols(); ++c) mx = std::max(mx, m(r, c));
    double sum = 0.0;
    for (int c = 0; c < m.cols(); ++c) {
      out(r, c) = std::exp(m(r, c) - mx);
      sum += out(r, c);
    }
    for (int c = 0; c < m.cols(); ++c) out(r, c) /= sum;
  }
  require_finite(out, "softmax_rows");
  return out;
}

Matrix leaky_relu(const Matrix& m, double slope) {
  require_valid_slope(slope);
  Matrix out = m;
  for (double& x : out.data()) {
    if (x < 0.0) x *= slope;
  }
  return out;
}

Matrix leaky_relu_grad(const Matrix& pre, double slope) {
  require_valid_slope(slope);
  Matrix out = pre;
  for (double& x : out.data()) x = x > 0.0 ? 1.0 : slope;
  return out;
}

double sigmoid_scalar(double x) {
  const double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(y, kSigmoidEps, 1.0 - kSigmoidEps);
}

Matrix sigmoid(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = sigmoid_scalar(x);
  return out;
}

Matrix activation(const Matrix& m, ActivationKind kind, double slope) {
  switch (kind) {
    case ActivationKind::LeakyRelu:
      return leaky_relu(m, slope);
    case ActivationKind::Sigmoid:
      return sigmoid(m);
  }
  throw ConfigError("activation: unknown kind");
}

Matrix conv1d(const Matrix& input, const Matrix& kernels, int kernel_width, const Matrix& bias) {
  if (kernel_width <= 0 || kernel_width % 2 == 0) {
    throw ConfigError("conv1d: kernel width must be odd and positive, got " + std::to_string(kernel_width));
  }
  const int in_channels = input.cols();
  const int out_channels = kernels.rows();
  if (kernels.cols() != in_channels * kernel_width) {
    throw DimensionError("conv1d: kernels " + kernels.shape_string() + " incompatible with " +
                         std::to_string(in_channels) + " input channels, width " +
                         std::to_string(kernel_width));
  }
  if (bias.size() != out_channels) {
    throw DimensionError("conv1d: bias " + bias.shape_string() + " vs " + std::to_string(out_channels) +
                         " output channels");
  }
  const int n = input.rows();
  const int pad = (kernel_width - 1) / 2;
  Matrix out(n, out_channels);
  for (int t = 0; t < n; ++t) {
    for (int o = 0; o < out_channels; ++o) {
      double acc = bias.data()[o];
      for (int j = 0; j < kernel_width; ++j) {
        const int s = t + j - pad;
        if (s < 0 || s >= n) continue;
        for (int c = 0; c < in_channels; ++c) acc += kernels(o, c * kernel_width + j) * input(s, c);
      }
      out(t, o) = acc;
    }
  }
  require_finite(out, "conv1d");
  return out;
}

Conv1dGrads conv1d_backward(const Matrix& input, const Matrix& kernels, int kernel_width,
                            const Matrix& upstream) {
  const int in_channels = input.cols();
  const int out_channels = kernels.rows();
  const int n = input.rows();
  if (upstream.rows() != n || upstream.cols() != out_channels) {
    throw DimensionError("conv1d_backward: upstream " + upstream.shape_string() + " vs expected (" +
                         std::to_string(n) + "x" + std::to_string(out_channels) + ")");
  }
  const int pad = (kernel_width - 1) / 2;
  Conv1dGrads g{Matrix(n, in_channels), Matrix(out_channels, in_channels * kernel_width),
                Matrix(1, out_channels)};
  for (int t = 0; t < n; ++t) {
    for (int o = 0; o < out_channels; ++o) {
      const double u = upstream(t, o);
      if (u == 0.0) continue;
      g.bias.data()[o] += u;
      for (int j = 0; j < kernel_width; ++j) {
        const int s = t + j - pad;
        if (s < 0 || s >= n) continue;
        for (int c = 0; c < in_channels; ++c) {
          g.kernels(o, c * kernel_width + j) += u * input(s, c);
          g.input(s, c) += u * kernels(o, c * kernel_width + j);
        }
      }
    }
  }
  return g;
}

double check_gradient(const std::function<double()>& loss, std::span<Param* const> params, double step) {
  double max_rel_error = 0.0;
  for (Param* p : params) {
    for (size_t i = 0; i < p->value.data().size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + step;
      const double plus = loss();
      p->value.data()[i] = saved - step;
      const double minus = loss();
      p->value.data()[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("check_gradient: loss evaluated to a non-finite value");
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      max_rel_error = std::max(max_rel_error, rel);
    }
  }
  return max_rel_error;
}

}  // namespace compad
