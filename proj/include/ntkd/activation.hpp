#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "ntkd/errors.hpp"

namespace ntkd {

enum class Activation { identity, relu, leaky_relu, tanh, sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

// Element-wise activation together with the constants the analysis needs:
// the derivative bound C_phi and the convention used for the derivative at
// non-differentiable points (the negative-side slope for relu family).
struct ActivationSpec {
  Activation kind = Activation::relu;
  double leaky_slope = 0.1;      // only meaningful for leaky_relu
  double derivative_bound = 1.0; // C_phi
  double zero_convention = 0.0;  // value assigned to phi'(0)

  static ActivationSpec identity() { return {Activation::identity, 0.1, 1.0, 1.0}; }
  static ActivationSpec relu() { return {Activation::relu, 0.1, 1.0, 0.0}; }
  static ActivationSpec leaky_relu(double slope) {
    return {Activation::leaky_relu, slope, 1.0, slope};
  }
  static ActivationSpec tanh() { return {Activation::tanh, 0.1, 1.0, 1.0}; }
  static ActivationSpec sigmoid() { return {Activation::sigmoid, 0.1, 0.25, 0.25}; }

  void validate() const {
    const double want = kind == Activation::sigmoid ? 0.25 : 1.0;
    if (derivative_bound != want)
      throw config_error("ActivationSpec: derivative_bound does not match kind");
    if (kind == Activation::leaky_relu &&
        !(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw config_error("ActivationSpec: leaky_relu slope must lie in (0,1)");
  }

  double apply(double v) const {
    switch (kind) {
      case Activation::identity: return v;
      case Activation::relu: return v > 0.0 ? v : 0.0;
      case Activation::leaky_relu: return v > 0.0 ? v : leaky_slope * v;
      case Activation::tanh: return std::tanh(v);
      case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    }
    return v;
  }

  double derivative(double v) const {
    switch (kind) {
      case Activation::identity: return 1.0;
      case Activation::relu: return v > 0.0 ? 1.0 : 0.0;
      case Activation::leaky_relu: return v > 0.0 ? 1.0 : leaky_slope;
      case Activation::tanh: {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      }
      case Activation::sigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      }
    }
    return 1.0;
  }

  // slope range attained by the derivative, used in trace sanity checks
  double min_slope() const {
    switch (kind) {
      case Activation::identity: return 1.0;
      case Activation::relu: return 0.0;
      case Activation::leaky_relu: return leaky_slope;
      case Activation::tanh: return 0.0;
      case Activation::sigmoid: return 0.0;
    }
    return 0.0;
  }
  double max_slope() const { return derivative_bound; }

  // |phi| <= 1 everywhere, a hypothesis of the singular-value bound
  bool bounded_by_one() const {
    return kind == Activation::tanh || kind == Activation::sigmoid;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return v.unaryExpr([this](double x) { return apply(x); });
  }
  Eigen::VectorXd derivative(const Eigen::VectorXd& v) const {
    return v.unaryExpr([this](double x) { return derivative(x); });
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& v) const {
    return v.unaryExpr([this](double x) { return apply(x); });
  }
  Eigen::MatrixXd derivative(const Eigen::MatrixXd& v) const {
    return v.unaryExpr([this](double x) { return derivative(x); });
  }
};

}  // namespace ntkd
