#pragma once

// Slow, independent reference implementations used by the test suite to
// certify the fast paths.  Nothing here may call into the kernel or
// gradient code: everything is derived from plain forward evaluations and
// quadrature.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>

#include "ntkd/errors.hpp"
#include "ntkd/kernels.hpp"  // KernelValue carrier type only
#include "ntkd/network.hpp"

namespace ntkd::oracle {

struct JacobianBlock {
  int layer = 1;
  Eigen::MatrixXd value;  // (n_{l-1} * n_l) x n_o, stacked over the input index
};

// Central finite differences of f with respect to W^layer, assembled in the
// same stacked layout the analytic paths use: block j (input coordinate)
// holds rows a = 1..n_l with entry (a, o) = d f_o / d W_{a j}.
inline JacobianBlock fd_jacobian(const Network& net, const Eigen::VectorXd& x,
                                 int layer, double h = 1e-4) {
  if (!(h > 0.0)) throw config_error("fd_jacobian: step must be positive");
  if (layer < 1 || layer > net.depth())
    throw index_error("fd_jacobian: layer out of range");
  Network work = net;
  Eigen::MatrixXd& w = work.weights[size_t(layer) - 1];
  const int n_l = int(w.rows());
  const int n_in = int(w.cols());
  JacobianBlock out;
  out.layer = layer;
  out.value.resize(std::int64_t(n_in) * n_l, net.config.output_dim);
  for (int j = 0; j < n_in; ++j) {
    for (int a = 0; a < n_l; ++a) {
      const double saved = w(a, j);
      w(a, j) = saved + h;
      const Eigen::VectorXd fp = forward(work, x).output;
      w(a, j) = saved - h;
      const Eigen::VectorXd fm = forward(work, x).output;
      w(a, j) = saved;
      out.value.row(std::int64_t(j) * n_l + a) = ((fp - fm) / (2.0 * h)).transpose();
    }
  }
  return out;
}

// Depth kernel assembled the long way: finite-difference Jacobians for each
// shortcut layer, the literal block-diagonal W^T scaling matrix, and A^T B
// contractions, summed over the shortcut groups.
inline KernelValue brute_ntk_d(const Network& net, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& xp, double h = 1e-4) {
  if (net.parameter_count() > 10000)
    throw config_error("brute_ntk_d: refusing networks above 10^4 parameters");
  const int n_o = net.config.output_dim;
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_o, n_o);
  for (int k = 1; k <= net.config.shortcuts; ++k) {
    const int l = k * net.config.separation;
    const Eigen::MatrixXd jx = fd_jacobian(net, x, l, h).value;
    const Eigen::MatrixXd jxp = fd_jacobian(net, xp, l, h).value;
    const Eigen::MatrixXd& w = net.weights[size_t(l) - 1];
    const int n_in = int(w.cols());
    const int n_l = int(w.rows());
    // literal block-diagonal matrix with n_in copies of W^T
    Eigen::MatrixXd dblock =
        Eigen::MatrixXd::Zero(std::int64_t(n_in) * n_in, std::int64_t(n_in) * n_l);
    for (int j = 0; j < n_in; ++j)
      dblock.block(std::int64_t(j) * n_in, std::int64_t(j) * n_l, n_in, n_l) =
          w.transpose();
    const Eigen::MatrixXd ax = dblock * jx;
    const Eigen::MatrixXd axp = dblock * jxp;
    block += ax.transpose() * axp;
  }
  return make_kernel_value(std::move(block));
}

namespace detail {

struct Rule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Gauss-Hermite rule (weight e^{-t^2}) from the Jacobi matrix of the
// three-term recurrence, eigen-decomposed; weights from the first
// eigenvector components.
inline const Rule& gauss_hermite_rule(int n) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(double(i) / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  Rule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  const double root_pi = std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights(i) = root_pi * v0 * v0;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

// probabilists' Hermite polynomial by the three-term recurrence
inline double hermite_he(int r, double x) {
  double h0 = 1.0, h1 = x;
  if (r == 0) return h0;
  for (int k = 1; k < r; ++k) {
    const double next = x * h1 - double(k) * h0;
    h0 = h1;
    h1 = next;
  }
  return h1;
}

inline double leaky(double x, double alpha) { return x > 0.0 ? x : alpha * x; }

inline double mu_estimate(int r, double alpha, int n) {
  const Rule& rule = gauss_hermite_rule(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = std::numbers::sqrt2 * rule.nodes(i);
    acc += rule.weights(i) * leaky(g, alpha) * hermite_he(r, g);
  }
  const double root_rfact = std::exp(0.5 * std::lgamma(double(r) + 1.0));
  return acc / std::sqrt(std::numbers::pi) / root_rfact;
}

}  // namespace detail

// Quadrature estimate of E[phi_alpha(g) He_r(g)] / sqrt(r!) for standard
// normal g.  The kink of the activation at zero limits a single rule to
// O(1/n) convergence, so the estimate is Richardson-extrapolated over rules
// with `nodes`, 2*`nodes` and 4*`nodes` points, which removes the 1/n and
// 1/n^2 error terms.
inline double hermite_quadrature(int r, double alpha, int nodes = 256) {
  if (r < 0) throw config_error("hermite_quadrature: r must be non-negative");
  if (nodes < 64) throw config_error("hermite_quadrature: need at least 64 nodes");
  const double v1 = detail::mu_estimate(r, alpha, nodes);
  const double v2 = detail::mu_estimate(r, alpha, 2 * nodes);
  const double v3 = detail::mu_estimate(r, alpha, 4 * nodes);
  const double first = 2.0 * v2 - v1;
  const double second = 2.0 * v3 - v2;
  return (4.0 * second - first) / 3.0;
}

}  // namespace ntkd::oracle
