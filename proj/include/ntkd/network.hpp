#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ntkd/activation.hpp"
#include "ntkd/errors.hpp"
#include "ntkd/linalg.hpp"

namespace ntkd {

// Configuration of a shortcut network: L = shortcuts * separation hidden
// layers, where every layer whose index is a multiple of `separation`
// (including the input, index 0) feeds the output through an all-ones
// connection.  The output is the sum of those layers' coordinate sums,
// scaled by 1/sqrt(M) with M the total width of the connected layers.
struct NetworkConfig {
  int input_dim = 1;    // n_0
  int output_dim = 1;   // n_o
  int separation = 1;   // layers between consecutive shortcut layers
  int shortcuts = 1;    // number of shortcut connections K
  std::vector<int> widths;  // n_1 .. n_L, L = shortcuts * separation
  ActivationSpec activation = ActivationSpec::relu();
  bool apply_layer_scaling = false;  // divide W^l by sqrt(n_l) in the forward map
  double weight_std = 1.0;
  double bias_std = 0.0;
  bool use_bias = false;

  int depth() const { return shortcuts * separation; }

  static NetworkConfig uniform(int input_dim, int output_dim, int separation,
                               int shortcuts, int width) {
    NetworkConfig c;
    c.input_dim = input_dim;
    c.output_dim = output_dim;
    c.separation = separation;
    c.shortcuts = shortcuts;
    c.widths.assign(size_t(shortcuts) * separation, width);
    return c;
  }

  void validate() const {
    activation.validate();
    if (input_dim <= 0 || output_dim <= 0)
      throw config_error("NetworkConfig: dimensions must be positive");
    if (separation <= 0 || shortcuts <= 0)
      throw config_error("NetworkConfig: separation and shortcuts must be positive");
    if (widths.empty())
      throw config_error("NetworkConfig: widths must not be empty");
    if (int(widths.size()) != depth())
      throw config_error("NetworkConfig: widths must have exactly shortcuts*separation entries");
    for (int w : widths)
      if (w <= 0) throw config_error("NetworkConfig: layer widths must be positive");
    if (weight_std < 0.0 || bias_std < 0.0)
      throw config_error("NetworkConfig: init stds must be non-negative");
  }
};

struct Network {
  NetworkConfig config;
  std::vector<Eigen::MatrixXd> weights;  // W^l, shape n_l x n_{l-1}
  std::vector<Eigen::VectorXd> biases;   // empty unless config.use_bias

  int depth() const { return int(weights.size()); }
  int layer_in(int l) const {  // n_{l-1}, l in 1..L
    return l == 1 ? config.input_dim : config.widths[size_t(l) - 2];
  }
  int layer_out(int l) const { return config.widths[size_t(l) - 1]; }

  // denominator applied to W^l in the forward map
  double layer_scale(int l) const {
    return config.apply_layer_scaling ? std::sqrt(double(layer_out(l))) : 1.0;
  }

  bool is_shortcut_layer(int l) const { return l % config.separation == 0; }

  // M = sum of widths of the shortcut-connected layers, input included
  double shortcut_mass() const {
    double m = config.input_dim;
    for (int k = 1; k <= config.shortcuts; ++k)
      m += config.widths[size_t(k) * config.separation - 1];
    return m;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }

  void validate() const {
    config.validate();
    if (int(weights.size()) != config.depth())
      throw config_error("Network: weight count does not match depth");
    for (int l = 1; l <= depth(); ++l) {
      if (weights[size_t(l) - 1].rows() != layer_out(l) ||
          weights[size_t(l) - 1].cols() != layer_in(l))
        throw config_error("Network: weight shape mismatch at layer " + std::to_string(l));
    }
    if (config.use_bias && int(biases.size()) != config.depth())
      throw config_error("Network: bias count does not match depth");
    if (shortcut_mass() <= 0.0)
      throw config_error("Network: shortcut mass must be positive");
  }
};

// Per-layer record of one forward pass: post-activations z^0..z^L, the
// activation-derivative diagonals, and the shortcut-summed output.
struct ForwardTrace {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> z;       // z[l], l = 0..L, z[0] == input
  std::vector<Eigen::VectorXd> d_diag;  // diag of D^l, l = 1..L (index l-1)
  Eigen::VectorXd output;               // f(x), length n_o
};

inline Network init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  int prev = config.input_dim;
  for (int l = 1; l <= config.depth(); ++l) {
    const int rows = config.widths[size_t(l) - 1];
    Eigen::MatrixXd w(rows, prev);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < prev; ++j) w(i, j) = config.weight_std * normal(rng);
    net.weights.push_back(std::move(w));
    if (config.use_bias) {
      Eigen::VectorXd b(rows);
      for (int i = 0; i < rows; ++i) b(i) = config.bias_std * normal(rng);
      net.biases.push_back(std::move(b));
    }
    prev = rows;
  }
  return net;
}

// Shortcut-summed output recomputed from the stored layer activations.
inline Eigen::VectorXd output_from_layers(const Network& net,
                                          const std::vector<Eigen::VectorXd>& z) {
  double total = z[0].sum();
  for (int k = 1; k <= net.config.shortcuts; ++k)
    total += z[size_t(k) * net.config.separation].sum();
  const double value = total / std::sqrt(net.shortcut_mass());
  return Eigen::VectorXd::Constant(net.config.output_dim, value);
}

inline ForwardTrace forward(const Network& net, const Eigen::VectorXd& x) {
  if (x.size() != net.config.input_dim)
    throw shape_error("forward: input has length " + std::to_string(x.size()) +
                      ", expected " + std::to_string(net.config.input_dim));
  ForwardTrace tr;
  tr.input = x;
  tr.z.reserve(size_t(net.depth()) + 1);
  tr.d_diag.reserve(net.depth());
  tr.z.push_back(x);
  const ActivationSpec& act = net.config.activation;
  for (int l = 1; l <= net.depth(); ++l) {
    Eigen::VectorXd pre = net.weights[size_t(l) - 1] * tr.z.back() / net.layer_scale(l);
    if (net.config.use_bias) pre += net.biases[size_t(l) - 1];
    Eigen::VectorXd zl = act.apply(pre);
    if (!zl.allFinite())
      throw numeric_error("forward: non-finite activation at layer " + std::to_string(l));
    tr.d_diag.push_back(act.derivative(pre));
    tr.z.push_back(std::move(zl));
  }
  tr.output = output_from_layers(net, tr.z);
  if (!tr.output.allFinite())
    throw numeric_error("forward: non-finite output");
  return tr;
}

// Per-layer check of C_phi * sigma_max(W^l / scale) <= epsilon.
inline std::vector<bool> is_stable_pertinent(const Network& net, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw config_error("is_stable_pertinent: epsilon must lie in (0,1)");
  std::vector<bool> ok;
  ok.reserve(net.depth());
  const double c_phi = net.config.activation.derivative_bound;
  for (int l = 1; l <= net.depth(); ++l) {
    const double sigma =
        largest_singular_value(net.weights[size_t(l) - 1] / net.layer_scale(l));
    ok.push_back(c_phi * sigma <= epsilon);
  }
  return ok;
}

}  // namespace ntkd
