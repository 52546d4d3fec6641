#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ntkd/errors.hpp"
#include "ntkd/kernels.hpp"
#include "ntkd/network.hpp"

namespace ntkd {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 1;
  int batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw config_error("TrainConfig: learning_rate must be positive");
    if (epochs <= 0) throw config_error("TrainConfig: epochs must be positive");
    if (batch_size <= 0) throw config_error("TrainConfig: batch_size must be positive");
  }
};

namespace detail {

struct BatchTrace {
  std::vector<Eigen::MatrixXd> z;   // z[l]: n_l x B, z[0] = inputs
  std::vector<Eigen::MatrixXd> d;   // derivative diagonals per layer
  Eigen::MatrixXd output;           // n_o x B
};

inline BatchTrace batch_forward(const Network& net, const Eigen::MatrixXd& x) {
  BatchTrace tr;
  tr.z.reserve(size_t(net.depth()) + 1);
  tr.d.reserve(net.depth());
  tr.z.push_back(x);
  const ActivationSpec& act = net.config.activation;
  for (int l = 1; l <= net.depth(); ++l) {
    Eigen::MatrixXd pre = net.weights[size_t(l) - 1] * tr.z.back() / net.layer_scale(l);
    if (net.config.use_bias) pre.colwise() += net.biases[size_t(l) - 1];
    tr.d.push_back(act.derivative(pre));
    tr.z.push_back(act.apply(pre));
  }
  Eigen::RowVectorXd total = tr.z[0].colwise().sum();
  for (int k = 1; k <= net.config.shortcuts; ++k)
    total += tr.z[size_t(k) * net.config.separation].colwise().sum();
  total /= std::sqrt(net.shortcut_mass());
  tr.output = total.replicate(net.config.output_dim, 1);
  return tr;
}

}  // namespace detail

struct LossGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;  // empty when the network has none
  double loss = 0.0;
};

// Gradient of the batch-mean squared error via reverse accumulation through
// every layer, shortcut and intermediate alike.  X is d x B, Y is n_o x B.
inline LossGradients loss_gradients(const Network& net, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& y) {
  if (x.rows() != net.config.input_dim)
    throw shape_error("loss_gradients: input rows do not match input_dim");
  if (y.rows() != net.config.output_dim || y.cols() != x.cols())
    throw shape_error("loss_gradients: label shape mismatch");
  const Eigen::Index batch = x.cols();
  const detail::BatchTrace tr = detail::batch_forward(net, x);

  LossGradients out;
  out.loss = (tr.output - y).squaredNorm() / double(batch);

  // residual adjoint; the all-ones output connection sums it over outputs
  const Eigen::MatrixXd resid = 2.0 * (tr.output - y) / double(batch);
  const Eigen::RowVectorXd rsum = resid.colwise().sum();
  const double inv_root_mass = 1.0 / std::sqrt(net.shortcut_mass());

  out.weights.resize(size_t(net.depth()));
  if (net.config.use_bias) out.biases.resize(size_t(net.depth()));
  Eigen::MatrixXd g;  // adjoint of z^l, n_l x B
  for (int l = net.depth(); l >= 1; --l) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(net.layer_out(l), batch);
    if (net.is_shortcut_layer(l)) t.rowwise() += rsum * inv_root_mass;
    if (g.size() > 0) {
      Eigen::MatrixXd dg = tr.d[size_t(l)].cwiseProduct(g);
      t.noalias() += net.weights[size_t(l)].transpose() * dg / net.layer_scale(l + 1);
    }
    g = std::move(t);
    const Eigen::MatrixXd dg = tr.d[size_t(l) - 1].cwiseProduct(g);
    out.weights[size_t(l) - 1].noalias() =
        dg * tr.z[size_t(l) - 1].transpose() / net.layer_scale(l);
    if (net.config.use_bias) out.biases[size_t(l) - 1] = dg.rowwise().sum();
  }
  return out;
}

inline double dataset_loss(const Network& net, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& y) {
  const detail::BatchTrace tr = detail::batch_forward(net, x);
  return (tr.output - y).squaredNorm() / double(x.cols());
}

struct TrainResult {
  Network network;
  std::vector<double> loss;  // loss[0] before training, loss[e] after epoch e
};

// Mini-batch gradient descent on the mean squared error.  The sample order
// is reshuffled once per epoch with an epoch-derived seed, so a fixed
// TrainConfig seed reproduces the run exactly.
inline TrainResult train(Network net, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& y, const TrainConfig& cfg) {
  cfg.validate();
  if (x.cols() == 0) throw config_error("train: dataset is empty");
  if (x.rows() != net.config.input_dim || y.cols() != x.cols() ||
      y.rows() != net.config.output_dim)
    throw shape_error("train: dataset shape mismatch");

  TrainResult result;
  result.loss.reserve(size_t(cfg.epochs) + 1);
  result.loss.push_back(dataset_loss(net, x, y));

  const Eigen::Index n = x.cols();
  std::vector<Eigen::Index> order(size_t(n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed + std::uint64_t(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(x.rows(), b), yb(y.rows(), b);
      for (Eigen::Index i = 0; i < b; ++i) {
        xb.col(i) = x.col(order[size_t(start + i)]);
        yb.col(i) = y.col(order[size_t(start + i)]);
      }
      const LossGradients grads = loss_gradients(net, xb, yb);
      for (int l = 0; l < net.depth(); ++l) {
        net.weights[size_t(l)] -= cfg.learning_rate * grads.weights[size_t(l)];
        if (net.config.use_bias)
          net.biases[size_t(l)] -= cfg.learning_rate * grads.biases[size_t(l)];
      }
    }
    const double epoch_loss = dataset_loss(net, x, y);
    if (!std::isfinite(epoch_loss))
      throw numeric_error("train: loss diverged at epoch " + std::to_string(epoch));
    result.loss.push_back(epoch_loss);
  }
  result.network = std::move(net);
  return result;
}

using ProbePair = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

struct DriftRecord {
  int epoch = 0;
  Eigen::VectorXd values_t0;  // depth-kernel traces at initialization
  Eigen::VectorXd values_t;   // traces at this checkpoint
  Eigen::VectorXd drift;      // |values_t - values_t0|
  double mean_drift = 0.0;
  double std_drift = 0.0;
};

namespace detail {

inline Eigen::VectorXd probe_traces(const Network& net,
                                    const std::vector<ProbePair>& probes) {
  Eigen::VectorXd v(Eigen::Index(probes.size()));
  for (size_t i = 0; i < probes.size(); ++i) {
    const ForwardTrace a = forward(net, probes[i].first);
    const ForwardTrace b = forward(net, probes[i].second);
    v(Eigen::Index(i)) = ntk_d_expanded(net, a, b).trace;
  }
  return v;
}

inline DriftRecord drift_record(int epoch, const Eigen::VectorXd& t0,
                                const Eigen::VectorXd& t) {
  DriftRecord r;
  r.epoch = epoch;
  r.values_t0 = t0;
  r.values_t = t;
  r.drift = (t - t0).cwiseAbs();
  r.mean_drift = r.drift.mean();
  const Eigen::VectorXd centered = r.drift.array() - r.mean_drift;
  r.std_drift = std::sqrt(centered.squaredNorm() / double(r.drift.size()));
  return r;
}

}  // namespace detail

// Trains a copy of net0 and snapshots the depth-kernel traces on the probe
// pairs at epoch 0 and at each checkpoint epoch.
inline std::vector<DriftRecord> track_invariance(const Network& net0,
                                                 const TrainConfig& cfg,
                                                 const Eigen::MatrixXd& x,
                                                 const Eigen::MatrixXd& y,
                                                 const std::vector<ProbePair>& probes,
                                                 const std::vector<int>& checkpoints) {
  cfg.validate();
  if (probes.empty()) throw config_error("track_invariance: no probe pairs");
  const Eigen::VectorXd t0 = detail::probe_traces(net0, probes);

  std::vector<DriftRecord> records;
  records.reserve(checkpoints.size());
  Network net = net0;
  int trained_to = 0;
  for (int cp : checkpoints) {
    if (cp < trained_to)
      throw config_error("track_invariance: checkpoints must be non-decreasing");
    if (cp > trained_to) {
      TrainConfig step = cfg;
      step.epochs = cp - trained_to;
      // continue the epoch-derived shuffles where the previous leg stopped
      step.seed = cfg.seed + std::uint64_t(trained_to);
      net = train(std::move(net), x, y, step).network;
      trained_to = cp;
    }
    records.push_back(detail::drift_record(cp, t0, detail::probe_traces(net, probes)));
  }
  return records;
}

}  // namespace ntkd
