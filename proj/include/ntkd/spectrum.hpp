#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ntkd/data.hpp"
#include "ntkd/errors.hpp"
#include "ntkd/kernels.hpp"
#include "ntkd/linalg.hpp"
#include "ntkd/stats.hpp"
#include "ntkd/training.hpp"

namespace ntkd {

struct SpectrumReport {
  double lambda_min = 0.0;
  double sigma_max = 0.0;
  double theorem3_bound = 0.0;  // K(2K+1)/6 * n_max^2
  int hermite_r = 2;
  double mu_r = 0.0;
  int input_dim = 0;
};

// r-th normalized Hermite coefficient of leaky-relu with slope alpha:
//   (1-alpha)/sqrt(2*pi) * (-1)^{(r-2)/2} * (r-3)!! / sqrt(r!),
// defined for even r >= 2, with (-1)!! = 1.
inline double hermite_coefficient(int r, double alpha) {
  if (r < 2 || r % 2 != 0)
    throw config_error("hermite_coefficient: r must be an even integer >= 2");
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw config_error("hermite_coefficient: alpha must lie in [0,1)");
  double dfact = 1.0;  // (r-3)!!, with (-1)!! == 1
  for (int k = r - 3; k > 1; k -= 2) dfact *= k;
  const double sign = ((r - 2) / 2) % 2 == 0 ? 1.0 : -1.0;
  const double root_rfact = std::exp(0.5 * std::lgamma(double(r) + 1.0));
  return (1.0 - alpha) / std::sqrt(2.0 * std::numbers::pi) * sign * dfact / root_rfact;
}

// Largest width of the network including input and output dimensions; the
// singular-value bound is stated with all of them forced equal, so the
// conservative maximum keeps the comparison unambiguous.
inline int max_width(const Network& net) {
  int m = std::max(net.config.input_dim, net.config.output_dim);
  for (int w : net.config.widths) m = std::max(m, w);
  return m;
}

inline double theorem3_bound(int shortcuts, int n_max) {
  return double(shortcuts) * (2.0 * shortcuts + 1.0) / 6.0 * double(n_max) *
         double(n_max);
}

struct Theorem3Check {
  double sigma_max = 0.0;
  double bound = 0.0;
  bool holds = false;
  // hypotheses of the bound; violations are reported, not rejected
  bool activation_bounded = false;
  bool stable_pertinent = false;
};

// Checks sigma_max of the full depth-kernel block against K(2K+1)/6 * n_max^2.
inline Theorem3Check check_theorem3(const Network& net, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& xp,
                                    double epsilon = 0.999999) {
  Theorem3Check c;
  const ForwardTrace tx = forward(net, x);
  const ForwardTrace txp = forward(net, xp);
  const KernelValue kv = ntk_d_expanded(net, tx, txp);
  c.sigma_max = largest_singular_value(kv.block);
  c.bound = theorem3_bound(net.config.shortcuts, max_width(net));
  c.holds = c.sigma_max <= c.bound;
  c.activation_bounded = net.config.activation.bounded_by_one();
  const auto sp = is_stable_pertinent(net, epsilon);
  c.stable_pertinent = std::all_of(sp.begin(), sp.end(), [](bool b) { return b; });
  return c;
}

struct ScalingRow {
  int d = 0;
  double mean_lambda_min = 0.0;
  double std_lambda_min = 0.0;
  int psd_violations = 0;  // runs with lambda_min < -1e-8 * max diagonal
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  LinearFit fit;  // mean lambda_min versus d
};

// Smallest-eigenvalue scaling against the input dimension: for each d, draw
// N inputs from the well-scaled sampler, briefly train a fresh network from
// the template, assemble the depth-kernel Gram and record its lambda_min.
inline ScalingTable lambda_min_scaling_experiment(
    const std::vector<int>& d_values, int n_samples, int trials,
    NetworkConfig net_template, std::uint64_t seed,
    const TrainConfig& train_cfg = {1e-3, 10, 64, 0},
    ScaledVariant variant = ScaledVariant::gaussian) {
  if (trials < 1) throw config_error("lambda_min_scaling_experiment: trials must be >= 1");
  ScalingTable table;
  std::vector<double> xs, ys;
  for (size_t di = 0; di < d_values.size(); ++di) {
    const int d = d_values[di];
    net_template.input_dim = d;
    std::vector<double> lam(size_t(trials));
    int violations = 0;
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t s = seed + std::uint64_t(di) * 1000003u + std::uint64_t(t);
      const Dataset data =
          gen_wellscaled(n_samples, d, LabelKind::standard_normal, variant, s);
      Network net = init_network(net_template, s ^ 0x9e3779b97f4a7c15ull);
      TrainConfig tc = train_cfg;
      tc.seed = s;
      net = train(std::move(net), data.x, data.y, tc).network;
      const GramMatrix g = gram(net, KernelKind::depth_induced, data.columns());
      lam[size_t(t)] = smallest_eigenvalue(g.entries);
      if (lam[size_t(t)] < -1e-8 * g.entries.diagonal().maxCoeff()) ++violations;
    }
    ScalingRow row;
    row.d = d;
    row.mean_lambda_min = mean(lam);
    row.std_lambda_min = stddev(lam);
    row.psd_violations = violations;
    table.rows.push_back(row);
    xs.push_back(double(d));
    ys.push_back(row.mean_lambda_min);
  }
  table.fit = linear_fit(xs, ys);  // fit.defined false for a single d
  return table;
}

}  // namespace ntkd
