#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ntkd/errors.hpp"
#include "ntkd/linalg.hpp"
#include "ntkd/network.hpp"

namespace ntkd {

// Matrix-valued kernel block for one input pair, plus its trace.
struct KernelValue {
  Eigen::MatrixXd block;  // n_o x n_o
  double trace = 0.0;
};

inline KernelValue make_kernel_value(Eigen::MatrixXd block) {
  KernelValue v;
  v.trace = block.trace();
  v.block = std::move(block);
  return v;
}

struct DeltaMatrix {
  int kappa_prime = 1;
  Eigen::MatrixXd value;  // n_{k'*sep - 1} x n_o
};

enum class KernelKind { width_induced, depth_induced };

inline const char* to_string(KernelKind k) {
  return k == KernelKind::width_induced ? "ntk_w" : "ntk_d";
}

struct GramMatrix {
  int n = 0;
  Eigen::MatrixXd entries;  // n x n, trace-kernel values
};

namespace detail {

// Backward suffix accumulation of the shortcut back-products.
//
// For layer index i define S^i as the sum, over every shortcut layer at or
// after i, of the transposed scaled-weight/derivative chain from i to that
// layer, ended by the transposed all-ones output connection.  S obeys
//   S^i = (W^i/s_i)^T D^i (ones + S^{i+1})   at shortcut layers,
//   S^i = (W^i/s_i)^T D^i S^{i+1}            otherwise,
// so one sweep from the last layer down costs O(L) matrix products and
// yields every shortcut back-product at once.
inline std::vector<Eigen::MatrixXd> delta_stack(const Network& net,
                                                const ForwardTrace& tr) {
  const int L = net.depth();
  const int n_o = net.config.output_dim;
  std::vector<Eigen::MatrixXd> out(size_t(net.config.shortcuts));
  Eigen::MatrixXd suffix;  // S^{i+1}
  for (int i = L; i >= 1; --i) {
    Eigen::MatrixXd term =
        net.is_shortcut_layer(i)
            ? Eigen::MatrixXd::Ones(net.layer_out(i), n_o)
            : Eigen::MatrixXd::Zero(net.layer_out(i), n_o);
    if (suffix.size() > 0) term += suffix;
    term.array().colwise() *= tr.d_diag[size_t(i) - 1].array();
    suffix.noalias() =
        net.weights[size_t(i) - 1].transpose() * term / net.layer_scale(i);
    if (net.is_shortcut_layer(i))
      out[size_t(i / net.config.separation) - 1] = suffix;
  }
  return out;
}

}  // namespace detail

inline DeltaMatrix compute_delta(const Network& net, const ForwardTrace& tr,
                                 int kappa_prime) {
  if (kappa_prime < 1 || kappa_prime > net.config.shortcuts)
    throw index_error("compute_delta: kappa_prime " + std::to_string(kappa_prime) +
                      " outside 1.." + std::to_string(net.config.shortcuts));
  DeltaMatrix d;
  d.kappa_prime = kappa_prime;
  d.value = detail::delta_stack(net, tr)[size_t(kappa_prime) - 1];
  return d;
}

// Expanded (closed-form) depth kernel: sum over shortcut groups of
//   (1/M) <z_pre, z_pre'> * Delta(x)^T Delta(x').
inline KernelValue ntk_d_expanded(const Network& net, const ForwardTrace& tr_x,
                                  const ForwardTrace& tr_xp) {
  if (tr_x.z.size() != tr_xp.z.size() ||
      tr_x.z[0].size() != net.config.input_dim)
    throw contract_violation("ntk_d_expanded: traces do not match the network");
  const int n_o = net.config.output_dim;
  const double mass = net.shortcut_mass();
  const auto dx = detail::delta_stack(net, tr_x);
  const auto dxp = detail::delta_stack(net, tr_xp);
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_o, n_o);
  for (int k = 1; k <= net.config.shortcuts; ++k) {
    const int l = k * net.config.separation;
    const double zdot = tr_x.z[size_t(l) - 1].dot(tr_xp.z[size_t(l) - 1]);
    block.noalias() += (zdot / mass) * (dx[size_t(k) - 1].transpose() * dxp[size_t(k) - 1]);
  }
  return make_kernel_value(std::move(block));
}

namespace detail {

// F-chain sum for one shortcut group: D^l (ones + S^{l+1}) where the suffix
// runs over the later shortcut layers.  This is the bracket that multiplies
// each input coordinate in the stacked layer gradient.
inline Eigen::MatrixXd gradient_bracket(const Network& net, const ForwardTrace& tr,
                                        int l) {
  const int L = net.depth();
  const int n_o = net.config.output_dim;
  Eigen::MatrixXd suffix;
  for (int i = L; i > l; --i) {
    Eigen::MatrixXd term = net.is_shortcut_layer(i)
                               ? Eigen::MatrixXd::Ones(net.layer_out(i), n_o)
                               : Eigen::MatrixXd::Zero(net.layer_out(i), n_o);
    if (suffix.size() > 0) term += suffix;
    term.array().colwise() *= tr.d_diag[size_t(i) - 1].array();
    suffix.noalias() =
        net.weights[size_t(i) - 1].transpose() * term / net.layer_scale(i);
  }
  Eigen::MatrixXd bracket = Eigen::MatrixXd::Ones(net.layer_out(l), n_o);
  if (suffix.size() > 0) bracket += suffix;
  bracket.array().colwise() *= tr.d_diag[size_t(l) - 1].array();
  return bracket;  // n_l x n_o
}

// Stacked gradient of f with respect to W^l: vertical blocks over the input
// coordinate j, each block n_l x n_o, j-th block = c * z_j * bracket with
// c = 1 / (sqrt(M) * s_l).  Row-major stacking over j is the layout shared
// by every kernel form and by the finite-difference oracle.
inline Eigen::MatrixXd stacked_gradient(const Network& net, const ForwardTrace& tr,
                                        int l) {
  const Eigen::MatrixXd bracket = gradient_bracket(net, tr, l);
  const Eigen::VectorXd& zprev = tr.z[size_t(l) - 1];
  const int n_in = net.layer_in(l);
  const int n_l = net.layer_out(l);
  const double c = 1.0 / (std::sqrt(net.shortcut_mass()) * net.layer_scale(l));
  Eigen::MatrixXd stacked(std::int64_t(n_in) * n_l, net.config.output_dim);
  for (int j = 0; j < n_in; ++j)
    stacked.middleRows(std::int64_t(j) * n_l, n_l) = (c * zprev(j)) * bracket;
  return stacked;
}

}  // namespace detail

// Definition-form depth kernel: per shortcut layer, the stacked gradient is
// scaled block-wise by W^T (the block-diagonal matrix materialized
// implicitly, one block per input coordinate) and the two scaled gradients
// are contracted as A^T B.  Cross-checks the expanded form entrywise.
inline KernelValue ntk_d_definition(const Network& net, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& xp) {
  const ForwardTrace tr_x = forward(net, x);
  const ForwardTrace tr_xp = forward(net, xp);
  const int n_o = net.config.output_dim;
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_o, n_o);
  for (int k = 1; k <= net.config.shortcuts; ++k) {
    const int l = k * net.config.separation;
    const Eigen::MatrixXd gx = detail::stacked_gradient(net, tr_x, l);
    const Eigen::MatrixXd gxp = detail::stacked_gradient(net, tr_xp, l);
    const Eigen::MatrixXd& w = net.weights[size_t(l) - 1];
    const int n_in = net.layer_in(l);
    const int n_l = net.layer_out(l);
    Eigen::MatrixXd ax(std::int64_t(n_in) * w.cols(), n_o);
    Eigen::MatrixXd axp(std::int64_t(n_in) * w.cols(), n_o);
    for (int j = 0; j < n_in; ++j) {
      ax.middleRows(std::int64_t(j) * w.cols(), w.cols()).noalias() =
          w.transpose() * gx.middleRows(std::int64_t(j) * n_l, n_l);
      axp.middleRows(std::int64_t(j) * w.cols(), w.cols()).noalias() =
          w.transpose() * gxp.middleRows(std::int64_t(j) * n_l, n_l);
    }
    block.noalias() += ax.transpose() * axp;
  }
  return make_kernel_value(std::move(block));
}

namespace detail {

// Reverse accumulation of B^l = D^l G^l where G^l is the adjoint of the
// output with respect to z^l.  The layer contribution to the width kernel
// factors as (<z^{l-1}, z'^{l-1}> / s_l^2) * B^l(x)^T B^l(x').
inline std::vector<Eigen::MatrixXd> backward_factors(const Network& net,
                                                     const ForwardTrace& tr) {
  const int L = net.depth();
  const int n_o = net.config.output_dim;
  const double inv_root_mass = 1.0 / std::sqrt(net.shortcut_mass());
  std::vector<Eigen::MatrixXd> factors(size_t(L));
  Eigen::MatrixXd g;  // adjoint for layer l+1
  for (int l = L; l >= 1; --l) {
    Eigen::MatrixXd t = net.is_shortcut_layer(l)
                            ? Eigen::MatrixXd::Constant(net.layer_out(l), n_o,
                                                        inv_root_mass)
                            : Eigen::MatrixXd::Zero(net.layer_out(l), n_o);
    if (g.size() > 0) {
      Eigen::MatrixXd dg = g;
      dg.array().colwise() *= tr.d_diag[size_t(l)].array();
      t.noalias() += net.weights[size_t(l)].transpose() * dg / net.layer_scale(l + 1);
    }
    g = std::move(t);
    factors[size_t(l) - 1] = g;
    factors[size_t(l) - 1].array().colwise() *= tr.d_diag[size_t(l) - 1].array();
  }
  return factors;
}

}  // namespace detail

// Width kernel: sum over all layers of the gradient inner products,
// via reverse-mode accumulation through the forward map.
inline KernelValue ntk_w(const Network& net, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& xp) {
  const ForwardTrace tr_x = forward(net, x);
  const ForwardTrace tr_xp = forward(net, xp);
  const auto bx = detail::backward_factors(net, tr_x);
  const auto bxp = detail::backward_factors(net, tr_xp);
  const int n_o = net.config.output_dim;
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_o, n_o);
  for (int l = 1; l <= net.depth(); ++l) {
    const double s = net.layer_scale(l);
    const double zdot =
        tr_x.z[size_t(l) - 1].dot(tr_xp.z[size_t(l) - 1]) / (s * s);
    block.noalias() += zdot * (bx[size_t(l) - 1].transpose() * bxp[size_t(l) - 1]);
  }
  return make_kernel_value(std::move(block));
}

// Explicit per-layer Jacobian of f in the shared stacked layout; used by the
// width kernel tests and gradient checks.
inline Eigen::MatrixXd jacobian_stacked(const Network& net, const ForwardTrace& tr,
                                        int layer) {
  if (layer < 1 || layer > net.depth())
    throw index_error("jacobian_stacked: layer out of range");
  const auto factors = detail::backward_factors(net, tr);
  const Eigen::MatrixXd& b = factors[size_t(layer) - 1];
  const Eigen::VectorXd& zprev = tr.z[size_t(layer) - 1];
  const int n_in = net.layer_in(layer);
  const int n_l = net.layer_out(layer);
  Eigen::MatrixXd out(std::int64_t(n_in) * n_l, net.config.output_dim);
  const double s = net.layer_scale(layer);
  for (int j = 0; j < n_in; ++j)
    out.middleRows(std::int64_t(j) * n_l, n_l) = (zprev(j) / s) * b;
  return out;
}

// Per-sample cache so Gram and cross-kernel assembly does one forward and
// one backward sweep per sample instead of per pair.
class TraceKernelSet {
 public:
  TraceKernelSet(const Network& net, KernelKind kind,
                 const std::vector<Eigen::VectorXd>& samples)
      : net_(&net), kind_(kind) {
    z_.reserve(samples.size());
    factors_.reserve(samples.size());
    for (const auto& x : samples) {
      ForwardTrace tr = forward(net, x);
      if (kind == KernelKind::depth_induced) {
        factors_.push_back(detail::delta_stack(net, tr));
        std::vector<Eigen::VectorXd> zpre(size_t(net.config.shortcuts));
        for (int k = 1; k <= net.config.shortcuts; ++k)
          zpre[size_t(k) - 1] = tr.z[size_t(k) * net.config.separation - 1];
        z_.push_back(std::move(zpre));
      } else {
        factors_.push_back(detail::backward_factors(net, tr));
        std::vector<Eigen::VectorXd> zpre(size_t(net.depth()));
        for (int l = 1; l <= net.depth(); ++l)
          zpre[size_t(l) - 1] = tr.z[size_t(l) - 1];
        z_.push_back(std::move(zpre));
      }
    }
  }

  int size() const { return int(z_.size()); }

  // trace of the kernel block between sample i of this set and j of other
  double trace(int i, const TraceKernelSet& other, int j) const {
    const Network& net = *net_;
    double value = 0.0;
    if (kind_ == KernelKind::depth_induced) {
      const double mass = net.shortcut_mass();
      for (size_t k = 0; k < factors_[size_t(i)].size(); ++k) {
        const double zdot = z_[size_t(i)][k].dot(other.z_[size_t(j)][k]);
        const double fdot =
            factors_[size_t(i)][k].cwiseProduct(other.factors_[size_t(j)][k]).sum();
        value += zdot * fdot / mass;
      }
    } else {
      for (int l = 1; l <= net.depth(); ++l) {
        const double s = net.layer_scale(l);
        const double zdot =
            z_[size_t(i)][size_t(l) - 1].dot(other.z_[size_t(j)][size_t(l) - 1]) / (s * s);
        value += zdot * factors_[size_t(i)][size_t(l) - 1]
                            .cwiseProduct(other.factors_[size_t(j)][size_t(l) - 1])
                            .sum();
      }
    }
    return value;
  }

 private:
  const Network* net_;
  KernelKind kind_;
  // depth kernel: z before each shortcut layer + Delta stack
  // width kernel: z before each layer + backward factors B^l
  std::vector<std::vector<Eigen::VectorXd>> z_;
  std::vector<std::vector<Eigen::MatrixXd>> factors_;
};

// N x N symmetric matrix of pairwise trace-kernel values.  Upper triangle is
// computed and mirrored; forward traces are shared across pairs.
inline GramMatrix gram(const Network& net, KernelKind kind,
                       const std::vector<Eigen::VectorXd>& samples) {
  if (samples.empty()) throw config_error("gram: need at least one sample");
  const TraceKernelSet set(net, kind, samples);
  const int n = set.size();
  GramMatrix g;
  g.n = n;
  g.entries.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = set.trace(i, set, j);
      if (!std::isfinite(v))
        throw numeric_error("gram: non-finite kernel value for pair (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      g.entries(i, j) = v;
      g.entries(j, i) = v;
    }
  }
  return g;
}

inline Eigen::MatrixXd cross_gram(const Network& net, KernelKind kind,
                                  const std::vector<Eigen::VectorXd>& rows,
                                  const std::vector<Eigen::VectorXd>& cols) {
  const TraceKernelSet a(net, kind, rows);
  const TraceKernelSet b(net, kind, cols);
  Eigen::MatrixXd m(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) {
      const double v = a.trace(i, b, j);
      if (!std::isfinite(v))
        throw numeric_error("cross_gram: non-finite kernel value for pair (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      m(i, j) = v;
    }
  return m;
}

struct AngleStats {
  std::vector<double> angles;   // one per unordered pair i<j
  std::vector<int> histogram;   // over [0, pi/2]
  double bin_width = 0.0;
};

// Pairwise kernel-space angles arccos(g_ij / sqrt(g_ii g_jj)), histogrammed
// over [0, pi/2]; arguments clamped to [-1, 1].
inline AngleStats angle_stats(const GramMatrix& g, int bins) {
  if (bins <= 0) throw config_error("angle_stats: bins must be positive");
  for (int i = 0; i < g.n; ++i)
    if (!(g.entries(i, i) > 0.0))
      throw numeric_error("angle_stats: degenerate kernel, non-positive diagonal at " +
                          std::to_string(i));
  AngleStats st;
  st.bin_width = (std::numbers::pi / 2) / bins;
  st.histogram.assign(size_t(bins), 0);
  st.angles.reserve(size_t(g.n) * (g.n - 1) / 2);
  for (int i = 0; i < g.n; ++i) {
    for (int j = i + 1; j < g.n; ++j) {
      double c = g.entries(i, j) / std::sqrt(g.entries(i, i) * g.entries(j, j));
      c = std::min(1.0, std::max(-1.0, c));
      const double angle = std::acos(c);
      st.angles.push_back(angle);
      int bin = int(std::min(angle, std::numbers::pi / 2) / st.bin_width);
      if (bin >= bins) bin = bins - 1;
      ++st.histogram[size_t(bin)];
    }
  }
  return st;
}

}  // namespace ntkd
