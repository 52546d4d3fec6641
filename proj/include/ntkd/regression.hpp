#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ntkd/errors.hpp"

namespace ntkd {

struct RegressionResult {
  Eigen::MatrixXd mean;        // n_test x label_dim
  Eigen::MatrixXd covariance;  // n_test x n_test
  double jitter_used = 0.0;
};

// Gaussian-process regression over precomputed kernel blocks:
//   mean = Kc (Kt + jI)^-1 Y,   cov = K* - Kc (Kt + jI)^-1 Kc^T.
// The factorization jitter starts at `jitter` and escalates tenfold (at most
// six times) when the Cholesky factorization fails; a zero starting jitter
// escalates from 1e-8 * mean diagonal.
inline RegressionResult gp_regress(const Eigen::MatrixXd& k_train,
                                   const Eigen::MatrixXd& k_cross,
                                   const Eigen::MatrixXd& k_test,
                                   const Eigen::MatrixXd& y, double jitter = 0.0) {
  const Eigen::Index n = k_train.rows();
  if (k_train.cols() != n) throw shape_error("gp_regress: K_train must be square");
  if (k_cross.cols() != n) throw shape_error("gp_regress: K_cross has wrong column count");
  if (k_test.rows() != k_cross.rows() || k_test.cols() != k_cross.rows())
    throw shape_error("gp_regress: K_test shape does not match K_cross");
  if (y.rows() != n) throw shape_error("gp_regress: Y row count must equal N");
  if (jitter < 0.0) throw config_error("gp_regress: jitter must be non-negative");
  if ((k_train - k_train.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(k_train.cwiseAbs().maxCoeff(), 1e-300))
    throw contract_violation("gp_regress: K_train is not symmetric");

  const double base = 1e-8 * std::max(k_train.diagonal().mean(), 1e-300);
  double j = jitter;
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (int attempt = 0; attempt <= 6; ++attempt) {
    llt.compute(k_train + j * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
    j = (j == 0.0) ? base : j * 10.0;
  }
  if (!ok)
    throw numeric_error("gp_regress: kernel matrix is singular even after "
                        "jitter escalation (last jitter " + std::to_string(j) + ")");

  RegressionResult r;
  r.jitter_used = j;
  r.mean = k_cross * llt.solve(y);
  Eigen::MatrixXd cov = k_test - k_cross * llt.solve(k_cross.transpose());
  r.covariance = 0.5 * (cov + cov.transpose());
  return r;
}

struct Classification {
  std::vector<int> predicted;
  double accuracy = 0.0;
};

// Argmax over each predicted-mean row; ties go to the lowest index.
inline Classification classify(const RegressionResult& result,
                               const Eigen::MatrixXd& truth_one_hot) {
  if (truth_one_hot.rows() != result.mean.rows() ||
      truth_one_hot.cols() != result.mean.cols())
    throw shape_error("classify: truth shape does not match predictions");
  Classification c;
  c.predicted.reserve(size_t(result.mean.rows()));
  int correct = 0;
  for (Eigen::Index i = 0; i < result.mean.rows(); ++i) {
    int arg = 0;
    for (Eigen::Index k = 1; k < result.mean.cols(); ++k)
      if (result.mean(i, k) > result.mean(i, arg)) arg = int(k);
    c.predicted.push_back(arg);
    int truth = 0;
    truth_one_hot.row(i).maxCoeff(&truth);
    if (arg == truth) ++correct;
  }
  c.accuracy = result.mean.rows() > 0 ? double(correct) / double(result.mean.rows()) : 0.0;
  return c;
}

}  // namespace ntkd
