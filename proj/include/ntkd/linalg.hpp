#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ntkd/errors.hpp"

namespace ntkd {

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// Smallest eigenvalue of a symmetric matrix.  Dense solve up to 2048;
// beyond that a shifted power iteration on (c*I - M) with c from the
// Gershgorin row bound, accurate to ~1e-8 * max|entry|.
inline double smallest_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols())
    throw contract_violation("smallest_eigenvalue: matrix is not square");
  if (!is_symmetric(m))
    throw contract_violation("smallest_eigenvalue: matrix is not symmetric");
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  if (n <= 2048) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }
  // shift so the smallest eigenvalue of M becomes the largest of c*I - M
  const double c = m.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  const double tol = 1e-8 * std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  double mu = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd w = c * v - m * v;
    const double norm = w.norm();
    if (norm == 0.0) return c;  // v is an exact eigenvector of eigenvalue c
    w /= norm;
    const double mu_next = w.dot(c * w - m * w);
    if (std::abs(mu_next - mu) <= tol && it > 2) {
      mu = mu_next;
      break;
    }
    mu = mu_next;
    v.swap(w);
  }
  return c - mu;
}

// Largest singular value via power iteration on m^T m.  Deterministic
// all-ones start vector, relative tolerance 1e-10, at most 10000 rounds.
inline double largest_singular_value(const Eigen::MatrixXd& m) {
  if (!m.allFinite())
    throw contract_violation("largest_singular_value: non-finite entries");
  if (m.size() == 0) return 0.0;
  const Eigen::Index cols = m.cols();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(cols) / std::sqrt(double(cols));
  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = m.transpose() * (m * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;  // m v = 0 exactly
    const double sigma_next = std::sqrt(v.dot(w));  // Rayleigh quotient = |m v|^2
    w /= norm;
    if (it > 0 && std::abs(sigma_next - sigma) <= 1e-10 * sigma_next)
      return sigma_next;
    sigma = sigma_next;
    v.swap(w);
  }
  throw iteration_limit_error(
      "largest_singular_value: power iteration did not converge in 10000 "
      "iterations; last estimate " + std::to_string(sigma),
      sigma);
}

}  // namespace ntkd
