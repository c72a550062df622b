#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

namespace copreg {

/// Objective value at x; writes the gradient into *grad when grad != nullptr.
/// Returning a non-finite value (or throwing DomainError) marks x infeasible.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  /// Stop when max |g_i| <= grad_tol * max(1, |f|).
  double grad_tol{1e-8};
  /// Accepted as converged when progress stalls with max |g_i| below this
  /// (finite-difference noise floor).
  double stall_grad_tol{1e-5};
  int max_iter{500};
  int restarts{3};
  double restart_jitter{0.1};
  std::uint64_t seed{0x5EED};
  /// Request the gradient only at accepted line-search points; set when the
  /// gradient costs many objective values (finite differences).
  bool value_only_line_search{false};
};

struct OptimResult {
  Eigen::VectorXd x;
  double f{0.0};
  Eigen::VectorXd grad;
  int iterations{0};
  int evaluations{0};
  int restarts_used{0};
  bool converged{false};
  std::string message;
};

/// Quasi-Newton minimization with backtracking Armijo line search. An
/// optional initial inverse Hessian (e.g. from outer products of scores)
/// replaces the scaled identity.
OptimResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0, const OptimOptions& opts = {},
                          const Eigen::MatrixXd* init_inverse_hessian = nullptr);

/// Central-difference gradient of a value-only function.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double rel_step = 6e-6);

/// Symmetric Hessian from central differences of the gradient.
Eigen::MatrixXd fd_hessian(const Objective& objective, const Eigen::VectorXd& x, double rel_step = 1e-4);

/// Symmetric Hessian from central differences of values (for objectives whose
/// gradient is itself a finite difference).
Eigen::MatrixXd fd_hessian_values(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                  double rel_step = 1e-4);

/// Eigenvalue flooring to make a symmetric matrix positive semidefinite.
/// Sets *repaired when any eigenvalue was raised.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& m, double floor = 1e-10, bool* repaired = nullptr);

/// Inverse of a symmetric matrix that should be positive definite; falls
/// back to flooring eigenvalues of the input first when it is not.
Eigen::MatrixXd inverse_psd(const Eigen::MatrixXd& m, bool* repaired = nullptr);

}  // namespace copreg
