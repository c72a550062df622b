#pragma once

// Likelihood objectives behind the GLMM and GJRM fitters, exposed for
// derivative checks. Both return the mean negative log likelihood.

#include <Eigen/Dense>
#include <cstddef>

#include "copreg/copulas.hpp"
#include "copreg/distributions.hpp"

namespace copreg::detail {

/// x = (beta1, beta2, log_sigma[1, 2], log_re_sd).
double glmm_objective(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, bool two_sigmas,
                      std::size_t quad_points, const Eigen::VectorXd& x, Eigen::VectorXd* grad);

/// x = (beta1, beta2, log_sigma1, log_sigma2, copula_z[, copula_df_z]).
double gjrm_objective(const LongitudinalSample& d, ResponseFamily f1, ResponseFamily f2, LinkFunction link,
                      CopulaFamily copula, int rotation, const Eigen::VectorXd& x, Eigen::VectorXd* grad);

}  // namespace copreg::detail
