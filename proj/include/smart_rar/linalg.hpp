#pragma once

#include <Eigen/Dense>

#include "smart_rar/errors.hpp"
#include "smart_rar/rng.hpp"

namespace smart_rar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct OlsFit {
  VectorXd beta;
  MatrixXd xtx_inverse;
  double sigma2 = 0.0;  // mean squared residual, 1/n normalization
  int n = 0;
};

/// Ordinary least squares via the normal equations and an unpivoted
/// Cholesky factorization.  A diagonal pivot below rel_tol times the
/// largest Gram diagonal is treated as rank deficiency and raises
/// SingularFitError (with the offending column and pivot ratio) rather
/// than silently pseudo-inverting.
OlsFit ols_fit(const MatrixXd& X, const VectorXd& y, double rel_tol = 1e-10);

/// Factor A with A*A^T equal to the symmetric matrix S after eigenvalue
/// repair: eigenvalues are floored at floor_scale * trace(S) so that
/// nearly-indefinite sandwich matrices still factor.
MatrixXd psd_sqrt_floor(const MatrixXd& S, double floor_scale = 1e-12);

/// B x m matrix of draws from N(mean, A*A^T) with A from psd_sqrt_floor.
MatrixXd mvn_sample(const VectorXd& mean, const MatrixXd& sqrt_factor, int n_draws, Rng& rng);

}  // namespace smart_rar
