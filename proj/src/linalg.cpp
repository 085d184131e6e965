#include "smart_rar/linalg.hpp"

#include <cmath>
#include <string>

namespace smart_rar {

namespace {

// Lower Cholesky of G with a relative pivot check.  Throws instead of
// continuing with a semi-definite factor.
MatrixXd cholesky_checked(const MatrixXd& G, double rel_tol) {
  const int p = static_cast<int>(G.rows());
  const double max_diag = G.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) {
    throw SingularFitError("normal equations: Gram matrix has no positive diagonal");
  }
  MatrixXd L = MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    double d = G(j, j);
    for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d <= rel_tol * max_diag) {
      throw SingularFitError("normal equations: rank-deficient design matrix, column " +
                             std::to_string(j) + ", pivot ratio " +
                             std::to_string(d / max_diag));
    }
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < p; ++i) {
      double s = G(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

}  // namespace

OlsFit ols_fit(const MatrixXd& X, const VectorXd& y, double rel_tol) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n < p) throw SingularFitError("normal equations: fewer rows than parameters");
  const MatrixXd G = X.transpose() * X;
  const VectorXd b = X.transpose() * y;
  const MatrixXd L = cholesky_checked(G, rel_tol);
  OlsFit fit;
  fit.n = n;
  fit.beta = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(b));
  const MatrixXd Linv = L.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(p, p));
  fit.xtx_inverse = Linv.transpose() * Linv;
  fit.sigma2 = (y - X * fit.beta).squaredNorm() / static_cast<double>(n);
  return fit;
}

MatrixXd psd_sqrt_floor(const MatrixXd& S, double floor_scale) {
  if (!S.allFinite()) throw InferenceError("covariance has non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw InferenceError("eigendecomposition failed");
  const double floor = floor_scale * std::max(S.trace(), 0.0);
  VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) lam[i] = std::sqrt(std::max(lam[i], floor));
  return es.eigenvectors() * lam.asDiagonal();
}

MatrixXd mvn_sample(const VectorXd& mean, const MatrixXd& sqrt_factor, int n_draws, Rng& rng) {
  const int m = static_cast<int>(mean.size());
  MatrixXd out(n_draws, m);
  VectorXd z(m);
  for (int b = 0; b < n_draws; ++b) {
    for (int j = 0; j < m; ++j) z[j] = rng.normal();
    out.row(b) = (mean + sqrt_factor * z).transpose();
  }
  return out;
}

}  // namespace smart_rar
