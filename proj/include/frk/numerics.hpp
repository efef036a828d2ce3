#ifndef FRK_NUMERICS_HPP
#define FRK_NUMERICS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <utility>

#include "frk/basis.hpp"
#include "frk/common.hpp"

namespace frk {

/// Diagonal-plus-low-rank covariance  Sigma = S K S' + D  with positive
/// diagonal D. All solves and determinants go through m-by-m factors; no
/// n-by-n matrix is ever assembled (the capacitance is m-by-m by
/// construction, which is the whole point of this module).
struct LowRankCov {
  BasisMatrix S;      // n x m
  Eigen::MatrixXd K;  // m x m, SPD
  Eigen::VectorXd dvec;

  Eigen::Index n() const { return S.rows(); }
  Eigen::Index m() const { return S.cols(); }

  void validate() const {
    FRK_REQUIRE(K.rows() == K.cols(), DimensionError, "K must be square");
    FRK_REQUIRE(K.rows() == S.cols(), DimensionError,
                "K order " << K.rows() << " does not match basis columns "
                           << S.cols());
    FRK_REQUIRE(dvec.size() == S.rows(), DimensionError,
                "diagonal length " << dvec.size() << " does not match rows "
                                   << S.rows());
    FRK_REQUIRE((dvec.array() > 0.0).all(), DataError,
                "covariance diagonal must be strictly positive");
    FRK_REQUIRE(K.isApprox(K.transpose(), 1e-10), DataError,
                "K must be symmetric");
  }
};

namespace detail {

/// Plain lower Cholesky that reports the failing pivot by name. Pivots are
/// tested against a threshold relative to the diagonal scale, so exact rank
/// deficiency is caught even when cancellation leaves roundoff residue.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a,
                                      const std::string& name) {
  const Eigen::Index n = a.rows();
  const double scale = n > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double threshold = 1e-13 * std::max(scale, 1e-300);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > threshold) || !std::isfinite(d))
      throw NotPositiveDefinite(name, static_cast<int>(j));
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

inline double sum_log_diag(const Eigen::MatrixXd& l) {
  return l.diagonal().array().log().sum();
}

/// Solve (L L') X = B given the lower factor L.
inline Eigen::MatrixXd chol_solve(const Eigen::MatrixXd& l,
                                  Eigen::MatrixXd b) {
  l.triangularView<Eigen::Lower>().solveInPlace(b);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(b);
  return b;
}

/// In-place (A + A')/2 through a temporary; A = A + A.transpose() aliases.
inline void symmetrize(Eigen::MatrixXd& a) {
  Eigen::MatrixXd t = a.transpose();
  a = 0.5 * (a + t);
}

}  // namespace detail

/// Reusable factorization of a LowRankCov: Cholesky factors of K and of the
/// capacitance K^-1 + S' D^-1 S, plus the cached skinny product D^-1 S.
class CovFactorization {
public:
  CovFactorization(const LowRankCov& cov)
      : dinv_(cov.dvec.cwiseInverse()),
        dinv_s_(dinv_.asDiagonal() * Eigen::MatrixXd(cov.S)),
        sum_log_d_(cov.dvec.array().log().sum()) {
    cov.validate();
    chol_k_ = detail::cholesky_lower(cov.K, "K");
    // K^-1 through triangular solves against the factor, never an explicit
    // inverse.
    Eigen::MatrixXd k_inv = detail::chol_solve(
        chol_k_, Eigen::MatrixXd::Identity(cov.m(), cov.m()));
    Eigen::MatrixXd cap = k_inv + cov.S.transpose() * dinv_s_;
    detail::symmetrize(cap);
    chol_cap_ = detail::cholesky_lower(cap, "K^-1 + S' D^-1 S");
  }

  Eigen::Index n() const { return dinv_.size(); }
  Eigen::Index m() const { return chol_k_.rows(); }

  const Eigen::MatrixXd& chol_k() const { return chol_k_; }          // C
  const Eigen::MatrixXd& chol_capacitance() const { return chol_cap_; }  // C2
  const Eigen::MatrixXd& dinv_s() const { return dinv_s_; }
  const Eigen::VectorXd& dinv() const { return dinv_; }
  double sum_log_d() const { return sum_log_d_; }

  /// Sigma^-1 * rhs by the Woodbury identity; O(n q m) with m-by-m solves.
  template <class Derived>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& rhs_expr) const {
    Eigen::MatrixXd rhs = rhs_expr;
    FRK_REQUIRE(rhs.rows() == n(), DimensionError,
                "inverse apply: rhs has " << rhs.rows() << " rows, expected "
                                          << n());
    Eigen::MatrixXd t = dinv_.asDiagonal() * rhs;
    Eigen::MatrixXd v = detail::chol_solve(chol_cap_, dinv_s_.transpose() * rhs);
    t.noalias() -= dinv_s_ * v;
    return t;
  }

  /// log|Sigma| = log|D| + 2 log|C| + 2 log|C2|, all from factor diagonals.
  double logdet() const {
    return sum_log_d_ + 2.0 * detail::sum_log_diag(chol_k_) +
           2.0 * detail::sum_log_diag(chol_cap_);
  }

  /// diag(Sigma^-1), needed for trace terms; O(n m^2).
  Eigen::VectorXd inverse_diagonal() const {
    Eigen::MatrixXd q = dinv_s_.transpose();  // m x n
    chol_cap_.triangularView<Eigen::Lower>().solveInPlace(q);
    return dinv_ - q.colwise().squaredNorm().transpose();
  }

private:
  Eigen::VectorXd dinv_;
  Eigen::MatrixXd dinv_s_;  // D^-1 S, n x m
  double sum_log_d_;
  Eigen::MatrixXd chol_k_;
  Eigen::MatrixXd chol_cap_;
};

inline CovFactorization factorize(const LowRankCov& cov) {
  return CovFactorization(cov);
}

struct GlsResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd chol_xtsix;   // C3, lower Cholesky factor of X' Sigma^-1 X
  Eigen::MatrixXd sigma_inv_x;  // Sigma^-1 X, n x p (reused by prediction)
};

/// Generalized least squares through the factorization.
inline GlsResult gls_beta(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const CovFactorization& f) {
  FRK_REQUIRE(x.rows() == f.n() && y.size() == f.n(), DimensionError,
              "gls_beta: design/response rows do not match covariance order");
  GlsResult out;
  out.sigma_inv_x = f.solve(x);
  Eigen::MatrixXd xtsix = x.transpose() * out.sigma_inv_x;
  detail::symmetrize(xtsix);
  out.chol_xtsix = detail::cholesky_lower(xtsix, "X' Sigma^-1 X");
  out.beta = detail::chol_solve(out.chol_xtsix, out.sigma_inv_x.transpose() * y);
  return out;
}

}  // namespace frk

#endif  // FRK_NUMERICS_HPP
