#ifndef FRK_MODEL_HPP
#define FRK_MODEL_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "frk/basis.hpp"
#include "frk/numerics.hpp"

namespace frk {

/// Observed data: locations, design matrix, response, and the known diagonal
/// weight functions for fine-scale and measurement-error variance.
struct Dataset {
  Points locations;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd vdelta;
  Eigen::VectorXd veps;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    FRK_REQUIRE(n() > 0, DataError, "dataset is empty");
    FRK_REQUIRE(locations.rows() == n() && X.rows() == n() &&
                    vdelta.size() == n() && veps.size() == n(),
                DimensionError, "dataset field lengths are inconsistent");
    FRK_REQUIRE((vdelta.array() > 0.0).all() && (veps.array() > 0.0).all(),
                DataError, "weight functions must be strictly positive");
  }
};

/// Parameter state of the spatial mixed effects model. The measurement-error
/// variance is fixed at construction and never estimated; it may be zero only
/// if the fine-scale component keeps the covariance diagonal positive.
class SMEParams {
public:
  SMEParams(Eigen::MatrixXd K, double sigma_delta2, double sigma_eps2,
            double b, Eigen::VectorXd beta)
      : K(std::move(K)), sigma_delta2(sigma_delta2), b(b),
        beta(std::move(beta)), sigma_eps2_(sigma_eps2) {
    FRK_REQUIRE(this->K.rows() == this->K.cols(), DimensionError,
                "K must be square");
    FRK_REQUIRE(sigma_delta2 >= 0.0, DataError, "sigma_delta2 must be >= 0");
    FRK_REQUIRE(sigma_eps2 >= 0.0, DataError, "sigma_eps2 must be >= 0");
    FRK_REQUIRE(b > 0.0, DataError, "bandwidth constant b must be > 0");
  }

  Eigen::MatrixXd K;
  double sigma_delta2;
  double b;
  Eigen::VectorXd beta;

  double sigma_eps2() const { return sigma_eps2_; }

  SMEParams with(Eigen::MatrixXd k_new, double sd2_new) const {
    SMEParams out(*this);
    out.K = std::move(k_new);
    out.sigma_delta2 = sd2_new;
    return out;
  }

  SMEParams with_b(double b_new) const {
    SMEParams out(*this);
    FRK_REQUIRE(b_new > 0.0, DataError, "bandwidth constant b must be > 0");
    out.b = b_new;
    return out;
  }

private:
  double sigma_eps2_;
};

/// A dataset bound to its knot layout; the unit every estimation and
/// prediction routine operates on.
struct SmeModel {
  Dataset data;
  KnotLayout layout;

  void validate() const {
    data.validate();
    layout.validate();
    FRK_REQUIRE(data.locations.cols() == layout.knots.cols(), DimensionError,
                "location/knot dimensionality mismatch");
  }
};

/// Sigma = S K S' + sigma_delta2 V_delta + sigma_eps2 V_eps, with S rebuilt
/// from the current bandwidth constant.
inline LowRankCov assemble_cov(const SmeModel& model, const SMEParams& params) {
  LowRankCov cov;
  cov.S = build_basis_matrix(model.data.locations, BasisConfig{params.b, model.layout});
  cov.K = params.K;
  cov.dvec = params.sigma_delta2 * model.data.vdelta +
             params.sigma_eps2() * model.data.veps;
  FRK_REQUIRE((cov.dvec.array() > 0.0).all(), DataError,
              "sigma_delta2 V_delta + sigma_eps2 V_eps must be positive");
  return cov;
}

namespace detail {

/// One fully evaluated parameter state: factorization, GLS fit, residual and
/// restricted log-likelihood. Shared by estimation and prediction so each
/// state is factorized exactly once.
struct Evaluated {
  LowRankCov cov;
  CovFactorization f;
  GlsResult gls;
  Eigen::VectorXd resid;
  double rloglik;
};

inline double restricted_loglik_from(const CovFactorization& f,
                                     const GlsResult& gls,
                                     const Eigen::VectorXd& resid) {
  Eigen::VectorXd si_r = f.solve(resid);
  double quad = resid.dot(si_r);
  return -0.5 * quad - 0.5 * f.sum_log_d() - sum_log_diag(f.chol_k()) -
         sum_log_diag(f.chol_capacitance()) - sum_log_diag(gls.chol_xtsix);
}

inline Evaluated evaluate(const SmeModel& model, const SMEParams& params) {
  LowRankCov cov = assemble_cov(model, params);
  CovFactorization f = factorize(cov);
  GlsResult gls = gls_beta(model.data.X, model.data.y, f);
  Eigen::VectorXd resid = model.data.y - model.data.X * gls.beta;
  double rll = restricted_loglik_from(f, gls, resid);
  return Evaluated{std::move(cov), std::move(f), std::move(gls),
                   std::move(resid), rll};
}

}  // namespace detail

/// Restricted log-likelihood with beta profiled out by GLS. Additive
/// constants independent of the parameters are dropped throughout, so values
/// are comparable across parameter states of one dataset only.
inline double restricted_loglik(const SmeModel& model, const SMEParams& params) {
  return detail::evaluate(model, params).rloglik;
}

/// Per-cycle cost bookkeeping for the alternating fit: how many candidate
/// (EM refit + likelihood) evaluations each cycle spent.
struct CycleCost {
  enum class Phase { Burnin, Golden, Quadratic } phase;
  int evals;
};

struct FitResult {
  explicit FitResult(SMEParams p) : params(std::move(p)) {}

  SMEParams params;
  std::vector<std::pair<int, double>> loglik_trace;  // accepted states
  std::vector<double> b_trace;                       // every evaluated b
  bool converged = false;
  int iterations = 0;
  int ridge_events = 0;
  std::vector<CycleCost> cycle_costs;
  bool reduced_to_em = false;  // degenerate bracket shortcut taken
};

}  // namespace frk

#endif  // FRK_MODEL_HPP
