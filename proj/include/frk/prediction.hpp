#ifndef FRK_PREDICTION_HPP
#define FRK_PREDICTION_HPP

#include <Eigen/Dense>
#include <cstring>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "frk/model.hpp"

namespace frk {

/// Targets for kriging. `overlap[i]` lists the observed rows whose
/// coordinates coincide with target i (the indicator part of the
/// cross-covariance); it is empty for fresh locations.
struct PredictionRequest {
  Points targets;
  Eigen::MatrixXd X0;
  Eigen::VectorXd vdelta0;
  std::vector<std::vector<int>> overlap;
  Eigen::Index batch = 4096;
  bool snapped = false;  // overlap built by radius snapping, not equality

  Eigen::Index size() const { return targets.rows(); }

  void validate(const Dataset& data) const {
    FRK_REQUIRE(size() > 0, DataError, "prediction request has no targets");
    FRK_REQUIRE(X0.rows() == size() && vdelta0.size() == size() &&
                    static_cast<Eigen::Index>(overlap.size()) == size(),
                DimensionError, "prediction request field lengths inconsistent");
    FRK_REQUIRE(X0.cols() == data.X.cols(), DimensionError,
                "target design matrix has " << X0.cols()
                                            << " columns, observed has "
                                            << data.X.cols());
    FRK_REQUIRE((vdelta0.array() > 0.0).all(), DataError,
                "target fine-scale weights must be positive");
    FRK_REQUIRE(batch >= 1, DataError, "batch size must be >= 1");
    for (Eigen::Index i = 0; i < size(); ++i) {
      for (int j : overlap[static_cast<std::size_t>(i)]) {
        FRK_REQUIRE(j >= 0 && j < data.n(), DataError,
                    "overlap index " << j << " out of range");
        if (!snapped)
          FRK_REQUIRE(targets.row(i) == data.locations.row(j), DataError,
                      "overlap map inconsistent: target " << i
                          << " does not coincide with observed row " << j);
      }
    }
  }
};

namespace detail {

inline std::string coord_key(const Eigen::RowVectorXd& row) {
  std::string key(static_cast<std::size_t>(row.size()) * sizeof(double), '\0');
  std::memcpy(key.data(), row.data(), key.size());
  return key;
}

}  // namespace detail

/// Build a request, matching targets to observed rows by exact (bitwise)
/// coordinate equality, or within `snap_radius` when it is positive.
inline PredictionRequest make_request(const Dataset& data, Points targets,
                                      Eigen::MatrixXd x0,
                                      Eigen::VectorXd vdelta0,
                                      double snap_radius = -1.0,
                                      const Metric& metric = Metric::euclidean()) {
  PredictionRequest req;
  req.targets = std::move(targets);
  req.X0 = std::move(x0);
  req.vdelta0 = std::move(vdelta0);
  req.overlap.resize(static_cast<std::size_t>(req.targets.rows()));

  std::unordered_map<std::string, std::vector<int>> index;
  for (Eigen::Index j = 0; j < data.n(); ++j)
    index[detail::coord_key(data.locations.row(j))].push_back(
        static_cast<int>(j));

  for (Eigen::Index i = 0; i < req.targets.rows(); ++i) {
    auto it = index.find(detail::coord_key(req.targets.row(i)));
    if (it != index.end()) {
      req.overlap[static_cast<std::size_t>(i)] = it->second;
    } else if (snap_radius > 0.0) {
      int best = -1;
      double dmin = snap_radius;
      for (Eigen::Index j = 0; j < data.n(); ++j) {
        double d = distance(req.targets.row(i), data.locations.row(j), metric);
        if (d <= dmin) {
          dmin = d;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) {
        req.overlap[static_cast<std::size_t>(i)] = {best};
        req.snapped = true;
      }
    }
  }
  req.validate(data);
  return req;
}

/// Cross-covariance between targets and observations held in factored form:
/// A K S' plus the fine-scale indicator part. Never densified here.
struct CrossCov {
  BasisMatrix A;               // targets x knots
  Eigen::VectorXd delta_cov;   // sigma_delta2 * vdelta0 per target
  const std::vector<std::vector<int>>* overlap;

  /// Dense row i (length n); for small instances and tests only.
  Eigen::VectorXd row_dense(Eigen::Index i, const BasisMatrix& s,
                            const Eigen::MatrixXd& k) const {
    Eigen::VectorXd arow = Eigen::VectorXd::Zero(A.cols());
    for (BasisMatrix::InnerIterator it(A, i); it; ++it)
      arow(it.col()) = it.value();
    Eigen::VectorXd out = Eigen::MatrixXd(s) * (k * arow);
    for (int j : (*overlap)[static_cast<std::size_t>(i)])
      out(j) += delta_cov(i);
    return out;
  }
};

inline CrossCov cross_cov(const SmeModel& model, const SMEParams& params,
                          const PredictionRequest& request) {
  request.validate(model.data);
  CrossCov cc;
  cc.A = build_basis_matrix(request.targets,
                            BasisConfig{params.b, model.layout});
  cc.delta_cov = params.sigma_delta2 * request.vdelta0;
  cc.overlap = &request.overlap;
  return cc;
}

struct KrigingOutput {
  Eigen::VectorXd yhat;
  Eigen::VectorXd kse;
  Eigen::VectorXd mean_part;     // X(s0) beta_hat
  Eigen::VectorXd spatial_part;  // C(s0) Sigma^-1 (y - X beta_hat)
  int clamp_count = 0;           // negative variance roundoff clamped at 0
};

/// Kriging means and standard errors in one pass. Work per target is
/// O(m^2 + p^2); targets stream through in batches so memory stays
/// O(batch * m).
inline KrigingOutput predict(const SmeModel& model, const SMEParams& params,
                             const PredictionRequest& request) {
  model.validate();
  request.validate(model.data);
  detail::Evaluated ev = detail::evaluate(model, params);
  const BasisMatrix& s = ev.cov.S;
  const Eigen::MatrixXd& w = ev.f.dinv_s();          // D^-1 S
  const Eigen::VectorXd& dinv = ev.f.dinv();
  const Eigen::MatrixXd& l2 = ev.f.chol_capacitance();
  const Eigen::MatrixXd& c3 = ev.gls.chol_xtsix;

  Eigen::MatrixXd b_mat = s.transpose() * w;          // S' D^-1 S
  Eigen::VectorXd si_r = ev.f.solve(ev.resid);
  Eigen::VectorXd s_si_r = s.transpose() * si_r;      // S' Sigma^-1 r
  Eigen::MatrixXd st_six = s.transpose() * ev.gls.sigma_inv_x;  // m x p

  const Eigen::Index nt = request.size();
  KrigingOutput out;
  out.mean_part = request.X0 * ev.gls.beta;
  out.spatial_part.resize(nt);
  out.kse.resize(nt);

  CrossCov cc = cross_cov(model, params, request);

  for (Eigen::Index lo = 0; lo < nt; lo += request.batch) {
    Eigen::Index nb = std::min(request.batch, nt - lo);
    BasisMatrix a = cc.A.middleRows(lo, nb);
    Eigen::MatrixXd ak = a * params.K;  // nb x m
    Eigen::VectorXd t1 =
        ak.cwiseProduct(Eigen::MatrixXd(a)).rowwise().sum();  // (A K A')_ii
    out.spatial_part.segment(lo, nb) = ak * s_si_r;

    for (Eigen::Index bi = 0; bi < nb; ++bi) {
      Eigen::Index i = lo + bi;
      double dc = cc.delta_cov(i);
      Eigen::VectorXd ka = ak.row(bi).transpose();
      Eigen::VectorXd w2 = b_mat * ka;
      double cdc = ka.dot(w2);
      Eigen::VectorXd xsc = st_six.transpose() * ka;  // X' Sigma^-1 c_i
      for (int j : request.overlap[static_cast<std::size_t>(i)]) {
        double s_ka = 0.0;  // (S K a_i)_j via the sparse row of S
        for (BasisMatrix::InnerIterator it(s, j); it; ++it)
          s_ka += it.value() * ka(it.col());
        cdc += 2.0 * dc * dinv(j) * s_ka + dc * dc * dinv(j);
        w2 += dc * w.row(j).transpose();
        out.spatial_part(i) += dc * si_r(j);
        xsc += dc * ev.gls.sigma_inv_x.row(j).transpose();
      }
      Eigen::VectorXd z = w2;
      l2.triangularView<Eigen::Lower>().solveInPlace(z);
      double c_si_c = cdc - z.squaredNorm();  // C_i Sigma^-1 C_i'

      Eigen::VectorXd u = request.X0.row(i).transpose() - xsc;
      c3.triangularView<Eigen::Lower>().solveInPlace(u);

      double var = t1(bi) + dc - c_si_c + u.squaredNorm();
      if (var < 0.0) {
        ++out.clamp_count;
        var = 0.0;
      }
      out.kse(i) = std::sqrt(var);
    }
  }
  out.yhat = out.mean_part + out.spatial_part;
  return out;
}

inline Eigen::VectorXd krige(const SmeModel& model, const SMEParams& params,
                             const PredictionRequest& request) {
  return predict(model, params, request).yhat;
}

inline Eigen::VectorXd kriging_se(const SmeModel& model,
                                  const SMEParams& params,
                                  const PredictionRequest& request) {
  return predict(model, params, request).kse;
}

/// Central normal prediction intervals yhat +/- z * kse.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> prediction_interval(
    const KrigingOutput& output, double level) {
  FRK_REQUIRE(level > 0.0 && level < 1.0, DataError,
              "interval level must be in (0,1), got " << level);
  double z = normal_quantile(0.5 * (1.0 + level));
  return {output.yhat - z * output.kse, output.yhat + z * output.kse};
}

}  // namespace frk

#endif  // FRK_PREDICTION_HPP
