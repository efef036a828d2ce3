#ifndef FRK_SIMULATION_HPP
#define FRK_SIMULATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "frk/estimation.hpp"
#include "frk/prediction.hpp"

namespace frk {

// ---------------------------------------------------------------------------
// Covariance constructions.

/// Matern covariance value at distance d with sill rho, range theta and
/// smoothness nu; the d = 0 limit is rho.
inline double matern_cov(double d, double rho, double theta, double nu) {
  FRK_REQUIRE(theta > 0.0 && nu > 0.0, DataError,
              "matern_cov: theta and nu must be > 0");
  FRK_REQUIRE(rho >= 0.0 && d >= 0.0, DataError,
              "matern_cov: rho and d must be >= 0");
  if (d == 0.0) return rho;
  double x = d / theta;
  double v = rho * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) *
             std::pow(x, nu) * std::cyl_bessel_k(nu, x);
  return std::isfinite(v) ? v : 0.0;  // far-field underflow
}

enum class KType { Matern, WishartPositive, Wishart };

inline std::string to_string(KType t) {
  switch (t) {
    case KType::Matern: return "matern";
    case KType::WishartPositive: return "wishart_positive";
    case KType::Wishart: return "wishart";
  }
  return "?";
}

namespace detail {

/// Wishart draw W_m(scale * I, df) by the Bartlett decomposition;
/// E[W] = df * scale * I.
inline Eigen::MatrixXd wishart_identity_scale(Eigen::Index m, double scale,
                                              double df, std::mt19937_64& rng) {
  FRK_REQUIRE(df > static_cast<double>(m) - 1.0, DataError,
              "wishart: df must exceed order - 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    std::chi_squared_distribution<double> chi(df - static_cast<double>(i));
    a(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = gauss(rng);
  }
  return scale * a * a.transpose();
}

/// Nearest-SPD projection by eigenvalue clipping with re-symmetrization.
inline Eigen::MatrixXd clip_to_spd(const Eigen::MatrixXd& k, double floor,
                                   bool* projected) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  bool clipped = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) < floor) {
      ev(i) = floor;
      clipped = true;
    }
  if (projected) *projected = clipped;
  if (!clipped) return 0.5 * (k + k.transpose());
  Eigen::MatrixXd out =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

/// Zero-mean multivariate normal draw from a PSD covariance (eigen route, so
/// a zero matrix is a valid degenerate case).
inline Eigen::VectorXd mvn_sample(const Eigen::MatrixXd& cov,
                                  std::mt19937_64& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(cov.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  return es.eigenvectors() * (ev.cwiseSqrt().asDiagonal() * z);
}

}  // namespace detail

/// Random-effects covariance for a design: Matern on the knot distances
/// (rho=9, theta=96, nu=1), a scaled Wishart, or its entrywise absolute
/// value projected back to SPD when the flip breaks definiteness.
inline Eigen::MatrixXd sample_K(KType type, const KnotLayout& layout,
                                std::mt19937_64& rng,
                                int* projection_events = nullptr,
                                double rho = 9.0, double theta = 96.0,
                                double nu = 1.0) {
  const Eigen::Index m = layout.size();
  if (type == KType::Matern) {
    Eigen::MatrixXd d = pairwise_distance(layout.knots, layout.knots,
                                          layout.metric);
    Eigen::MatrixXd k(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        k(i, j) = matern_cov(d(i, j), rho, theta, nu);
    return k;
  }
  Eigen::MatrixXd w = detail::wishart_identity_scale(m, 2.0, 10.0, rng);
  Eigen::VectorXd scale(m);
  for (Eigen::Index i = 0; i < m; ++i) scale(i) = static_cast<double>(i + 1);
  Eigen::MatrixXd k = scale.asDiagonal() * w * scale.asDiagonal();
  if (type == KType::Wishart) return k;
  bool projected = false;
  Eigen::MatrixXd kp = detail::clip_to_spd(k.cwiseAbs(), 1e-10, &projected);
  if (projected && projection_events) ++(*projection_events);
  return kp;
}

enum class SamplingDesign { Random, Clustered };

inline std::string to_string(SamplingDesign d) {
  return d == SamplingDesign::Random ? "random" : "clustered";
}

/// Observed sites drawn without replacement from the integer domain, either
/// uniformly or from the union of every other interval of 32 sites.
inline std::vector<int> sample_design(int domain_lo, int domain_hi, int n,
                                      SamplingDesign kind,
                                      std::mt19937_64& rng) {
  std::vector<int> pool;
  if (kind == SamplingDesign::Random) {
    for (int s = domain_lo; s <= domain_hi; ++s) pool.push_back(s);
  } else {
    for (int s = domain_lo; s <= domain_hi; ++s) {
      int block = (s - domain_lo) / 32;
      if (block % 2 == 0) pool.push_back(s);
    }
  }
  FRK_REQUIRE(n <= static_cast<int>(pool.size()), DataError,
              "sample_design: requested " << n << " sites from a pool of "
                                          << pool.size());
  std::vector<int> out;
  std::sample(pool.begin(), pool.end(), std::back_inserter(out),
              static_cast<std::size_t>(n), rng);
  return out;
}

/// One cell of the simulation grid.
struct SimDesign {
  int domain_lo = 1;
  int domain_hi = 256;
  int n_obs = 64;
  SamplingDesign sampling = SamplingDesign::Random;
  KType k_type = KType::Matern;
  double sigma_delta2 = 0.1;
  double sigma_eps2 = 1.0;
  double b = 1.5;
  Eigen::Vector2d beta{5.0, 0.08};
  int knot_count = 5;

  int domain_size() const { return domain_hi - domain_lo + 1; }

  void validate() const {
    FRK_REQUIRE(domain_hi > domain_lo, DataError, "empty domain");
    FRK_REQUIRE(n_obs >= 1 && n_obs <= domain_size(), DataError,
                "n_obs must be in [1, domain size]");
    FRK_REQUIRE(sigma_delta2 >= 0.0 && sigma_eps2 >= 0.0, DataError,
                "variances must be >= 0");
    FRK_REQUIRE(b > 0.0, DataError, "true b must be > 0");
    FRK_REQUIRE(knot_count >= 2, DataError, "need at least 2 knots");
  }

  KnotLayout knot_layout() const {
    auto [lo, hi] = lattice_bounds(domain_lo, domain_hi);
    return place_knots_1d(lo, hi, {knot_count});
  }
};

/// A generated field: the observed dataset plus the noiseless truth (the
/// process without measurement error) over the whole domain.
struct SimulatedField {
  Dataset data;
  std::vector<int> observed;  // site values, ascending
  Points domain_points;       // all sites as a column
  Eigen::MatrixXd x_full;     // [1, s]
  Eigen::VectorXd y_full;
  Eigen::VectorXd truth;      // y - eps over the full domain
  Eigen::MatrixXd k_true;
};

/// Draw eta, delta, eps over the full domain and assemble
/// y = X beta + S eta + delta + eps. Draw order: sites, eta, delta, eps.
inline SimulatedField simulate_field(const SimDesign& design,
                                     const Eigen::MatrixXd& k,
                                     std::mt19937_64& rng) {
  design.validate();
  const int nd = design.domain_size();
  SimulatedField f;
  f.k_true = k;
  f.observed = sample_design(design.domain_lo, design.domain_hi, design.n_obs,
                             design.sampling, rng);

  f.domain_points.resize(nd, 1);
  for (int i = 0; i < nd; ++i)
    f.domain_points(i, 0) = static_cast<double>(design.domain_lo + i);
  f.x_full.resize(nd, 2);
  f.x_full.col(0).setOnes();
  f.x_full.col(1) = f.domain_points.col(0);

  KnotLayout layout = design.knot_layout();
  BasisMatrix s_full =
      build_basis_matrix(f.domain_points, BasisConfig{design.b, layout});

  Eigen::VectorXd eta = detail::mvn_sample(k, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd delta(nd), eps(nd);
  double sd_delta = std::sqrt(design.sigma_delta2);
  double sd_eps = std::sqrt(design.sigma_eps2);
  for (int i = 0; i < nd; ++i) delta(i) = sd_delta * gauss(rng);
  for (int i = 0; i < nd; ++i) eps(i) = sd_eps * gauss(rng);

  f.y_full = f.x_full * design.beta + s_full * eta + delta + eps;
  f.truth = f.y_full - eps;

  const int n = design.n_obs;
  f.data.locations.resize(n, 1);
  f.data.X.resize(n, 2);
  f.data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    int row = f.observed[static_cast<std::size_t>(i)] - design.domain_lo;
    f.data.locations(i, 0) = f.domain_points(row, 0);
    f.data.X.row(i) = f.x_full.row(row);
    f.data.y(i) = f.y_full(row);
  }
  f.data.vdelta = Eigen::VectorXd::Ones(n);
  f.data.veps = Eigen::VectorXd::Ones(n);
  return f;
}

/// Signal-to-noise and fine-scale-proportion ratios of a design cell, for a
/// given random-effects covariance, over the full domain.
inline std::pair<double, double> design_ratios(const SimDesign& design,
                                               const Eigen::MatrixXd& k) {
  const int nd = design.domain_size();
  Points pts(nd, 1);
  for (int i = 0; i < nd; ++i)
    pts(i, 0) = static_cast<double>(design.domain_lo + i);
  BasisMatrix s =
      build_basis_matrix(pts, BasisConfig{design.b, design.knot_layout()});
  Eigen::MatrixXd sd(s);
  double tr_sks = (sd * k).cwiseProduct(sd).sum();
  double tr_delta = design.sigma_delta2 * nd;
  double tr_eps = design.sigma_eps2 * nd;
  double snr = (tr_sks + tr_delta) / tr_eps;
  double fsp = tr_delta / (tr_sks + tr_delta);
  return {snr, fsp};
}

// ---------------------------------------------------------------------------
// Evaluation metrics.

inline double mspe(const Eigen::VectorXd& yhat, const Eigen::VectorXd& truth) {
  FRK_REQUIRE(yhat.size() == truth.size(), DimensionError,
              "mspe: length mismatch");
  FRK_REQUIRE(yhat.size() > 0, DataError, "mspe: empty input");
  return (yhat - truth).squaredNorm() / static_cast<double>(yhat.size());
}

inline double rkse(const Eigen::VectorXd& kse_est,
                   const Eigen::VectorXd& kse_true) {
  std::vector<double> a(kse_est.begin(), kse_est.end());
  std::vector<double> b(kse_true.begin(), kse_true.end());
  double denom = median(std::move(b));
  FRK_REQUIRE(denom != 0.0, DataError, "rkse: zero median true KSE");
  return median(std::move(a)) / denom;
}

/// Fraction of intervals containing the truth.
inline double pic(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                  const Eigen::VectorXd& truth) {
  FRK_REQUIRE(lo.size() == truth.size() && hi.size() == truth.size(),
              DimensionError, "pic: length mismatch");
  FRK_REQUIRE(truth.size() > 0, DataError, "pic: empty input");
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    if (lo(i) <= truth(i) && truth(i) <= hi(i)) ++covered;
  return static_cast<double>(covered) / static_cast<double>(truth.size());
}

/// KL(P || Q) between Gaussians with diagonal-plus-low-rank covariances,
/// computed entirely through the factored solves and log-determinants.
inline double kl_divergence(const Eigen::VectorXd& mu_p, const LowRankCov& p,
                            const Eigen::VectorXd& mu_q, const LowRankCov& q) {
  FRK_REQUIRE(p.n() == q.n() && mu_p.size() == p.n() && mu_q.size() == q.n(),
              DimensionError, "kl_divergence: dimension mismatch");
  const double n = static_cast<double>(p.n());
  CovFactorization fp = factorize(p);
  CovFactorization fq = factorize(q);

  Eigen::MatrixXd sp(p.S);
  Eigen::MatrixXd t = fq.solve(sp);                       // Sigma_Q^-1 S_P
  double tr_lowrank = ((sp.transpose() * t).cwiseProduct(p.K)).sum();
  double tr_diag = (fq.inverse_diagonal().array() * p.dvec.array()).sum();

  Eigen::VectorXd dm = mu_q - mu_p;
  Eigen::VectorXd si_dm = fq.solve(dm);
  double quad = dm.dot(si_dm);

  return 0.5 * (tr_lowrank + tr_diag + quad - n + fq.logdet() - fp.logdet());
}

struct MoranResult {
  double statistic;   // Moran's I
  double null_mean;   // -1/(n-1)
  double null_sd;     // randomization variance, normal approximation
  double z;
  double p_value;     // one-sided, positive autocorrelation
};

/// Moran's I with row-standardized inverse-distance weights (zero diagonal)
/// and the normal approximation under the randomization assumption.
inline MoranResult morans_i(const Eigen::VectorXd& residuals,
                            const Points& locations,
                            const Metric& metric = Metric::euclidean()) {
  const Eigen::Index n = residuals.size();
  FRK_REQUIRE(n >= 3, DataError, "morans_i: need at least 3 observations");
  FRK_REQUIRE(locations.rows() == n, DimensionError,
              "morans_i: location count mismatch");
  Eigen::VectorXd z = residuals.array() - residuals.mean();
  double ss = z.squaredNorm();
  FRK_REQUIRE(ss > 0.0, DataError, "morans_i: constant residuals");

  Eigen::MatrixXd d = pairwise_distance(locations, locations, metric);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      FRK_REQUIRE(d(i, j) > 0.0, DataError,
                  "morans_i: duplicate locations at rows " << i << "," << j);
      w(i, j) = 1.0 / d(i, j);
      rowsum += w(i, j);
    }
    w.row(i) /= rowsum;
  }

  double s0 = w.sum();
  double num = z.dot(w * z);
  double nn = static_cast<double>(n);
  double stat = nn / s0 * num / ss;

  double s1 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double t = w(i, j) + w(j, i);
      s1 += t * t;
    }
  s1 *= 0.5;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double t = w.row(i).sum() + w.col(i).sum();
    s2 += t * t;
  }
  double b2 = nn * z.array().pow(4).sum() / (ss * ss);
  double e_i = -1.0 / (nn - 1.0);
  double var =
      (nn * ((nn * nn - 3 * nn + 3) * s1 - nn * s2 + 3 * s0 * s0) -
       b2 * ((nn * nn - nn) * s1 - 2 * nn * s2 + 6 * s0 * s0)) /
          ((nn - 1) * (nn - 2) * (nn - 3) * s0 * s0) -
      e_i * e_i;

  MoranResult out;
  out.statistic = stat;
  out.null_mean = e_i;
  out.null_sd = std::sqrt(var);
  out.z = (stat - e_i) / out.null_sd;
  out.p_value = 1.0 - normal_cdf(out.z);
  return out;
}

// ---------------------------------------------------------------------------
// Study harness.

/// Per-replicate metrics; absolute deviations feed the MAD summaries.
struct RepMetrics {
  bool ok = false;
  std::string error;
  double mspe_true = 0, mspe_aecm = 0, mspe_em = 0;
  double rkse_aecm = 0, rkse_em = 0;
  double pic_true = 0, pic_aecm = 0, pic_em = 0;
  double kl_aecm = 0, kl_em = 0;
  double b_hat = 0;
  double ad_beta0_aecm = 0, ad_beta0_em = 0;
  double ad_beta1_aecm = 0, ad_beta1_em = 0;
  double ad_sd2_aecm = 0, ad_sd2_em = 0;
  double ad_k_aecm = 0, ad_k_em = 0;  // median |Khat - K| over unique entries
  double moran_p = 1.0;
  std::vector<CycleCost> aecm_cycle_costs;
};

struct CellResult {
  SimDesign design;
  std::vector<RepMetrics> reps;

  int failures() const {
    int f = 0;
    for (const auto& r : reps)
      if (!r.ok) ++f;
    return f;
  }

  std::vector<double> collect(double RepMetrics::* field) const {
    std::vector<double> v;
    for (const auto& r : reps)
      if (r.ok) v.push_back(r.*field);
    return v;
  }

  /// NaN when every replicate failed, so reports survive broken cells.
  double cell_median(double RepMetrics::* field) const {
    auto v = collect(field);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return median(std::move(v));
  }

  /// Share of replicates where the alternating fit lost less information.
  double kl_aecm_better() const {
    int better = 0, total = 0;
    for (const auto& r : reps)
      if (r.ok) {
        ++total;
        if (r.kl_aecm < r.kl_em) ++better;
      }
    return total ? static_cast<double>(better) / total : 0.0;
  }
};

struct StudyResult {
  std::vector<CellResult> cells;

  /// Pooled per-replicate values across cells passing `keep`.
  std::vector<double> pooled(double RepMetrics::* field,
                             const std::function<bool(const SimDesign&)>& keep)
      const {
    std::vector<double> v;
    for (const auto& c : cells) {
      if (!keep(c.design)) continue;
      auto cv = c.collect(field);
      v.insert(v.end(), cv.begin(), cv.end());
    }
    return v;
  }

  double pooled_median(double RepMetrics::* field,
                       const std::function<bool(const SimDesign&)>& keep) const {
    return median(pooled(field, keep));
  }
};

struct StudyConfig {
  int replicates = 200;
  std::uint64_t seed = 20200402;
  int threads = 1;
  EmConfig em;
  AecmConfig aecm;
};

namespace detail {

inline void parallel_for(int count, int threads,
                         const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  int used = std::min(threads, count);
  for (int t = 0; t < used; ++t)
    pool.emplace_back([&, t]() {
      for (int i = t; i < count; i += used) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline double median_abs_dev_unique(const Eigen::MatrixXd& est,
                                    const Eigen::MatrixXd& truth) {
  std::vector<double> dev;
  for (Eigen::Index i = 0; i < est.rows(); ++i)
    for (Eigen::Index j = i; j < est.cols(); ++j)
      dev.push_back(std::abs(est(i, j) - truth(i, j)));
  return median(std::move(dev));
}

inline RepMetrics run_replicate(const SimDesign& design, std::uint64_t seed,
                                std::size_t cell_index, int rep,
                                const EmConfig& emcfg,
                                const AecmConfig& aecmcfg) {
  RepMetrics out;
  try {
    std::mt19937_64 rng =
        make_rng(seed, cell_index, static_cast<std::uint64_t>(rep));
    KnotLayout layout = design.knot_layout();
    Eigen::MatrixXd k_true = sample_K(design.k_type, layout, rng);
    SimulatedField field = simulate_field(design, k_true, rng);
    SmeModel model{field.data, layout};

    SMEParams theta_true(k_true, design.sigma_delta2, design.sigma_eps2,
                         design.b, field.data.X.colPivHouseholderQr()
                                       .solve(field.data.y));

    SMEParams init = default_init(model, 1.5, design.sigma_eps2);
    FitResult em = em_fit(model, init, emcfg);
    FitResult ae = aecm_fit(model, init, aecmcfg);
    out.aecm_cycle_costs = ae.cycle_costs;

    PredictionRequest req = make_request(
        model.data, field.domain_points, field.x_full,
        Eigen::VectorXd::Ones(field.domain_points.rows()));

    KrigingOutput p_true = predict(model, theta_true, req);
    KrigingOutput p_em = predict(model, em.params, req);
    KrigingOutput p_ae = predict(model, ae.params, req);

    // MSPE at unobserved sites against the noiseless process.
    std::vector<int> unobserved;
    {
      std::vector<char> is_obs(static_cast<std::size_t>(design.domain_size()), 0);
      for (int s : field.observed)
        is_obs[static_cast<std::size_t>(s - design.domain_lo)] = 1;
      for (int i = 0; i < design.domain_size(); ++i)
        if (!is_obs[static_cast<std::size_t>(i)]) unobserved.push_back(i);
    }
    auto subset = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd s(static_cast<Eigen::Index>(unobserved.size()));
      for (std::size_t i = 0; i < unobserved.size(); ++i)
        s(static_cast<Eigen::Index>(i)) = v(unobserved[i]);
      return s;
    };
    Eigen::VectorXd truth_un = subset(field.truth);
    out.mspe_true = mspe(subset(p_true.yhat), truth_un);
    out.mspe_em = mspe(subset(p_em.yhat), truth_un);
    out.mspe_aecm = mspe(subset(p_ae.yhat), truth_un);

    out.rkse_em = rkse(p_em.kse, p_true.kse);
    out.rkse_aecm = rkse(p_ae.kse, p_true.kse);

    auto coverage = [&](const KrigingOutput& o) {
      auto [lo, hi] = prediction_interval(o, 0.95);
      return pic(lo, hi, field.truth);
    };
    out.pic_true = coverage(p_true);
    out.pic_em = coverage(p_em);
    out.pic_aecm = coverage(p_ae);

    LowRankCov cov_p = assemble_cov(model, theta_true);
    Eigen::VectorXd mu_p = field.data.X * design.beta;
    auto kl_of = [&](const SMEParams& fit) {
      return kl_divergence(mu_p, cov_p, field.data.X * fit.beta,
                           assemble_cov(model, fit));
    };
    out.kl_em = kl_of(em.params);
    out.kl_aecm = kl_of(ae.params);

    out.b_hat = ae.params.b;
    out.ad_beta0_em = std::abs(em.params.beta(0) - design.beta(0));
    out.ad_beta0_aecm = std::abs(ae.params.beta(0) - design.beta(0));
    out.ad_beta1_em = std::abs(em.params.beta(1) - design.beta(1));
    out.ad_beta1_aecm = std::abs(ae.params.beta(1) - design.beta(1));
    out.ad_sd2_em = std::abs(em.params.sigma_delta2 - design.sigma_delta2);
    out.ad_sd2_aecm = std::abs(ae.params.sigma_delta2 - design.sigma_delta2);
    out.ad_k_em = median_abs_dev_unique(em.params.K, k_true);
    out.ad_k_aecm = median_abs_dev_unique(ae.params.K, k_true);

    Eigen::VectorXd beta_ols =
        field.data.X.colPivHouseholderQr().solve(field.data.y);
    out.moran_p = morans_i(field.data.y - field.data.X * beta_ols,
                           field.data.locations).p_value;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Run every design cell for the configured number of replicates. Replicates
/// use counter-derived RNG streams, so the result is identical for any
/// thread count. Failed replicates are recorded and excluded from summaries.
inline StudyResult run_study(const std::vector<SimDesign>& designs,
                             const StudyConfig& cfg) {
  FRK_REQUIRE(!designs.empty(), DataError, "run_study: no design cells");
  FRK_REQUIRE(cfg.replicates >= 1, DataError, "run_study: replicates >= 1");
  StudyResult out;
  out.cells.resize(designs.size());
  for (std::size_t c = 0; c < designs.size(); ++c) {
    designs[c].validate();
    out.cells[c].design = designs[c];
    out.cells[c].reps.resize(static_cast<std::size_t>(cfg.replicates));
    detail::parallel_for(cfg.replicates, cfg.threads, [&, c](int r) {
      out.cells[c].reps[static_cast<std::size_t>(r)] = detail::run_replicate(
          designs[c], cfg.seed, c, r, cfg.em, cfg.aecm);
    });
  }
  return out;
}

/// The reference grid of design cells for one covariance type and noise
/// level: sigma_delta2 in {0.01, 0.1, 1} crossed with both sampling designs.
inline std::vector<SimDesign> design_grid(
    KType k_type, double sigma_eps2, const std::vector<double>& b_values,
    const std::vector<double>& sigma_delta2_values = {0.01, 0.1, 1.0}) {
  std::vector<SimDesign> cells;
  for (double b : b_values)
    for (double sd2 : sigma_delta2_values)
      for (auto s : {SamplingDesign::Clustered, SamplingDesign::Random}) {
        SimDesign d;
        d.k_type = k_type;
        d.sigma_eps2 = sigma_eps2;
        d.sigma_delta2 = sd2;
        d.b = b;
        d.sampling = s;
        cells.push_back(d);
      }
  return cells;
}

}  // namespace frk

#endif  // FRK_SIMULATION_HPP
