#ifndef FRK_ESTIMATION_HPP
#define FRK_ESTIMATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "frk/model.hpp"

namespace frk {

struct EmConfig {
  int max_iter = 500;
  double tol_loglik = 1e-6;  // relative change threshold at convergence
  double weak_tol = 1e-3;    // burn-in / inner-refit threshold

  void validate() const {
    FRK_REQUIRE(max_iter >= 1, DataError, "max_iter must be >= 1");
    FRK_REQUIRE(tol_loglik > 0.0 && weak_tol > 0.0, DataError,
                "tolerances must be > 0");
    FRK_REQUIRE(weak_tol >= tol_loglik, DataError,
                "weak_tol must be >= tol_loglik");
  }
};

struct AecmConfig {
  EmConfig em;
  double b_lo = 0.1;
  double b_hi = 4.0;
  int golden_iters = 5;
  double quad_tol = 1e-3;  // width threshold on b
  std::vector<double> initial_b_set = {0.5, 1.0, 1.5, 2.0};
  int max_cycles = 60;
  int inner_max_iter = 100;  // per-candidate EM budget

  void validate() const {
    em.validate();
    FRK_REQUIRE(b_lo > 0.0 && b_hi >= b_lo, DataError,
                "need 0 < b_lo <= b_hi, got [" << b_lo << "," << b_hi << "]");
    FRK_REQUIRE(quad_tol > 0.0, DataError, "quad_tol must be > 0");
    FRK_REQUIRE(golden_iters >= 0 && max_cycles >= 1 && inner_max_iter >= 1,
                DataError, "iteration budgets must be positive");
    FRK_REQUIRE(!initial_b_set.empty(), DataError, "initial_b_set is empty");
    for (double b0 : initial_b_set)
      FRK_REQUIRE(b0 >= b_lo && b0 <= b_hi, DataError,
                  "initial b " << b0 << " outside bracket");
    if (b_lo <= 1.5 && 1.5 <= b_hi) {
      bool has = false;
      for (double b0 : initial_b_set) has = has || std::abs(b0 - 1.5) < 1e-12;
      FRK_REQUIRE(has, DataError, "initial_b_set must contain 1.5");
    }
  }

  bool degenerate_bracket() const { return b_hi - b_lo < quad_tol; }
};

/// Split the OLS residual variance between the spatial and fine-scale parts.
inline SMEParams default_init(const SmeModel& model, double b,
                              double sigma_eps2) {
  model.validate();
  const Eigen::MatrixXd& x = model.data.X;
  const Eigen::VectorXd& y = model.data.y;
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  Eigen::VectorXd r = y - x * beta;
  double dof = static_cast<double>(model.data.n() - model.data.p());
  double var = r.squaredNorm() / std::max(1.0, dof);
  var = std::max(var, 1e-12);
  Eigen::Index m = model.layout.size();
  Eigen::MatrixXd k0 = 0.9 * var * Eigen::MatrixXd::Identity(m, m);
  double sd20 = 0.1 * var / model.data.vdelta.mean();
  return SMEParams(std::move(k0), sd20, sigma_eps2, b, std::move(beta));
}

namespace detail {

/// One closed-form update of {K, sigma_delta2} given an evaluated state.
inline SMEParams em_step(const SmeModel& model, const Evaluated& ev,
                         const SMEParams& params) {
  const Eigen::MatrixXd s_dense(ev.cov.S);
  const Eigen::MatrixXd& k = params.K;

  Eigen::VectorXd si_r = ev.f.solve(ev.resid);
  Eigen::VectorXd kg = k * (s_dense.transpose() * si_r);

  Eigen::MatrixXd si_s = ev.f.solve(s_dense);
  Eigen::MatrixXd t = s_dense.transpose() * si_s;
  detail::symmetrize(t);

  Eigen::MatrixXd k_new = k - k * t * k + kg * kg.transpose();
  detail::symmetrize(k_new);

  const Eigen::VectorXd& vd = model.data.vdelta;
  double quad = (si_r.array().square() * vd.array()).sum();
  double trace = (ev.f.inverse_diagonal().array() * vd.array()).sum();
  double sd2 = params.sigma_delta2;
  double n = static_cast<double>(model.data.n());
  double sd2_new = sd2 + sd2 * sd2 / n * (quad - trace);
  sd2_new = std::max(0.0, sd2_new);

  SMEParams out = params.with(std::move(k_new), sd2_new);
  out.beta = ev.gls.beta;
  return out;
}

/// Evaluate a state; on a positive-definiteness failure add one diagonal
/// ridge to K and retry (exact-arithmetic updates preserve SPD, so a failure
/// here is roundoff). Counted per event; a second failure propagates.
inline Evaluated evaluate_with_ridge(const SmeModel& model, SMEParams& params,
                                     int& ridge_events, int iteration) {
  try {
    return evaluate(model, params);
  } catch (const NotPositiveDefinite& e) {
    Eigen::Index m = params.K.rows();
    double ridge = 1e-8 * params.K.trace() / static_cast<double>(m);
    if (!(ridge > 0.0)) ridge = 1e-12;
    params.K += ridge * Eigen::MatrixXd::Identity(m, m);
    ++ridge_events;
    try {
      return evaluate(model, params);
    } catch (const NotPositiveDefinite& e2) {
      throw EstimationError(std::string("factorization failed at iteration ") +
                            std::to_string(iteration) + " even after ridge: " +
                            e2.what());
    }
  }
}

struct EmRun {
  SMEParams params;  // iterate with the highest restricted log-likelihood
  double rloglik;
  int iterations;
  bool converged;
};

inline EmRun em_run(const SmeModel& model, SMEParams params, int max_iter,
                    double tol, int& ridge_events,
                    std::vector<std::pair<int, double>>* trace = nullptr) {
  Evaluated ev = evaluate_with_ridge(model, params, ridge_events, 0);
  params.beta = ev.gls.beta;
  if (trace) trace->emplace_back(0, ev.rloglik);
  SMEParams best = params;
  double best_ll = ev.rloglik;
  double prev = ev.rloglik;
  int t = 0;
  bool converged = false;
  while (t < max_iter) {
    SMEParams next = em_step(model, ev, params);
    Evaluated ev_next = evaluate_with_ridge(model, next, ridge_events, t + 1);
    params = std::move(next);
    params.beta = ev_next.gls.beta;
    ev = std::move(ev_next);
    ++t;
    if (trace) trace->emplace_back(t, ev.rloglik);
    if (ev.rloglik > best_ll) {
      best = params;
      best_ll = ev.rloglik;
    }
    if (std::abs(ev.rloglik - prev) / (1.0 + std::abs(ev.rloglik)) < tol) {
      converged = true;
      break;
    }
    prev = ev.rloglik;
  }
  return EmRun{std::move(best), best_ll, t, converged};
}

}  // namespace detail

/// One EM update of the variance parameters at fixed bandwidth, with beta
/// profiled by GLS at the current covariance.
inline SMEParams em_update(const SmeModel& model, const SMEParams& params) {
  model.validate();
  detail::Evaluated ev = detail::evaluate(model, params);
  return detail::em_step(model, ev, params);
}

/// Iterate em_update until the relative restricted log-likelihood change
/// drops below tol_loglik. Non-convergence is flagged, best iterate returned.
inline FitResult em_fit(const SmeModel& model, const SMEParams& init,
                        const EmConfig& cfg) {
  cfg.validate();
  model.validate();
  FitResult res{init};
  detail::EmRun run = detail::em_run(model, init, cfg.max_iter, cfg.tol_loglik,
                                     res.ridge_events, &res.loglik_trace);
  res.params = std::move(run.params);
  res.iterations = run.iterations;
  res.converged = run.converged;
  res.b_trace = {init.b};
  return res;
}

// ---------------------------------------------------------------------------
// Bandwidth line search pieces.

inline constexpr double kInvGolden = 0.6180339887498948482;  // 1/phi

struct GoldenBracket {
  double lo, hi;
  double width() const { return hi - lo; }
};

/// Four golden-section points of the bracket: the two ends plus the two
/// interior golden splits.
inline std::array<double, 4> golden_candidates(const GoldenBracket& br) {
  FRK_REQUIRE(br.lo < br.hi, DataError, "golden_candidates: empty bracket");
  double w = br.width();
  return {br.lo, br.lo + (1.0 - kInvGolden) * w, br.lo + kInvGolden * w, br.hi};
}

/// Shrink around the better interior point; width contracts by 1/phi.
inline GoldenBracket golden_shrink(const GoldenBracket& br, double loglik_x1,
                                   double loglik_x2) {
  auto pts = golden_candidates(br);
  if (loglik_x1 > loglik_x2) return GoldenBracket{br.lo, pts[2]};
  return GoldenBracket{pts[1], br.hi};
}

struct QuadPoint {
  double b;
  double loglik;
};

struct QuadStep {
  double b;
  enum class Kind { Vertex, GoldenFallback, Midpoint } kind;
};

/// Next bandwidth candidate from a parabola through three points. The middle
/// point must carry the largest value (a bracketed maximum); otherwise fall
/// back to a golden step toward the better end. Collinear values give the
/// midpoint. The result is clamped to [b1, b3].
inline QuadStep quadratic_candidates(QuadPoint p1, QuadPoint p2, QuadPoint p3) {
  std::array<QuadPoint, 3> p{p1, p2, p3};
  std::sort(p.begin(), p.end(),
            [](const QuadPoint& a, const QuadPoint& b) { return a.b < b.b; });
  FRK_REQUIRE(p[0].b < p[1].b && p[1].b < p[2].b, DataError,
              "quadratic_candidates: points must be distinct");
  for (const auto& q : p)
    FRK_REQUIRE(std::isfinite(q.loglik), DataError,
                "quadratic_candidates: non-finite log-likelihood");

  double d21 = p[1].b - p[0].b, d23 = p[1].b - p[2].b;
  double f21 = p[1].loglik - p[0].loglik, f23 = p[1].loglik - p[2].loglik;
  double denom = d21 * f23 - d23 * f21;
  double scale = std::abs(d21 * f23) + std::abs(d23 * f21);

  if (std::abs(denom) <= 1e-14 * std::max(scale, 1e-300))
    return QuadStep{0.5 * (p[0].b + p[2].b), QuadStep::Kind::Midpoint};

  if (p[1].loglik < std::max(p[0].loglik, p[2].loglik)) {
    // not a bracketed maximum: golden step into the half with the larger end
    double w = p[2].b - p[0].b;
    double b = (p[0].loglik >= p[2].loglik) ? p[0].b + (1.0 - kInvGolden) * w
                                            : p[0].b + kInvGolden * w;
    return QuadStep{b, QuadStep::Kind::GoldenFallback};
  }

  double num = d21 * d21 * f23 - d23 * d23 * f21;
  double vertex = p[1].b - 0.5 * num / denom;
  vertex = std::clamp(vertex, p[0].b, p[2].b);
  return QuadStep{vertex, QuadStep::Kind::Vertex};
}

namespace detail {

struct Candidate {
  SMEParams params;
  double rloglik;
};

/// Pick the best candidate; log-likelihood ties within 1e-12 go to the
/// candidate whose bandwidth is closest to the incumbent's.
inline const Candidate* accept_best(const std::vector<const Candidate*>& set,
                                    double incumbent_b) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Candidate* c : set) best = std::max(best, c->rloglik);
  const Candidate* pick = nullptr;
  double dist = std::numeric_limits<double>::infinity();
  for (const Candidate* c : set) {
    if (c->rloglik < best - 1e-12) continue;
    double d = std::abs(c->params.b - incumbent_b);
    if (d < dist) {
      dist = d;
      pick = c;
    }
  }
  return pick;
}

}  // namespace detail

/// Alternating fit: EM burn-in over the initial bandwidth set, golden-section
/// cycles, then quadratic-search cycles; each cycle refits {K, sigma_delta2}
/// per candidate bandwidth (warm-started, weak tolerance), scores candidates
/// by restricted log-likelihood, and keeps the incumbent in the comparison
/// set so the accepted sequence never decreases. A degenerate bracket reduces
/// to a plain EM fit at the fixed bandwidth.
inline FitResult aecm_fit(const SmeModel& model, const SMEParams& init,
                          const AecmConfig& cfg) {
  cfg.validate();
  model.validate();

  if (cfg.degenerate_bracket()) {
    double b = 0.5 * (cfg.b_lo + cfg.b_hi);
    FitResult res = em_fit(model, init.with_b(b), cfg.em);
    res.reduced_to_em = true;
    return res;
  }

  FRK_REQUIRE(init.b >= cfg.b_lo && init.b <= cfg.b_hi, DataError,
              "initial b " << init.b << " outside bracket");

  FitResult res{init};
  int cycle = 0;
  int total_iters = 0;

  auto evaluate_candidate =
      [&](double b, const SMEParams& start, int max_iter,
          double tol) -> std::optional<detail::Candidate> {
    res.b_trace.push_back(b);
    try {
      detail::EmRun run = detail::em_run(model, start.with_b(b), max_iter,
                                         tol, res.ridge_events);
      total_iters += run.iterations;
      return detail::Candidate{std::move(run.params), run.rloglik};
    } catch (const EstimationError&) {
      return std::nullopt;  // candidate failed; scored out of the running
    }
  };

  // Step 1: burn-in at each initial bandwidth, keep the best state.
  std::vector<detail::Candidate> burnin;
  for (double b0 : cfg.initial_b_set) {
    auto c = evaluate_candidate(b0, init, cfg.em.max_iter, cfg.em.weak_tol);
    if (c) burnin.push_back(std::move(*c));
  }
  res.cycle_costs.push_back(
      {CycleCost::Phase::Burnin, static_cast<int>(cfg.initial_b_set.size())});
  if (burnin.empty())
    throw EstimationError("aecm_fit: every burn-in bandwidth failed "
                          "factorization");
  std::vector<const detail::Candidate*> view;
  for (const auto& c : burnin) view.push_back(&c);
  detail::Candidate incumbent = *detail::accept_best(view, init.b);
  res.loglik_trace.emplace_back(cycle, incumbent.rloglik);

  // Golden-section cycles over the full bracket (steps 2a-6).
  GoldenBracket br{cfg.b_lo, cfg.b_hi};
  std::vector<QuadPoint> last_points;
  double prev_accepted = incumbent.rloglik;
  for (int g = 0; g < cfg.golden_iters && br.width() >= cfg.quad_tol; ++g) {
    ++cycle;
    auto bs = golden_candidates(br);
    std::vector<detail::Candidate> cands;
    std::vector<QuadPoint> pts;
    for (double b : bs) {
      auto c = evaluate_candidate(b, incumbent.params, cfg.inner_max_iter,
                                  cfg.em.weak_tol);
      if (c) {
        pts.push_back({b, c->rloglik});
        cands.push_back(std::move(*c));
      }
    }
    res.cycle_costs.push_back({CycleCost::Phase::Golden, 4});
    if (cands.empty())
      throw EstimationError("aecm_fit: all golden candidates failed at cycle " +
                            std::to_string(cycle));
    view.clear();
    view.push_back(&incumbent);
    for (const auto& c : cands) view.push_back(&c);
    incumbent = *detail::accept_best(view, incumbent.params.b);
    res.loglik_trace.emplace_back(cycle, incumbent.rloglik);
    last_points = pts;

    double l1 = std::numeric_limits<double>::lowest();
    double l2 = std::numeric_limits<double>::lowest();
    for (const auto& q : pts) {
      if (std::abs(q.b - bs[1]) < 1e-15) l1 = q.loglik;
      if (std::abs(q.b - bs[2]) < 1e-15) l2 = q.loglik;
    }
    br = golden_shrink(br, l1, l2);

    double rel = std::abs(incumbent.rloglik - prev_accepted) /
                 (1.0 + std::abs(incumbent.rloglik));
    prev_accepted = incumbent.rloglik;
    if (rel < cfg.em.weak_tol) break;
  }

  // Seed the quadratic triple from the best evaluated point and its
  // neighbors; fall back to the bracket thirds when nothing is stored yet.
  std::vector<QuadPoint> pool = last_points;
  std::sort(pool.begin(), pool.end(),
            [](const QuadPoint& a, const QuadPoint& b) { return a.b < b.b; });
  std::array<QuadPoint, 3> triple;
  if (pool.size() >= 3) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].loglik > pool[best].loglik) best = i;
    std::size_t mid = std::clamp(best, std::size_t{1}, pool.size() - 2);
    triple = {pool[mid - 1], pool[mid], pool[mid + 1]};
  } else {
    // No stored evaluations (golden phase skipped): spend one quadratic
    // cycle evaluating three seed points across the bracket.
    ++cycle;
    for (int i = 0; i < 3; ++i) {
      double b = br.lo + br.width() * (0.25 + 0.25 * i);
      auto c = evaluate_candidate(b, incumbent.params, cfg.inner_max_iter,
                                  cfg.em.weak_tol);
      triple[static_cast<std::size_t>(i)] =
          {b, c ? c->rloglik : std::numeric_limits<double>::lowest()};
      if (c) {
        view.clear();
        view.push_back(&incumbent);
        view.push_back(&*c);
        incumbent = *detail::accept_best(view, incumbent.params.b);
      }
    }
    res.cycle_costs.push_back({CycleCost::Phase::Quadratic, 3});
    res.loglik_trace.emplace_back(cycle, incumbent.rloglik);
    prev_accepted = incumbent.rloglik;
  }

  // Quadratic-search cycles (steps 2b-7): one vertex candidate plus one
  // continuation of the incumbent per cycle.
  bool converged = false;
  while (cycle < cfg.max_cycles) {
    ++cycle;
    int evals = 0;

    QuadStep step = quadratic_candidates(triple[0], triple[1], triple[2]);
    std::vector<detail::Candidate> cands;

    // continuation of the incumbent at the final tolerance, so overall
    // convergence includes a fully converged theta_1 at the accepted b
    auto stay = evaluate_candidate(incumbent.params.b, incumbent.params,
                                   cfg.inner_max_iter, cfg.em.tol_loglik);
    ++evals;
    if (stay) cands.push_back(std::move(*stay));

    std::optional<QuadPoint> fresh;
    if (std::abs(step.b - incumbent.params.b) > 1e-15) {
      auto c = evaluate_candidate(step.b, incumbent.params, cfg.inner_max_iter,
                                  cfg.em.weak_tol);
      ++evals;
      if (c) {
        fresh = QuadPoint{step.b, c->rloglik};
        cands.push_back(std::move(*c));
      }
    } else if (!cands.empty()) {
      fresh = QuadPoint{incumbent.params.b, cands.front().rloglik};
    }
    res.cycle_costs.push_back({CycleCost::Phase::Quadratic, evals});

    if (cands.empty())
      throw EstimationError(
          "aecm_fit: all quadratic candidates failed at cycle " +
          std::to_string(cycle));

    view.clear();
    view.push_back(&incumbent);
    for (const auto& c : cands) view.push_back(&c);
    incumbent = *detail::accept_best(view, incumbent.params.b);
    res.loglik_trace.emplace_back(cycle, incumbent.rloglik);

    if (fresh) {
      // Standard bracketing update keeping the maximum inside the triple.
      double bm = triple[1].b;
      if (std::abs(fresh->b - bm) < 1e-15) {
        if (fresh->loglik > triple[1].loglik) triple[1] = *fresh;
      } else if (fresh->b > bm) {
        if (fresh->loglik >= triple[1].loglik)
          triple = {triple[1], *fresh, triple[2]};
        else
          triple = {triple[0], triple[1], *fresh};
      } else {
        if (fresh->loglik >= triple[1].loglik)
          triple = {triple[0], *fresh, triple[1]};
        else
          triple = {*fresh, triple[1], triple[2]};
      }
    }

    double rel = std::abs(incumbent.rloglik - prev_accepted) /
                 (1.0 + std::abs(incumbent.rloglik));
    prev_accepted = incumbent.rloglik;
    if (rel < cfg.em.tol_loglik) {
      converged = true;
      break;
    }
  }

  res.params = incumbent.params;
  res.converged = converged;
  res.iterations = total_iters;
  return res;
}

}  // namespace frk

#endif  // FRK_ESTIMATION_HPP
