// Command-line front end: simulate / fit / predict / cv / evaluate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "frk/frk.hpp"

namespace {

using namespace frk;

// exit codes: 0 success, 1 usage, 2 data, 3 numerical failure
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Metric parse_metric(const std::string& spec) {
  if (spec == "euclidean") return Metric::euclidean();
  if (spec.rfind("greatcircle", 0) == 0) {
    if (spec == "greatcircle") return Metric::great_circle();
    if (spec.size() > 12 && spec[11] == ':')
      return Metric::great_circle(std::stod(spec.substr(12)));
  }
  throw UsageError("bad --metric value '" + spec +
                   "' (expected euclidean or greatcircle[:radius])");
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw UsageError("empty numeric list: '" + s + "'");
  return out;
}

// 1-D: comma-separated knot counts per resolution, e.g. "5" or "5,9".
// 2-D: per-resolution nx x ny grids, e.g. "9x5,18x18".
KnotLayout knots_from_grid(const std::string& spec, const Dataset& data,
                           const Metric& metric) {
  bool two_d = spec.find('x') != std::string::npos;
  if (two_d) {
    FRK_REQUIRE(data.locations.cols() == 2, DataError,
                "--knot-grid " << spec << " is 2-D but the data is 1-D");
    std::vector<std::pair<int, int>> grids;
    std::istringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      auto xpos = tok.find('x');
      FRK_REQUIRE(xpos != std::string::npos, DataError,
                  "bad grid token '" << tok << "'");
      grids.emplace_back(std::stoi(tok.substr(0, xpos)),
                         std::stoi(tok.substr(xpos + 1)));
    }
    double xlo = data.locations.col(0).minCoeff();
    double xhi = data.locations.col(0).maxCoeff();
    double ylo = data.locations.col(1).minCoeff();
    double yhi = data.locations.col(1).maxCoeff();
    return place_knots_triangular(xlo, xhi, ylo, yhi, grids, metric);
  }
  FRK_REQUIRE(data.locations.cols() == 1, DataError,
              "--knot-grid " << spec << " is 1-D but the data is 2-D");
  std::vector<int> counts;
  for (double v : parse_double_list(spec)) counts.push_back(static_cast<int>(v));
  double lo = data.locations.col(0).minCoeff();
  double hi = data.locations.col(0).maxCoeff();
  return place_knots_1d(lo, hi, counts, metric);
}

struct FitOptions {
  std::string data_path;
  std::string method = "aecm";
  double sigma_eps2 = -1.0;  // required; validated with a helpful message
  std::string knots_path;
  std::string knot_grid;
  int resolutions = 1;
  std::string metric_spec = "euclidean";
  double b_fixed = 1.5;
  std::string b_bracket = "0.1,4.0";
  std::string initial_b = "0.5,1.0,1.5,2.0";
  int max_iter = 500;
  double tol = 1e-6;
  double weak_tol = 1e-3;
  int golden_iters = 5;
  double quad_tol = 1e-3;
  int inner_max_iter = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string config_path;
  bool dump_config = false;

  std::map<std::string, std::string> as_config(CLI::App* sub) const {
    std::map<std::string, std::string> kv;
    std::ostringstream os;
    os << std::setprecision(17);
    auto put = [&](const std::string& k, auto v) {
      os.str("");
      os << v;
      kv[k] = os.str();
    };
    put("method", method);
    put("sigma_eps2", sigma_eps2);
    put("knots", knots_path.empty() ? "-" : knots_path);
    put("knot_grid", knot_grid.empty() ? "-" : knot_grid);
    put("resolutions", resolutions);
    put("metric", metric_spec);
    put("b", b_fixed);
    put("b_bracket", b_bracket);
    put("initial_b", initial_b);
    put("max_iter", max_iter);
    put("tol", tol);
    put("weak_tol", weak_tol);
    put("golden_iters", golden_iters);
    put("quad_tol", quad_tol);
    put("inner_max_iter", inner_max_iter);
    put("seed", seed);
    put("threads", threads);
    (void)sub;
    return kv;
  }
};

void add_fit_options(CLI::App* sub, FitOptions& o, bool need_data = true) {
  if (need_data)
    sub->add_option("--data", o.data_path, "observations CSV")->required();
  sub->add_option("--method", o.method, "em | aecm")
      ->check(CLI::IsMember({"em", "aecm"}));
  sub->add_option("--sigma-eps2", o.sigma_eps2,
                  "known measurement-error variance (required)");
  sub->add_option("--knots", o.knots_path, "knot layout CSV");
  sub->add_option("--knot-grid", o.knot_grid,
                  "per-resolution counts (1-D: '5,9'; 2-D: '9x5,18x18')");
  sub->add_option("--resolutions", o.resolutions,
                  "number of resolutions expected in the layout");
  sub->add_option("--metric", o.metric_spec, "euclidean | greatcircle[:radius]");
  sub->add_option("--b", o.b_fixed, "fixed bandwidth constant (em)");
  sub->add_option("--b-bracket", o.b_bracket, "LO,HI search bracket (aecm)");
  sub->add_option("--initial-b", o.initial_b, "burn-in bandwidth set (aecm)");
  sub->add_option("--max-iter", o.max_iter, "EM iteration cap");
  sub->add_option("--tol", o.tol, "convergence tolerance (relative loglik)");
  sub->add_option("--weak-tol", o.weak_tol, "burn-in tolerance");
  sub->add_option("--golden-iters", o.golden_iters, "golden-section cycles");
  sub->add_option("--quad-tol", o.quad_tol, "bandwidth width threshold");
  sub->add_option("--inner-max-iter", o.inner_max_iter,
                  "per-candidate EM budget");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--threads", o.threads, "worker threads");
  sub->add_option("--config", o.config_path, "flat key-value config file");
  sub->add_flag("--dump-config", o.dump_config,
                "print the effective configuration and exit");
}

// config file supplies defaults; explicit command-line flags win
void merge_config(CLI::App* sub, FitOptions& o) {
  if (o.config_path.empty()) return;
  auto kv = read_config(o.config_path);
  auto use = [&](const char* flag, const char* key, auto setter) {
    if (sub->count(flag) == 0 && kv.count(key)) setter(kv.at(key));
  };
  use("--method", "method", [&](const std::string& v) { o.method = v; });
  use("--sigma-eps2", "sigma_eps2",
      [&](const std::string& v) { o.sigma_eps2 = std::stod(v); });
  use("--knots", "knots", [&](const std::string& v) {
    if (v != "-") o.knots_path = v;
  });
  use("--knot-grid", "knot_grid", [&](const std::string& v) {
    if (v != "-") o.knot_grid = v;
  });
  use("--resolutions", "resolutions",
      [&](const std::string& v) { o.resolutions = std::stoi(v); });
  use("--metric", "metric", [&](const std::string& v) { o.metric_spec = v; });
  use("--b", "b", [&](const std::string& v) { o.b_fixed = std::stod(v); });
  use("--b-bracket", "b_bracket",
      [&](const std::string& v) { o.b_bracket = v; });
  use("--initial-b", "initial_b",
      [&](const std::string& v) { o.initial_b = v; });
  use("--max-iter", "max_iter",
      [&](const std::string& v) { o.max_iter = std::stoi(v); });
  use("--tol", "tol", [&](const std::string& v) { o.tol = std::stod(v); });
  use("--weak-tol", "weak_tol",
      [&](const std::string& v) { o.weak_tol = std::stod(v); });
  use("--golden-iters", "golden_iters",
      [&](const std::string& v) { o.golden_iters = std::stoi(v); });
  use("--quad-tol", "quad_tol",
      [&](const std::string& v) { o.quad_tol = std::stod(v); });
  use("--inner-max-iter", "inner_max_iter",
      [&](const std::string& v) { o.inner_max_iter = std::stoi(v); });
  use("--seed", "seed",
      [&](const std::string& v) { o.seed = std::stoull(v); });
  use("--threads", "threads",
      [&](const std::string& v) { o.threads = std::stoi(v); });
}

void require_sigma_eps2(const FitOptions& o) {
  if (o.sigma_eps2 > 0.0) return;
  throw UsageError(
      "--sigma-eps2 is required: the measurement-error variance is treated "
      "as known and is never estimated here. Obtain it independently, e.g. "
      "by extrapolating the empirical semivariogram to the origin "
      "(Kang, Cressie & Shi 2010).");
}

EmConfig em_config(const FitOptions& o) {
  EmConfig cfg;
  cfg.max_iter = o.max_iter;
  cfg.tol_loglik = o.tol;
  cfg.weak_tol = o.weak_tol;
  cfg.validate();
  return cfg;
}

AecmConfig aecm_config(const FitOptions& o) {
  AecmConfig cfg;
  cfg.em = em_config(o);
  auto bracket = parse_double_list(o.b_bracket);
  FRK_REQUIRE(bracket.size() == 2, DataError,
              "--b-bracket needs LO,HI, got '" << o.b_bracket << "'");
  cfg.b_lo = bracket[0];
  cfg.b_hi = bracket[1];
  cfg.golden_iters = o.golden_iters;
  cfg.quad_tol = o.quad_tol;
  cfg.inner_max_iter = o.inner_max_iter;
  std::vector<double> init;
  for (double b : parse_double_list(o.initial_b))
    if (b >= cfg.b_lo && b <= cfg.b_hi) init.push_back(b);
  if (!init.empty()) cfg.initial_b_set = init;
  if (cfg.degenerate_bracket()) cfg.initial_b_set = {cfg.b_lo};
  cfg.validate();
  return cfg;
}

KnotLayout resolve_knots(const FitOptions& o, const Dataset& data) {
  Metric metric = parse_metric(o.metric_spec);
  KnotLayout layout;
  if (!o.knots_path.empty()) {
    layout = read_knots_csv(o.knots_path, metric);
  } else if (!o.knot_grid.empty()) {
    layout = knots_from_grid(o.knot_grid, data, metric);
  } else {
    throw UsageError("one of --knots or --knot-grid is required");
  }
  FRK_REQUIRE(layout.levels() == o.resolutions, DataError,
              "knot layout has " << layout.levels()
                                 << " resolutions, --resolutions says "
                                 << o.resolutions);
  return layout;
}

FitResult run_fit(const SmeModel& model, const FitOptions& o) {
  SMEParams init = default_init(
      model, std::clamp(1.5, 0.1, std::max(0.1, o.b_fixed)), o.sigma_eps2);
  if (o.method == "em") {
    init = init.with_b(o.b_fixed);
    return em_fit(model, init, em_config(o));
  }
  AecmConfig cfg = aecm_config(o);
  double b0 = std::clamp(1.5, cfg.b_lo, cfg.b_hi);
  return aecm_fit(model, init.with_b(b0), cfg);
}

void print_fit_report(const FitResult& fit, const std::string& method,
                      std::ostream& os) {
  os << std::setprecision(10);
  os << "method " << method << "\n";
  os << "converged " << (fit.converged ? 1 : 0) << "\n";
  os << "iterations " << fit.iterations << "\n";
  os << "loglik " << fit.loglik_trace.back().second << "\n";
  os << "sigma_delta2 " << fit.params.sigma_delta2 << "\n";
  os << "range_K "
     << fit.params.K.maxCoeff() - fit.params.K.minCoeff() << "\n";
  os << "beta";
  for (Eigen::Index i = 0; i < fit.params.beta.size(); ++i)
    os << " " << fit.params.beta(i);
  os << "\n";
  if (method == "aecm") {
    os << "b_hat " << fit.params.b << "\n";
    os << "b_trace_evaluations " << fit.b_trace.size() << "\n";
  }
  os << "ridge_events " << fit.ridge_events << "\n";
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& out_dir, std::uint64_t seed,
                 int replicates, const std::string& design_kind,
                 const std::string& k_kind, double sd2, double se2, double b,
                 int n_obs, int domain_lo, int domain_hi, int knot_count) {
  namespace fs = std::filesystem;
  FRK_REQUIRE(fs::exists(out_dir) && fs::is_directory(out_dir), DataError,
              "output directory does not exist: " << out_dir);
  SimDesign design;
  design.domain_lo = domain_lo;
  design.domain_hi = domain_hi;
  design.n_obs = n_obs;
  design.knot_count = knot_count;
  design.sampling = design_kind == "clustered" ? SamplingDesign::Clustered
                                               : SamplingDesign::Random;
  design.k_type = k_kind == "wishart" ? KType::Wishart
                  : k_kind == "wishart_positive" ? KType::WishartPositive
                                                 : KType::Matern;
  design.sigma_delta2 = sd2;
  design.sigma_eps2 = se2;
  design.b = b;
  design.validate();

  KnotLayout layout = design.knot_layout();
  atomic_write((fs::path(out_dir) / "knots.csv").string(),
               [&](std::ostream& os) { write_knots_csv(layout, os); });

  for (int rep = 1; rep <= replicates; ++rep) {
    std::mt19937_64 rng = make_rng(seed, 0, static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd k = sample_K(design.k_type, layout, rng);
    SimulatedField field = simulate_field(design, k, rng);
    std::string tag = "_" + std::to_string(rep);
    atomic_write((fs::path(out_dir) / ("obs" + tag + ".csv")).string(),
                 [&](std::ostream& os) {
                   write_observations_csv(field.data, os);
                 });
    atomic_write((fs::path(out_dir) / ("truth" + tag + ".csv")).string(),
                 [&](std::ostream& os) {
                   os << "coord1,truth\n" << std::setprecision(17);
                   for (Eigen::Index i = 0; i < field.truth.size(); ++i)
                     os << field.domain_points(i, 0) << "," << field.truth(i)
                        << "\n";
                 });
    atomic_write(
        (fs::path(out_dir) / ("manifest" + tag + ".txt")).string(),
        [&](std::ostream& os) {
          os << std::setprecision(17);
          os << "design " << to_string(design.sampling) << "\n"
             << "k_type " << to_string(design.k_type) << "\n"
             << "sigma_delta2 " << design.sigma_delta2 << "\n"
             << "sigma_eps2 " << design.sigma_eps2 << "\n"
             << "b " << design.b << "\n"
             << "beta0 " << design.beta(0) << "\n"
             << "beta1 " << design.beta(1) << "\n"
             << "n " << design.n_obs << "\n"
             << "domain " << design.domain_lo << "," << design.domain_hi
             << "\n"
             << "seed " << seed << "\n"
             << "replicate " << rep << "\n";
        });
  }
  std::cout << "wrote " << replicates << " replicate set(s) under " << out_dir
            << "\n";
  return 0;
}

int cmd_fit(CLI::App* sub, FitOptions& o, const std::string& out_path) {
  merge_config(sub, o);
  if (o.dump_config) {
    for (const auto& [k, v] : o.as_config(sub)) std::cout << k << " " << v << "\n";
    return 0;
  }
  require_sigma_eps2(o);
  Dataset data = read_observations_csv(o.data_path);
  KnotLayout layout = resolve_knots(o, data);
  SmeModel model{data, layout};
  model.validate();
  FitResult fit = run_fit(model, o);
  atomic_write(out_path,
               [&](std::ostream& os) { write_fit(fit, layout, os); });
  print_fit_report(fit, o.method, std::cout);
  std::cout << "fit written to " << out_path << "\n";
  return 0;
}

struct TargetsSpec {
  Points targets;
  std::optional<Eigen::MatrixXd> x0;
  Eigen::VectorXd vdelta0;
};

TargetsSpec read_targets_csv(const std::string& path) {
  std::ifstream is(path);
  FRK_REQUIRE(is.good(), DataError, "cannot open targets file: " << path);
  std::string line;
  FRK_REQUIRE(static_cast<bool>(std::getline(is, line)), DataError,
              path << ": empty file");
  std::istringstream hs(line);
  std::vector<std::string> header;
  std::string tok;
  while (std::getline(hs, tok, ',')) header.push_back(tok);
  FRK_REQUIRE(!header.empty() && header[0] == "coord1", DataError,
              path << " line 1: first column must be coord1");
  std::size_t pos = 1;
  int dim = 1;
  if (pos < header.size() && header[pos] == "coord2") {
    dim = 2;
    ++pos;
  }
  std::size_t x_begin = pos;
  while (pos < header.size() && !header[pos].empty() && header[pos][0] == 'x')
    ++pos;
  std::size_t p = pos - x_begin;
  bool has_vdelta = pos < header.size() && header[pos] == "vdelta";
  if (has_vdelta) ++pos;
  FRK_REQUIRE(pos == header.size(), DataError,
              path << " line 1: unexpected column '" << header[pos] << "'");

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      FRK_REQUIRE(end != tok.c_str() && *end == '\0', DataError,
                  path << " line " << lineno << ": not a number: '" << tok
                       << "'");
      vals.push_back(v);
    }
    FRK_REQUIRE(vals.size() == header.size(), DataError,
                path << " line " << lineno << ": expected " << header.size()
                     << " fields, got " << vals.size());
    rows.push_back(std::move(vals));
  }
  FRK_REQUIRE(!rows.empty(), DataError, path << ": no target rows");

  TargetsSpec spec;
  Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  spec.targets.resize(n, dim);
  if (p > 0) spec.x0 = Eigen::MatrixXd(n, static_cast<Eigen::Index>(p));
  spec.vdelta0 = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    spec.targets(i, 0) = rows[i][c++];
    if (dim == 2) spec.targets(i, 1) = rows[i][c++];
    for (std::size_t j = 0; j < p; ++j)
      (*spec.x0)(i, static_cast<Eigen::Index>(j)) = rows[i][c++];
    if (has_vdelta) spec.vdelta0(i) = rows[i][c++];
  }
  return spec;
}

TargetsSpec grid_targets(const std::string& spec) {
  auto v = parse_double_list(spec);
  TargetsSpec out;
  if (v.size() == 3) {
    double lo = v[0], hi = v[1], step = v[2];
    FRK_REQUIRE(step > 0 && hi >= lo, DataError, "bad --grid " << spec);
    std::vector<double> xs;
    for (double x = lo; x <= hi + 1e-12 * std::max(1.0, std::abs(hi));
         x += step)
      xs.push_back(x);
    out.targets.resize(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i)
      out.targets(static_cast<Eigen::Index>(i), 0) = xs[i];
  } else if (v.size() == 6) {
    double xlo = v[0], xhi = v[1], xstep = v[2];
    double ylo = v[3], yhi = v[4], ystep = v[5];
    FRK_REQUIRE(xstep > 0 && ystep > 0 && xhi >= xlo && yhi >= ylo, DataError,
                "bad --grid " << spec);
    std::vector<std::pair<double, double>> pts;
    for (double y = ylo; y <= yhi + 1e-12 * std::max(1.0, std::abs(yhi));
         y += ystep)
      for (double x = xlo; x <= xhi + 1e-12 * std::max(1.0, std::abs(xhi));
           x += xstep)
        pts.emplace_back(x, y);
    out.targets.resize(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out.targets(static_cast<Eigen::Index>(i), 0) = pts[i].first;
      out.targets(static_cast<Eigen::Index>(i), 1) = pts[i].second;
    }
  } else {
    throw UsageError("--grid expects LO,HI,STEP or XLO,XHI,XSTEP,YLO,YHI,YSTEP");
  }
  out.vdelta0 = Eigen::VectorXd::Ones(out.targets.rows());
  return out;
}

int cmd_predict(const std::string& fit_path, const std::string& data_path,
                const std::string& targets_path, const std::string& grid_spec,
                double level, bool decompose, double snap_radius,
                Eigen::Index batch, const std::string& out_path) {
  LoadedFit loaded = read_fit(fit_path);
  Dataset data = read_observations_csv(data_path);
  SmeModel model{data, loaded.layout};
  model.validate();

  TargetsSpec spec;
  if (!targets_path.empty())
    spec = read_targets_csv(targets_path);
  else if (!grid_spec.empty())
    spec = grid_targets(grid_spec);
  else
    throw UsageError("one of --targets or --grid is required");

  Eigen::MatrixXd x0;
  if (spec.x0) {
    x0 = *spec.x0;
  } else {
    // mean structure derived from coordinates: intercept plus coordinates
    FRK_REQUIRE(data.p() == 1 + spec.targets.cols(), DataError,
                "targets carry no covariate columns and the fitted design "
                "has " << data.p()
                       << " columns; provide x1..xp in the targets file");
    x0.resize(spec.targets.rows(), data.p());
    x0.col(0).setOnes();
    for (Eigen::Index j = 0; j < spec.targets.cols(); ++j)
      x0.col(1 + j) = spec.targets.col(j);
  }

  PredictionRequest req =
      make_request(data, spec.targets, x0, spec.vdelta0, snap_radius,
                   loaded.layout.metric);
  req.batch = batch;
  KrigingOutput out = predict(model, loaded.fit.params, req);
  auto [lo, hi] = prediction_interval(out, level);
  atomic_write(out_path, [&](std::ostream& os) {
    write_predictions_csv(spec.targets, out, lo, hi, decompose, os);
  });
  std::cout << "predicted " << req.size() << " targets";
  if (out.clamp_count > 0)
    std::cout << " (clamped " << out.clamp_count << " negative variances)";
  std::cout << "; written to " << out_path << "\n";
  return 0;
}

int cmd_cv(CLI::App* sub, FitOptions& o, int folds,
           const std::string& out_path) {
  merge_config(sub, o);
  if (o.dump_config) {
    auto kv = o.as_config(sub);
    kv["folds"] = std::to_string(folds);
    for (const auto& [k, v] : kv) std::cout << k << " " << v << "\n";
    return 0;
  }
  require_sigma_eps2(o);
  Dataset data = read_observations_csv(o.data_path);
  KnotLayout layout = resolve_knots(o, data);
  const Eigen::Index n = data.n();
  FRK_REQUIRE(folds >= 2 && folds <= n, DataError,
              "--folds must be in [2, n]");

  // deterministic shuffled round-robin assignment
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = make_rng(o.seed, 0xCF);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % folds);

  auto subset = [&](const std::vector<int>& rows) {
    Dataset d;
    Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    d.locations.resize(k, data.locations.cols());
    d.X.resize(k, data.p());
    d.y.resize(k);
    d.vdelta.resize(k);
    d.veps.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      int j = rows[static_cast<std::size_t>(i)];
      d.locations.row(i) = data.locations.row(j);
      d.X.row(i) = data.X.row(j);
      d.y(i) = data.y(j);
      d.vdelta(i) = data.vdelta(j);
      d.veps(i) = data.veps(j);
    }
    return d;
  };

  std::vector<double> fold_mspe(static_cast<std::size_t>(folds));
  std::vector<int> fold_size(static_cast<std::size_t>(folds));
  double pooled_se = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (Eigen::Index i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test : train)
          .push_back(static_cast<int>(i));
    Dataset train_d = subset(train), test_d = subset(test);
    SmeModel model{train_d, layout};
    FitResult fit = run_fit(model, o);
    PredictionRequest req = make_request(train_d, test_d.locations, test_d.X,
                                         test_d.vdelta);
    Eigen::VectorXd yhat = krige(model, fit.params, req);
    fold_mspe[static_cast<std::size_t>(f)] = mspe(yhat, test_d.y);
    fold_size[static_cast<std::size_t>(f)] = static_cast<int>(test.size());
    pooled_se += (yhat - test_d.y).squaredNorm();
  }
  double overall = pooled_se / static_cast<double>(n);

  atomic_write(out_path, [&](std::ostream& os) {
    os << std::setprecision(10);
    os << "frk_cv_report\n";
    os << "method " << o.method << "\n";
    os << "folds " << folds << "\n";
    os << "n " << n << "\n";
    os << "seed " << o.seed << "\n";
    for (int f = 0; f < folds; ++f)
      os << "fold " << (f + 1) << " n_test "
         << fold_size[static_cast<std::size_t>(f)] << " mspe "
         << fold_mspe[static_cast<std::size_t>(f)] << "\n";
    os << "overall_mspe " << overall << "\n";
  });
  std::cout << "cv overall_mspe " << overall << "; report written to "
            << out_path << "\n";
  return 0;
}

int cmd_evaluate(CLI::App* sub, FitOptions& o, const std::string& k_types,
                 const std::string& sd2_list, const std::string& se2_list,
                 const std::string& b_list, const std::string& designs,
                 int replicates, const std::string& out_path) {
  merge_config(sub, o);
  if (o.dump_config) {
    for (const auto& [k, v] : o.as_config(sub)) std::cout << k << " " << v << "\n";
    return 0;
  }
  std::vector<KType> types;
  {
    std::istringstream ss(k_types);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "matern") types.push_back(KType::Matern);
      else if (tok == "wishart") types.push_back(KType::Wishart);
      else if (tok == "wishart_positive")
        types.push_back(KType::WishartPositive);
      else throw UsageError("unknown k-type '" + tok + "'");
    }
  }
  std::vector<SamplingDesign> samplings;
  if (designs == "both")
    samplings = {SamplingDesign::Clustered, SamplingDesign::Random};
  else if (designs == "random")
    samplings = {SamplingDesign::Random};
  else if (designs == "clustered")
    samplings = {SamplingDesign::Clustered};
  else
    throw UsageError("--designs must be both|random|clustered");

  std::vector<SimDesign> cells;
  for (KType t : types)
    for (double se2 : parse_double_list(se2_list))
      for (double b : parse_double_list(b_list))
        for (double sd2 : parse_double_list(sd2_list))
          for (SamplingDesign s : samplings) {
            SimDesign d;
            d.k_type = t;
            d.sigma_eps2 = se2;
            d.sigma_delta2 = sd2;
            d.b = b;
            d.sampling = s;
            cells.push_back(d);
          }

  StudyConfig cfg;
  cfg.replicates = replicates;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.em = em_config(o);
  cfg.aecm = aecm_config(o);
  StudyResult res = run_study(cells, cfg);
  atomic_write(out_path,
               [&](std::ostream& os) { write_study_csv(res, os); });
  int failures = 0;
  for (const auto& c : res.cells) failures += c.failures();
  std::cout << "evaluated " << cells.size() << " cells x " << replicates
            << " replicates (" << failures << " failures); written to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fixed-rank kriging for the spatial mixed effects model"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic fields");
  std::string sim_out;
  std::uint64_t sim_seed = 1;
  int sim_reps = 1, sim_n = 64, sim_lo = 1, sim_hi = 256, sim_knots = 5;
  std::string sim_design = "random", sim_ktype = "matern";
  double sim_sd2 = 0.1, sim_se2 = 1.0, sim_b = 1.5;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--replicates", sim_reps, "replicate count");
  sim->add_option("--design", sim_design, "random | clustered")
      ->check(CLI::IsMember({"random", "clustered"}));
  sim->add_option("--k-type", sim_ktype,
                  "matern | wishart | wishart_positive")
      ->check(CLI::IsMember({"matern", "wishart", "wishart_positive"}));
  sim->add_option("--sigma-delta2", sim_sd2, "fine-scale variance");
  sim->add_option("--sigma-eps2", sim_se2, "measurement-error variance");
  sim->add_option("--b", sim_b, "true bandwidth constant");
  sim->add_option("--n", sim_n, "observed sites");
  sim->add_option("--domain-lo", sim_lo, "first lattice site");
  sim->add_option("--domain-hi", sim_hi, "last lattice site");
  sim->add_option("--knot-count", sim_knots, "knots (single resolution)");

  // fit
  auto* fit = app.add_subcommand("fit", "estimate model parameters");
  FitOptions fit_opts;
  std::string fit_out;
  add_fit_options(fit, fit_opts);
  fit->add_option("--out", fit_out, "fit result file")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "kriging at target locations");
  std::string pred_fit, pred_data, pred_targets, pred_grid, pred_out;
  double pred_level = 0.95, pred_snap = -1.0;
  Eigen::Index pred_batch = 4096;
  bool pred_decompose = false;
  pred->add_option("--fit", pred_fit, "fit result file")->required();
  pred->add_option("--data", pred_data, "observations CSV used in the fit")
      ->required();
  pred->add_option("--targets", pred_targets, "targets CSV");
  pred->add_option("--grid", pred_grid,
                   "LO,HI,STEP or XLO,XHI,XSTEP,YLO,YHI,YSTEP");
  pred->add_option("--level", pred_level, "interval level (default 0.95)");
  pred->add_flag("--decompose", pred_decompose,
                 "add mean/spatial decomposition columns");
  pred->add_option("--snap-radius", pred_snap,
                   "match targets to observed sites within this radius");
  pred->add_option("--batch", pred_batch, "target batch size");
  pred->add_option("--out", pred_out, "predictions CSV")->required();

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross-validated MSPE");
  FitOptions cv_opts;
  std::string cv_out;
  int cv_folds = 5;
  add_fit_options(cv, cv_opts);
  cv->add_option("--folds", cv_folds, "fold count (default 5)");
  cv->add_option("--out", cv_out, "report file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "simulation study metrics");
  FitOptions eval_opts;
  eval_opts.sigma_eps2 = 1.0;
  std::string eval_out, eval_ktypes = "matern", eval_designs = "both";
  std::string eval_sd2 = "0.01,0.1,1", eval_se2 = "1", eval_b = "0.5,1,1.5,2";
  int eval_reps = 200;
  add_fit_options(eval, eval_opts, /*need_data=*/false);
  eval->add_option("--k-types", eval_ktypes, "comma list of covariance types");
  eval->add_option("--sigma-delta2-list", eval_sd2, "fine-scale variances");
  eval->add_option("--sigma-eps2-list", eval_se2, "measurement variances");
  eval->add_option("--b-list", eval_b, "true bandwidth constants");
  eval->add_option("--designs", eval_designs, "both | random | clustered");
  eval->add_option("--replicates", eval_reps, "replicates per cell");
  eval->add_option("--out", eval_out, "study CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_out, sim_seed, sim_reps, sim_design, sim_ktype,
                          sim_sd2, sim_se2, sim_b, sim_n, sim_lo, sim_hi,
                          sim_knots);
    if (fit->parsed()) return cmd_fit(fit, fit_opts, fit_out);
    if (pred->parsed())
      return cmd_predict(pred_fit, pred_data, pred_targets, pred_grid,
                         pred_level, pred_decompose, pred_snap, pred_batch,
                         pred_out);
    if (cv->parsed()) return cmd_cv(cv, cv_opts, cv_folds, cv_out);
    if (eval->parsed())
      return cmd_evaluate(eval, eval_opts, eval_ktypes, eval_sd2, eval_se2,
                          eval_b, eval_designs, eval_reps, eval_out);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const EstimationError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
