#ifndef FRK_IO_HPP
#define FRK_IO_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "frk/model.hpp"
#include "frk/simulation.hpp"

namespace frk {

inline constexpr int kFitFileVersion = 1;

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, const std::string& file,
                           int line) {
  char* end = nullptr;
  const char* begin = s.c_str();
  double v = std::strtod(begin, &end);
  FRK_REQUIRE(end != begin && *end == '\0', DataError,
              file << " line " << line << ": not a number: '" << s << "'");
  return v;
}

inline std::ostream& full_precision(std::ostream& os) {
  os << std::setprecision(17);
  return os;
}

}  // namespace detail

/// Write through a temporary file and rename, so a failed run leaves no
/// partial primary output behind.
inline void atomic_write(const std::string& path,
                         const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    FRK_REQUIRE(fs::exists(target.parent_path(), ec), DataError,
                "output directory does not exist: "
                    << target.parent_path().string());
  }
  fs::path tmp = target;
  tmp += ".tmp";
  try {
    std::ofstream os(tmp);
    FRK_REQUIRE(os.good(), DataError, "cannot open for writing: " << tmp.string());
    writer(os);
    os.flush();
    FRK_REQUIRE(os.good(), DataError, "write failed: " << tmp.string());
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move output into place: " + target.string() +
                    ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Knot layout CSV: res,coord1[,coord2]

inline void write_knots_csv(const KnotLayout& layout, std::ostream& os) {
  bool two = layout.knots.cols() == 2;
  os << (two ? "res,coord1,coord2\n" : "res,coord1\n");
  detail::full_precision(os);
  for (Eigen::Index i = 0; i < layout.size(); ++i) {
    os << layout.resolution[static_cast<std::size_t>(i)] << ","
       << layout.knots(i, 0);
    if (two) os << "," << layout.knots(i, 1);
    os << "\n";
  }
}

inline KnotLayout read_knots_csv(const std::string& path,
                                 Metric metric = Metric::euclidean()) {
  std::ifstream is(path);
  FRK_REQUIRE(is.good(), DataError, "cannot open knots file: " << path);
  std::string line;
  FRK_REQUIRE(static_cast<bool>(std::getline(is, line)), DataError,
              path << ": empty file");
  auto header = detail::split_csv(line);
  FRK_REQUIRE(header.size() >= 2 && header[0] == "res" && header[1] == "coord1",
              DataError, path << " line 1: expected header res,coord1[,coord2]");
  int dim = header.size() >= 3 && header[2] == "coord2" ? 2 : 1;

  std::vector<double> c1, c2;
  std::vector<int> res;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    FRK_REQUIRE(static_cast<int>(f.size()) == 1 + dim, DataError,
                path << " line " << lineno << ": expected " << 1 + dim
                     << " fields, got " << f.size());
    res.push_back(
        static_cast<int>(detail::parse_double(f[0], path, lineno)));
    c1.push_back(detail::parse_double(f[1], path, lineno));
    if (dim == 2) c2.push_back(detail::parse_double(f[2], path, lineno));
  }
  KnotLayout layout;
  layout.metric = metric;
  layout.knots.resize(static_cast<Eigen::Index>(c1.size()), dim);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    layout.knots(static_cast<Eigen::Index>(i), 0) = c1[i];
    if (dim == 2) layout.knots(static_cast<Eigen::Index>(i), 1) = c2[i];
  }
  layout.resolution = std::move(res);
  layout.validate();
  return layout;
}

// ---------------------------------------------------------------------------
// Observations CSV: coord1[,coord2],x1..xp,y[,vdelta,veps]
// Missing weight columns default to 1.

inline void write_observations_csv(const Dataset& data, std::ostream& os) {
  bool two = data.locations.cols() == 2;
  os << "coord1";
  if (two) os << ",coord2";
  for (Eigen::Index j = 0; j < data.p(); ++j) os << ",x" << (j + 1);
  os << ",y,vdelta,veps\n";
  detail::full_precision(os);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    os << data.locations(i, 0);
    if (two) os << "," << data.locations(i, 1);
    for (Eigen::Index j = 0; j < data.p(); ++j) os << "," << data.X(i, j);
    os << "," << data.y(i) << "," << data.vdelta(i) << "," << data.veps(i)
       << "\n";
  }
}

inline Dataset read_observations_csv(const std::string& path) {
  std::ifstream is(path);
  FRK_REQUIRE(is.good(), DataError, "cannot open observations file: " << path);
  std::string line;
  FRK_REQUIRE(static_cast<bool>(std::getline(is, line)), DataError,
              path << ": empty file");
  auto header = detail::split_csv(line);
  FRK_REQUIRE(!header.empty() && header[0] == "coord1", DataError,
              path << " line 1: first column must be coord1");
  std::size_t pos = 1;
  int dim = 1;
  if (pos < header.size() && header[pos] == "coord2") {
    dim = 2;
    ++pos;
  }
  std::size_t x_begin = pos;
  while (pos < header.size() && header[pos].size() >= 2 &&
         header[pos][0] == 'x')
    ++pos;
  std::size_t p = pos - x_begin;
  FRK_REQUIRE(p >= 1, DataError,
              path << " line 1: need at least one covariate column x1");
  FRK_REQUIRE(pos < header.size() && header[pos] == "y", DataError,
              path << " line 1: expected y column after covariates");
  ++pos;
  bool has_weights = pos + 1 < header.size() + 1 && pos < header.size() &&
                     header[pos] == "vdelta";
  if (has_weights)
    FRK_REQUIRE(pos + 1 < header.size() && header[pos + 1] == "veps", DataError,
                path << " line 1: vdelta column must be followed by veps");
  std::size_t ncols = pos + (has_weights ? 2 : 0);

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    FRK_REQUIRE(f.size() == ncols, DataError,
                path << " line " << lineno << ": expected " << ncols
                     << " fields, got " << f.size());
    std::vector<double> vals;
    vals.reserve(ncols);
    for (const auto& s : f)
      vals.push_back(detail::parse_double(s, path, lineno));
    rows.push_back(std::move(vals));
  }
  FRK_REQUIRE(!rows.empty(), DataError, path << ": no data rows");

  Dataset d;
  Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  d.locations.resize(n, dim);
  d.X.resize(n, static_cast<Eigen::Index>(p));
  d.y.resize(n);
  d.vdelta.resize(n);
  d.veps.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    std::size_t c = 0;
    d.locations(i, 0) = r[c++];
    if (dim == 2) d.locations(i, 1) = r[c++];
    for (std::size_t j = 0; j < p; ++j)
      d.X(i, static_cast<Eigen::Index>(j)) = r[c++];
    d.y(i) = r[c++];
    d.vdelta(i) = has_weights ? r[c++] : 1.0;
    d.veps(i) = has_weights ? r[c++] : 1.0;
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Predictions CSV: coord1[,coord2],yhat,kse,lo,hi[,mean,spatial]

inline void write_predictions_csv(const Points& targets,
                                  const KrigingOutput& out,
                                  const Eigen::VectorXd& lo,
                                  const Eigen::VectorXd& hi, bool decompose,
                                  std::ostream& os) {
  bool two = targets.cols() == 2;
  os << "coord1";
  if (two) os << ",coord2";
  os << ",yhat,kse,lo,hi";
  if (decompose) os << ",mean,spatial";
  os << "\n";
  detail::full_precision(os);
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    os << targets(i, 0);
    if (two) os << "," << targets(i, 1);
    os << "," << out.yhat(i) << "," << out.kse(i) << "," << lo(i) << ","
       << hi(i);
    if (decompose) os << "," << out.mean_part(i) << "," << out.spatial_part(i);
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Fit result file: flat keys, K row-major, traces inline.

inline void write_fit(const FitResult& fit, const KnotLayout& layout,
                      std::ostream& os) {
  detail::full_precision(os);
  const SMEParams& p = fit.params;
  os << "frk_fit " << kFitFileVersion << "\n";
  os << "m " << p.K.rows() << "\n";
  os << "p " << p.beta.size() << "\n";
  os << "b " << p.b << "\n";
  os << "sigma_delta2 " << p.sigma_delta2 << "\n";
  os << "sigma_eps2 " << p.sigma_eps2() << "\n";
  os << "beta";
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) os << " " << p.beta(i);
  os << "\n";
  os << "K";
  for (Eigen::Index i = 0; i < p.K.rows(); ++i)
    for (Eigen::Index j = 0; j < p.K.cols(); ++j) os << " " << p.K(i, j);
  os << "\n";
  os << "converged " << (fit.converged ? 1 : 0) << "\n";
  os << "iterations " << fit.iterations << "\n";
  os << "ridge_events " << fit.ridge_events << "\n";
  os << "reduced_to_em " << (fit.reduced_to_em ? 1 : 0) << "\n";
  os << "loglik_trace";
  for (const auto& [it, ll] : fit.loglik_trace) os << " " << it << ":" << ll;
  os << "\n";
  os << "b_trace";
  for (double b : fit.b_trace) os << " " << b;
  os << "\n";
  os << "knots_metric "
     << (layout.metric.kind == Metric::Kind::GreatCircle ? "greatcircle"
                                                         : "euclidean");
  if (layout.metric.kind == Metric::Kind::GreatCircle)
    os << " " << layout.metric.radius;
  os << "\n";
  os << "knots " << layout.size() << " " << layout.knots.cols() << "\n";
  for (Eigen::Index i = 0; i < layout.size(); ++i) {
    os << layout.resolution[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < layout.knots.cols(); ++j)
      os << " " << layout.knots(i, j);
    os << "\n";
  }
}

struct LoadedFit {
  FitResult fit;
  KnotLayout layout;
};

inline LoadedFit read_fit(const std::string& path) {
  std::ifstream is(path);
  FRK_REQUIRE(is.good(), DataError, "cannot open fit file: " << path);
  std::string key;
  int version = -1;
  is >> key >> version;
  FRK_REQUIRE(key == "frk_fit", DataError,
              path << ": not a fit file (missing frk_fit header)");
  FRK_REQUIRE(version == kFitFileVersion, DataError,
              path << ": fit file version " << version
                   << " not supported (expected " << kFitFileVersion << ")");
  Eigen::Index m = 0, p = 0;
  double b = 0, sd2 = 0, se2 = 0;
  is >> key >> m;
  FRK_REQUIRE(key == "m" && m > 0, DataError, path << ": bad field m");
  is >> key >> p;
  FRK_REQUIRE(key == "p" && p > 0, DataError, path << ": bad field p");
  is >> key >> b;
  FRK_REQUIRE(key == "b", DataError, path << ": bad field b");
  is >> key >> sd2;
  FRK_REQUIRE(key == "sigma_delta2", DataError, path << ": bad field sigma_delta2");
  is >> key >> se2;
  FRK_REQUIRE(key == "sigma_eps2", DataError, path << ": bad field sigma_eps2");
  Eigen::VectorXd beta(p);
  is >> key;
  FRK_REQUIRE(key == "beta", DataError, path << ": bad field beta");
  for (Eigen::Index i = 0; i < p; ++i) is >> beta(i);
  Eigen::MatrixXd k(m, m);
  is >> key;
  FRK_REQUIRE(key == "K", DataError, path << ": bad field K");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) is >> k(i, j);

  FitResult fit{SMEParams(std::move(k), sd2, se2, b, std::move(beta))};
  int flag = 0;
  is >> key >> flag;
  FRK_REQUIRE(key == "converged", DataError, path << ": bad field converged");
  fit.converged = flag != 0;
  is >> key >> fit.iterations;
  FRK_REQUIRE(key == "iterations", DataError, path << ": bad field iterations");
  is >> key >> fit.ridge_events;
  FRK_REQUIRE(key == "ridge_events", DataError, path << ": bad field ridge_events");
  is >> key >> flag;
  FRK_REQUIRE(key == "reduced_to_em", DataError, path << ": bad field reduced_to_em");
  fit.reduced_to_em = flag != 0;

  is >> key;
  FRK_REQUIRE(key == "loglik_trace", DataError, path << ": bad field loglik_trace");
  std::string rest;
  std::getline(is, rest);
  {
    std::istringstream ss(rest);
    std::string pair;
    while (ss >> pair) {
      auto colon = pair.find(':');
      FRK_REQUIRE(colon != std::string::npos, DataError,
                  path << ": malformed loglik_trace entry '" << pair << "'");
      fit.loglik_trace.emplace_back(std::stoi(pair.substr(0, colon)),
                                    std::stod(pair.substr(colon + 1)));
    }
  }
  is >> key;
  FRK_REQUIRE(key == "b_trace", DataError, path << ": bad field b_trace");
  std::getline(is, rest);
  {
    std::istringstream ss(rest);
    double v;
    while (ss >> v) fit.b_trace.push_back(v);
  }

  std::string metric_kind;
  is >> key >> metric_kind;
  FRK_REQUIRE(key == "knots_metric", DataError, path << ": bad field knots_metric");
  Metric metric = Metric::euclidean();
  if (metric_kind == "greatcircle") {
    double radius = 0;
    is >> radius;
    metric = Metric::great_circle(radius);
  }
  Eigen::Index nk = 0, dim = 0;
  is >> key >> nk >> dim;
  FRK_REQUIRE(key == "knots" && nk >= 2 && (dim == 1 || dim == 2), DataError,
              path << ": bad knots block");
  KnotLayout layout;
  layout.metric = metric;
  layout.knots.resize(nk, dim);
  layout.resolution.resize(static_cast<std::size_t>(nk));
  for (Eigen::Index i = 0; i < nk; ++i) {
    is >> layout.resolution[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < dim; ++j) is >> layout.knots(i, j);
  }
  FRK_REQUIRE(static_cast<bool>(is), DataError, path << ": truncated fit file");
  layout.validate();
  return LoadedFit{std::move(fit), std::move(layout)};
}

// ---------------------------------------------------------------------------
// Flat key-value config files ('#' comments).

inline std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream is(path);
  FRK_REQUIRE(is.good(), DataError, "cannot open config file: " << path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key, value;
    if (!(ss >> key)) continue;
    FRK_REQUIRE(static_cast<bool>(ss >> value), DataError,
                path << " line " << lineno << ": key '" << key
                     << "' has no value");
    kv[key] = value;
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Study results CSV, one row per design cell.

inline void write_study_csv(const StudyResult& study, std::ostream& os) {
  os << "k,sigma_delta2,sigma_eps2,b,design,"
        "mspe_true,mspe_aecm,mspe_em,rkse_aecm,rkse_em,"
        "pic_true,pic_aecm,pic_em,kl_aecm_better,b_hat_median,"
        "moran_p_median,replicates,failures\n";
  os << std::setprecision(6);
  for (const auto& cell : study.cells) {
    const SimDesign& d = cell.design;
    os << to_string(d.k_type) << "," << d.sigma_delta2 << "," << d.sigma_eps2
       << "," << d.b << "," << to_string(d.sampling) << ","
       << cell.cell_median(&RepMetrics::mspe_true) << ","
       << cell.cell_median(&RepMetrics::mspe_aecm) << ","
       << cell.cell_median(&RepMetrics::mspe_em) << ","
       << cell.cell_median(&RepMetrics::rkse_aecm) << ","
       << cell.cell_median(&RepMetrics::rkse_em) << ","
       << cell.cell_median(&RepMetrics::pic_true) << ","
       << cell.cell_median(&RepMetrics::pic_aecm) << ","
       << cell.cell_median(&RepMetrics::pic_em) << ","
       << cell.kl_aecm_better() << ","
       << cell.cell_median(&RepMetrics::b_hat) << ","
       << cell.cell_median(&RepMetrics::moran_p) << ","
       << cell.reps.size() << "," << cell.failures() << "\n";
  }
}

}  // namespace frk

#endif  // FRK_IO_HPP
