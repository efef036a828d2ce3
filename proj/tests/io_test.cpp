#include <unistd.h>
#include "frk/io.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace frk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("frk_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int counter;
};
int TempDir::counter = 0;

Dataset sample_dataset(int dim) {
  Dataset d;
  d.locations.resize(3, dim);
  if (dim == 1)
    d.locations << 1.5, 2.25, 3.125;
  else
    d.locations << -93.5, 42.0, -94.25, 41.5, -95.125, 40.75;
  d.X.resize(3, 2);
  d.X << 1, 0.25, 1, 0.5, 1, 0.75;
  d.y.resize(3);
  d.y << 1.0 / 3.0, -2.125, 7.0;
  d.vdelta.resize(3);
  d.vdelta << 1.0, 2.0, 0.5;
  d.veps.resize(3);
  d.veps << 1.0, 1.0, 3.0;
  return d;
}

}  // namespace

TEST(ObservationsCsv, RoundTripPreservesDoubles) {
  for (int dim : {1, 2}) {
    TempDir tmp;
    Dataset d = sample_dataset(dim);
    atomic_write(tmp.file("obs.csv"),
                 [&](std::ostream& os) { write_observations_csv(d, os); });
    Dataset back = read_observations_csv(tmp.file("obs.csv"));
    EXPECT_EQ(back.locations, d.locations);
    EXPECT_EQ(back.X, d.X);
    EXPECT_EQ(back.y, d.y);
    EXPECT_EQ(back.vdelta, d.vdelta);
    EXPECT_EQ(back.veps, d.veps);
  }
}

TEST(ObservationsCsv, MissingWeightsDefaultToOne) {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("obs.csv"));
    os << "coord1,x1,y\n1,1,0.5\n2,1,0.75\n";
  }
  Dataset d = read_observations_csv(tmp.file("obs.csv"));
  EXPECT_EQ(d.n(), 2);
  EXPECT_EQ(d.p(), 1);
  EXPECT_TRUE(d.vdelta.isOnes());
  EXPECT_TRUE(d.veps.isOnes());
}

TEST(ObservationsCsv, MalformedRowNamesLineNumber) {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("obs.csv"));
    os << "coord1,x1,y\n1,1,0.5\n2,1\n";
  }
  try {
    read_observations_csv(tmp.file("obs.csv"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos)
        << e.what();
  }
  {
    std::ofstream os(tmp.file("bad.csv"));
    os << "coord1,x1,y\n1,oops,0.5\n";
  }
  try {
    read_observations_csv(tmp.file("bad.csv"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos);
  }
}

TEST(ObservationsCsv, HeaderValidation) {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("obs.csv"));
    os << "lon,lat,y\n0,0,1\n";
  }
  EXPECT_THROW(read_observations_csv(tmp.file("obs.csv")), DataError);
  EXPECT_THROW(read_observations_csv(tmp.file("missing.csv")), DataError);
}

TEST(KnotsCsv, RoundTrip) {
  TempDir tmp;
  KnotLayout layout = place_knots_1d(0.5, 256.5, {5, 3});
  atomic_write(tmp.file("knots.csv"),
               [&](std::ostream& os) { write_knots_csv(layout, os); });
  KnotLayout back = read_knots_csv(tmp.file("knots.csv"));
  EXPECT_EQ(back.knots, layout.knots);
  EXPECT_EQ(back.resolution, layout.resolution);

  KnotLayout tri = place_knots_triangular(0, 10, 0, 5, {{4, 3}});
  atomic_write(tmp.file("tri.csv"),
               [&](std::ostream& os) { write_knots_csv(tri, os); });
  KnotLayout tri_back =
      read_knots_csv(tmp.file("tri.csv"), Metric::great_circle(100.0));
  EXPECT_EQ(tri_back.knots, tri.knots);
  EXPECT_EQ(tri_back.metric.kind, Metric::Kind::GreatCircle);
}

TEST(FitFile, RoundTripExact) {
  TempDir tmp;
  std::mt19937_64 rng = make_rng(3);
  KnotLayout layout = place_knots_1d(0.5, 256.5, {5});
  Eigen::MatrixXd k = frk_test::random_spd(5, rng);
  Eigen::VectorXd beta(2);
  beta << 5.0401, 0.0815926535897932;
  FitResult fit{SMEParams(k, 0.12345678901234567, 1.0, 1.5, beta)};
  fit.converged = true;
  fit.iterations = 17;
  fit.ridge_events = 1;
  fit.loglik_trace = {{0, -120.5}, {1, -118.25}, {2, -118.0001}};
  fit.b_trace = {0.5, 1.0, 1.5, 2.0, 1.4375};

  atomic_write(tmp.file("fit.txt"),
               [&](std::ostream& os) { write_fit(fit, layout, os); });
  LoadedFit back = read_fit(tmp.file("fit.txt"));
  EXPECT_EQ(back.fit.params.K, fit.params.K);
  EXPECT_EQ(back.fit.params.beta, fit.params.beta);
  EXPECT_EQ(back.fit.params.sigma_delta2, fit.params.sigma_delta2);
  EXPECT_EQ(back.fit.params.sigma_eps2(), fit.params.sigma_eps2());
  EXPECT_EQ(back.fit.params.b, fit.params.b);
  EXPECT_EQ(back.fit.converged, fit.converged);
  EXPECT_EQ(back.fit.iterations, fit.iterations);
  EXPECT_EQ(back.fit.ridge_events, fit.ridge_events);
  ASSERT_EQ(back.fit.loglik_trace.size(), fit.loglik_trace.size());
  for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i) {
    EXPECT_EQ(back.fit.loglik_trace[i].first, fit.loglik_trace[i].first);
    EXPECT_EQ(back.fit.loglik_trace[i].second, fit.loglik_trace[i].second);
  }
  EXPECT_EQ(back.fit.b_trace, fit.b_trace);
  EXPECT_EQ(back.layout.knots, layout.knots);
}

TEST(FitFile, VersionMismatchIsTypedError) {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("fit.txt"));
    os << "frk_fit 99\nm 2\n";
  }
  try {
    read_fit(tmp.file("fit.txt"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  {
    std::ofstream os(tmp.file("junk.txt"));
    os << "something else\n";
  }
  EXPECT_THROW(read_fit(tmp.file("junk.txt")), DataError);
}

TEST(AtomicWrite, NoPartialFileOnFailure) {
  TempDir tmp;
  std::string target = tmp.file("out.csv");
  EXPECT_THROW(atomic_write(target,
                            [](std::ostream&) {
                              throw DataError("simulated failure");
                            }),
               DataError);
  EXPECT_FALSE(fs::exists(target));
  // temporary cleaned up as well
  EXPECT_TRUE(fs::is_empty(tmp.path));
  EXPECT_THROW(
      atomic_write((tmp.path / "missing_dir" / "x.csv").string(),
                   [](std::ostream& os) { os << "data"; }),
      DataError);
}

TEST(AtomicWrite, SuccessfulWriteLandsAtTarget) {
  TempDir tmp;
  std::string target = tmp.file("ok.txt");
  atomic_write(target, [](std::ostream& os) { os << "payload\n"; });
  std::ifstream is(target);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "payload");
}

TEST(ConfigFile, ParsesFlatKeyValues) {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("cfg.txt"));
    os << "# comment line\n"
       << "method aecm\n"
       << "sigma_eps2 1.5  # trailing comment\n"
       << "\n"
       << "b_lo 0.1\n";
  }
  auto kv = read_config(tmp.file("cfg.txt"));
  EXPECT_EQ(kv.at("method"), "aecm");
  EXPECT_EQ(kv.at("sigma_eps2"), "1.5");
  EXPECT_EQ(kv.at("b_lo"), "0.1");
  {
    std::ofstream os(tmp.file("bad.txt"));
    os << "orphan_key\n";
  }
  EXPECT_THROW(read_config(tmp.file("bad.txt")), DataError);
}

TEST(StudyCsv, OneRowPerCell) {
  SimDesign d;
  d.sigma_delta2 = 0.1;
  d.b = 1.0;
  StudyConfig cfg;
  cfg.replicates = 2;
  cfg.aecm.golden_iters = 1;
  cfg.aecm.max_cycles = 4;
  StudyResult res = run_study({d}, cfg);
  std::ostringstream os;
  write_study_csv(res, os);
  std::istringstream is(os.str());
  std::string header, row, extra;
  ASSERT_TRUE(std::getline(is, header));
  EXPECT_EQ(header.substr(0, 2), "k,");
  ASSERT_TRUE(std::getline(is, row));
  EXPECT_EQ(row.substr(0, 7), "matern,");
  EXPECT_FALSE(std::getline(is, extra));
}

TEST(PredictionsCsv, ColumnLayout) {
  KrigingOutput out;
  out.yhat = Eigen::VectorXd::Constant(2, 1.25);
  out.kse = Eigen::VectorXd::Constant(2, 0.5);
  out.mean_part = Eigen::VectorXd::Constant(2, 1.0);
  out.spatial_part = Eigen::VectorXd::Constant(2, 0.25);
  Points t(2, 1);
  t << 10.0, 20.0;
  auto [lo, hi] = std::pair{Eigen::VectorXd::Constant(2, 0.27),
                            Eigen::VectorXd::Constant(2, 2.23)};
  std::ostringstream plain, decomposed;
  write_predictions_csv(t, out, lo, hi, false, plain);
  write_predictions_csv(t, out, lo, hi, true, decomposed);
  EXPECT_EQ(plain.str().substr(0, plain.str().find('\n')),
            "coord1,yhat,kse,lo,hi");
  EXPECT_EQ(decomposed.str().substr(0, decomposed.str().find('\n')),
            "coord1,yhat,kse,lo,hi,mean,spatial");
}
