#ifndef FRK_GEOMETRY_HPP
#define FRK_GEOMETRY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "frk/common.hpp"

namespace frk {

/// A set of spatial locations, one per row; 1 column (line) or 2 columns.
/// For great-circle geometry the columns are (longitude, latitude) in degrees.
using Points = Eigen::MatrixXd;

/// Earth mean radius in kilometers; pass a different radius (e.g. 3963 for
/// statute miles) to work in other units.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct Metric {
  enum class Kind { Euclidean, GreatCircle } kind = Kind::Euclidean;
  double radius = kEarthRadiusKm;  // sphere radius, GreatCircle only

  static Metric euclidean() { return Metric{Kind::Euclidean, 0.0}; }
  static Metric great_circle(double radius = kEarthRadiusKm) {
    FRK_REQUIRE(radius > 0.0, DataError, "great-circle radius must be > 0");
    return Metric{Kind::GreatCircle, radius};
  }
};

namespace detail {

inline double deg2rad(double d) { return d * M_PI / 180.0; }

inline double haversine(double lon1, double lat1, double lon2, double lat2,
                        double radius) {
  double phi1 = deg2rad(lat1), phi2 = deg2rad(lat2);
  double dphi = deg2rad(lat2 - lat1);
  double dlam = deg2rad(lon2 - lon1);
  double s1 = std::sin(dphi / 2), s2 = std::sin(dlam / 2);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * radius * std::asin(std::min(1.0, std::sqrt(h)));
}

inline void check_points(const Points& p, const Metric& metric,
                         const char* what) {
  FRK_REQUIRE(p.cols() == 1 || p.cols() == 2, DimensionError,
              what << ": locations must have 1 or 2 coordinates, got "
                   << p.cols());
  if (metric.kind == Metric::Kind::GreatCircle) {
    FRK_REQUIRE(p.cols() == 2, DimensionError,
                what << ": great-circle metric requires (lon,lat) pairs");
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      FRK_REQUIRE(p(i, 1) >= -90.0 && p(i, 1) <= 90.0, DataError,
                  what << ": latitude out of range at row " << i << ": "
                       << p(i, 1));
    }
  }
}

}  // namespace detail

/// Distance between two single locations given as equal-length rows.
inline double distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                       const Metric& metric) {
  FRK_REQUIRE(a.size() == b.size(), DimensionError,
              "distance: coordinate dimensionality mismatch");
  if (metric.kind == Metric::Kind::GreatCircle)
    return detail::haversine(a(0), a(1), b(0), b(1), metric.radius);
  return (a - b).norm();
}

inline Eigen::MatrixXd pairwise_distance(const Points& a, const Points& b,
                                         const Metric& metric) {
  detail::check_points(a, metric, "pairwise_distance");
  detail::check_points(b, metric, "pairwise_distance");
  FRK_REQUIRE(a.cols() == b.cols(), DimensionError,
              "pairwise_distance: dimensionality mismatch (" << a.cols()
                                                             << " vs " << b.cols() << ")");
  Eigen::MatrixXd d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      d(i, j) = distance(a.row(i), b.row(j), metric);
  return d;
}

/// Knots grouped by resolution level (1-based, stored in increasing level
/// order so basis-matrix columns correspond to layout order).
struct KnotLayout {
  Points knots;                 // one knot per row
  std::vector<int> resolution;  // level of each knot, 1..levels()
  Metric metric = Metric::euclidean();

  int levels() const {
    int l = 0;
    for (int r : resolution) l = std::max(l, r);
    return l;
  }

  Eigen::Index size() const { return knots.rows(); }

  std::vector<Eigen::Index> level_rows(int level) const {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < size(); ++i)
      if (resolution[static_cast<std::size_t>(i)] == level) rows.push_back(i);
    return rows;
  }

  void validate() const {
    FRK_REQUIRE(knots.rows() > 0, DataError, "knot layout is empty");
    FRK_REQUIRE(static_cast<Eigen::Index>(resolution.size()) == knots.rows(),
                DimensionError, "knot/resolution length mismatch");
    detail::check_points(knots, metric, "knot layout");
    int last = 0;
    for (int r : resolution) {
      FRK_REQUIRE(r >= 1, DataError, "resolution levels are 1-based");
      FRK_REQUIRE(r >= last, DataError,
                  "knots must be grouped by non-decreasing resolution level");
      last = r;
    }
    for (int l = 1; l <= levels(); ++l) {
      auto rows = level_rows(l);
      FRK_REQUIRE(rows.size() >= 2, DataError,
                  "resolution level " << l << " has " << rows.size()
                                      << " knots; at least 2 required");
    }
  }
};

/// Smallest pairwise distance among the knots of one resolution level.
/// Duplicated knots (zero distance) are an error: they would force a zero
/// bandwidth.
inline double min_interknot_distance(const KnotLayout& layout, int level) {
  auto rows = layout.level_rows(level);
  FRK_REQUIRE(rows.size() >= 2, DataError,
              "min_interknot_distance: fewer than 2 knots at level " << level);
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dmin = std::min(dmin, distance(layout.knots.row(rows[i]),
                                     layout.knots.row(rows[j]), layout.metric));
  FRK_REQUIRE(dmin > 0.0, DataError,
              "duplicate knots at level " << level
                                          << " (zero inter-knot distance)");
  return dmin;
}

/// Continuous extent of an integer lattice domain {lo..hi} with unit step:
/// each site owns a unit cell, so the extent runs half a step past the ends.
inline std::pair<double, double> lattice_bounds(double lo, double hi,
                                                double step = 1.0) {
  FRK_REQUIRE(hi >= lo, DataError, "lattice_bounds: empty domain");
  return {lo - step / 2.0, hi + step / 2.0};
}

/// Evenly spaced 1-D knots per resolution, spacing (hi-lo)/(count-1), so the
/// domain endpoints are symmetric about the knot set.
inline KnotLayout place_knots_1d(double lo, double hi,
                                 const std::vector<int>& counts,
                                 Metric metric = Metric::euclidean()) {
  FRK_REQUIRE(hi > lo, DataError, "place_knots_1d: empty domain");
  FRK_REQUIRE(!counts.empty(), DataError, "place_knots_1d: no resolutions");
  Eigen::Index total = 0;
  for (int c : counts) {
    FRK_REQUIRE(c >= 2, DataError, "place_knots_1d: need >= 2 knots per level");
    total += c;
  }
  KnotLayout layout;
  layout.knots.resize(total, 1);
  layout.resolution.reserve(static_cast<std::size_t>(total));
  layout.metric = metric;
  Eigen::Index row = 0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    int c = counts[l];
    double h = (hi - lo) / (c - 1);
    for (int k = 0; k < c; ++k) {
      layout.knots(row++, 0) = lo + h * k;
      layout.resolution.push_back(static_cast<int>(l) + 1);
    }
  }
  layout.validate();
  return layout;
}

/// One triangular-grid resolution: nx knots per row, ny rows, adjacent rows
/// offset by half the horizontal spacing and vertical spacing hx*sqrt(3)/2,
/// so nearest-neighbor distances are equal across rows. The pattern is
/// centered in the box.
inline Points triangular_grid(double xlo, double xhi, double ylo, double yhi,
                              int nx, int ny) {
  FRK_REQUIRE(xhi > xlo && yhi > ylo, DataError, "triangular_grid: empty domain");
  FRK_REQUIRE(nx >= 2 && ny >= 1, DataError, "triangular_grid: need nx>=2, ny>=1");
  double hx = (xhi - xlo) / nx;
  double hy = hx * std::sqrt(3.0) / 2.0;
  double yc = 0.5 * (ylo + yhi);
  Points p(static_cast<Eigen::Index>(nx) * ny, 2);
  Eigen::Index row = 0;
  for (int j = 0; j < ny; ++j) {
    double shift = (ny > 1) ? ((j % 2 == 0) ? -hx / 4.0 : +hx / 4.0) : 0.0;
    double y = yc + (j - (ny - 1) / 2.0) * hy;
    for (int k = 0; k < nx; ++k) {
      p(row, 0) = xlo + hx * (k + 0.5) + shift;
      p(row, 1) = y;
      ++row;
    }
  }
  return p;
}

/// Multi-resolution triangular layout; one (nx,ny) pair per level.
inline KnotLayout place_knots_triangular(
    double xlo, double xhi, double ylo, double yhi,
    const std::vector<std::pair<int, int>>& grids,
    Metric metric = Metric::euclidean()) {
  FRK_REQUIRE(!grids.empty(), DataError, "place_knots_triangular: no resolutions");
  KnotLayout layout;
  layout.metric = metric;
  std::vector<Points> per_level;
  Eigen::Index total = 0;
  for (const auto& [nx, ny] : grids) {
    per_level.push_back(triangular_grid(xlo, xhi, ylo, yhi, nx, ny));
    total += per_level.back().rows();
  }
  layout.knots.resize(total, 2);
  Eigen::Index row = 0;
  for (std::size_t l = 0; l < per_level.size(); ++l) {
    for (Eigen::Index i = 0; i < per_level[l].rows(); ++i) {
      layout.knots.row(row++) = per_level[l].row(i);
      layout.resolution.push_back(static_cast<int>(l) + 1);
    }
  }
  layout.validate();
  return layout;
}

}  // namespace frk

#endif  // FRK_GEOMETRY_HPP
