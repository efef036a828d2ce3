#ifndef FRK_BASIS_HPP
#define FRK_BASIS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <ostream>
#include <vector>

#include "frk/geometry.hpp"

namespace frk {

/// Local bisquare weight: (1-d^2)^2 on [0,1], zero beyond.
inline double bisquare(double d) {
  FRK_REQUIRE(d >= 0.0, DataError, "bisquare: negative distance " << d);
  if (d > 1.0) return 0.0;
  double t = 1.0 - d * d;
  return t * t;
}

/// Basis configuration: one bandwidth constant b shared by all resolutions;
/// the per-level bandwidth is b times the minimum inter-knot distance.
struct BasisConfig {
  double b = 1.5;
  KnotLayout layout;

  void validate() const {
    FRK_REQUIRE(b > 0.0, DataError, "bandwidth constant b must be > 0, got " << b);
    layout.validate();
  }
};

/// r_l = b * min inter-knot distance at the given level.
inline double bandwidth(const KnotLayout& layout, int level, double b) {
  FRK_REQUIRE(b > 0.0, DataError, "bandwidth constant b must be > 0, got " << b);
  return b * min_interknot_distance(layout, level);
}

/// Sparse locations-by-knots matrix of bisquare evaluations. Rows follow the
/// input locations; columns follow layout order (levels concatenated in
/// increasing order). Entries beyond the support radius are not stored.
using BasisMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline BasisMatrix build_basis_matrix(const Points& locations,
                                      const BasisConfig& config) {
  config.validate();
  FRK_REQUIRE(locations.rows() > 0, DataError, "build_basis_matrix: no locations");
  const KnotLayout& layout = config.layout;
  detail::check_points(locations, layout.metric, "build_basis_matrix");
  FRK_REQUIRE(locations.cols() == layout.knots.cols(), DimensionError,
              "build_basis_matrix: location/knot dimensionality mismatch");

  std::vector<double> radius(static_cast<std::size_t>(layout.size()));
  for (int l = 1; l <= layout.levels(); ++l) {
    double r = bandwidth(layout, l, config.b);
    for (Eigen::Index k : layout.level_rows(l))
      radius[static_cast<std::size_t>(k)] = r;
  }

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(locations.rows()) * 4);
  for (Eigen::Index i = 0; i < locations.rows(); ++i) {
    for (Eigen::Index k = 0; k < layout.size(); ++k) {
      double d = distance(locations.row(i), layout.knots.row(k), layout.metric);
      double r = radius[static_cast<std::size_t>(k)];
      if (d < r)
        entries.emplace_back(static_cast<int>(i), static_cast<int>(k),
                             bisquare(d / r));
    }
  }
  BasisMatrix s(locations.rows(), layout.size());
  s.setFromTriplets(entries.begin(), entries.end());
  return s;
}

/// Debug dump as coordinate-list text: `row,col,value` per stored entry.
inline void dump_basis(const BasisMatrix& s, std::ostream& os) {
  os << "row,col,value\n";
  for (int i = 0; i < s.outerSize(); ++i)
    for (BasisMatrix::InnerIterator it(s, i); it; ++it)
      os << it.row() << "," << it.col() << "," << it.value() << "\n";
}

}  // namespace frk

#endif  // FRK_BASIS_HPP
