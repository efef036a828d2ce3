#ifndef FRK_COMMON_HPP
#define FRK_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace frk {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mismatched shapes or coordinate dimensionality.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Invalid values, malformed files, broken invariants in user input.
class DataError : public Error {
public:
  using Error::Error;
};

/// A matrix that must be SPD failed its Cholesky factorization.
/// `matrix` names the offender, `pivot` is the 0-based failing pivot.
class NotPositiveDefinite : public Error {
public:
  NotPositiveDefinite(std::string matrix_name, int pivot_index)
      : Error("matrix '" + matrix_name + "' is not positive definite (pivot " +
              std::to_string(pivot_index) + ")"),
        matrix(std::move(matrix_name)), pivot(pivot_index) {}
  std::string matrix;
  int pivot;
};

/// Numerical failure inside an iterative fit, with iteration context.
class EstimationError : public Error {
public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace detail

#define FRK_REQUIRE(cond, exc_type, msg)                                      \
  do {                                                                        \
    if (!(cond)) {                                                            \
      std::ostringstream frk_oss_;                                            \
      frk_oss_ << msg;                                                        \
      throw exc_type(frk_oss_.str());                                         \
    }                                                                         \
  } while (0)

// ---------------------------------------------------------------------------
// Deterministic RNG streams.
//
// Replicate-level work derives its stream from (seed, cell, replicate) by
// counter mixing, so results do not depend on scheduling or thread count.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a = 0,
                                std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
  return std::mt19937_64(s);
}

// ---------------------------------------------------------------------------
// Small numeric helpers.

inline double median(std::vector<double> v) {
  FRK_REQUIRE(!v.empty(), DataError, "median of empty vector");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step, accurate to near machine precision).
inline double normal_quantile(double p) {
  FRK_REQUIRE(p > 0.0 && p < 1.0, DataError,
              "normal_quantile: p must be in (0,1), got " << p);
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

}  // namespace frk

#endif  // FRK_COMMON_HPP
