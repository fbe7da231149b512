#ifndef NODAL_COMMON_HPP
#define NODAL_COMMON_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nodal {

// Point in R^d, d <= 3; unused trailing coordinates are zero.
using Pt = std::array<double, 3>;

inline double dot(const Pt& a, const Pt& b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

inline double norm(const Pt& a, int d) { return std::sqrt(dot(a, a, d)); }

inline double dist(const Pt& a, const Pt& b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

// Volume of the unit d-ball.
inline double unit_ball_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return M_PI;
    case 3: return 4.0 * M_PI / 3.0;
    default: return std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
  }
}

inline double ball_volume(int d, double R) {
  return unit_ball_volume(d) * std::pow(R, d);
}

// Error taxonomy, mirrored onto CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nodal

#endif  // NODAL_COMMON_HPP
