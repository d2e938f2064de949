#pragma once

// Test-only quadrature oracles, deliberately independent of the library's
// own numeric paths.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace testsupport {

struct GaussLegendre {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Nodes by Newton iteration on P_n with the standard asymptotic initial
// guess; plenty for n <= a few hundred.
inline GaussLegendre gauss_legendre(int n) {
  if (n < 2) throw std::invalid_argument("gauss_legendre: n must be >= 2");
  GaussLegendre gl;
  gl.nodes.resize(n);
  gl.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    gl.nodes[i] = x;
    gl.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return gl;
}

inline double integrate_gl(const std::function<double(double)>& f, double a,
                           double b, int n) {
  const GaussLegendre gl = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += gl.weights[i] * f(mid + half * gl.nodes[i]);
  return half * sum;
}

inline double integrate_simpson(const std::function<double(double)>& f,
                                double a, double b, int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Integrates f over the unit sphere S^2 parameterized by (polar, azimuth),
// Gauss-Legendre in cos(polar) x uniform trapezoid in azimuth. The product
// grid uses n_polar * n_azimuth evaluations.
inline double integrate_sphere(
    const std::function<double(double, double, double)>& f, int n_polar,
    int n_azimuth) {
  const GaussLegendre gl = gauss_legendre(n_polar);
  double sum = 0.0;
  for (int i = 0; i < n_polar; ++i) {
    const double ct = gl.nodes[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    double ring = 0.0;
    for (int j = 0; j < n_azimuth; ++j) {
      const double phi = 2.0 * M_PI * j / n_azimuth;
      ring += f(st * std::cos(phi), st * std::sin(phi), ct);
    }
    sum += gl.weights[i] * ring * (2.0 * M_PI / n_azimuth);
  }
  return sum;
}

}  // namespace testsupport
