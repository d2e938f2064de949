#include "geomot/distributions.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "support/quadrature.hpp"

using geomot::Rng;
using geomot::Vec;
namespace dist = geomot::dist;

TEST_CASE("gaussian_logpdf spot values and invariances") {
  // Standard normal at the origin.
  CHECK(dist::gaussian_logpdf(Vec::Zero(1), Vec::Zero(1), Vec::Ones(1)) ==
        Catch::Approx(-0.91893853320467274).epsilon(1e-14));

  // Diagonal case is the sum of per-coordinate terms.
  const Vec x{{0.3, -1.2}}, m{{0.1, 0.4}}, s{{0.5, 2.0}};
  const double joint = dist::gaussian_logpdf(x, m, s);
  const double split = dist::gaussian_logpdf(x.head(1), m.head(1), s.head(1)) +
                       dist::gaussian_logpdf(x.tail(1), m.tail(1), s.tail(1));
  CHECK(joint == Catch::Approx(split).epsilon(1e-14));

  // Translation invariance.
  const Vec c = Vec::Constant(2, 3.7);
  CHECK(dist::gaussian_logpdf(x + c, m + c, s) == Catch::Approx(joint).epsilon(1e-14));

  // Normalizes to one (Simpson over +-10 sigma).
  const double z = testsupport::integrate_simpson(
      [](double t) {
        return std::exp(dist::gaussian_logpdf(Vec::Constant(1, t),
                                              Vec::Constant(1, 0.4),
                                              Vec::Constant(1, 1.7)));
      },
      0.4 - 17.0, 0.4 + 17.0, 4000);
  CHECK(z == Catch::Approx(1.0).epsilon(1e-10));

  CHECK_THROWS_AS(dist::gaussian_logpdf(x, m, Vec{{1.0, 0.0}}), std::domain_error);
  CHECK_THROWS_AS(dist::gaussian_logpdf(x, Vec::Zero(3), Vec::Ones(3)),
                  std::invalid_argument);
}

TEST_CASE("vmf normalizer closed form on the 2-sphere") {
  // C_3(kappa) = kappa / (4 pi sinh kappa), compared in the log domain.
  for (double kappa : {1e-6, 0.5, 5.0, 50.0, 300.0}) {
    CAPTURE(kappa);
    const double log_sinh =
        kappa + std::log1p(-std::exp(-2.0 * kappa)) - std::log(2.0);
    const double expect = std::log(kappa) - std::log(4.0 * M_PI) - log_sinh;
    const double got = dist::log_vmf_normalizer(3, kappa);
    CHECK(std::abs(got - expect) / std::max(1.0, std::abs(expect)) < 1e-10);
  }
  // kappa = 0 is the uniform density 1/(4 pi).
  CHECK(dist::log_vmf_normalizer(3, 0.0) ==
        Catch::Approx(-std::log(4.0 * M_PI)).epsilon(1e-14));
  // S^3 uniform density: area 2 pi^2.
  CHECK(dist::log_vmf_normalizer(4, 0.0) ==
        Catch::Approx(-std::log(2.0 * M_PI * M_PI)).epsilon(1e-14));
}

TEST_CASE("vmf_logpdf integrates to one on S^2") {
  Vec mu{{0.3, -0.5, 0.8}};
  mu.normalize();
  for (double kappa : {0.0, 0.5, 5.0, 50.0}) {
    CAPTURE(kappa);
    const double z = testsupport::integrate_sphere(
        [&](double x, double y, double w) {
          return std::exp(dist::vmf_logpdf(Vec{{x, y, w}}, mu, kappa));
        },
        100, 100);
    CHECK(z == Catch::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("vmf_logpdf integrates to one on S^3") {
  Vec mu{{0.5, 0.5, -0.5, 0.5}};
  // Hyperspherical product grid: d(omega) = sin^2(a) sin(b) da db dc.
  auto normalizer = [&](double kappa) {
    const auto gl_a = testsupport::gauss_legendre(80);
    const auto gl_b = testsupport::gauss_legendre(60);
    const int nc = 60;
    double total = 0.0;
    for (int i = 0; i < 80; ++i) {
      const double a = 0.5 * M_PI * (gl_a.nodes[i] + 1.0);
      const double wa = 0.5 * M_PI * gl_a.weights[i];
      for (int j = 0; j < 60; ++j) {
        const double b = 0.5 * M_PI * (gl_b.nodes[j] + 1.0);
        const double wb = 0.5 * M_PI * gl_b.weights[j];
        for (int k = 0; k < nc; ++k) {
          const double c = 2.0 * M_PI * k / nc;
          const Vec q{{std::cos(a), std::sin(a) * std::cos(b),
                       std::sin(a) * std::sin(b) * std::cos(c),
                       std::sin(a) * std::sin(b) * std::sin(c)}};
          total += wa * wb * (2.0 * M_PI / nc) * std::sin(a) * std::sin(a) *
                   std::sin(b) * std::exp(dist::vmf_logpdf(q, mu, kappa));
        }
      }
    }
    return total;
  };
  CHECK(normalizer(2.0) == Catch::Approx(1.0).epsilon(1e-3));
  CHECK(normalizer(25.0) == Catch::Approx(1e0).epsilon(1e-3));
}

TEST_CASE("antipodal mixture symmetry and normalization") {
  Rng rng(3);
  Vec mu = rng.normal_vec(3);
  mu.normalize();
  for (int trial = 0; trial < 20; ++trial) {
    Vec q = rng.normal_vec(3);
    q.normalize();
    const double kappa = 60.0 * rng.uniform();
    const double a = dist::antipodal_vmf_logpdf(q, mu, kappa);
    const double b = dist::antipodal_vmf_logpdf(-q, mu, kappa);
    CHECK(std::abs(a - b) <= 1e-12);
    // Mixture of the two lobes, assembled by hand.
    const double lp = dist::vmf_logpdf(q, mu, kappa);
    const double lm = dist::vmf_logpdf(q, (-mu).eval(), kappa);
    const double hi = std::max(lp, lm);
    const double manual =
        hi + std::log(0.5 * std::exp(lp - hi) + 0.5 * std::exp(lm - hi));
    CHECK(a == Catch::Approx(manual).epsilon(1e-12));
  }

  Vec axis{{0.0, 0.0, 1.0}};
  const double z = testsupport::integrate_sphere(
      [&](double x, double y, double w) {
        return std::exp(dist::antipodal_vmf_logpdf(Vec{{x, y, w}}, axis, 8.0));
      },
      100, 100);
  CHECK(z == Catch::Approx(1.0).epsilon(1e-3));

  // At high concentration the near lobe dominates: mixture ~ lobe - log 2.
  Vec near{{0.01, 0.0, 0.0}};
  near[2] = std::sqrt(1.0 - near.squaredNorm());
  const double mix = dist::antipodal_vmf_logpdf(near, axis, 200.0);
  const double lobe = dist::vmf_logpdf(near, axis, 200.0);
  CHECK(mix == Catch::Approx(lobe - std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("unit-norm policing") {
  Vec mu{{1.0, 0.0, 0.0}};
  // Within 1e-6 of unit: renormalized, same answer as the exact vector.
  Vec q_off{{1.0 + 5e-7, 0.0, 0.0}};
  CHECK(dist::vmf_logpdf(q_off, mu, 3.0) ==
        Catch::Approx(dist::vmf_logpdf(mu, mu, 3.0)).epsilon(1e-9));
  Vec q_bad{{1.01, 0.0, 0.0}};
  CHECK_THROWS_AS(dist::vmf_logpdf(q_bad, mu, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(dist::vmf_logpdf(mu, q_bad, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(dist::vmf_logpdf(mu, mu, -1.0), std::domain_error);
  CHECK_THROWS_AS(dist::antipodal_vmf_logpdf(q_bad, mu, 1.0), std::invalid_argument);
}

TEST_CASE("kl against numerical integral") {
  CHECK(dist::kl_diag_gaussian_std_normal(Vec::Zero(3), Vec::Ones(3)) == 0.0);

  const double mu = 0.7, sigma = 1.9;
  auto logn = [](double x, double m, double s) {
    const double r = (x - m) / s;
    return -0.5 * std::log(2.0 * M_PI) - std::log(s) - 0.5 * r * r;
  };
  const double numeric = testsupport::integrate_simpson(
      [&](double x) {
        return std::exp(logn(x, mu, sigma)) * (logn(x, mu, sigma) - logn(x, 0.0, 1.0));
      },
      mu - 20.0 * sigma, mu + 20.0 * sigma, 20000);
  const double closed =
      dist::kl_diag_gaussian_std_normal(Vec::Constant(1, mu), Vec::Constant(1, sigma));
  CHECK(closed == Catch::Approx(numeric).epsilon(1e-8));
  CHECK(closed > 0.0);

  CHECK_THROWS_AS(dist::kl_diag_gaussian_std_normal(Vec::Zero(1), Vec::Zero(1)),
                  std::domain_error);
}
