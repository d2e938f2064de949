#pragma once

#include "geomot/core.hpp"
#include "geomot/numerics.hpp"

namespace geomot::dist {

// Diagonal Gaussian log-density. sigma holds standard deviations.
inline double gaussian_logpdf(const Vec& x, const Vec& mean, const Vec& sigma) {
  if (x.size() != mean.size() || x.size() != sigma.size())
    throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw std::domain_error("gaussian_logpdf: sigma must be positive");
    const double r = (x[i] - mean[i]) / sigma[i];
    lp += -0.5 * std::log(2.0 * M_PI) - std::log(sigma[i]) - 0.5 * r * r;
  }
  return lp;
}

// log of the normalizer C_D(kappa) = kappa^{D/2-1} / ((2 pi)^{D/2} I_{D/2-1}(kappa)),
// so that the density over S^{D-1} is C_D(kappa) exp(kappa mu.q).
inline double log_vmf_normalizer(int dim, double kappa) {
  if (dim < 2) throw std::invalid_argument("log_vmf_normalizer: dim must be >= 2");
  if (!(kappa >= 0.0)) throw std::domain_error("log_vmf_normalizer: kappa must be >= 0");
  const double nu = 0.5 * dim - 1.0;
  if (kappa == 0.0) {
    // Uniform over the sphere: 1 / area(S^{D-1}).
    const double log_area =
        std::log(2.0) + 0.5 * dim * std::log(M_PI) - std::lgamma(0.5 * dim);
    return -log_area;
  }
  return nu * std::log(kappa) - 0.5 * dim * std::log(2.0 * M_PI) -
         numerics::log_bessel_i(nu, kappa);
}

// d/d kappa of log C_D(kappa) equals minus the mean resultant length
// I_{D/2}(kappa) / I_{D/2-1}(kappa); needed by training, exposed for tests.
inline double vmf_mean_resultant(int dim, double kappa) {
  if (kappa == 0.0) return 0.0;
  const double nu = 0.5 * dim - 1.0;
  return std::exp(numerics::log_bessel_i(nu + 1.0, kappa) -
                  numerics::log_bessel_i(nu, kappa));
}

namespace detail {
inline Vec unit_checked(const Vec& v, const char* who) {
  const double n = v.norm();
  if (std::abs(n - 1.0) > 1e-6)
    throw std::invalid_argument(std::string(who) + ": vector is not unit length");
  return v / n;
}
}  // namespace detail

// von Mises-Fisher log-density on S^{D-1}. Inputs within 1e-6 of unit norm
// are renormalized; anything further off is rejected. kappa == 0 is the
// uniform distribution.
inline double vmf_logpdf(const Vec& q, const Vec& mu, double kappa) {
  if (q.size() != mu.size())
    throw std::invalid_argument("vmf_logpdf: dimension mismatch");
  if (q.size() < 2) throw std::invalid_argument("vmf_logpdf: need dim >= 2");
  if (!(kappa >= 0.0)) throw std::domain_error("vmf_logpdf: kappa must be >= 0");
  const Vec qu = detail::unit_checked(q, "vmf_logpdf");
  const Vec mb = detail::unit_checked(mu, "vmf_logpdf");
  return log_vmf_normalizer(int(q.size()), kappa) + kappa * mb.dot(qu);
}

// Equal-weight mixture of vMF(mu, kappa) and vMF(-mu, kappa), evaluated by
// log-sum-exp. Invariant under q -> -q, which is what makes it a density on
// the quotient space of antipodal orientation pairs.
inline double antipodal_vmf_logpdf(const Vec& q, const Vec& mu, double kappa) {
  if (q.size() != mu.size())
    throw std::invalid_argument("antipodal_vmf_logpdf: dimension mismatch");
  if (!(kappa >= 0.0))
    throw std::domain_error("antipodal_vmf_logpdf: kappa must be >= 0");
  const Vec qu = detail::unit_checked(q, "antipodal_vmf_logpdf");
  const Vec mb = detail::unit_checked(mu, "antipodal_vmf_logpdf");
  const double logc = log_vmf_normalizer(int(q.size()), kappa);
  const double t = kappa * mb.dot(qu);
  // log(0.5 e^{logc+t} + 0.5 e^{logc-t}) with the larger exponent factored out.
  const double a = std::abs(t);
  return logc - std::log(2.0) + a + std::log1p(std::exp(-2.0 * a));
}

// KL(N(mu, diag(sigma^2)) || N(0, I)).
inline double kl_diag_gaussian_std_normal(const Vec& mu, const Vec& sigma) {
  if (mu.size() != sigma.size())
    throw std::invalid_argument("kl_diag_gaussian_std_normal: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw std::domain_error("kl_diag_gaussian_std_normal: sigma must be positive");
    kl += 0.5 * (mu[i] * mu[i] + sigma[i] * sigma[i] - 1.0) - std::log(sigma[i]);
  }
  return kl;
}

}  // namespace geomot::dist
