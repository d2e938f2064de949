#pragma once

#include "geomot/core.hpp"

namespace geomot::kin {

// Planar serial chain with eta revolute joints. Body points are the link
// endpoints p_1..p_eta plus the end-effector entry, which for a planar
// chain coincides with p_eta but additionally carries the orientation
// angle. M = eta + 1 entries in that list.
struct PlanarChain {
  std::vector<double> link_lengths;
  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  double limit_lo = -M_PI;
  double limit_hi = M_PI;

  static PlanarChain make(std::vector<double> lengths,
                          Eigen::Vector2d base = Eigen::Vector2d::Zero()) {
    if (lengths.empty())
      throw std::invalid_argument("PlanarChain: need at least one link");
    for (double l : lengths)
      if (!(l > 0.0))
        throw std::invalid_argument("PlanarChain: link lengths must be positive");
    PlanarChain c;
    c.link_lengths = std::move(lengths);
    c.base = base;
    return c;
  }

  int dof() const { return int(link_lengths.size()); }
  int body_points() const { return dof() + 1; }  // M
};

struct BodyState {
  std::vector<Eigen::Vector2d> points;  // M entries, points.back() == ee
  double ee_angle = 0.0;
  const Eigen::Vector2d& ee_position() const { return points.back(); }
};

namespace detail {
inline void check_theta(const PlanarChain& chain, const Vec& theta) {
  if (theta.size() != chain.dof())
    throw std::invalid_argument("kinematics: theta size does not match chain dof");
}
}  // namespace detail

// p_m = base + sum_{i<=m} L_i (cos T_i, sin T_i), T_i = sum_{j<=i} theta_j.
inline BodyState fk_points(const PlanarChain& chain, const Vec& theta) {
  detail::check_theta(chain, theta);
  BodyState st;
  Eigen::Vector2d p = chain.base;
  double angle = 0.0;
  for (int i = 0; i < chain.dof(); ++i) {
    angle += theta[i];
    p += chain.link_lengths[i] * Eigen::Vector2d(std::cos(angle), std::sin(angle));
    st.points.push_back(p);
  }
  st.points.push_back(p);  // ee entry
  st.ee_angle = angle;
  return st;
}

// Stacked Jacobian of (p_1, ..., p_eta, p_ee, ee_angle): (2M+1) x eta.
// d p_m / d theta_j = sum_{i=j..m} L_i (-sin T_i, cos T_i) for j <= m and
// zero above the diagonal; the angle row is all ones.
inline Mat fk_jacobian(const PlanarChain& chain, const Vec& theta) {
  detail::check_theta(chain, theta);
  const int eta = chain.dof();
  std::vector<double> cum(eta);
  double a = 0.0;
  for (int i = 0; i < eta; ++i) {
    a += theta[i];
    cum[i] = a;
  }
  Mat J = Mat::Zero(2 * chain.body_points() + 1, eta);
  for (int m = 0; m < eta; ++m) {
    for (int j = 0; j <= m; ++j) {
      double dx = 0.0, dy = 0.0;
      for (int i = j; i <= m; ++i) {
        dx -= chain.link_lengths[i] * std::sin(cum[i]);
        dy += chain.link_lengths[i] * std::cos(cum[i]);
      }
      J(2 * m, j) = dx;
      J(2 * m + 1, j) = dy;
    }
  }
  J.block(2 * eta, 0, 2, eta) = J.block(2 * (eta - 1), 0, 2, eta);  // ee rows
  J.row(2 * eta + 2).setOnes();
  return J;
}

// d/d theta_l of the stacked Jacobian; second FK derivatives are again
// trigonometric sums: d^2 p_m / d theta_j d theta_l =
// sum_{i=max(j,l)}^{m} L_i (-cos T_i, -sin T_i).
inline Mat fk_jacobian_derivative(const PlanarChain& chain, const Vec& theta, int l) {
  detail::check_theta(chain, theta);
  const int eta = chain.dof();
  if (l < 0 || l >= eta)
    throw std::invalid_argument("fk_jacobian_derivative: joint index out of range");
  std::vector<double> cum(eta);
  double a = 0.0;
  for (int i = 0; i < eta; ++i) {
    a += theta[i];
    cum[i] = a;
  }
  Mat dJ = Mat::Zero(2 * chain.body_points() + 1, eta);
  for (int m = 0; m < eta; ++m) {
    for (int j = 0; j <= m; ++j) {
      if (l > m) continue;
      double dx = 0.0, dy = 0.0;
      for (int i = std::max(j, l); i <= m; ++i) {
        dx -= chain.link_lengths[i] * std::cos(cum[i]);
        dy -= chain.link_lengths[i] * std::sin(cum[i]);
      }
      dJ(2 * m, j) = dx;
      dJ(2 * m + 1, j) = dy;
    }
  }
  dJ.block(2 * eta, 0, 2, eta) = dJ.block(2 * (eta - 1), 0, 2, eta);
  return dJ;
}

namespace detail {
// Rows of the stacked Jacobian that enter the volume Gram: one block per
// distinct link endpoint. The duplicated ee rows and the angle row stay
// out, otherwise the straight-chain Gram stops matching its closed form.
inline Mat volume_rows(const PlanarChain& chain, const Mat& J_full) {
  return J_full.topRows(2 * chain.dof());
}
}  // namespace detail

// sqrt(det(J^T J + eps I)) over the distinct body-point rows. eps keeps the
// measure positive at configurations where the end-effector Jacobian loses
// rank, so log V stays finite inside the ELBO.
inline double volume_measure(const PlanarChain& chain, const Vec& theta,
                             double eps_reg = 1e-6) {
  if (!(eps_reg >= 0.0))
    throw std::invalid_argument("volume_measure: eps_reg must be >= 0");
  const Mat Jv = detail::volume_rows(chain, fk_jacobian(chain, theta));
  const Mat gram = Jv.transpose() * Jv +
                   eps_reg * Mat::Identity(chain.dof(), chain.dof());
  const double det = gram.determinant();
  if (!(det > 0.0))
    throw std::runtime_error("volume_measure: Gram determinant not positive");
  return std::sqrt(det);
}

// d log V / d theta = tr(A^{-1} J^T dJ/d theta_l), A = J^T J + eps I.
inline Vec log_volume_grad(const PlanarChain& chain, const Vec& theta,
                           double eps_reg = 1e-6) {
  const int eta = chain.dof();
  const Mat J_full = fk_jacobian(chain, theta);
  const Mat Jv = detail::volume_rows(chain, J_full);
  const Mat A = Jv.transpose() * Jv + eps_reg * Mat::Identity(eta, eta);
  const Mat Ainv = A.inverse();
  Vec g(eta);
  for (int l = 0; l < eta; ++l) {
    const Mat dJv = detail::volume_rows(chain, fk_jacobian_derivative(chain, theta, l));
    g[l] = (Ainv * (Jv.transpose() * dJv)).trace();
  }
  return g;
}

}  // namespace geomot::kin
