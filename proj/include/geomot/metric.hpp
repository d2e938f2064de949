#pragma once

#include <functional>
#include <vector>

#include "geomot/core.hpp"
#include "geomot/kinematics.hpp"
#include "geomot/vae.hpp"

namespace geomot::metric {

// Spherical cost bump in ambient position space. zeta scales the cost,
// r_extra inflates the effective radius (robot size, safety margin).
struct Obstacle {
  Vec center;
  double radius = 0.0;
  double zeta = 0.0;
  double r_extra = 0.0;

  static Obstacle make(Vec center, double radius, double zeta,
                       double r_extra = 0.0) {
    if (!(radius > 0.0)) throw std::invalid_argument("Obstacle: radius must be > 0");
    if (!(zeta >= 0.0)) throw std::invalid_argument("Obstacle: zeta must be >= 0");
    if (!(r_extra >= 0.0)) throw std::invalid_argument("Obstacle: r_extra must be >= 0");
    if (center.size() < 1) throw std::invalid_argument("Obstacle: empty center");
    return {std::move(center), radius, zeta, r_extra};
  }
  double r_eff() const { return radius + r_extra; }
  // Beyond this distance the bump is below 3.4e-4 of zeta and reweighting
  // skips the edge entirely.
  double influence_radius() const { return 4.0 * r_eff(); }
};

// s(x) = 1 + sum_i zeta_i exp(-|x - o_i|^2 / (2 r_eff_i^2)). Positions only;
// orientation channels keep a flat ambient metric.
inline double ambient_scale(const Vec& x, const std::vector<Obstacle>& obstacles) {
  double s = 1.0;
  for (const auto& o : obstacles) {
    if (o.center.size() != x.size())
      throw std::invalid_argument("ambient_scale: obstacle dimension mismatch");
    const double re = o.r_eff();
    s += o.zeta * std::exp(-(x - o.center).squaredNorm() / (2.0 * re * re));
  }
  return s;
}

namespace detail {

// sigma = 1/precision, so J_sigma = -diag(sigma^2) J_precision.
inline Mat sigma_jacobian(const nets::RbfNet& precision, const Vec& z) {
  const Vec prec = precision.forward(z);
  Mat J = precision.jacobian(z);
  for (Eigen::Index r = 0; r < J.rows(); ++r)
    J.row(r) *= -1.0 / (prec[r] * prec[r]);
  return J;
}

// Exactly symmetric Gram of row-weighted J: (sqrt(w) J)^T (sqrt(w) J).
inline Mat weighted_gram(Mat J, const Vec& row_weights) {
  for (Eigen::Index r = 0; r < J.rows(); ++r) J.row(r) *= std::sqrt(row_weights[r]);
  return J.transpose() * J;
}

}  // namespace detail

// Pullback of the obstacle-shaped ambient metric through the pose decoder:
// G = J_mu^T diag(s I_Dp, I_D) J_mu + s J_sigma^T J_sigma + J_kappa^T J_kappa
// with the quaternion-normalization projection folded into J_mu and s
// evaluated at the decoded mean position.
inline Mat pullback_metric_task(const vae::TaskVae& m, const Vec& z,
                                const std::vector<Obstacle>& obstacles = {}) {
  if (z.size() != m.latent_dim)
    throw std::invalid_argument("pullback_metric_task: latent size mismatch");
  ++vae::decoder_query_counter();
  const int Dp = m.pos_dim, D = m.dir_dim;

  const Vec out = m.decoder_mean.forward(z);
  const Mat J_out = m.decoder_mean.jacobian(z);
  const Vec mu_x = out.head(Dp);
  const Vec raw = out.tail(D);
  const double nr = raw.norm();
  if (nr < 1e-12)
    throw std::runtime_error("pullback_metric_task: degenerate direction output");
  const Vec mu_q = raw / nr;

  Mat J_mu(Dp + D, m.latent_dim);
  J_mu.topRows(Dp) = J_out.topRows(Dp);
  const Mat J_raw = J_out.bottomRows(D);
  J_mu.bottomRows(D) = (J_raw - mu_q * (mu_q.transpose() * J_raw)) / nr;

  const double s = ambient_scale(mu_x, obstacles);
  Vec w_mu(Dp + D);
  w_mu.head(Dp).setConstant(s);
  w_mu.tail(D).setOnes();

  Mat G = detail::weighted_gram(std::move(J_mu), w_mu);
  const Mat J_sigma = detail::sigma_jacobian(m.position_precision, z);
  G += detail::weighted_gram(J_sigma, Vec::Constant(Dp, s));
  const Mat J_kappa = m.concentration.jacobian(z);
  G += J_kappa.transpose() * J_kappa;
  return G;
}

// Whole-body pullback through decoder mean and forward kinematics:
// A = J_FK J_mu, B = J_FK J_sigma, G = A^T M_A A + B^T M_A B with M_A
// carrying s(p_m) on each body point's rows and 1 on the angle row.
inline Mat pullback_metric_joint(const vae::JointVae& m, const Vec& z,
                                 const std::vector<Obstacle>& obstacles = {}) {
  if (z.size() != m.latent_dim)
    throw std::invalid_argument("pullback_metric_joint: latent size mismatch");
  ++vae::decoder_query_counter();

  const Vec mu_theta = m.decoder_mean.forward(z);
  const Mat J_mu = m.decoder_mean.jacobian(z);
  const Mat J_sigma = detail::sigma_jacobian(m.joint_precision, z);
  const Mat J_fk = kin::fk_jacobian(m.chain, mu_theta);
  const auto body = kin::fk_points(m.chain, mu_theta);

  const int M = m.chain.body_points();
  Vec w(2 * M + 1);
  for (int p = 0; p < M; ++p) {
    Vec pos(2);
    pos << body.points[p].x(), body.points[p].y();
    const double s = ambient_scale(pos, obstacles);
    w[2 * p] = s;
    w[2 * p + 1] = s;
  }
  w[2 * M] = 1.0;

  Mat G = detail::weighted_gram(J_fk * J_mu, w);
  G += detail::weighted_gram(J_fk * J_sigma, w);
  return G;
}

// Immutable evaluation bundle: a model reference plus an obstacle
// snapshot. Evaluation is pure; swap the whole field to change obstacles.
struct MetricField {
  const vae::TaskVae* task_model = nullptr;
  const vae::JointVae* joint_model = nullptr;
  std::vector<Obstacle> obstacles;

  bool is_task() const { return task_model != nullptr; }
  int latent_dim() const {
    return task_model ? task_model->latent_dim : joint_model->latent_dim;
  }
  Mat metric(const Vec& z) const {
    return task_model ? pullback_metric_task(*task_model, z, obstacles)
                      : pullback_metric_joint(*joint_model, z, obstacles);
  }
};

inline MetricField make_field(const vae::TaskVae& m, std::vector<Obstacle> obs = {}) {
  for (const auto& o : obs)
    if (o.center.size() != m.pos_dim)
      throw std::invalid_argument("make_field: obstacle dimension mismatch");
  return {&m, nullptr, std::move(obs)};
}

inline MetricField make_field(const vae::JointVae& m, std::vector<Obstacle> obs = {}) {
  for (const auto& o : obs)
    if (o.center.size() != 2)
      throw std::invalid_argument("make_field: workspace obstacles are planar");
  return {nullptr, &m, std::move(obs)};
}

// 0.5 log det(G + 1e-12 I); the jitter keeps boundary values finite where
// G is numerically singular.
inline double magnification_factor(const MetricField& field, const Vec& z) {
  const Mat G = field.metric(z);
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    acc += std::log(std::max(es.eigenvalues()[i] + 1e-12, 1e-300));
  return 0.5 * acc;
}

namespace detail {

template <bool kLength>
double curve_functional(const MetricField& field, const Mat& samples) {
  const Eigen::Index T = samples.rows();
  if (T < 2) throw std::invalid_argument("curve functional: need at least 2 samples");
  if (samples.cols() != field.latent_dim())
    throw std::invalid_argument("curve functional: dimension mismatch");
  const double dt = 1.0 / double(T - 1);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    Vec v;
    if (i == 0)
      v = (samples.row(1) - samples.row(0)).transpose() / dt;
    else if (i == T - 1)
      v = (samples.row(T - 1) - samples.row(T - 2)).transpose() / dt;
    else
      v = (samples.row(i + 1) - samples.row(i - 1)).transpose() / (2.0 * dt);
    const Mat G = field.metric(samples.row(i).transpose());
    const double q = v.dot(G * v);
    const double f = kLength ? std::sqrt(std::max(q, 0.0)) : q;
    acc += (i == 0 || i == T - 1) ? 0.5 * f : f;
  }
  return acc * dt;
}

}  // namespace detail

// Trapezoid quadrature of sqrt(v^T G v) over the uniformly sampled curve,
// velocities by finite differences (central inside, one-sided at the ends).
inline double curve_length(const MetricField& field, const Mat& samples) {
  return detail::curve_functional<true>(field, samples);
}

// Same quadrature of v^T G v (the energy integrand).
inline double curve_energy(const MetricField& field, const Mat& samples) {
  return detail::curve_functional<false>(field, samples);
}

inline Mat sample_curve(const std::function<Vec(double)>& curve, int T) {
  if (T < 2) throw std::invalid_argument("sample_curve: need at least 2 samples");
  Vec first = curve(0.0);
  Mat samples(T, first.size());
  samples.row(0) = first;
  for (int i = 1; i < T; ++i)
    samples.row(i) = curve(double(i) / double(T - 1)).transpose();
  return samples;
}

inline double curve_length(const MetricField& field,
                           const std::function<Vec(double)>& curve, int T) {
  return curve_length(field, sample_curve(curve, T));
}

inline double curve_energy(const MetricField& field,
                           const std::function<Vec(double)>& curve, int T) {
  return curve_energy(field, sample_curve(curve, T));
}

}  // namespace geomot::metric
