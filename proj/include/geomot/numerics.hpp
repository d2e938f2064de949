#pragma once

#include <algorithm>
#include <functional>
#include <limits>

#include "geomot/core.hpp"

namespace geomot::numerics {

// log I_nu(x) for real order nu >= 0, evaluated entirely in the log domain
// so concentrations in the hundreds never overflow. Power series below the
// switch point, Hankel's large-argument expansion above it; both reach
// ~1e-13 relative error at the switch, comfortably inside the 1e-10 target
// on x in [1e-8, 500].
inline double log_bessel_i(double order, double x) {
  if (!(order >= 0.0)) throw std::domain_error("log_bessel_i: order must be >= 0");
  if (!(x >= 0.0)) throw std::domain_error("log_bessel_i: argument must be >= 0");
  if (x == 0.0) return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();

  if (x < 50.0) {
    // I_nu(x) = (x/2)^nu / Gamma(nu+1) * sum_k t_k,
    // t_0 = 1, t_{k+1}/t_k = (x^2/4) / ((k+1)(nu+k+1)).
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 0; k < 1000; ++k) {
      term *= q / ((k + 1.0) * (order + k + 1.0));
      sum += term;
      if (term < sum * 1e-18) break;
    }
    return order * std::log(0.5 * x) - std::lgamma(order + 1.0) + std::log(sum);
  }

  // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k a_k(nu) / x^k with
  // a_k = prod_{j=1..k} -(4 nu^2 - (2j-1)^2) / (8 j). The series is
  // asymptotic; summation stops at the smallest term.
  const double mu4 = 4.0 * order * order;
  double term = 1.0, sum = 1.0, prev = std::numeric_limits<double>::max();
  for (int k = 1; k < 60; ++k) {
    const double f = (2.0 * k - 1.0);
    term *= -(mu4 - f * f) / (8.0 * k * x);
    if (std::abs(term) >= prev) break;
    sum += term;
    prev = std::abs(term);
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * M_PI * x) + std::log(sum);
}

struct KmeansResult {
  Mat centers;               // k x d
  std::vector<int> labels;   // per input point
  double inertia = 0.0;      // sum of squared distances to assigned center
};

// Lloyd's algorithm with k-means++ seeding. Deterministic for a given rng
// state. Stops after 100 iterations or when the relative inertia change
// drops below 1e-6. A cluster that empties is reseeded with the point
// farthest from its assigned center.
inline KmeansResult kmeans(const Mat& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows(), d = points.cols();
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (n < k) throw std::invalid_argument("kmeans: need at least k points");

  Mat centers(k, d);
  // k-means++: first center uniform, then proportional to squared distance.
  Vec dist2 = Vec::Constant(n, std::numeric_limits<double>::max());
  centers.row(0) = points.row(Eigen::Index(rng.below(std::uint64_t(n))));
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], (points.row(i) - centers.row(c - 1)).squaredNorm());
    const double total = dist2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total, acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) { pick = i; break; }
      }
    } else {
      pick = Eigen::Index(rng.below(std::uint64_t(n)));
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<int> labels(n, 0);
  double inertia = std::numeric_limits<double>::max();
  for (int iter = 0; iter < 100; ++iter) {
    double new_inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d2 = (points.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best) { best = d2; arg = c; }
      }
      labels[i] = arg;
      new_inertia += best;
    }

    std::vector<Eigen::Index> count(k, 0);
    Mat sums = Mat::Zero(k, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += points.row(i);
      ++count[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        centers.row(c) = sums.row(c) / double(count[c]);
      } else {
        // Reseed from the point currently worst served.
        Eigen::Index far_i = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d2 = (points.row(i) - centers.row(labels[i])).squaredNorm();
          if (d2 > far_d) { far_d = d2; far_i = i; }
        }
        centers.row(c) = points.row(far_i);
        labels[far_i] = c;
      }
    }

    const double rel = std::abs(inertia - new_inertia) /
                       std::max(new_inertia, std::numeric_limits<double>::min());
    inertia = new_inertia;
    if (rel < 1e-6) break;
  }
  return {std::move(centers), std::move(labels), inertia};
}

// Central-difference Jacobian of f at x. Output dimension is taken from a
// probe evaluation; any non-finite value aborts, since a silent NaN column
// poisons every consumer downstream.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                       double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_jacobian: step must be positive");
  const Vec probe = f(x);
  if (!all_finite(probe)) throw std::runtime_error("fd_jacobian: f(x) is not finite");
  Mat J(probe.size(), x.size());
  Vec xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    const Vec fp = f(xp);
    xp[j] = x[j] - h;
    const Vec fm = f(xp);
    xp[j] = x[j];
    if (!all_finite(fp) || !all_finite(fm))
      throw std::runtime_error("fd_jacobian: perturbed evaluation is not finite");
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

// Smallest eigenvalue of a symmetric matrix. Asymmetry beyond 1e-9 is an
// argument error; below that the input is symmetrized before decomposition.
inline double min_eigenvalue_sym(const Mat& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("min_eigenvalue_sym: matrix must be square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9)
    throw std::invalid_argument("min_eigenvalue_sym: matrix is not symmetric");
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("min_eigenvalue_sym: eigensolver failed");
  return es.eigenvalues().minCoeff();
}

}  // namespace geomot::numerics
