#pragma once

#include "geomot/core.hpp"
#include "geomot/kinematics.hpp"
#include "geomot/metric.hpp"
#include "geomot/vae.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

namespace geomot::geo {

// Regular latent grid with decoded values cached per node and squared channel
// displacements cached per edge. Edge weights are recomputable from the caches
// alone for any obstacle set, so replanning never touches the decoder.
//
// Channel layout per node:
//   node_pos   n_groups blocks of group_dim entries, the decoded positions
//              whose ambient weight depends on obstacles (task: mean position;
//              joint: every body point).
//   node_sig   uncertainty channel (task: sigma_x; joint: sigma_theta).
//   node_unit  channels with fixed unit ambient weight (task: direction mean
//              and kappa; joint: end-effector angle).
//   node_theta joint models only, decoded mean angles.
//
// Build is exclusive; shortest-path queries read a consistent weight snapshot.
// reweight mutates current weights in place and bumps weight_version, so
// concurrent readers must be serialized against it by the caller.
struct LatentGraph {
  bool task_kind = true;
  Mat bounds;              // 2 x d, row 0 = lower, row 1 = upper
  std::vector<int> res;    // nodes per dimension, >= 2 each

  int n_groups = 1;
  int group_dim = 0;
  int sig_dim = 0;
  int unit_dim = 0;
  int theta_dim = 0;

  Mat node_pos, node_sig, node_unit, node_theta;

  std::vector<std::int32_t> edge_a, edge_b;  // edge_a[e] < edge_b[e]
  Mat edge_pos_sq, edge_sig_sq;              // E x n_groups
  Vec edge_unit_sq;                          // E
  Vec base_weight, current_weight;           // E

  std::vector<std::int64_t> adj_off;         // N+1
  std::vector<std::int32_t> adj_edge, adj_node;

  double median_interior_density = 0.0;      // of (base weight / spacing)^2
  double energy_threshold_factor = 50.0;
  std::vector<metric::Obstacle> active_obstacles;
  std::uint64_t weight_version = 0;

  int dim() const { return int(res.size()); }

  std::int64_t node_count() const {
    std::int64_t n = 1;
    for (int r : res) n *= r;
    return n;
  }

  std::int64_t edge_count() const { return std::int64_t(edge_a.size()); }

  double spacing(int k) const {
    return (bounds(1, k) - bounds(0, k)) / double(res[k] - 1);
  }

  std::vector<int> node_index(std::int64_t id) const {
    std::vector<int> idx(dim());
    for (int k = dim() - 1; k >= 0; --k) {
      idx[k] = int(id % res[k]);
      id /= res[k];
    }
    return idx;
  }

  std::int64_t index_id(const std::vector<int>& idx) const {
    std::int64_t id = 0;
    for (int k = 0; k < dim(); ++k) id = id * res[k] + idx[k];
    return id;
  }

  Vec node_coord(std::int64_t id) const {
    const auto idx = node_index(id);
    Vec z(dim());
    for (int k = 0; k < dim(); ++k) z[k] = bounds(0, k) + idx[k] * spacing(k);
    return z;
  }

  bool contains(const Vec& z) const {
    if (z.size() != dim()) return false;
    for (int k = 0; k < dim(); ++k)
      if (z[k] < bounds(0, k) || z[k] > bounds(1, k)) return false;
    return true;
  }

  // Nearest grid node; rounding of exact half offsets is away from zero.
  std::int64_t nearest_node(const Vec& z) const {
    std::int64_t id = 0;
    for (int k = 0; k < dim(); ++k) {
      const double x = (z[k] - bounds(0, k)) / spacing(k);
      const long long i =
          std::clamp<long long>(std::llround(x), 0, res[k] - 1);
      id = id * res[k] + i;
    }
    return id;
  }

  double energy_threshold() const {
    return energy_threshold_factor * median_interior_density;
  }

  // CSR adjacency from the edge lists; required before shortest_path.
  void finalize_adjacency() {
    const std::int64_t n = node_count();
    adj_off.assign(std::size_t(n) + 1, 0);
    for (std::size_t e = 0; e < edge_a.size(); ++e) {
      ++adj_off[std::size_t(edge_a[e]) + 1];
      ++adj_off[std::size_t(edge_b[e]) + 1];
    }
    for (std::size_t i = 1; i < adj_off.size(); ++i) adj_off[i] += adj_off[i - 1];
    adj_edge.assign(2 * edge_a.size(), 0);
    adj_node.assign(2 * edge_a.size(), 0);
    std::vector<std::int64_t> fill(adj_off.begin(), adj_off.end() - 1);
    for (std::size_t e = 0; e < edge_a.size(); ++e) {
      adj_edge[std::size_t(fill[edge_a[e]])] = std::int32_t(e);
      adj_node[std::size_t(fill[edge_a[e]]++)] = edge_b[e];
      adj_edge[std::size_t(fill[edge_b[e]])] = std::int32_t(e);
      adj_node[std::size_t(fill[edge_b[e]]++)] = edge_a[e];
    }
  }
};

namespace detail {

// Half of the {-1,0,1}^d \ {0} neighborhood: offsets whose first nonzero
// component is positive. Enumerating these from every node yields each
// undirected edge exactly once, in a deterministic order, and the neighbor
// always has the larger row-major id.
inline std::vector<std::vector<int>> half_offsets(int d) {
  std::vector<std::vector<int>> out;
  std::int64_t total = 1;
  for (int k = 0; k < d; ++k) total *= 3;
  for (std::int64_t c = 0; c < total; ++c) {
    std::vector<int> o(d);
    std::int64_t v = c;
    for (int k = d - 1; k >= 0; --k) {
      o[k] = int(v % 3) - 1;
      v /= 3;
    }
    int first = 0;
    for (int k = 0; k < d; ++k) {
      if (o[k] != 0) {
        first = o[k];
        break;
      }
    }
    if (first == 1) out.push_back(std::move(o));
  }
  return out;
}

// Fills edge_a/edge_b in canonical order (node-major, then offset order).
inline void enumerate_edges(LatentGraph& g) {
  const int d = g.dim();
  const auto offsets = half_offsets(d);
  const std::int64_t n = g.node_count();
  g.edge_a.clear();
  g.edge_b.clear();
  std::vector<int> idx(d, 0), nidx(d);
  for (std::int64_t id = 0; id < n; ++id) {
    for (const auto& o : offsets) {
      bool ok = true;
      for (int k = 0; k < d; ++k) {
        nidx[k] = idx[k] + o[k];
        if (nidx[k] < 0 || nidx[k] >= g.res[k]) {
          ok = false;
          break;
        }
      }
      if (ok) {
        g.edge_a.push_back(std::int32_t(id));
        g.edge_b.push_back(std::int32_t(g.index_id(nidx)));
      }
    }
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < g.res[k]) break;
      idx[k] = 0;
    }
  }
}

inline constexpr double kWeightFloor = 1e-12;

// w = sqrt(sum_g s(midpoint_g) (|dpos_g|^2 + |dsig_g|^2) + unit channels),
// everything from the caches; s comes from the ambient obstacle field.
inline double edge_weight_with_scale(const LatentGraph& g, std::int64_t e,
                                     const std::vector<metric::Obstacle>& obs) {
  double acc = g.edge_unit_sq[e];
  const std::int64_t a = g.edge_a[std::size_t(e)];
  const std::int64_t b = g.edge_b[std::size_t(e)];
  for (int grp = 0; grp < g.n_groups; ++grp) {
    const int off = grp * g.group_dim;
    const Vec mid = 0.5 * (g.node_pos.row(a).segment(off, g.group_dim) +
                           g.node_pos.row(b).segment(off, g.group_dim))
                              .transpose();
    acc += metric::ambient_scale(mid, obs) *
           (g.edge_pos_sq(e, grp) + g.edge_sig_sq(e, grp));
  }
  return std::max(std::sqrt(acc), kWeightFloor);
}

}  // namespace detail

// Bounds large enough to pass the coverage check, padded beyond the box of
// training codes. Degenerate spans get a small absolute pad.
inline Mat suggested_bounds(const Mat& latent_box, double pad_fraction = 0.2) {
  Mat out(2, latent_box.cols());
  for (Eigen::Index k = 0; k < latent_box.cols(); ++k) {
    const double span = latent_box(1, k) - latent_box(0, k);
    const double pad = std::max(pad_fraction * span, 1e-3);
    out(0, k) = latent_box(0, k) - pad;
    out(1, k) = latent_box(1, k) + pad;
  }
  return out;
}

inline std::vector<int> default_resolution(int d) {
  if (d == 2) return {100, 100};
  if (d == 3) return {50, 50, 50};
  throw std::invalid_argument(
      "default_resolution: no default for latent dimension " +
      std::to_string(d) + "; pass a resolution explicitly");
}

// Updates current weights for the given obstacles. Only edges with a cached
// decoded position (either endpoint, any group) inside some obstacle's
// influence radius are recomputed; every other edge is reset to its base
// weight. Pure function of the caches and the obstacle list, so repeating a
// call or restoring a previous obstacle set is bit-exact. Never decodes.
// Returns the number of recomputed edges.
inline std::size_t reweight(LatentGraph& g,
                            const std::vector<metric::Obstacle>& obstacles) {
  for (const auto& o : obstacles)
    if (o.center.size() != g.group_dim)
      throw std::invalid_argument(
          "reweight: obstacle dimension does not match decoded positions");
  ++g.weight_version;
  g.active_obstacles = obstacles;
  std::size_t touched = 0;
  const std::int64_t E = g.edge_count();
  for (std::int64_t e = 0; e < E; ++e) {
    bool near = false;
    for (const auto& o : obstacles) {
      const double r2 = o.influence_radius() * o.influence_radius();
      for (int end = 0; end < 2 && !near; ++end) {
        const std::int64_t node = end ? g.edge_b[std::size_t(e)] : g.edge_a[std::size_t(e)];
        for (int grp = 0; grp < g.n_groups; ++grp) {
          const int off = grp * g.group_dim;
          const double d2 = (g.node_pos.row(node).segment(off, g.group_dim) -
                             o.center.transpose())
                                .squaredNorm();
          if (d2 <= r2) {
            near = true;
            break;
          }
        }
      }
      if (near) break;
    }
    if (near) {
      g.current_weight[e] = detail::edge_weight_with_scale(g, e, obstacles);
      ++touched;
    } else {
      g.current_weight[e] = g.base_weight[e];
    }
  }
  return touched;
}

namespace detail {

inline void validate_grid(const Mat& bounds, const std::vector<int>& res,
                          const Mat& latent_box) {
  const int d = int(res.size());
  if (bounds.rows() != 2 || bounds.cols() != d)
    throw std::invalid_argument("build_graph: bounds must be 2 x latent_dim");
  for (int k = 0; k < d; ++k) {
    if (res[k] < 2)
      throw std::invalid_argument("build_graph: resolution must be >= 2 per dimension");
    if (!(bounds(0, k) < bounds(1, k)))
      throw std::invalid_argument("build_graph: bounds must have lower < upper");
  }
  // Bounds must cover the training codes with a 10% margin per dimension so
  // geodesics can route around the data region instead of hugging the border.
  bool ok = true;
  for (int k = 0; k < d && ok; ++k) {
    const double span = latent_box(1, k) - latent_box(0, k);
    const double margin = 0.1 * span;
    if (bounds(0, k) > latent_box(0, k) - margin + 1e-12 ||
        bounds(1, k) < latent_box(1, k) + margin - 1e-12)
      ok = false;
  }
  if (!ok) {
    const Mat sug = suggested_bounds(latent_box);
    std::string msg =
        "build_graph: bounds do not cover the training codes with a 10% "
        "margin; suggested bounds:";
    for (int k = 0; k < d; ++k)
      msg += " [" + fmt_double(sug(0, k)) + ", " + fmt_double(sug(1, k)) + "]";
    throw std::invalid_argument(msg);
  }
}

template <typename Policy>
LatentGraph build_core(const Policy& pol, const Mat& latent_box, const Mat& bounds,
                       std::vector<int> res,
                       const std::vector<metric::Obstacle>& obstacles,
                       double energy_threshold_factor) {
  if (res.empty()) res = default_resolution(int(bounds.cols()));
  validate_grid(bounds, res, latent_box);

  LatentGraph g;
  g.task_kind = Policy::kTaskKind;
  g.bounds = bounds;
  g.res = std::move(res);
  g.n_groups = pol.n_groups();
  g.group_dim = pol.group_dim();
  g.sig_dim = pol.sig_dim();
  g.unit_dim = pol.unit_dim();
  g.theta_dim = pol.theta_dim();
  g.energy_threshold_factor = energy_threshold_factor;

  const std::int64_t n = g.node_count();
  if (n > (std::int64_t(1) << 26))
    throw std::invalid_argument("build_graph: grid has too many nodes");
  g.node_pos.resize(n, g.n_groups * g.group_dim);
  g.node_sig.resize(n, g.sig_dim);
  g.node_unit.resize(n, g.unit_dim);
  g.node_theta.resize(n, g.theta_dim);
  for (std::int64_t i = 0; i < n; ++i) pol.node(g, i, g.node_coord(i));

  enumerate_edges(g);
  const std::int64_t E = g.edge_count();
  g.edge_pos_sq.resize(E, g.n_groups);
  g.edge_sig_sq.resize(E, g.n_groups);
  g.edge_unit_sq.resize(E);
  g.base_weight.resize(E);
  for (std::int64_t e = 0; e < E; ++e) {
    pol.edge(g, e, g.edge_a[std::size_t(e)], g.edge_b[std::size_t(e)]);
    g.base_weight[e] = edge_weight_with_scale(g, e, {});
  }
  g.current_weight = g.base_weight;
  g.finalize_adjacency();

  // Per-node energy density: mean over incident edges of (weight/spacing)^2,
  // the discrete counterpart of v^T G v at unit latent speed. The median over
  // grid-interior nodes calibrates the planner's high-energy flag.
  Vec acc = Vec::Zero(n);
  Eigen::VectorXi cnt = Eigen::VectorXi::Zero(n);
  for (std::int64_t e = 0; e < E; ++e) {
    const Vec dz = g.node_coord(g.edge_a[std::size_t(e)]) -
                   g.node_coord(g.edge_b[std::size_t(e)]);
    const double rho = g.base_weight[e] * g.base_weight[e] / dz.squaredNorm();
    acc[g.edge_a[std::size_t(e)]] += rho;
    ++cnt[g.edge_a[std::size_t(e)]];
    acc[g.edge_b[std::size_t(e)]] += rho;
    ++cnt[g.edge_b[std::size_t(e)]];
  }
  std::vector<double> interior;
  interior.reserve(std::size_t(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = g.node_index(i);
    bool inner = true;
    for (int k = 0; k < g.dim(); ++k)
      if (idx[k] == 0 || idx[k] == g.res[k] - 1) inner = false;
    if (inner && cnt[i] > 0) interior.push_back(acc[i] / cnt[i]);
  }
  if (interior.empty())
    for (std::int64_t i = 0; i < n; ++i)
      if (cnt[i] > 0) interior.push_back(acc[i] / cnt[i]);
  const std::size_t mid = interior.size() / 2;
  std::nth_element(interior.begin(), interior.begin() + mid, interior.end());
  g.median_interior_density = interior[mid];

  if (!obstacles.empty()) reweight(g, obstacles);
  return g;
}

struct TaskGraphPolicy {
  static constexpr bool kTaskKind = true;
  const vae::TaskVae& m;

  int n_groups() const { return 1; }
  int group_dim() const { return m.pos_dim; }
  int sig_dim() const { return m.pos_dim; }
  int unit_dim() const { return m.dir_dim + 1; }
  int theta_dim() const { return 0; }

  void node(LatentGraph& g, std::int64_t i, const Vec& z) const {
    const auto d = vae::decode_task(m, z);
    g.node_pos.row(i) = d.pos_mean.transpose();
    g.node_sig.row(i) = d.pos_sigma.transpose();
    g.node_unit.row(i).head(m.dir_dim) = d.dir_mean.transpose();
    g.node_unit(i, m.dir_dim) = d.kappa;
  }

  void edge(LatentGraph& g, std::int64_t e, std::int64_t a, std::int64_t b) const {
    g.edge_pos_sq(e, 0) = (g.node_pos.row(a) - g.node_pos.row(b)).squaredNorm();
    g.edge_sig_sq(e, 0) = (g.node_sig.row(a) - g.node_sig.row(b)).squaredNorm();
    g.edge_unit_sq[e] = (g.node_unit.row(a) - g.node_unit.row(b)).squaredNorm();
  }
};

struct JointGraphPolicy {
  static constexpr bool kTaskKind = false;
  const vae::JointVae& m;

  int n_groups() const { return m.chain.body_points(); }
  int group_dim() const { return 2; }
  int sig_dim() const { return m.chain.dof(); }
  int unit_dim() const { return 1; }
  int theta_dim() const { return m.chain.dof(); }

  void node(LatentGraph& g, std::int64_t i, const Vec& z) const {
    const auto d = vae::decode_joint(m, z);
    for (int p = 0; p < m.chain.body_points(); ++p)
      g.node_pos.row(i).segment(2 * p, 2) = d.body.points[std::size_t(p)].transpose();
    g.node_sig.row(i) = d.theta_sigma.transpose();
    g.node_theta.row(i) = d.theta_mean.transpose();
    g.node_unit(i, 0) = d.body.ee_angle;
  }

  // Sigma displacements are transported to the workspace through the FK
  // Jacobian at the midpoint angles, matching the pullback metric's
  // uncertainty term to first order in the grid spacing.
  void edge(LatentGraph& g, std::int64_t e, std::int64_t a, std::int64_t b) const {
    const int M = m.chain.body_points();
    for (int p = 0; p < M; ++p)
      g.edge_pos_sq(e, p) = (g.node_pos.row(a).segment(2 * p, 2) -
                             g.node_pos.row(b).segment(2 * p, 2))
                                .squaredNorm();
    const Vec theta_mid =
        0.5 * (g.node_theta.row(a) + g.node_theta.row(b)).transpose();
    const Vec dsig = (g.node_sig.row(a) - g.node_sig.row(b)).transpose();
    const Vec t = kin::fk_jacobian(m.chain, theta_mid) * dsig;
    for (int p = 0; p < M; ++p)
      g.edge_sig_sq(e, p) = t.segment(2 * p, 2).squaredNorm();
    const double dang = g.node_unit(a, 0) - g.node_unit(b, 0);
    g.edge_unit_sq[e] = dang * dang + t[2 * M] * t[2 * M];
  }
};

}  // namespace detail

// Decodes every node once, caches the values, and derives all edge channel
// displacements. Base weights use ambient scale 1; when obstacles are given
// the current weights are immediately rescaled for them.
inline LatentGraph build_graph(const vae::TaskVae& m, const Mat& bounds,
                               std::vector<int> resolution = {},
                               const std::vector<metric::Obstacle>& obstacles = {},
                               double energy_threshold_factor = 50.0) {
  return detail::build_core(detail::TaskGraphPolicy{m}, m.latent_box, bounds,
                            std::move(resolution), obstacles,
                            energy_threshold_factor);
}

inline LatentGraph build_graph(const vae::JointVae& m, const Mat& bounds,
                               std::vector<int> resolution = {},
                               const std::vector<metric::Obstacle>& obstacles = {},
                               double energy_threshold_factor = 50.0) {
  return detail::build_core(detail::JointGraphPolicy{m}, m.latent_box, bounds,
                            std::move(resolution), obstacles,
                            energy_threshold_factor);
}

struct PathResult {
  std::vector<std::int64_t> nodes;  // start to goal inclusive
  double cost = 0.0;
};

// Dijkstra over current weights. Endpoints snap to their nearest grid nodes.
// The frontier orders by (distance, node id) and equal-distance relaxations
// prefer the smaller predecessor, so the optimal path is deterministic.
inline PathResult shortest_path(const LatentGraph& g, const Vec& z_start,
                                const Vec& z_goal) {
  if (!g.contains(z_start) || !g.contains(z_goal))
    throw std::invalid_argument("shortest_path: endpoint outside graph bounds");
  const std::int64_t s = g.nearest_node(z_start);
  const std::int64_t t = g.nearest_node(z_goal);
  PathResult out;
  if (s == t) {
    out.nodes = {s};
    return out;
  }
  const std::int64_t n = g.node_count();
  std::vector<double> dist(std::size_t(n), std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> pred(std::size_t(n), -1);
  using Item = std::pair<double, std::int64_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist[std::size_t(s)] = 0.0;
  pq.emplace(0.0, s);
  while (!pq.empty()) {
    const auto [du, u] = pq.top();
    pq.pop();
    if (du > dist[std::size_t(u)]) continue;
    if (u == t) break;
    for (std::int64_t k = g.adj_off[std::size_t(u)]; k < g.adj_off[std::size_t(u) + 1]; ++k) {
      const std::int64_t v = g.adj_node[std::size_t(k)];
      const double nd = du + g.current_weight[g.adj_edge[std::size_t(k)]];
      if (nd < dist[std::size_t(v)]) {
        dist[std::size_t(v)] = nd;
        pred[std::size_t(v)] = u;
        pq.emplace(nd, v);
      } else if (nd == dist[std::size_t(v)] && u < pred[std::size_t(v)]) {
        pred[std::size_t(v)] = u;
      }
    }
  }
  if (!std::isfinite(dist[std::size_t(t)]))
    throw std::runtime_error("shortest_path: goal unreachable (grid should be connected)");
  out.cost = dist[std::size_t(t)];
  for (std::int64_t v = t; v != -1; v = pred[std::size_t(v)])
    out.nodes.push_back(v);
  std::reverse(out.nodes.begin(), out.nodes.end());
  return out;
}

// Natural cubic spline on K uniform knots over [0,1], C^2 everywhere, second
// derivative zero at both ends. Evaluation clamps the parameter to [0,1].
struct GeodesicSpline {
  Vec knots;    // K uniform parameters
  Mat control;  // K x d values at the knots
  Mat second;   // K x d second derivatives, rows 0 and K-1 zero
  double rms = 0.0;

  int dim() const { return int(control.cols()); }
  int segments() const { return int(control.rows()) - 1; }

  Vec eval(double t) const {
    const int K = int(control.rows());
    t = std::clamp(t, 0.0, 1.0);
    // Endpoints return the control rows verbatim so the interpolation
    // constraint holds to the bit.
    if (t == 0.0) return control.row(0).transpose();
    if (t == 1.0) return control.row(K - 1).transpose();
    const double h = 1.0 / double(K - 1);
    const int i = std::min(int(t * double(K - 1)), K - 2);
    const double a = knots[i + 1] - t;
    const double b = t - knots[i];
    // Delta form: a constant spline reproduces its value to the bit.
    return (control.row(i) + (control.row(i + 1) - control.row(i)) * (b / h) +
            second.row(i) * ((a * a * a) / (6.0 * h) - a * h / 6.0) +
            second.row(i + 1) * ((b * b * b) / (6.0 * h) - b * h / 6.0))
        .transpose();
  }

  Mat sample(int T) const {
    if (T < 2) throw std::invalid_argument("GeodesicSpline::sample: need T >= 2");
    Mat out(T, dim());
    for (int i = 0; i < T; ++i)
      out.row(i) = eval(double(i) / double(T - 1)).transpose();
    return out;
  }

  // Cubic coefficients on segment i in the local parameter u = t - knots[i]:
  // rows are lambda_0..lambda_3 of lambda_0 + lambda_1 u + lambda_2 u^2 + lambda_3 u^3.
  Mat segment_coeffs(int i) const {
    if (i < 0 || i >= segments())
      throw std::invalid_argument("GeodesicSpline::segment_coeffs: segment out of range");
    const double h = 1.0 / double(control.rows() - 1);
    Mat c(4, dim());
    c.row(0) = control.row(i);
    c.row(1) = (control.row(i + 1) - control.row(i)) / h -
               second.row(i) * h / 2.0 -
               (second.row(i + 1) - second.row(i)) * h / 6.0;
    c.row(2) = second.row(i) / 2.0;
    c.row(3) = (second.row(i + 1) - second.row(i)) / (6.0 * h);
    return c;
  }
};

namespace detail {

// Second derivatives of the natural cubic interpolant on uniform knots, one
// column per output dimension. Tridiagonal (1 4 1) system via the Thomas
// algorithm; ends stay zero.
inline Mat natural_second(const Mat& v, double h) {
  const Eigen::Index K = v.rows();
  Mat M = Mat::Zero(K, v.cols());
  const Eigen::Index n = K - 2;
  if (n <= 0) return M;
  Mat rhs(n, v.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    rhs.row(i) = 6.0 * (v.row(i) - 2.0 * v.row(i + 1) + v.row(i + 2)) / (h * h);
  std::vector<double> cp(static_cast<std::size_t>(n));
  cp[0] = 1.0 / 4.0;
  rhs.row(0) /= 4.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double w = 4.0 - cp[std::size_t(i - 1)];
    cp[std::size_t(i)] = 1.0 / w;
    rhs.row(i) = (rhs.row(i) - rhs.row(i - 1)) / w;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i)
    rhs.row(i) -= cp[std::size_t(i)] * rhs.row(i + 1);
  M.middleRows(1, n) = rhs;
  return M;
}

}  // namespace detail

// Least-squares natural cubic fit to an ordered node sequence under
// chord-length parameterization. The first and last node are interpolated
// exactly; the interior control values minimize the squared residual at the
// nodes. K <= 0 selects max(8, n/5); K is clamped to the node count so the
// fit stays determined. All nodes identical yields a constant spline.
inline GeodesicSpline fit_spline(const Mat& nodes, int K = 0) {
  const Eigen::Index n = nodes.rows();
  const Eigen::Index d = nodes.cols();
  if (n < 2) throw std::invalid_argument("fit_spline: need at least 2 nodes");
  if (K == 0) K = std::max(8, int(n) / 5);
  if (K < 2) throw std::invalid_argument("fit_spline: need at least 2 control points");
  K = int(std::min<Eigen::Index>(K, n));

  GeodesicSpline sp;
  sp.knots = Vec::LinSpaced(K, 0.0, 1.0);
  const double h = 1.0 / double(K - 1);

  Vec t = Vec::Zero(n);
  for (Eigen::Index i = 1; i < n; ++i)
    t[i] = t[i - 1] + (nodes.row(i) - nodes.row(i - 1)).norm();
  if (t[n - 1] < 1e-15) {
    sp.control = nodes.row(0).replicate(K, 1);
    sp.second = Mat::Zero(K, d);
    sp.rms = 0.0;
    return sp;
  }
  t /= t[n - 1];

  // B(i,k) is basis k (the natural interpolant of the k-th unit vector at the
  // knots) evaluated at parameter t_i.
  const Mat basis_second = detail::natural_second(Mat::Identity(K, K), h);
  Mat B = Mat::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = std::min(int(t[i] * double(K - 1)), K - 2);
    const double a = sp.knots[j + 1] - t[i];
    const double b = t[i] - sp.knots[j];
    B.row(i) =
        basis_second.row(j) * ((a * a * a) / (6.0 * h) - a * h / 6.0) +
        basis_second.row(j + 1) * ((b * b * b) / (6.0 * h) - b * h / 6.0);
    B(i, j) += a / h;
    B(i, j + 1) += b / h;
  }

  sp.control.resize(K, d);
  sp.control.row(0) = nodes.row(0);
  sp.control.row(K - 1) = nodes.row(n - 1);
  if (K > 2) {
    const Mat rhs = nodes - B.col(0) * nodes.row(0) - B.col(K - 1) * nodes.row(n - 1);
    sp.control.middleRows(1, K - 2) =
        B.middleCols(1, K - 2).colPivHouseholderQr().solve(rhs);
  }
  sp.second = detail::natural_second(sp.control, h);
  sp.rms = std::sqrt((B * sp.control - nodes).rowwise().squaredNorm().mean());
  return sp;
}

struct PlanRequest {
  Vec start, goal;       // latent points, or ambient inputs when flagged
  bool ambient_endpoints = false;
  std::vector<metric::Obstacle> obstacles;
  int samples = 100;     // output resolution T
  int spline_control = 0;  // <= 0 selects the fit_spline default
};

struct PlanDiagnostics {
  double graph_cost = 0.0;
  double spline_energy = 0.0;
  double max_energy_density = 0.0;
  double energy_threshold = 0.0;
  bool high_energy = false;
  double min_clearance = std::numeric_limits<double>::infinity();
  double fit_rms = 0.0;
  std::size_t path_nodes = 0;
  std::size_t touched_edges = 0;
  std::uint64_t core_decoder_queries = 0;  // during reweight + search + fit
  double reweight_ms = 0.0, search_ms = 0.0, spline_ms = 0.0, decode_ms = 0.0;
};

struct PlanResult {
  GeodesicSpline spline;
  std::vector<std::int64_t> path;  // graph node ids
  Mat latent;                      // T x d spline samples
  Mat trajectory;  // task: T x (pos+dir), unit directions; joint: T x dof
  std::vector<kin::BodyState> bodies;  // joint models only, one per sample
  PlanDiagnostics diag;
};

namespace detail {

inline double ms_between(std::chrono::steady_clock::time_point a,
                         std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// reweight -> Dijkstra -> spline fit -> sample. This window must never hit
// the decoder; the query counter delta is recorded in the diagnostics.
inline void plan_core(LatentGraph& g, const Vec& zs, const Vec& zg,
                      const PlanRequest& req, PlanResult& out) {
  if (req.samples < 2)
    throw std::invalid_argument("plan: need at least 2 output samples");
  if (zs.size() != g.dim() || zg.size() != g.dim())
    throw std::invalid_argument("plan: endpoint dimension mismatch");
  for (const Vec* z : {&zs, &zg})
    if (!g.contains(*z)) {
      std::string msg = "plan: endpoint outside graph bounds";
      for (int k = 0; k < g.dim(); ++k)
        msg += " [" + fmt_double(g.bounds(0, k)) + ", " +
               fmt_double(g.bounds(1, k)) + "]";
      throw std::invalid_argument(msg);
    }

  const std::uint64_t q0 = vae::decoder_queries();
  const auto t0 = std::chrono::steady_clock::now();
  out.diag.touched_edges = reweight(g, req.obstacles);
  const auto t1 = std::chrono::steady_clock::now();
  PathResult pr = shortest_path(g, zs, zg);
  const auto t2 = std::chrono::steady_clock::now();

  // The exact requested endpoints replace the snapped nodes so the decoded
  // motion starts and ends precisely where asked.
  const std::size_t np = pr.nodes.size();
  Mat nodes(std::max<std::size_t>(np, 2), g.dim());
  if (np == 1) {
    nodes.row(0) = zs.transpose();
    nodes.row(1) = zg.transpose();
  } else {
    for (std::size_t i = 0; i < np; ++i)
      nodes.row(Eigen::Index(i)) = g.node_coord(pr.nodes[i]).transpose();
    nodes.row(0) = zs.transpose();
    nodes.row(Eigen::Index(np - 1)) = zg.transpose();
  }
  out.spline = fit_spline(nodes, std::max(req.spline_control, 0));
  const auto t3 = std::chrono::steady_clock::now();
  out.latent = out.spline.sample(req.samples);

  out.path = std::move(pr.nodes);
  out.diag.graph_cost = pr.cost;
  out.diag.path_nodes = np;
  out.diag.fit_rms = out.spline.rms;
  out.diag.energy_threshold = g.energy_threshold();
  out.diag.core_decoder_queries = vae::decoder_queries() - q0;
  out.diag.reweight_ms = ms_between(t0, t1);
  out.diag.search_ms = ms_between(t1, t2);
  out.diag.spline_ms = ms_between(t2, t3);
}

// Trapezoid energy of the sampled curve plus the peak pointwise density
// q / |v|^2, the discrete v^T G v at unit latent speed. Same finite
// differences as the curve functionals, so the energy matches curve_energy.
inline void energy_stats(const metric::MetricField& field, const Mat& latent,
                         PlanDiagnostics& diag) {
  const Eigen::Index T = latent.rows();
  const double dt = 1.0 / double(T - 1);
  double energy = 0.0, peak = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    Vec v;
    if (i == 0)
      v = (latent.row(1) - latent.row(0)).transpose() / dt;
    else if (i == T - 1)
      v = (latent.row(T - 1) - latent.row(T - 2)).transpose() / dt;
    else
      v = (latent.row(i + 1) - latent.row(i - 1)).transpose() / (2.0 * dt);
    const Mat G = field.metric(latent.row(i).transpose());
    const double q = v.dot(G * v);
    energy += ((i == 0 || i == T - 1) ? 0.5 : 1.0) * q * dt;
    const double v2 = v.squaredNorm();
    if (v2 > 1e-300) peak = std::max(peak, std::max(q, 0.0) / v2);
  }
  diag.spline_energy = energy;
  diag.max_energy_density = peak;
  diag.high_energy = peak > diag.energy_threshold;
}

inline void update_clearance(const Vec& p,
                             const std::vector<metric::Obstacle>& obstacles,
                             double& clearance) {
  for (const auto& o : obstacles)
    clearance = std::min(clearance, (p - o.center).norm());
}

}  // namespace detail

// Full pipeline: reweight, shortest path, spline fit, then decode T samples.
// Diagnostics report the graph cost, curve energy, peak energy density with
// the high-energy flag, and the closest approach of any decoded position to
// an obstacle center.
inline PlanResult plan(const vae::TaskVae& m, LatentGraph& g,
                       const PlanRequest& req) {
  if (!g.task_kind || g.dim() != m.latent_dim || g.group_dim != m.pos_dim ||
      g.unit_dim != m.dir_dim + 1)
    throw std::invalid_argument("plan: graph was not built for this model");
  Vec zs = req.start, zg = req.goal;
  if (req.ambient_endpoints) {
    if (req.start.size() != m.pos_dim + m.dir_dim ||
        req.goal.size() != m.pos_dim + m.dir_dim)
      throw std::invalid_argument("plan: ambient endpoint dimension mismatch");
    zs = vae::encode(m, req.start).mu;
    zg = vae::encode(m, req.goal).mu;
  }
  PlanResult out;
  detail::plan_core(g, zs, zg, req, out);

  const auto t0 = std::chrono::steady_clock::now();
  const int T = req.samples;
  out.trajectory.resize(T, m.pos_dim + m.dir_dim);
  for (int i = 0; i < T; ++i) {
    const auto dec = vae::decode_task(m, out.latent.row(i).transpose());
    out.trajectory.row(i).head(m.pos_dim) = dec.pos_mean.transpose();
    out.trajectory.row(i).tail(m.dir_dim) = dec.dir_mean.transpose();
    detail::update_clearance(dec.pos_mean, req.obstacles, out.diag.min_clearance);
  }
  const auto field = metric::make_field(m, req.obstacles);
  detail::energy_stats(field, out.latent, out.diag);
  out.diag.decode_ms = detail::ms_between(t0, std::chrono::steady_clock::now());
  return out;
}

inline PlanResult plan(const vae::JointVae& m, LatentGraph& g,
                       const PlanRequest& req) {
  if (g.task_kind || g.dim() != m.latent_dim ||
      g.n_groups != m.chain.body_points() || g.theta_dim != m.chain.dof())
    throw std::invalid_argument("plan: graph was not built for this model");
  Vec zs = req.start, zg = req.goal;
  if (req.ambient_endpoints) {
    if (req.start.size() != m.chain.dof() || req.goal.size() != m.chain.dof())
      throw std::invalid_argument("plan: ambient endpoint dimension mismatch");
    zs = vae::encode(m, req.start).mu;
    zg = vae::encode(m, req.goal).mu;
  }
  PlanResult out;
  detail::plan_core(g, zs, zg, req, out);

  const auto t0 = std::chrono::steady_clock::now();
  const int T = req.samples;
  out.trajectory.resize(T, m.chain.dof());
  out.bodies.reserve(std::size_t(T));
  for (int i = 0; i < T; ++i) {
    auto dec = vae::decode_joint(m, out.latent.row(i).transpose());
    out.trajectory.row(i) = dec.theta_mean.transpose();
    for (const auto& p : dec.body.points)
      detail::update_clearance(p, req.obstacles, out.diag.min_clearance);
    out.bodies.push_back(std::move(dec.body));
  }
  const auto field = metric::make_field(m, req.obstacles);
  detail::energy_stats(field, out.latent, out.diag);
  out.diag.decode_ms = detail::ms_between(t0, std::chrono::steady_clock::now());
  return out;
}

// ---------------------------------------------------------------------------
// Graph cache: little-endian binary dump of the node and edge caches, keyed
// by a caller-supplied content hash (typically of the model file bytes).
// Adjacency and edge endpoints are rebuilt from the deterministic grid
// enumeration. current weights reset to base on load.

namespace detail {

inline constexpr char kGraphMagic[12] = {'g', 'e', 'o', 'm', 'o', 't',
                                         '-', 'g', 'r', 'a', 'p', 'h'};
inline constexpr std::int32_t kGraphVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return bool(is);
}

inline void put_mat(std::ostream& os, const Mat& m) {
  if (m.size() == 0) return;
  os.write(reinterpret_cast<const char*>(m.data()),
           std::streamsize(sizeof(double) * std::size_t(m.size())));
}

inline bool get_mat(std::istream& is, Mat& m) {
  if (m.size() == 0) return bool(is);
  is.read(reinterpret_cast<char*>(m.data()),
          std::streamsize(sizeof(double) * std::size_t(m.size())));
  return bool(is) && m.allFinite();
}

inline bool get_vec(std::istream& is, Vec& v) {
  if (v.size() == 0) return bool(is);
  is.read(reinterpret_cast<char*>(v.data()),
          std::streamsize(sizeof(double) * std::size_t(v.size())));
  return bool(is) && v.allFinite();
}

}  // namespace detail

inline void save_graph(const LatentGraph& g, const std::string& path,
                       std::uint64_t model_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("save_graph: cannot open " + path);
  os.write(detail::kGraphMagic, sizeof detail::kGraphMagic);
  detail::put(os, detail::kGraphVersion);
  detail::put(os, model_hash);
  detail::put(os, std::uint8_t(g.task_kind ? 0 : 1));
  detail::put(os, std::int32_t(g.dim()));
  for (int r : g.res) detail::put(os, std::int32_t(r));
  for (int k = 0; k < g.dim(); ++k) detail::put(os, g.bounds(0, k));
  for (int k = 0; k < g.dim(); ++k) detail::put(os, g.bounds(1, k));
  for (int v : {g.n_groups, g.group_dim, g.sig_dim, g.unit_dim, g.theta_dim})
    detail::put(os, std::int32_t(v));
  detail::put(os, std::int64_t(g.node_count()));
  detail::put(os, std::int64_t(g.edge_count()));
  detail::put(os, g.median_interior_density);
  detail::put(os, g.energy_threshold_factor);
  detail::put_mat(os, g.node_pos);
  detail::put_mat(os, g.node_sig);
  detail::put_mat(os, g.node_unit);
  detail::put_mat(os, g.node_theta);
  detail::put_mat(os, g.edge_pos_sq);
  detail::put_mat(os, g.edge_sig_sq);
  os.write(reinterpret_cast<const char*>(g.edge_unit_sq.data()),
           std::streamsize(sizeof(double) * std::size_t(g.edge_unit_sq.size())));
  os.write(reinterpret_cast<const char*>(g.base_weight.data()),
           std::streamsize(sizeof(double) * std::size_t(g.base_weight.size())));
  if (!os) throw IoError("save_graph: write failed for " + path);
}

// Any mismatch (missing file, wrong magic or version, stale hash, truncated
// or corrupt payload) yields nullopt so the caller rebuilds; a stale cache is
// not an error.
inline std::optional<LatentGraph> load_graph(const std::string& path,
                                             std::uint64_t model_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[sizeof detail::kGraphMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, detail::kGraphMagic, sizeof magic) != 0)
    return std::nullopt;
  std::int32_t version = 0;
  std::uint64_t hash = 0;
  std::uint8_t kind = 0;
  std::int32_t d = 0;
  if (!detail::get(is, version) || version != detail::kGraphVersion) return std::nullopt;
  if (!detail::get(is, hash) || hash != model_hash) return std::nullopt;
  if (!detail::get(is, kind) || kind > 1) return std::nullopt;
  if (!detail::get(is, d) || d < 1 || d > 16) return std::nullopt;

  LatentGraph g;
  g.task_kind = kind == 0;
  g.res.resize(std::size_t(d));
  for (auto& r : g.res) {
    std::int32_t v = 0;
    if (!detail::get(is, v) || v < 2) return std::nullopt;
    r = v;
  }
  g.bounds.resize(2, d);
  for (int row = 0; row < 2; ++row)
    for (int k = 0; k < d; ++k)
      if (!detail::get(is, g.bounds(row, k))) return std::nullopt;
  std::int32_t dims[5];
  for (auto& v : dims)
    if (!detail::get(is, v) || v < 0) return std::nullopt;
  g.n_groups = dims[0];
  g.group_dim = dims[1];
  g.sig_dim = dims[2];
  g.unit_dim = dims[3];
  g.theta_dim = dims[4];
  std::int64_t N = 0, E = 0;
  if (!detail::get(is, N) || !detail::get(is, E)) return std::nullopt;
  if (N != g.node_count()) return std::nullopt;
  if (!detail::get(is, g.median_interior_density) ||
      !detail::get(is, g.energy_threshold_factor))
    return std::nullopt;

  detail::enumerate_edges(g);
  if (E != g.edge_count()) return std::nullopt;

  g.node_pos.resize(N, g.n_groups * g.group_dim);
  g.node_sig.resize(N, g.sig_dim);
  g.node_unit.resize(N, g.unit_dim);
  g.node_theta.resize(N, g.theta_dim);
  g.edge_pos_sq.resize(E, g.n_groups);
  g.edge_sig_sq.resize(E, g.n_groups);
  g.edge_unit_sq.resize(E);
  g.base_weight.resize(E);
  if (!detail::get_mat(is, g.node_pos) || !detail::get_mat(is, g.node_sig) ||
      !detail::get_mat(is, g.node_unit) || !detail::get_mat(is, g.node_theta) ||
      !detail::get_mat(is, g.edge_pos_sq) || !detail::get_mat(is, g.edge_sig_sq) ||
      !detail::get_vec(is, g.edge_unit_sq) || !detail::get_vec(is, g.base_weight))
    return std::nullopt;
  g.current_weight = g.base_weight;
  g.finalize_adjacency();
  return g;
}

}  // namespace geomot::geo
