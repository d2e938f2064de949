#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "geomot/core.hpp"
#include "geomot/kinematics.hpp"

namespace geomot::data {

// One demonstrated trajectory. Rows are time-ordered samples: pose rows
// are [position; unit direction], joint rows are joint angles in radians.
struct Demonstration {
  int traj_id = 0;
  int group = 0;  // demonstration group: IK branch, grasp target, start/goal pair
  Mat samples;
};

// A set of demonstrations sharing one sample layout. task_kind selects the
// pose layout (pos_dim + dir_dim columns, dir rows unit to 1e-9) over the
// joint layout (dof columns, all samples within chain limits).
struct TrajectorySet {
  bool task_kind = true;
  int pos_dim = 0;
  int dir_dim = 0;
  int dof = 0;
  std::vector<Demonstration> trajs;

  int width() const { return task_kind ? pos_dim + dir_dim : dof; }

  Eigen::Index total_samples() const {
    Eigen::Index n = 0;
    for (const auto& d : trajs) n += d.samples.rows();
    return n;
  }
};

// All samples row-stacked in trajectory order; the training matrix layout.
inline Mat stacked(const TrajectorySet& ts) {
  Mat X(ts.total_samples(), ts.width());
  Eigen::Index r = 0;
  for (const auto& d : ts.trajs) {
    X.middleRows(r, d.samples.rows()) = d.samples;
    r += d.samples.rows();
  }
  return X;
}

// Duplicates every pose row with its direction block negated. Pairs stay
// adjacent: rows 2i and 2i+1 hold q and -q of input row i.
inline Mat antipodal_double(const Mat& X, int dir_dim) {
  if (dir_dim < 1 || dir_dim > X.cols())
    throw std::invalid_argument("antipodal_double: bad direction width");
  Mat Y(2 * X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Y.row(2 * i) = X.row(i);
    Y.row(2 * i + 1) = X.row(i);
    Y.row(2 * i + 1).tail(dir_dim) = -X.row(i).tail(dir_dim);
  }
  return Y;
}

namespace detail {

inline double clamp01(double t) { return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t); }

// Phase jitter warps the time parameter inside the trajectory while
// pinning both endpoints, so template endpoints survive the jitter.
inline double warp_phase(double t, double phase) {
  return clamp01(t + phase * std::sin(M_PI * t));
}

// Unit-preserving direction jitter: Gaussian step in the tangent plane at
// u, then renormalized. sigma = 0 returns u renormalized.
inline Vec jitter_direction(const Vec& u, double sigma, Rng& rng) {
  Vec w = sigma * rng.normal_vec(u.size());
  w -= w.dot(u) * u;
  Vec v = u + w;
  const double n = v.norm();
  if (!(n > 0.0)) throw std::runtime_error("jitter_direction: degenerate direction");
  return v / n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// J-curve positions in R^2 with C-arc directions on S^2.
//
// The position template draws a J: a vertical stroke from (0.15, 0.85) down
// to (0.15, 0.25), then a half-circle hook of radius 0.15 about (0, 0.25)
// ending at (-0.15, 0.25). Directions sweep a 120 degree great-circle arc.
// Per-trajectory phase jitter and all sample jitter scale with noise, so
// noise = 0 reproduces the template exactly on every trajectory.
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Vector2d j_curve_point(double s) {
  const double stroke_len = 0.6;
  const double hook_r = 0.15;
  const double hook_len = M_PI * hook_r;
  const double split = stroke_len / (stroke_len + hook_len);
  if (s <= split) {
    const double a = s / split;
    return {0.15, 0.85 - stroke_len * a};
  }
  const double phi = -M_PI * (s - split) / (1.0 - split);
  return Eigen::Vector2d(hook_r * std::cos(phi), 0.25 + hook_r * std::sin(phi));
}

inline Vec c_arc_direction(double s) {
  // Great circle spanned by e_x and the unit diagonal of the y-z plane.
  const double alpha = -M_PI / 3.0 + (2.0 * M_PI / 3.0) * s;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Vec u(3);
  u << std::cos(alpha), std::sin(alpha) * inv_sqrt2, std::sin(alpha) * inv_sqrt2;
  return u / u.norm();
}

}  // namespace detail

inline TrajectorySet gen_jc(int n_traj, double noise, Rng& rng, int samples = 200) {
  if (n_traj < 1) throw std::invalid_argument("gen_jc: need at least one trajectory");
  if (samples < 2) throw std::invalid_argument("gen_jc: need at least two samples");
  if (noise < 0.0) throw std::invalid_argument("gen_jc: noise must be >= 0");

  TrajectorySet ts;
  ts.task_kind = true;
  ts.pos_dim = 2;
  ts.dir_dim = 3;
  ts.trajs.resize(std::size_t(n_traj));
  for (int k = 0; k < n_traj; ++k) {
    const double phase = 4.0 * noise * rng.uniform(-1.0, 1.0);
    Demonstration& d = ts.trajs[std::size_t(k)];
    d.traj_id = k;
    d.group = 0;
    d.samples.resize(samples, 5);
    for (int i = 0; i < samples; ++i) {
      const double s = detail::warp_phase(double(i) / (samples - 1), phase);
      Eigen::Vector2d p = detail::j_curve_point(s);
      p.x() += noise * rng.normal();
      p.y() += noise * rng.normal();
      const Vec u = detail::jitter_direction(detail::c_arc_direction(s), noise, rng);
      d.samples(i, 0) = p.x();
      d.samples(i, 1) = p.y();
      d.samples.row(i).tail(3) = u;
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Grasp approach in R^3 x S^3: a straight descent followed by a quarter-arc
// blend into the target, with the orientation rotating 90 degrees about the
// y axis along that final segment. n_targets > 1 replicates the approach
// toward targets fanned over a 120 degree arc about the vertical axis,
// n_traj trajectories per target.
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Vector3d grasp_point(double s) {
  if (s <= 0.5) {
    const double a = s / 0.5;
    return {0.30, 0.0, 0.60 - 0.30 * a};
  }
  const double phi = M_PI + (s - 0.5) / 0.5 * (M_PI / 2.0);
  return Eigen::Vector3d(0.45 + 0.15 * std::cos(phi), 0.0, 0.30 + 0.15 * std::sin(phi));
}

// Identity until the approach segment, then a constant-axis turn reaching a
// 90 degree rotation about y at s = 1.
inline Eigen::Quaterniond grasp_quat(double s) {
  const double angle = s <= 0.5 ? 0.0 : (s - 0.5) / 0.5 * (M_PI / 2.0);
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()));
}

}  // namespace detail

inline TrajectorySet gen_grasp(int n_traj, double noise, Rng& rng, int samples = 200,
                               int n_targets = 1) {
  if (n_traj < 1) throw std::invalid_argument("gen_grasp: need at least one trajectory");
  if (samples < 2) throw std::invalid_argument("gen_grasp: need at least two samples");
  if (noise < 0.0) throw std::invalid_argument("gen_grasp: noise must be >= 0");
  if (n_targets < 1) throw std::invalid_argument("gen_grasp: need at least one target");

  TrajectorySet ts;
  ts.task_kind = true;
  ts.pos_dim = 3;
  ts.dir_dim = 4;
  ts.trajs.resize(std::size_t(n_targets) * std::size_t(n_traj));
  int id = 0;
  for (int tgt = 0; tgt < n_targets; ++tgt) {
    const double psi =
        n_targets == 1 ? 0.0 : -M_PI / 3.0 + (2.0 * M_PI / 3.0) * tgt / (n_targets - 1);
    const Eigen::Quaterniond qz(Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()));
    const Eigen::Matrix3d Rz = qz.toRotationMatrix();
    for (int k = 0; k < n_traj; ++k, ++id) {
      const double phase = 4.0 * noise * rng.uniform(-1.0, 1.0);
      Demonstration& d = ts.trajs[std::size_t(id)];
      d.traj_id = id;
      d.group = tgt;
      d.samples.resize(samples, 7);
      for (int i = 0; i < samples; ++i) {
        const double s = detail::warp_phase(double(i) / (samples - 1), phase);
        Eigen::Vector3d p = Rz * detail::grasp_point(s);
        p += noise * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Quaterniond q = qz * detail::grasp_quat(s);
        Vec qv(4);
        qv << q.w(), q.x(), q.y(), q.z();
        d.samples.row(i).head(3) = p;
        d.samples.row(i).tail(4) = detail::jitter_direction(qv, noise, rng);
      }
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Two-link joint-space demonstrations tracing a task-space template with
// both closed-form IK branches. Branch 0 bends the elbow one way, branch 1
// mirrors the elbow angle; trajectory k of each branch shares the same
// jittered waypoints, so the two task-space images coincide exactly while
// the joint trajectories differ. IK lives only here; the learning and
// planning pipeline never inverts kinematics.
// ---------------------------------------------------------------------------

namespace detail {

inline Vec ik_2link(const kin::PlanarChain& chain, const Eigen::Vector2d& target,
                    int branch, const char* who) {
  const double l1 = chain.link_lengths[0];
  const double l2 = chain.link_lengths[1];
  const Eigen::Vector2d p = target - chain.base;
  const double r2 = p.squaredNorm();
  double D = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (std::abs(D) > 1.0 + 1e-9)
    throw std::invalid_argument(std::string(who) + ": waypoint outside reach annulus");
  D = D > 1.0 ? 1.0 : (D < -1.0 ? -1.0 : D);
  const double t2 = (branch == 0 ? 1.0 : -1.0) * std::acos(D);
  double t1 = std::atan2(p.y(), p.x()) -
              std::atan2(l2 * std::sin(t2), l1 + l2 * std::cos(t2));
  if (t1 > M_PI) t1 -= 2.0 * M_PI;
  if (t1 < -M_PI) t1 += 2.0 * M_PI;
  Vec theta(2);
  theta << t1, t2;
  kin::detail::check_theta(chain, theta);
  return theta;
}

template <class PointFn>
TrajectorySet gen_two_branch(int n_traj_per_branch, const kin::PlanarChain& chain,
                             Rng& rng, int samples, PointFn&& point_at,
                             double jitter_scale, const char* who) {
  if (n_traj_per_branch < 1)
    throw std::invalid_argument(std::string(who) + ": need at least one trajectory per branch");
  if (samples < 2) throw std::invalid_argument(std::string(who) + ": need at least two samples");
  if (chain.dof() != 2)
    throw std::invalid_argument(std::string(who) + ": closed-form IK needs a 2-link chain");

  TrajectorySet ts;
  ts.task_kind = false;
  ts.dof = 2;
  ts.trajs.resize(2 * std::size_t(n_traj_per_branch));
  for (int k = 0; k < n_traj_per_branch; ++k) {
    const Eigen::Vector2d offset(jitter_scale * rng.uniform(-1.0, 1.0),
                                 jitter_scale * rng.uniform(-1.0, 1.0));
    const double phase = 0.02 * rng.uniform(-1.0, 1.0);
    Mat theta0(samples, 2), theta1(samples, 2);
    for (int i = 0; i < samples; ++i) {
      const double s = warp_phase(double(i) / (samples - 1), phase);
      const Eigen::Vector2d w = point_at(s) + offset;
      theta0.row(i) = ik_2link(chain, w, 0, who);
      theta1.row(i) = ik_2link(chain, w, 1, who);
    }
    ts.trajs[std::size_t(k)] = {k, 0, std::move(theta0)};
    ts.trajs[std::size_t(n_traj_per_branch + k)] = {n_traj_per_branch + k, 1,
                                                    std::move(theta1)};
  }
  return ts;
}

}  // namespace detail

// End-effector traces an S built from two stacked half-circles in front of
// the base, scaled to 16% of full reach.
inline TrajectorySet gen_s2dof(int n_traj_per_branch, const kin::PlanarChain& chain,
                               Rng& rng, int samples = 200) {
  if (chain.dof() != 2)
    throw std::invalid_argument("gen_s2dof: closed-form IK needs a 2-link chain");
  const double reach = chain.link_lengths[0] + chain.link_lengths[1];
  const double cx = 0.55 * reach;
  const double r = 0.16 * reach;
  auto s_point = [&](double s) -> Eigen::Vector2d {
    if (s <= 0.5) {
      const double phi = M_PI / 2.0 - 2.0 * M_PI * s;  // pi/2 -> -pi/2
      return Eigen::Vector2d(cx + r * std::cos(phi), r + r * std::sin(phi)) +
             chain.base;
    }
    const double phi = M_PI / 2.0 + 2.0 * M_PI * (s - 0.5);  // pi/2 -> 3pi/2
    return Eigen::Vector2d(cx + r * std::cos(phi), -r + r * std::sin(phi)) +
           chain.base;
  };
  return detail::gen_two_branch(n_traj_per_branch, chain, rng, samples, s_point,
                                0.008 * reach, "gen_s2dof");
}

// End-effector traces a full circle in front of the base; the two IK
// branches give two closed loops in joint space.
inline TrajectorySet gen_circle(int n_traj_per_branch, const kin::PlanarChain& chain,
                                Rng& rng, int samples = 200) {
  if (chain.dof() != 2)
    throw std::invalid_argument("gen_circle: closed-form IK needs a 2-link chain");
  const double reach = chain.link_lengths[0] + chain.link_lengths[1];
  const double cx = 0.55 * reach;
  const double r = 0.22 * reach;
  auto circle_point = [&](double s) -> Eigen::Vector2d {
    const double phi = 2.0 * M_PI * s;
    return Eigen::Vector2d(cx + r * std::cos(phi), r * std::sin(phi)) + chain.base;
  };
  return detail::gen_two_branch(n_traj_per_branch, chain, rng, samples, circle_point,
                                0.008 * reach, "gen_circle");
}

// ---------------------------------------------------------------------------
// Multiple-solution pose demonstrations in R^2 x S^2: starts fan out on the
// left edge, goals on the right, and every demonstrated trajectory funnels
// through a shared crossing region at the center. Only pairs with even
// i + j are demonstrated, a strict subset of the n_starts x n_goals grid
// that still uses every start and every goal. Directions carry the planar
// heading on the S^2 equator.
// ---------------------------------------------------------------------------

inline TrajectorySet gen_multisolution(int n_starts, int n_goals, Rng& rng,
                                       int samples = 200) {
  if (n_starts < 2 || n_goals < 2)
    throw std::invalid_argument("gen_multisolution: need at least two starts and two goals");
  if (samples < 2) throw std::invalid_argument("gen_multisolution: need at least two samples");

  const Eigen::Vector2d crossing(0.5, 0.5);
  TrajectorySet ts;
  ts.task_kind = true;
  ts.pos_dim = 2;
  ts.dir_dim = 3;
  int id = 0;
  for (int i = 0; i < n_starts; ++i) {
    for (int j = 0; j < n_goals; ++j) {
      if ((i + j) % 2 != 0) continue;
      const Eigen::Vector2d s(0.1, 0.2 + 0.6 * i / (n_starts - 1));
      const Eigen::Vector2d g(0.9, 0.2 + 0.6 * j / (n_goals - 1));
      const Eigen::Vector2d c =
          crossing + 0.02 * Eigen::Vector2d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      // Two quadratic Bezier halves joined at c with matched tangents.
      const Eigen::Vector2d m1 = 0.5 * (s + c);
      const Eigen::Vector2d m2 = 2.0 * c - m1;
      Demonstration d;
      d.traj_id = id;
      d.group = i * n_goals + j;
      d.samples.resize(samples, 5);
      for (int n = 0; n < samples; ++n) {
        const double t = double(n) / (samples - 1);
        Eigen::Vector2d p, v;
        if (t <= 0.5) {
          const double u = 2.0 * t;
          p = (1 - u) * (1 - u) * s + 2 * u * (1 - u) * m1 + u * u * c;
          v = 2 * (1 - u) * (m1 - s) + 2 * u * (c - m1);
        } else {
          const double u = 2.0 * t - 1.0;
          p = (1 - u) * (1 - u) * c + 2 * u * (1 - u) * m2 + u * u * g;
          v = 2 * (1 - u) * (m2 - c) + 2 * u * (g - m2);
        }
        const double psi = std::atan2(v.y(), v.x());
        d.samples(n, 0) = p.x();
        d.samples(n, 1) = p.y();
        d.samples(n, 2) = std::cos(psi);
        d.samples(n, 3) = std::sin(psi);
        d.samples(n, 4) = 0.0;
      }
      ts.trajs.push_back(std::move(d));
      ++id;
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Trajectory CSV. One header line, then one row per sample:
//   pose sets:  traj_id,t,x,y[,z],[qw,]qx,qy,qz
//   joint sets: traj_id,t,theta_1,...,theta_eta
// Positions are 2- or 3-dimensional; the direction block is qx,qy,qz for
// S^2 data and qw,qx,qy,qz for quaternions. Values are written as the
// shortest decimal that parses back to the same double, so write-read is
// exact and rewriting a parsed file reproduces it byte for byte.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_csv(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc())
    throw std::runtime_error("fmt_csv: formatting failed");
  return std::string(buf, res.ptr);
}

inline std::string csv_header(const TrajectorySet& ts) {
  std::string h = "traj_id,t";
  if (ts.task_kind) {
    if (ts.pos_dim == 2)
      h += ",x,y";
    else if (ts.pos_dim == 3)
      h += ",x,y,z";
    else
      throw std::invalid_argument("write_csv: position dimension must be 2 or 3");
    if (ts.dir_dim == 3)
      h += ",qx,qy,qz";
    else if (ts.dir_dim == 4)
      h += ",qw,qx,qy,qz";
    else
      throw std::invalid_argument("write_csv: direction dimension must be 3 or 4");
  } else {
    if (ts.dof < 1) throw std::invalid_argument("write_csv: joint set needs dof >= 1");
    for (int j = 1; j <= ts.dof; ++j) h += ",theta_" + std::to_string(j);
  }
  return h;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_field(const std::string& field, std::size_t line_no,
                          const std::string& path) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v))
    throw IoError("trajectory csv: line " + std::to_string(line_no) +
                  ": bad number '" + field + "': " + path);
  return v;
}

}  // namespace detail

inline void write_csv(const std::string& path, const TrajectorySet& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_csv: cannot open " + path);
  os << detail::csv_header(ts) << "\n";
  for (const auto& d : ts.trajs) {
    if (d.samples.cols() != ts.width())
      throw std::invalid_argument("write_csv: sample width does not match set layout");
    const Eigen::Index T = d.samples.rows();
    for (Eigen::Index i = 0; i < T; ++i) {
      const double t = T > 1 ? double(i) / double(T - 1) : 0.0;
      os << d.traj_id << ',' << detail::fmt_csv(t);
      for (Eigen::Index j = 0; j < d.samples.cols(); ++j)
        os << ',' << detail::fmt_csv(d.samples(i, j));
      os << '\n';
    }
  }
  if (!os) throw IoError("write_csv: write failed: " + path);
}

inline TrajectorySet read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_csv: cannot open " + path);

  // Lines starting with '#' are comments (provenance headers); line numbers
  // in errors stay physical.
  std::string line;
  std::size_t line_no = 0;
  while (true) {
    if (!std::getline(is, line)) throw IoError("read_csv: empty file: " + path);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    break;
  }

  TrajectorySet ts;
  if (line == "traj_id,t,x,y,qx,qy,qz") {
    ts.task_kind = true;
    ts.pos_dim = 2;
    ts.dir_dim = 3;
  } else if (line == "traj_id,t,x,y,qw,qx,qy,qz") {
    ts.task_kind = true;
    ts.pos_dim = 2;
    ts.dir_dim = 4;
  } else if (line == "traj_id,t,x,y,z,qx,qy,qz") {
    ts.task_kind = true;
    ts.pos_dim = 3;
    ts.dir_dim = 3;
  } else if (line == "traj_id,t,x,y,z,qw,qx,qy,qz") {
    ts.task_kind = true;
    ts.pos_dim = 3;
    ts.dir_dim = 4;
  } else if (line.rfind("traj_id,t,theta_1", 0) == 0) {
    ts.task_kind = false;
    const auto fields = detail::split_csv_line(line);
    ts.dof = int(fields.size()) - 2;
    for (int j = 0; j < ts.dof; ++j)
      if (fields[std::size_t(2 + j)] != "theta_" + std::to_string(j + 1))
        throw IoError("read_csv: bad joint header: " + path);
  } else {
    throw IoError("read_csv: unrecognized header '" + line + "': " + path);
  }

  const int width = ts.width();
  std::vector<Vec> rows;
  std::vector<int> row_traj;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split_csv_line(line);
    if (int(fields.size()) != width + 2)
      throw IoError("trajectory csv: line " + std::to_string(line_no) + ": expected " +
                    std::to_string(width + 2) + " fields, got " +
                    std::to_string(fields.size()) + ": " + path);
    const double id_val = detail::parse_field(fields[0], line_no, path);
    const int id = int(id_val);
    if (double(id) != id_val)
      throw IoError("trajectory csv: line " + std::to_string(line_no) +
                    ": traj_id must be an integer: " + path);
    detail::parse_field(fields[1], line_no, path);  // t column, validated only
    Vec row(width);
    for (int j = 0; j < width; ++j)
      row[j] = detail::parse_field(fields[std::size_t(2 + j)], line_no, path);
    if (ts.task_kind) {
      const double norm = row.tail(ts.dir_dim).norm();
      if (std::abs(norm - 1.0) > 1e-6)
        throw IoError("trajectory csv: line " + std::to_string(line_no) +
                      ": direction norm " + detail::fmt_csv(norm) +
                      " is not unit: " + path);
    }
    rows.push_back(std::move(row));
    row_traj.push_back(id);
  }
  if (rows.empty()) throw IoError("read_csv: no data rows: " + path);

  // Consecutive equal traj_id rows form one trajectory; an id may not
  // reappear after a different one intervenes.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // start, count
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (blocks.empty() || row_traj[blocks.back().first] != row_traj[i]) {
      for (const auto& b : blocks)
        if (row_traj[b.first] == row_traj[i])
          throw IoError("read_csv: traj_id " + std::to_string(row_traj[i]) +
                        " reappears non-contiguously: " + path);
      blocks.emplace_back(i, 0);
    }
    ++blocks.back().second;
  }
  ts.trajs.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Demonstration& d = ts.trajs[b];
    d.traj_id = row_traj[blocks[b].first];
    d.group = int(b);
    d.samples.resize(Eigen::Index(blocks[b].second), width);
    for (std::size_t i = 0; i < blocks[b].second; ++i)
      d.samples.row(Eigen::Index(i)) = rows[blocks[b].first + i];
  }
  return ts;
}

}  // namespace geomot::data
