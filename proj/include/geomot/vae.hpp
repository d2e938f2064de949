#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geomot/core.hpp"
#include "geomot/distributions.hpp"
#include "geomot/kinematics.hpp"
#include "geomot/nets.hpp"
#include "geomot/numerics.hpp"

namespace geomot::vae {

// Global tally of decoder-side network queries (decode_* and metric
// evaluations). Replanning against a cached graph must leave it untouched;
// tests assert exactly that.
inline std::atomic<std::uint64_t>& decoder_query_counter() {
  static std::atomic<std::uint64_t> c{0};
  return c;
}
inline std::uint64_t decoder_queries() { return decoder_query_counter().load(); }
inline void reset_decoder_queries() { decoder_query_counter().store(0); }

inline constexpr double kSigmaZMin = 1e-4;
inline constexpr double kSigmaZMax = 10.0;

// Pose-space model: positions in R^Dp, directions on S^{D-1}. One decoder
// mean serves both heads; its last D components are normalized on decode.
// The RBF heads model precision (1/sigma^2 would be conventional, here
// 1/sigma directly) and vMF concentration, both of which decay to their
// floors away from the training codes.
struct TaskVae {
  int pos_dim = 0;
  int dir_dim = 0;
  int latent_dim = 0;
  nets::Mlp encoder;                 // (Dp+D) -> 2d, mean and log-sigma heads
  nets::Mlp decoder_mean;            // d -> Dp+D
  nets::RbfNet position_precision;   // d -> Dp, sigma_x = 1/precision
  nets::RbfNet concentration;        // d -> 1, kappa
  Mat latent_box;                    // 2 x d, row 0 = min, row 1 = max of training codes
  nets::TrainConfig train_cfg;       // effective training configuration
  double final_loss = 0.0;
};

// Configuration-space model for a planar chain. The decoder mean emits
// joint angles; uncertainty is an RBF precision per joint.
struct JointVae {
  int latent_dim = 0;
  kin::PlanarChain chain{{1.0}};
  nets::Mlp encoder;               // eta -> 2d
  nets::Mlp decoder_mean;          // d -> eta
  nets::RbfNet joint_precision;    // d -> eta, sigma_theta = 1/precision
  double eps_reg = 1e-6;
  Mat latent_box;
  nets::TrainConfig train_cfg;
  double final_loss = 0.0;
};

struct Encoded {
  Vec mu, sigma;
};

namespace detail {
inline Encoded encode_with(const nets::Mlp& enc, int d, const Vec& x) {
  const Vec out = enc.forward(x);
  Encoded e;
  e.mu = out.head(d);
  e.sigma = Vec(d);
  for (int i = 0; i < d; ++i)
    e.sigma[i] = std::clamp(std::exp(out[d + i]), kSigmaZMin, kSigmaZMax);
  return e;
}
}  // namespace detail

inline Encoded encode(const TaskVae& m, const Vec& x) {
  return detail::encode_with(m.encoder, m.latent_dim, x);
}
inline Encoded encode(const JointVae& m, const Vec& theta) {
  return detail::encode_with(m.encoder, m.latent_dim, theta);
}

inline Vec reparameterize(const Encoded& e, Rng& rng) {
  Vec z(e.mu.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z[i] = e.mu[i] + e.sigma[i] * rng.normal();
  return z;
}

template <typename Model>
Mat encode_means(const Model& m, const Mat& X) {
  Mat codes(X.rows(), m.latent_dim);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    codes.row(i) = encode(m, X.row(i).transpose()).mu;
  return codes;
}

struct TaskDecode {
  Vec pos_mean;   // Dp
  Vec dir_mean;   // D, unit norm
  Vec pos_sigma;  // Dp
  double kappa = 0.0;
};

inline TaskDecode decode_task(const TaskVae& m, const Vec& z) {
  if (z.size() != m.latent_dim)
    throw std::invalid_argument("decode_task: latent size mismatch");
  ++decoder_query_counter();
  const Vec out = m.decoder_mean.forward(z);
  TaskDecode d;
  d.pos_mean = out.head(m.pos_dim);
  Vec raw = out.tail(m.dir_dim);
  const double nr = raw.norm();
  if (nr < 1e-12)
    throw std::runtime_error("decode_task: decoder direction output has vanishing norm");
  d.dir_mean = raw / nr;
  const Vec prec = m.position_precision.forward(z);
  d.pos_sigma = prec.cwiseInverse();
  d.kappa = m.concentration.forward(z)[0];
  return d;
}

struct JointDecode {
  Vec theta_mean;   // eta
  Vec theta_sigma;  // eta
  kin::BodyState body;
};

inline JointDecode decode_joint(const JointVae& m, const Vec& z) {
  if (z.size() != m.latent_dim)
    throw std::invalid_argument("decode_joint: latent size mismatch");
  ++decoder_query_counter();
  JointDecode d;
  d.theta_mean = m.decoder_mean.forward(z);
  d.theta_sigma = m.joint_precision.forward(z).cwiseInverse();
  d.body = kin::fk_points(m.chain, d.theta_mean);
  return d;
}

// loss is the minimized quantity (negative weighted ELBO, batch mean).
// recon_* and kl are batch means of the raw terms; for the joint model
// recon_dir carries -mean(log V).
struct ElboTerms {
  double loss = 0.0;
  double recon_pos = 0.0;
  double recon_dir = 0.0;
  double kl = 0.0;
};

struct TaskGrads {
  nets::Mlp encoder, decoder_mean;
  nets::RbfNet position_precision, concentration;
  static TaskGrads zero_like(const TaskVae& m) {
    return {m.encoder.zero_like(), m.decoder_mean.zero_like(),
            m.position_precision.zero_like(), m.concentration.zero_like()};
  }
};

struct JointGrads {
  nets::Mlp encoder, decoder_mean;
  nets::RbfNet joint_precision;
  static JointGrads zero_like(const JointVae& m) {
    return {m.encoder.zero_like(), m.decoder_mean.zero_like(),
            m.joint_precision.zero_like()};
  }
};

namespace detail {

struct EncBack {
  nets::Mlp::Cache cache;
  Vec mu, sigma, eps, z;
  std::vector<bool> clamped;
};

inline EncBack encode_sample(const nets::Mlp& enc, int d, const Vec& x, Rng& rng) {
  EncBack eb;
  const Vec out = enc.forward(x, &eb.cache);
  eb.mu = out.head(d);
  eb.sigma = Vec(d);
  eb.clamped.assign(d, false);
  for (int i = 0; i < d; ++i) {
    const double s = std::exp(out[d + i]);
    eb.sigma[i] = std::clamp(s, kSigmaZMin, kSigmaZMax);
    eb.clamped[i] = (s <= kSigmaZMin || s >= kSigmaZMax);
  }
  eb.eps = rng.normal_vec(d);
  eb.z = eb.mu + eb.sigma.cwiseProduct(eb.eps);
  return eb;
}

// Shared tail of both ELBO backward passes: KL head plus the
// reparameterization split of the latent gradient, then the encoder.
inline void backprop_encoder(const nets::Mlp& enc, const EncBack& eb,
                             const Vec& g_z, double g_kl, nets::Mlp& grad) {
  const int d = int(eb.mu.size());
  Vec g_mu = g_z + g_kl * eb.mu;
  Vec g_sigma = g_z.cwiseProduct(eb.eps);
  for (int i = 0; i < d; ++i)
    g_sigma[i] += g_kl * (eb.sigma[i] - 1.0 / eb.sigma[i]);
  Vec gout(2 * d);
  gout.head(d) = g_mu;
  for (int i = 0; i < d; ++i)
    gout[d + i] = eb.clamped[i] ? 0.0 : g_sigma[i] * eb.sigma[i];
  enc.backward(eb.cache, gout, grad);
}

}  // namespace detail

// Negative weighted ELBO for a batch of poses (rows of X are [pos, dir]).
// One reparameterized sample per datum. kl_weight scales the KL term
// (warm-up); grads, when given, receives batch-mean parameter gradients.
inline ElboTerms elbo_task(const TaskVae& m, const Mat& X,
                           const nets::TrainConfig& cfg, double kl_weight,
                           Rng& rng, TaskGrads* grads = nullptr) {
  if (X.cols() != m.pos_dim + m.dir_dim)
    throw std::invalid_argument("elbo_task: batch column count mismatch");
  if (X.rows() == 0) throw std::invalid_argument("elbo_task: empty batch");
  const int d = m.latent_dim, Dp = m.pos_dim, D = m.dir_dim;
  const double wB = 1.0 / double(X.rows());
  ElboTerms terms;

  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    const Vec x_pos = X.row(n).head(Dp).transpose();
    Vec x_dir = X.row(n).tail(D).transpose();
    const double qn = x_dir.norm();
    if (std::abs(qn - 1.0) > 1e-6)
      throw std::invalid_argument("elbo_task: direction row is not unit length");
    x_dir /= qn;

    auto eb = detail::encode_sample(m.encoder, d, X.row(n).transpose(), rng);

    nets::Mlp::Cache dec_cache;
    const Vec dec_out = m.decoder_mean.forward(eb.z, &dec_cache);
    const Vec pos_mean = dec_out.head(Dp);
    const Vec raw = dec_out.tail(D);
    const double nr = raw.norm();
    if (nr < 1e-12)
      throw TrainingError("elbo_task: decoder direction output has vanishing norm");
    const Vec mu_q = raw / nr;

    const Vec phi_p = m.position_precision.phi(eb.z);
    const Vec prec = m.position_precision.weights() * phi_p +
                     m.position_precision.floor();
    const Vec sigma_x = prec.cwiseInverse();
    const Vec phi_c = m.concentration.phi(eb.z);
    const double kappa = (m.concentration.weights() * phi_c +
                          m.concentration.floor())[0];

    const double lpos = dist::gaussian_logpdf(x_pos, pos_mean, sigma_x);
    const double u = mu_q.dot(x_dir);
    const double t = kappa * u;
    const double logc = dist::log_vmf_normalizer(D, kappa);
    const double at = std::abs(t);
    const double ldir = logc - std::log(2.0) + at + std::log1p(std::exp(-2.0 * at));
    const double kl = dist::kl_diag_gaussian_std_normal(eb.mu, eb.sigma);

    terms.recon_pos += wB * lpos;
    terms.recon_dir += wB * ldir;
    terms.kl += wB * kl;
    terms.loss += wB * (-(cfg.beta1 * lpos + cfg.beta2 * ldir) + kl_weight * kl);

    if (!grads) continue;

    const double g_lpos = -cfg.beta1 * wB;
    const double g_ldir = -cfg.beta2 * wB;
    const double g_kl = kl_weight * wB;

    // Gaussian head.
    Vec g_pos_mean(Dp), g_sigma_x(Dp);
    for (int i = 0; i < Dp; ++i) {
      const double diff = x_pos[i] - pos_mean[i];
      const double s = sigma_x[i];
      g_pos_mean[i] = g_lpos * diff / (s * s);
      g_sigma_x[i] = g_lpos * (-1.0 / s + diff * diff / (s * s * s));
    }
    // sigma = 1/precision.
    const Vec g_prec = -g_sigma_x.cwiseProduct(sigma_x.cwiseProduct(sigma_x));

    // Antipodal vMF head: d/dt log mixture = tanh(t).
    const double tht = std::tanh(t);
    const double g_kappa =
        g_ldir * (-dist::vmf_mean_resultant(D, kappa) + tht * u);
    const Vec g_mu_q = (g_ldir * kappa * tht) * x_dir;
    // Through the normalization: (I - mu mu^T) / |raw|.
    const Vec g_raw = (g_mu_q - mu_q * mu_q.dot(g_mu_q)) / nr;

    Vec g_dec_out(Dp + D);
    g_dec_out.head(Dp) = g_pos_mean;
    g_dec_out.tail(D) = g_raw;
    Vec g_z = m.decoder_mean.backward(dec_cache, g_dec_out, grads->decoder_mean);
    g_z += m.position_precision.backward(eb.z, phi_p, g_prec,
                                         grads->position_precision);
    g_z += m.concentration.backward(eb.z, phi_c, Vec::Constant(1, g_kappa),
                                    grads->concentration);
    detail::backprop_encoder(m.encoder, eb, g_z, g_kl, grads->encoder);
  }
  return terms;
}

// Negative ELBO for a batch of joint configurations (rows of Theta). The
// reconstruction is corrected by the forward-kinematics volume measure so
// the model optimizes a task-space density; its gradient with respect to
// the decoded mean is analytic (log_volume_grad).
inline ElboTerms elbo_joint(const JointVae& m, const Mat& Theta,
                            const nets::TrainConfig& cfg, double kl_weight,
                            Rng& rng, JointGrads* grads = nullptr) {
  const int eta = m.chain.dof();
  if (Theta.cols() != eta)
    throw std::invalid_argument("elbo_joint: batch column count mismatch");
  if (Theta.rows() == 0) throw std::invalid_argument("elbo_joint: empty batch");
  const int d = m.latent_dim;
  const double wB = 1.0 / double(Theta.rows());
  ElboTerms terms;

  for (Eigen::Index n = 0; n < Theta.rows(); ++n) {
    const Vec theta = Theta.row(n).transpose();
    auto eb = detail::encode_sample(m.encoder, d, theta, rng);

    nets::Mlp::Cache dec_cache;
    const Vec mu_theta = m.decoder_mean.forward(eb.z, &dec_cache);
    const Vec phi_p = m.joint_precision.phi(eb.z);
    const Vec prec = m.joint_precision.weights() * phi_p + m.joint_precision.floor();
    const Vec sigma_t = prec.cwiseInverse();

    const double lrec = dist::gaussian_logpdf(theta, mu_theta, sigma_t);
    const double logv = std::log(kin::volume_measure(m.chain, mu_theta, m.eps_reg));
    const double kl = dist::kl_diag_gaussian_std_normal(eb.mu, eb.sigma);

    terms.recon_pos += wB * lrec;
    terms.recon_dir += wB * (-logv);
    terms.kl += wB * kl;
    terms.loss += wB * (-(lrec - logv) + kl_weight * kl);

    if (!grads) continue;

    const double g_lrec = -wB;
    const double g_logv = wB;
    const double g_kl = kl_weight * wB;

    Vec g_mu_theta(eta), g_sigma_t(eta);
    for (int i = 0; i < eta; ++i) {
      const double diff = theta[i] - mu_theta[i];
      const double s = sigma_t[i];
      g_mu_theta[i] = g_lrec * diff / (s * s);
      g_sigma_t[i] = g_lrec * (-1.0 / s + diff * diff / (s * s * s));
    }
    const Vec g_prec = -g_sigma_t.cwiseProduct(sigma_t.cwiseProduct(sigma_t));
    g_mu_theta += g_logv * kin::log_volume_grad(m.chain, mu_theta, m.eps_reg);

    Vec g_z = m.decoder_mean.backward(dec_cache, g_mu_theta, grads->decoder_mean);
    g_z += m.joint_precision.backward(eb.z, phi_p, g_prec, grads->joint_precision);
    detail::backprop_encoder(m.encoder, eb, g_z, g_kl, grads->encoder);
  }
  return terms;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct ParamRef {
  std::string name;
  double* p;
  Eigen::Index n;
};

inline void collect(nets::Mlp& m, const std::string& prefix,
                    std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    out.push_back({base + ".W", m.layers[l].W.data(), m.layers[l].W.size()});
    out.push_back({base + ".b", m.layers[l].b.data(), m.layers[l].b.size()});
  }
}

inline void collect(nets::RbfNet& m, const std::string& prefix,
                    std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight_free", m.weight_free.data(), m.weight_free.size()});
  out.push_back({prefix + ".floor_free", m.floor_free.data(), m.floor_free.size()});
}

struct FlatParams {
  std::vector<ParamRef> refs;
  Eigen::Index total = 0;

  void finalize() {
    total = 0;
    for (const auto& r : refs) total += r.n;
  }
  Vec gather() const {
    Vec flat(total);
    Eigen::Index at = 0;
    for (const auto& r : refs) {
      std::copy(r.p, r.p + r.n, flat.data() + at);
      at += r.n;
    }
    return flat;
  }
  void scatter(const Vec& flat) const {
    Eigen::Index at = 0;
    for (const auto& r : refs) {
      std::copy(flat.data() + at, flat.data() + at + r.n, r.p);
      at += r.n;
    }
  }
  std::string name_of(Eigen::Index flat_index) const {
    Eigen::Index at = 0;
    for (const auto& r : refs) {
      if (flat_index < at + r.n)
        return r.name + "[" + std::to_string(flat_index - at) + "]";
      at += r.n;
    }
    return "param[" + std::to_string(flat_index) + "]";
  }
};

inline double kl_warmup_weight(int epoch, const nets::TrainConfig& cfg) {
  if (cfg.kl_warmup_epochs <= 0) return 1.0;
  return std::min(1.0, double(epoch) / double(cfg.kl_warmup_epochs));
}

// Placeholder RBF used during phase 1: one far-off center with a weight
// driven to ~0 by a large negative free value, so the output is exactly
// the floor. floor = 1 reproduces the fixed unit-variance phase.
inline nets::RbfNet unit_head(int latent_dim, int out_dim) {
  nets::RbfNet net;
  net.centers = Mat::Zero(1, latent_dim);
  net.bandwidth = 1.0;
  net.weight_free = Mat::Constant(out_dim, 1, -60.0);
  const double unit_floor = std::log(std::expm1(1.0));
  net.floor_free = Vec::Constant(out_dim, unit_floor);
  return net;
}

inline Mat latent_box_of(const Mat& codes) {
  Mat box(2, codes.cols());
  box.row(0) = codes.colwise().minCoeff();
  box.row(1) = codes.colwise().maxCoeff();
  return box;
}

template <typename StepFn>
std::vector<double> run_epochs(int n_rows, int epochs, int epoch_offset,
                               const nets::TrainConfig& cfg, Rng& rng,
                               FlatParams& params, const StepFn& batch_loss,
                               int* divergence_streak) {
  std::vector<double> history;
  nets::AdamState adam;
  std::vector<int> order(n_rows);
  for (int i = 0; i < n_rows; ++i) order[i] = i;
  const auto namer = [&params](Eigen::Index i) { return params.name_of(i); };

  for (int e = 0; e < epochs; ++e) {
    const double klw = kl_warmup_weight(epoch_offset + e, cfg);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int at = 0; at < n_rows; at += cfg.batch) {
      const int bs = std::min(cfg.batch, n_rows - at);
      Vec gflat;
      const double loss = batch_loss(order, at, bs, klw, gflat);
      epoch_loss += loss * bs;
      Vec flat = params.gather();
      nets::adam_update(flat, gflat, adam, cfg, namer);
      params.scatter(flat);
    }
    epoch_loss /= n_rows;
    history.push_back(epoch_loss);
    if (epoch_loss > 1e6) {
      if (++*divergence_streak >= 3)
        throw TrainingError("training diverged: final loss " + fmt_double(epoch_loss) +
                            " stayed above 1e6 for 3 epochs");
    } else {
      *divergence_streak = 0;
    }
  }
  return history;
}

}  // namespace detail

struct TaskTrainResult {
  TaskVae model;
  std::vector<double> loss_history;
};

struct JointTrainResult {
  JointVae model;
  std::vector<double> loss_history;
};

// Two-phase schedule shared by both models: phase 1 fits encoder and
// decoder mean under unit output variance; the RBF heads are then built on
// k-means centers of the phase-1 codes and everything trains jointly.
inline int phase1_epochs(int total) { return std::max(1, (2 * total + 4) / 5); }

inline TaskTrainResult train_task(const Mat& X, int pos_dim, int dir_dim,
                                  int latent_dim, const nets::TrainConfig& cfg) {
  if (pos_dim < 1 || dir_dim < 2 || latent_dim < 1)
    throw std::invalid_argument("train_task: bad dimensions");
  if (cfg.epochs < 1 || cfg.batch < 1)
    throw std::invalid_argument("train_task: epochs and batch must be positive");
  if (X.cols() != pos_dim + dir_dim)
    throw std::invalid_argument("train_task: data columns do not match dims");
  if (X.rows() < 2) throw std::invalid_argument("train_task: need data");

  Rng rng(cfg.seed);
  TaskVae m;
  m.pos_dim = pos_dim;
  m.dir_dim = dir_dim;
  m.latent_dim = latent_dim;
  m.encoder = nets::Mlp::make({pos_dim + dir_dim, 200, 100, 2 * latent_dim}, rng);
  m.decoder_mean = nets::Mlp::make({latent_dim, 100, 200, pos_dim + dir_dim}, rng);
  // Seed the decoder output at the data centroid; the direction bias gets a
  // unit vector because antipodal doubling makes the data mean vanish.
  Vec bias = X.colwise().mean().transpose();
  bias.tail(dir_dim).setZero();
  bias[pos_dim] = 1.0;
  m.decoder_mean.layers.back().b = bias;
  m.position_precision = detail::unit_head(latent_dim, pos_dim);
  m.concentration = detail::unit_head(latent_dim, 1);

  const int e1 = phase1_epochs(cfg.epochs);
  const int e2 = cfg.epochs - e1;
  int streak = 0;
  std::vector<double> history;

  {
    detail::FlatParams params;
    detail::collect(m.encoder, "encoder", params.refs);
    detail::collect(m.decoder_mean, "decoder_mean", params.refs);
    params.finalize();
    auto step = [&](const std::vector<int>& order, int at, int bs, double klw,
                    Vec& gflat) {
      Mat batch(bs, X.cols());
      for (int b = 0; b < bs; ++b) batch.row(b) = X.row(order[at + b]);
      auto grads = TaskGrads::zero_like(m);
      const auto terms = elbo_task(m, batch, cfg, klw, rng, &grads);
      detail::FlatParams gp;
      detail::collect(grads.encoder, "encoder", gp.refs);
      detail::collect(grads.decoder_mean, "decoder_mean", gp.refs);
      gp.finalize();
      gflat = gp.gather();
      return terms.loss;
    };
    auto h = detail::run_epochs(int(X.rows()), e1, 0, cfg, rng, params, step, &streak);
    history.insert(history.end(), h.begin(), h.end());
  }

  // Phase boundary: freeze RBF centers on the current latent codes. The
  // floor bounds off-support precision from below, so a small floor makes
  // unvisited latent regions decode with large uncertainty.
  {
    const Mat codes = encode_means(m, X);
    const int k = std::min<int>(cfg.rbf_k, int(codes.rows()));
    const auto km = numerics::kmeans(codes, k, rng);
    const double bw = nets::rbf_bandwidth(km.centers, cfg.rbf_bandwidth_scale);
    m.position_precision =
        nets::RbfNet::make(km.centers, pos_dim, bw, rng, cfg.rbf_floor);
    m.concentration = nets::RbfNet::make(km.centers, 1, bw, rng, cfg.rbf_floor);
  }

  {
    detail::FlatParams params;
    detail::collect(m.encoder, "encoder", params.refs);
    detail::collect(m.decoder_mean, "decoder_mean", params.refs);
    detail::collect(m.position_precision, "position_precision", params.refs);
    detail::collect(m.concentration, "concentration", params.refs);
    params.finalize();
    auto step = [&](const std::vector<int>& order, int at, int bs, double klw,
                    Vec& gflat) {
      Mat batch(bs, X.cols());
      for (int b = 0; b < bs; ++b) batch.row(b) = X.row(order[at + b]);
      auto grads = TaskGrads::zero_like(m);
      const auto terms = elbo_task(m, batch, cfg, klw, rng, &grads);
      detail::FlatParams gp;
      detail::collect(grads.encoder, "encoder", gp.refs);
      detail::collect(grads.decoder_mean, "decoder_mean", gp.refs);
      detail::collect(grads.position_precision, "position_precision", gp.refs);
      detail::collect(grads.concentration, "concentration", gp.refs);
      gp.finalize();
      gflat = gp.gather();
      return terms.loss;
    };
    auto h = detail::run_epochs(int(X.rows()), e2, e1, cfg, rng, params, step, &streak);
    history.insert(history.end(), h.begin(), h.end());
  }

  m.latent_box = detail::latent_box_of(encode_means(m, X));
  m.train_cfg = cfg;
  m.final_loss = history.back();
  return {std::move(m), std::move(history)};
}

inline JointTrainResult train_joint(const Mat& Theta, const kin::PlanarChain& chain,
                                    int latent_dim, const nets::TrainConfig& cfg) {
  const int eta = chain.dof();
  if (Theta.cols() != eta)
    throw std::invalid_argument("train_joint: data columns do not match chain dof");
  if (Theta.rows() < 2) throw std::invalid_argument("train_joint: need data");
  if (latent_dim < 1) throw std::invalid_argument("train_joint: bad latent dim");
  if (cfg.epochs < 1 || cfg.batch < 1)
    throw std::invalid_argument("train_joint: epochs and batch must be positive");

  Rng rng(cfg.seed);
  JointVae m;
  m.latent_dim = latent_dim;
  m.chain = chain;
  m.eps_reg = cfg.eps_reg;
  m.encoder = nets::Mlp::make({eta, 200, 100, 2 * latent_dim}, rng);
  m.decoder_mean = nets::Mlp::make({latent_dim, 100, 200, eta}, rng);
  m.decoder_mean.layers.back().b = Theta.colwise().mean().transpose();
  m.joint_precision = detail::unit_head(latent_dim, eta);

  const int e1 = phase1_epochs(cfg.epochs);
  const int e2 = cfg.epochs - e1;
  int streak = 0;
  std::vector<double> history;

  {
    detail::FlatParams params;
    detail::collect(m.encoder, "encoder", params.refs);
    detail::collect(m.decoder_mean, "decoder_mean", params.refs);
    params.finalize();
    auto step = [&](const std::vector<int>& order, int at, int bs, double klw,
                    Vec& gflat) {
      Mat batch(bs, eta);
      for (int b = 0; b < bs; ++b) batch.row(b) = Theta.row(order[at + b]);
      auto grads = JointGrads::zero_like(m);
      const auto terms = elbo_joint(m, batch, cfg, klw, rng, &grads);
      detail::FlatParams gp;
      detail::collect(grads.encoder, "encoder", gp.refs);
      detail::collect(grads.decoder_mean, "decoder_mean", gp.refs);
      gp.finalize();
      gflat = gp.gather();
      return terms.loss;
    };
    auto h = detail::run_epochs(int(Theta.rows()), e1, 0, cfg, rng, params, step, &streak);
    history.insert(history.end(), h.begin(), h.end());
  }

  {
    const Mat codes = encode_means(m, Theta);
    const int k = std::min<int>(cfg.rbf_k, int(codes.rows()));
    const auto km = numerics::kmeans(codes, k, rng);
    const double bw = nets::rbf_bandwidth(km.centers, cfg.rbf_bandwidth_scale);
    m.joint_precision = nets::RbfNet::make(km.centers, eta, bw, rng, cfg.rbf_floor);
  }

  {
    detail::FlatParams params;
    detail::collect(m.encoder, "encoder", params.refs);
    detail::collect(m.decoder_mean, "decoder_mean", params.refs);
    detail::collect(m.joint_precision, "joint_precision", params.refs);
    params.finalize();
    auto step = [&](const std::vector<int>& order, int at, int bs, double klw,
                    Vec& gflat) {
      Mat batch(bs, eta);
      for (int b = 0; b < bs; ++b) batch.row(b) = Theta.row(order[at + b]);
      auto grads = JointGrads::zero_like(m);
      const auto terms = elbo_joint(m, batch, cfg, klw, rng, &grads);
      detail::FlatParams gp;
      detail::collect(grads.encoder, "encoder", gp.refs);
      detail::collect(grads.decoder_mean, "decoder_mean", gp.refs);
      detail::collect(grads.joint_precision, "joint_precision", gp.refs);
      gp.finalize();
      gflat = gp.gather();
      return terms.loss;
    };
    auto h = detail::run_epochs(int(Theta.rows()), e2, e1, cfg, rng, params, step, &streak);
    history.insert(history.end(), h.begin(), h.end());
  }

  m.latent_box = detail::latent_box_of(encode_means(m, Theta));
  m.train_cfg = cfg;
  m.final_loss = history.back();
  return {std::move(m), std::move(history)};
}

// ---------------------------------------------------------------------------
// Persistence: line-oriented text, 17 significant digits, fixed field
// order. save(load(f)) reproduces f byte for byte.

namespace detail {

inline constexpr const char* kMagic = "geomot-model";
inline constexpr int kVersion = 1;

inline void write_vec(std::ostream& os, const char* name, const Vec& v) {
  os << name << " " << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << fmt_double(v[i]);
  os << "\n";
}

inline void write_mat(std::ostream& os, const char* name, const Mat& m) {
  os << name << " " << m.rows() << " " << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << " " << fmt_double(m(r, c));
  os << "\n";
}

inline void write_mlp(std::ostream& os, const char* name, const nets::Mlp& m) {
  os << "mlp " << name << " " << m.layers.size() << "\n";
  for (const auto& layer : m.layers) {
    os << "act " << (layer.act == nets::Act::Tanh ? "tanh" : "identity") << "\n";
    write_mat(os, "W", layer.W);
    write_vec(os, "b", layer.b);
  }
}

inline void write_rbf(std::ostream& os, const char* name, const nets::RbfNet& m) {
  os << "rbf " << name << "\n";
  os << "bandwidth " << fmt_double(m.bandwidth) << "\n";
  write_mat(os, "centers", m.centers);
  write_mat(os, "weight_free", m.weight_free);
  write_vec(os, "floor_free", m.floor_free);
}

inline void write_metadata(std::ostream& os, const nets::TrainConfig& cfg,
                           double final_loss) {
  os << "final_loss " << fmt_double(final_loss) << "\n";
  os << "cfg.epochs " << cfg.epochs << "\n";
  os << "cfg.batch " << cfg.batch << "\n";
  os << "cfg.lr " << fmt_double(cfg.lr) << "\n";
  os << "cfg.adam_beta1 " << fmt_double(cfg.adam_beta1) << "\n";
  os << "cfg.adam_beta2 " << fmt_double(cfg.adam_beta2) << "\n";
  os << "cfg.adam_eps " << fmt_double(cfg.adam_eps) << "\n";
  os << "cfg.kl_warmup_epochs " << cfg.kl_warmup_epochs << "\n";
  os << "cfg.beta1 " << fmt_double(cfg.beta1) << "\n";
  os << "cfg.beta2 " << fmt_double(cfg.beta2) << "\n";
  os << "cfg.rbf_k " << cfg.rbf_k << "\n";
  os << "cfg.rbf_bandwidth_scale " << fmt_double(cfg.rbf_bandwidth_scale) << "\n";
  os << "cfg.rbf_floor " << fmt_double(cfg.rbf_floor) << "\n";
  os << "cfg.eps_reg " << fmt_double(cfg.eps_reg) << "\n";
  os << "cfg.seed " << cfg.seed << "\n";
}

struct Reader {
  std::istream& is;
  std::string context;

  [[noreturn]] void fail(const std::string& why) const {
    throw IoError("model file: " + why + (context.empty() ? "" : " at " + context));
  }
  std::string token() {
    std::string t;
    if (!(is >> t)) fail("unexpected end of file");
    return t;
  }
  void expect(const std::string& want) {
    const std::string got = token();
    if (got != want) fail("expected '" + want + "', found '" + got + "'");
  }
  long integer() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail("expected integer, found '" + t + "'");
    }
  }
  double number(const std::string& field) {
    const std::string t = token();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) fail("bad number in " + field);
    if (!std::isfinite(v)) fail("non-finite value in " + field);
    return v;
  }
  Vec read_vec(const std::string& field) {
    expect_field(field);
    const long n = integer();
    if (n < 0) fail("negative size in " + field);
    Vec v(n);
    for (long i = 0; i < n; ++i) v[i] = number(context + "." + field);
    return v;
  }
  Mat read_mat(const std::string& field) {
    expect_field(field);
    const long r = integer(), c = integer();
    if (r < 0 || c < 0) fail("negative shape in " + field);
    Mat m(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = number(context + "." + field);
    return m;
  }
  void expect_field(const std::string& field) {
    const std::string got = token();
    if (got != field) fail("expected field '" + field + "', found '" + got + "'");
  }
  std::uint64_t uinteger(const std::string& field) {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail("expected unsigned integer in " + field + ", found '" + t + "'");
    }
  }
  void read_metadata(nets::TrainConfig& cfg, double& final_loss) {
    context = "metadata";
    expect_field("final_loss");
    final_loss = number("final_loss");
    expect_field("cfg.epochs");
    cfg.epochs = int(integer());
    expect_field("cfg.batch");
    cfg.batch = int(integer());
    expect_field("cfg.lr");
    cfg.lr = number("cfg.lr");
    expect_field("cfg.adam_beta1");
    cfg.adam_beta1 = number("cfg.adam_beta1");
    expect_field("cfg.adam_beta2");
    cfg.adam_beta2 = number("cfg.adam_beta2");
    expect_field("cfg.adam_eps");
    cfg.adam_eps = number("cfg.adam_eps");
    expect_field("cfg.kl_warmup_epochs");
    cfg.kl_warmup_epochs = int(integer());
    expect_field("cfg.beta1");
    cfg.beta1 = number("cfg.beta1");
    expect_field("cfg.beta2");
    cfg.beta2 = number("cfg.beta2");
    expect_field("cfg.rbf_k");
    cfg.rbf_k = int(integer());
    expect_field("cfg.rbf_bandwidth_scale");
    cfg.rbf_bandwidth_scale = number("cfg.rbf_bandwidth_scale");
    expect_field("cfg.rbf_floor");
    cfg.rbf_floor = number("cfg.rbf_floor");
    expect_field("cfg.eps_reg");
    cfg.eps_reg = number("cfg.eps_reg");
    expect_field("cfg.seed");
    cfg.seed = uinteger("cfg.seed");
  }
  nets::Mlp read_mlp(const std::string& name) {
    context = name;
    expect("mlp");
    expect(name);
    const long layers = integer();
    if (layers < 1) fail("mlp needs layers");
    nets::Mlp m;
    for (long l = 0; l < layers; ++l) {
      context = name + ".layer" + std::to_string(l);
      expect("act");
      const std::string act = token();
      nets::Layer layer;
      if (act == "tanh")
        layer.act = nets::Act::Tanh;
      else if (act == "identity")
        layer.act = nets::Act::Identity;
      else
        fail("unknown activation '" + act + "'");
      layer.W = read_mat("W");
      layer.b = read_vec("b");
      if (layer.b.size() != layer.W.rows()) fail("W/b shape mismatch");
      if (l > 0 && layer.W.cols() != m.layers.back().W.rows())
        fail("layer width mismatch");
      m.layers.push_back(std::move(layer));
    }
    return m;
  }
  nets::RbfNet read_rbf(const std::string& name) {
    context = name;
    expect("rbf");
    expect(name);
    expect_field("bandwidth");
    nets::RbfNet m;
    m.bandwidth = number(name + ".bandwidth");
    if (!(m.bandwidth > 0.0)) fail("bandwidth must be positive");
    m.centers = read_mat("centers");
    m.weight_free = read_mat("weight_free");
    m.floor_free = read_vec("floor_free");
    if (m.weight_free.cols() != m.centers.rows()) fail("weight/center mismatch");
    if (m.floor_free.size() != m.weight_free.rows()) fail("floor shape mismatch");
    return m;
  }
};

}  // namespace detail

inline void save_model(const TaskVae& m, std::ostream& os) {
  os << detail::kMagic << " " << detail::kVersion << "\n";
  os << "kind task\n";
  os << "pos_dim " << m.pos_dim << "\n";
  os << "dir_dim " << m.dir_dim << "\n";
  os << "latent_dim " << m.latent_dim << "\n";
  detail::write_metadata(os, m.train_cfg, m.final_loss);
  detail::write_mlp(os, "encoder", m.encoder);
  detail::write_mlp(os, "decoder_mean", m.decoder_mean);
  detail::write_rbf(os, "position_precision", m.position_precision);
  detail::write_rbf(os, "concentration", m.concentration);
  detail::write_mat(os, "latent_box", m.latent_box);
}

inline void save_model(const JointVae& m, std::ostream& os) {
  os << detail::kMagic << " " << detail::kVersion << "\n";
  os << "kind joint\n";
  os << "dof " << m.chain.dof() << "\n";
  os << "latent_dim " << m.latent_dim << "\n";
  os << "eps_reg " << fmt_double(m.eps_reg) << "\n";
  {
    Vec lengths(m.chain.dof());
    for (int i = 0; i < m.chain.dof(); ++i) lengths[i] = m.chain.link_lengths[i];
    detail::write_vec(os, "link_lengths", lengths);
  }
  os << "base " << fmt_double(m.chain.base.x()) << " " << fmt_double(m.chain.base.y()) << "\n";
  os << "limits " << fmt_double(m.chain.limit_lo) << " " << fmt_double(m.chain.limit_hi) << "\n";
  detail::write_metadata(os, m.train_cfg, m.final_loss);
  detail::write_mlp(os, "encoder", m.encoder);
  detail::write_mlp(os, "decoder_mean", m.decoder_mean);
  detail::write_rbf(os, "joint_precision", m.joint_precision);
  detail::write_mat(os, "latent_box", m.latent_box);
}

template <typename Model>
void save_model(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  save_model(m, os);
  if (!os) throw IoError("write failed: " + path);
}

struct AnyModel {
  std::optional<TaskVae> task;
  std::optional<JointVae> joint;
  bool is_task() const { return task.has_value(); }
  int latent_dim() const { return task ? task->latent_dim : joint->latent_dim; }
  const Mat& latent_box() const { return task ? task->latent_box : joint->latent_box; }
};

inline AnyModel load_model(std::istream& is) {
  detail::Reader r{is, ""};
  r.expect(detail::kMagic);
  const long version = r.integer();
  if (version != detail::kVersion)
    r.fail("unsupported version " + std::to_string(version));
  r.expect("kind");
  const std::string kind = r.token();

  AnyModel any;
  if (kind == "task") {
    TaskVae m;
    r.expect_field("pos_dim");
    m.pos_dim = int(r.integer());
    r.expect_field("dir_dim");
    m.dir_dim = int(r.integer());
    r.expect_field("latent_dim");
    m.latent_dim = int(r.integer());
    if (m.pos_dim < 1 || m.dir_dim < 2 || m.latent_dim < 1)
      r.fail("bad dimensions");
    r.read_metadata(m.train_cfg, m.final_loss);
    m.encoder = r.read_mlp("encoder");
    m.decoder_mean = r.read_mlp("decoder_mean");
    m.position_precision = r.read_rbf("position_precision");
    m.concentration = r.read_rbf("concentration");
    r.context = "latent_box";
    m.latent_box = r.read_mat("latent_box");
    if (m.encoder.in_dim() != m.pos_dim + m.dir_dim ||
        m.encoder.out_dim() != 2 * m.latent_dim)
      r.fail("encoder shape does not match dims");
    if (m.decoder_mean.in_dim() != m.latent_dim ||
        m.decoder_mean.out_dim() != m.pos_dim + m.dir_dim)
      r.fail("decoder shape does not match dims");
    if (m.position_precision.in_dim() != m.latent_dim ||
        m.position_precision.out_dim() != m.pos_dim)
      r.fail("position_precision shape does not match dims");
    if (m.concentration.in_dim() != m.latent_dim || m.concentration.out_dim() != 1)
      r.fail("concentration shape does not match dims");
    if (m.latent_box.rows() != 2 || m.latent_box.cols() != m.latent_dim)
      r.fail("latent_box shape");
    any.task = std::move(m);
  } else if (kind == "joint") {
    JointVae m;
    r.expect_field("dof");
    const int eta = int(r.integer());
    r.expect_field("latent_dim");
    m.latent_dim = int(r.integer());
    r.expect_field("eps_reg");
    m.eps_reg = r.number("eps_reg");
    if (eta < 1 || m.latent_dim < 1 || !(m.eps_reg >= 0.0)) r.fail("bad dimensions");
    const Vec lengths = r.read_vec("link_lengths");
    if (lengths.size() != eta) r.fail("link_lengths size mismatch");
    std::vector<double> ls(lengths.data(), lengths.data() + eta);
    r.expect_field("base");
    const double bx = r.number("base"), by = r.number("base");
    try {
      m.chain = kin::PlanarChain::make(ls, {bx, by});
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
    r.expect_field("limits");
    m.chain.limit_lo = r.number("limits");
    m.chain.limit_hi = r.number("limits");
    if (!(m.chain.limit_lo < m.chain.limit_hi)) r.fail("limits out of order");
    r.read_metadata(m.train_cfg, m.final_loss);
    m.encoder = r.read_mlp("encoder");
    m.decoder_mean = r.read_mlp("decoder_mean");
    m.joint_precision = r.read_rbf("joint_precision");
    r.context = "latent_box";
    m.latent_box = r.read_mat("latent_box");
    if (m.encoder.in_dim() != eta || m.encoder.out_dim() != 2 * m.latent_dim)
      r.fail("encoder shape does not match dims");
    if (m.decoder_mean.in_dim() != m.latent_dim || m.decoder_mean.out_dim() != eta)
      r.fail("decoder shape does not match dims");
    if (m.joint_precision.in_dim() != m.latent_dim ||
        m.joint_precision.out_dim() != eta)
      r.fail("joint_precision shape does not match dims");
    if (m.latent_box.rows() != 2 || m.latent_box.cols() != m.latent_dim)
      r.fail("latent_box shape");
    any.joint = std::move(m);
  } else {
    r.fail("unknown model kind '" + kind + "'");
  }
  return any;
}

inline AnyModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file: " + path);
  return load_model(is);
}

inline TaskVae load_task(const std::string& path) {
  auto any = load_model(path);
  if (!any.task) throw IoError("model file: expected kind task: " + path);
  return std::move(*any.task);
}

inline JointVae load_joint(const std::string& path) {
  auto any = load_model(path);
  if (!any.joint) throw IoError("model file: expected kind joint: " + path);
  return std::move(*any.joint);
}

}  // namespace geomot::vae
