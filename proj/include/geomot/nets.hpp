#pragma once

#include <algorithm>
#include <functional>
#include <limits>

#include "geomot/core.hpp"

namespace geomot::nets {

inline double softplus(double x) {
  // Overflow-safe log(1 + e^x); > 0 for all finite x.
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

enum class Act { Tanh, Identity };

struct Layer {
  Mat W;
  Vec b;
  Act act = Act::Identity;
};

// Plain feed-forward network: tanh on hidden layers, identity on the last.
// Forward/jacobian are the inference path; the Cache-taking overloads feed
// backward(), which accumulates parameter gradients into an Mlp-shaped
// buffer and returns the gradient with respect to the input.
struct Mlp {
  std::vector<Layer> layers;

  // dims = {in, hidden..., out}. Xavier-uniform init keeps tanh layers in
  // their active range at the start of training.
  static Mlp make(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need >= 2 dims");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] <= 0 || dims[l + 1] <= 0)
        throw std::invalid_argument("Mlp::make: dims must be positive");
      Layer layer;
      layer.W = Mat(dims[l + 1], dims[l]);
      const double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
      for (Eigen::Index i = 0; i < layer.W.size(); ++i)
        layer.W.data()[i] = rng.uniform(-bound, bound);
      layer.b = Vec::Zero(dims[l + 1]);
      layer.act = (l + 2 < dims.size()) ? Act::Tanh : Act::Identity;
      net.layers.push_back(std::move(layer));
    }
    return net;
  }

  Eigen::Index in_dim() const { return layers.front().W.cols(); }
  Eigen::Index out_dim() const { return layers.back().W.rows(); }

  struct Cache {
    std::vector<Vec> x;  // x[0] = input, x[l+1] = activation output of layer l
  };

  Vec forward(const Vec& in, Cache* cache = nullptr) const {
    if (in.size() != in_dim()) throw std::invalid_argument("Mlp::forward: bad input size");
    if (cache) {
      cache->x.clear();
      cache->x.push_back(in);
    }
    Vec h = in;
    for (const auto& layer : layers) {
      h = layer.W * h + layer.b;
      if (layer.act == Act::Tanh)
        for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i]);
      if (cache) cache->x.push_back(h);
    }
    return h;
  }

  // Exact Jacobian: product of per-layer W and activation diagonals,
  // accumulated front to back.
  Mat jacobian(const Vec& in) const {
    if (in.size() != in_dim()) throw std::invalid_argument("Mlp::jacobian: bad input size");
    Vec h = in;
    Mat J;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      Vec pre = layer.W * h + layer.b;
      Mat Jl = (l == 0) ? layer.W : Mat(layer.W * J);
      if (layer.act == Act::Tanh) {
        for (Eigen::Index i = 0; i < pre.size(); ++i) {
          const double t = std::tanh(pre[i]);
          Jl.row(i) *= (1.0 - t * t);
          pre[i] = t;
        }
      }
      J = std::move(Jl);
      h = std::move(pre);
    }
    return J;
  }

  Mlp zero_like() const {
    Mlp g = *this;
    for (auto& layer : g.layers) {
      layer.W.setZero();
      layer.b.setZero();
    }
    return g;
  }

  // gout is d loss / d output; returns d loss / d input. Parameter
  // gradients accumulate (+=) into grad, which must be zero_like-shaped.
  Vec backward(const Cache& cache, Vec gout, Mlp& grad) const {
    if (cache.x.size() != layers.size() + 1)
      throw std::invalid_argument("Mlp::backward: cache does not match net");
    for (int l = int(layers.size()) - 1; l >= 0; --l) {
      const auto& layer = layers[l];
      if (layer.act == Act::Tanh) {
        // cache.x holds post-activation values; tanh' = 1 - tanh^2.
        const Vec& out = cache.x[l + 1];
        for (Eigen::Index i = 0; i < gout.size(); ++i)
          gout[i] *= (1.0 - out[i] * out[i]);
      }
      grad.layers[l].W += gout * cache.x[l].transpose();
      grad.layers[l].b += gout;
      gout = layer.W.transpose() * gout;
    }
    return gout;
  }
};

// Radial-basis readout with frozen centers/bandwidth. Effective weights are
// softplus(weight_free) >= 0 and the effective floor softplus(floor_free) > 0,
// so every output component is >= its floor: far from all centers the output
// decays exactly to the floor, which is what models growing uncertainty
// (small precision/concentration) away from the data.
struct RbfNet {
  Mat centers;  // k x d, frozen after construction
  double bandwidth = 1.0;
  Mat weight_free;  // out x k
  Vec floor_free;   // out

  static RbfNet make(Mat centers, int out_dim, double bandwidth, Rng& rng,
                     double floor_value) {
    if (centers.rows() < 1) throw std::invalid_argument("RbfNet::make: need centers");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("RbfNet::make: bandwidth must be positive");
    if (!(floor_value > 0.0)) throw std::invalid_argument("RbfNet::make: floor must be positive");
    RbfNet net;
    net.centers = std::move(centers);
    net.bandwidth = bandwidth;
    net.weight_free = Mat(out_dim, net.centers.rows());
    for (Eigen::Index i = 0; i < net.weight_free.size(); ++i)
      net.weight_free.data()[i] = rng.uniform(-2.0, 0.0);
    // softplus^{-1}: floor starts exactly at the requested value.
    const double f = floor_value > 30.0 ? floor_value
                                        : std::log(std::expm1(floor_value));
    net.floor_free = Vec::Constant(out_dim, f);
    return net;
  }

  Eigen::Index in_dim() const { return centers.cols(); }
  Eigen::Index out_dim() const { return weight_free.rows(); }

  Vec phi(const Vec& z) const {
    if (z.size() != centers.cols()) throw std::invalid_argument("RbfNet: bad input size");
    Vec p(centers.rows());
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (Eigen::Index k = 0; k < centers.rows(); ++k)
      p[k] = std::exp(-(z.transpose() - centers.row(k)).squaredNorm() * inv);
    return p;
  }

  Mat weights() const {
    Mat w = weight_free;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = softplus(w.data()[i]);
    return w;
  }

  Vec floor() const {
    Vec f = floor_free;
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = softplus(f[i]);
    return f;
  }

  Vec forward(const Vec& z) const { return weights() * phi(z) + floor(); }

  Mat jacobian(const Vec& z) const {
    const Vec p = phi(z);
    const Mat w = weights();
    Mat J = Mat::Zero(out_dim(), in_dim());
    const double inv = 1.0 / (bandwidth * bandwidth);
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
      const Vec dir = (centers.row(k).transpose() - z) * (p[k] * inv);
      J += w.col(k) * dir.transpose();
    }
    return J;
  }

  RbfNet zero_like() const {
    RbfNet g = *this;
    g.weight_free.setZero();
    g.floor_free.setZero();
    return g;
  }

  // phi_z must come from phi(z). Accumulates gradients for the free
  // parameters into grad; returns d loss / d z.
  Vec backward(const Vec& z, const Vec& phi_z, const Vec& gout, RbfNet& grad) const {
    Vec gz = Vec::Zero(in_dim());
    const double inv = 1.0 / (bandwidth * bandwidth);
    for (Eigen::Index o = 0; o < out_dim(); ++o) {
      grad.floor_free[o] += gout[o] * sigmoid(floor_free[o]);
      for (Eigen::Index k = 0; k < centers.rows(); ++k) {
        grad.weight_free(o, k) += gout[o] * phi_z[k] * sigmoid(weight_free(o, k));
        const double w = softplus(weight_free(o, k));
        gz += (gout[o] * w * phi_z[k] * inv) * (centers.row(k).transpose() - z);
      }
    }
    return gz;
  }
};

// Bandwidth heuristic: scale x median nearest-neighbor distance between
// centers. All-pairs medians blur multi-cluster layouts into one giant
// kernel, so the local spacing is what sets lambda.
inline double rbf_bandwidth(const Mat& centers, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("rbf_bandwidth: scale must be positive");
  const Eigen::Index k = centers.rows();
  if (k < 2) return scale;
  std::vector<double> nn(k, std::numeric_limits<double>::max());
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (i != j)
        nn[i] = std::min(nn[i], (centers.row(i) - centers.row(j)).norm());
  std::nth_element(nn.begin(), nn.begin() + k / 2, nn.end());
  const double med = nn[k / 2];
  return med > 1e-12 ? scale * med : scale;
}

// Training hyperparameters; lr/batch/Adam defaults follow common practice
// for small nets, the rest are surfaced through the run config.
struct TrainConfig {
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int kl_warmup_epochs = 30;   // linear ramp of the KL weight from 0 to 1
  double beta1 = 1.0;          // position reconstruction weight
  double beta2 = 1.0;          // orientation reconstruction weight
  int rbf_k = 500;
  double rbf_bandwidth_scale = 2.0;
  double rbf_floor = 1.0;      // initial precision/concentration floor; 1
                               // carries the unit-variance phase over, small
                               // values raise off-support uncertainty
  double eps_reg = 1e-6;       // volume-measure regularizer
  std::uint64_t seed = 0;
};

struct AdamState {
  Vec m, v;
  long t = 0;
};

// One Adam step over a flat parameter vector. A non-finite gradient entry
// aborts training; name_of (when given) turns the flat index into the
// offending tensor's name for the error message.
inline void adam_update(Vec& params, const Vec& grads, AdamState& state,
                        const TrainConfig& cfg,
                        const std::function<std::string(Eigen::Index)>& name_of = {}) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_update: size mismatch");
  if (state.t == 0) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
  }
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      const std::string who = name_of ? name_of(i) : ("param[" + std::to_string(i) + "]");
      throw TrainingError("adam_update: non-finite gradient for " + who);
    }
  }
  ++state.t;
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads;
  state.v = cfg.adam_beta2 * state.v.array().matrix() +
            (1.0 - cfg.adam_beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(state.t));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

}  // namespace geomot::nets
