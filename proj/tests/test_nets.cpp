#include "geomot/nets.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "geomot/numerics.hpp"

using geomot::Mat;
using geomot::Rng;
using geomot::Vec;
namespace nets = geomot::nets;

TEST_CASE("mlp forward matches a hand-built net") {
  // One tanh unit then a linear readout: f(x) = -tanh(2x + 0.5) + 0.3.
  nets::Mlp net;
  net.layers.push_back({Mat::Constant(1, 1, 2.0), Vec::Constant(1, 0.5),
                        nets::Act::Tanh});
  net.layers.push_back({Mat::Constant(1, 1, -1.0), Vec::Constant(1, 0.3),
                        nets::Act::Identity});
  const double x = 0.4;
  CHECK(net.forward(Vec::Constant(1, x))[0] ==
        Catch::Approx(-std::tanh(2.0 * x + 0.5) + 0.3).epsilon(1e-15));
  // Chain rule by hand: f'(x) = -(1 - tanh^2(2x+0.5)) * 2.
  const double t = std::tanh(2.0 * x + 0.5);
  CHECK(net.jacobian(Vec::Constant(1, x))(0, 0) ==
        Catch::Approx(-(1.0 - t * t) * 2.0).epsilon(1e-14));
}

TEST_CASE("mlp jacobian agrees with finite differences") {
  Rng rng(21);
  const auto net = nets::Mlp::make({3, 16, 8, 2}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rng.normal_vec(3);
    const Mat J = net.jacobian(x);
    const Mat Jfd = geomot::numerics::fd_jacobian(
        [&](const Vec& v) { return net.forward(v); }, x);
    CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("mlp backward gradients agree with finite differences") {
  Rng rng(22);
  auto net = nets::Mlp::make({2, 7, 3}, rng);
  const Vec x = rng.normal_vec(2);
  const Vec a = rng.normal_vec(3);  // random linear functional of the output

  auto loss = [&]() { return a.dot(net.forward(x)); };

  nets::Mlp::Cache cache;
  net.forward(x, &cache);
  auto grad = net.zero_like();
  const Vec gx = net.backward(cache, a, grad);

  const double h = 1e-6;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto check_block = [&](double* v, double g) {
      const double keep = *v;
      *v = keep + h;
      const double up = loss();
      *v = keep - h;
      const double dn = loss();
      *v = keep;
      CHECK(g == Catch::Approx((up - dn) / (2 * h)).margin(1e-6));
    };
    // Spot-check a few entries per tensor rather than the full set.
    check_block(&net.layers[l].W(0, 0), grad.layers[l].W(0, 0));
    check_block(&net.layers[l].W(net.layers[l].W.rows() - 1, 0),
                grad.layers[l].W(grad.layers[l].W.rows() - 1, 0));
    check_block(&net.layers[l].b[0], grad.layers[l].b[0]);
  }
  // Input gradient equals J^T a.
  CHECK((gx - net.jacobian(x).transpose() * a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rbf net forward, floor, and locality") {
  Rng rng(5);
  Mat centers(2, 1);
  centers << 0.0, 1.0;
  auto net = nets::RbfNet::make(centers, 1, 0.5, rng, 0.25);

  // Floor starts exactly where requested and bounds the output from below.
  CHECK(net.floor()[0] == Catch::Approx(0.25).epsilon(1e-12));
  const Mat w = net.weights();
  CHECK(w.minCoeff() >= 0.0);

  auto manual = [&](double z) {
    const double p0 = std::exp(-z * z / (2 * 0.25));
    const double p1 = std::exp(-(z - 1) * (z - 1) / (2 * 0.25));
    return w(0, 0) * p0 + w(0, 1) * p1 + 0.25;
  };
  for (double z : {-0.3, 0.0, 0.4, 1.2}) {
    CAPTURE(z);
    CHECK(net.forward(Vec::Constant(1, z))[0] ==
          Catch::Approx(manual(z)).epsilon(1e-12));
    CHECK(net.forward(Vec::Constant(1, z))[0] >= 0.25);
  }
  // Far from every center only the floor survives.
  CHECK(net.forward(Vec::Constant(1, 40.0))[0] ==
        Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("rbf jacobian and backward agree with finite differences") {
  Rng rng(6);
  Mat centers(5, 2);
  for (int i = 0; i < 5; ++i) centers.row(i) = rng.normal_vec(2);
  auto net = nets::RbfNet::make(centers, 3, 0.7, rng, 0.1);

  const Vec z = rng.normal_vec(2);
  const Mat J = net.jacobian(z);
  const Mat Jfd = geomot::numerics::fd_jacobian(
      [&](const Vec& v) { return net.forward(v); }, z);
  CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-6);

  const Vec a = rng.normal_vec(3);
  auto grad = net.zero_like();
  const Vec gz = net.backward(z, net.phi(z), a, grad);
  CHECK((gz - J.transpose() * a).cwiseAbs().maxCoeff() < 1e-12);

  auto loss = [&]() { return a.dot(net.forward(z)); };
  const double h = 1e-6;
  auto fd_param = [&](double* v) {
    const double keep = *v;
    *v = keep + h;
    const double up = loss();
    *v = keep - h;
    const double dn = loss();
    *v = keep;
    return (up - dn) / (2 * h);
  };
  CHECK(grad.weight_free(1, 2) ==
        Catch::Approx(fd_param(&net.weight_free(1, 2))).margin(1e-6));
  CHECK(grad.floor_free[0] ==
        Catch::Approx(fd_param(&net.floor_free[0])).margin(1e-6));
}

TEST_CASE("rbf bandwidth uses local spacing, not global extent") {
  Mat line(10, 1);
  for (int i = 0; i < 10; ++i) line(i, 0) = i;
  CHECK(nets::rbf_bandwidth(line, 2.0) == Catch::Approx(2.0));

  // Two tight clusters far apart: bandwidth follows the 0.1 spacing, not
  // the 10-unit gap an all-pairs median would see.
  Mat two(6, 1);
  two << 0.0, 0.1, 0.2, 10.0, 10.1, 10.2;
  CHECK(nets::rbf_bandwidth(two, 2.0) == Catch::Approx(0.2));
  CHECK_THROWS_AS(nets::rbf_bandwidth(two, 0.0), std::invalid_argument);
}

TEST_CASE("adam first step and error handling") {
  nets::TrainConfig cfg;
  cfg.lr = 0.01;
  nets::AdamState state;
  Vec params = Vec::Zero(2);
  const Vec grads{{2.0, -3.0}};
  nets::adam_update(params, grads, state, cfg);
  // After bias correction the first step is -lr * g / (|g| + eps).
  CHECK(params[0] == Catch::Approx(-0.01 * 2.0 / (2.0 + 1e-8)).epsilon(1e-10));
  CHECK(params[1] == Catch::Approx(0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-10));
  CHECK(state.t == 1);

  // Determinism: same inputs, same trajectory.
  nets::AdamState s2;
  Vec p2 = Vec::Zero(2);
  nets::adam_update(p2, grads, s2, cfg);
  CHECK(p2 == params);

  Vec bad{{1.0, std::numeric_limits<double>::quiet_NaN()}};
  const auto named = [](Eigen::Index i) { return "encoder.layer0.W[" + std::to_string(i) + "]"; };
  try {
    nets::adam_update(params, bad, state, cfg, named);
    FAIL("expected TrainingError");
  } catch (const geomot::TrainingError& e) {
    CHECK(std::string(e.what()).find("encoder.layer0.W[1]") != std::string::npos);
  }
}

TEST_CASE("adam converges on a quadratic") {
  nets::TrainConfig cfg;
  cfg.lr = 0.05;
  nets::AdamState state;
  Vec p{{4.0, -2.0}};
  const Vec target{{1.0, 0.5}};
  for (int i = 0; i < 2000; ++i) {
    const Vec g = 2.0 * (p - target);
    nets::adam_update(p, g, state, cfg);
  }
  CHECK((p - target).norm() < 1e-4);
}
