#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <sstream>

#include "geomot/vae.hpp"

using namespace geomot;

namespace {

// Small hand-sized pose model: positions in R^2, directions on S^2,
// two-dimensional latent space.
vae::TaskVae tiny_task_model(std::uint64_t seed) {
  Rng rng(seed);
  vae::TaskVae m;
  m.pos_dim = 2;
  m.dir_dim = 3;
  m.latent_dim = 2;
  m.encoder = nets::Mlp::make({5, 6, 4}, rng);
  m.decoder_mean = nets::Mlp::make({2, 6, 5}, rng);
  Mat centers(4, 2);
  for (Eigen::Index i = 0; i < centers.size(); ++i)
    centers.data()[i] = rng.uniform(-1.0, 1.0);
  m.position_precision = nets::RbfNet::make(centers, 2, 0.8, rng, 0.5);
  m.concentration = nets::RbfNet::make(centers, 1, 0.8, rng, 2.0);
  m.latent_box = Mat::Zero(2, 2);
  m.latent_box.row(1).setOnes();
  return m;
}

vae::JointVae tiny_joint_model(std::uint64_t seed) {
  Rng rng(seed);
  vae::JointVae m;
  m.latent_dim = 2;
  m.chain = kin::PlanarChain::make({1.0, 0.7});
  m.encoder = nets::Mlp::make({2, 6, 4}, rng);
  m.decoder_mean = nets::Mlp::make({2, 6, 2}, rng);
  Mat centers(4, 2);
  for (Eigen::Index i = 0; i < centers.size(); ++i)
    centers.data()[i] = rng.uniform(-1.0, 1.0);
  m.joint_precision = nets::RbfNet::make(centers, 2, 0.8, rng, 0.5);
  m.eps_reg = 1e-6;
  m.latent_box = Mat::Zero(2, 2);
  m.latent_box.row(1).setOnes();
  return m;
}

Mat task_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  Mat X(n, 5);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-1.0, 1.0);
    X(i, 1) = rng.uniform(-1.0, 1.0);
    Vec q = rng.normal_vec(3);
    q /= q.norm();
    X.row(i).tail(3) = q;
  }
  return X;
}

// Arc of planar poses with antipodally doubled directions, the shape the
// trainer expects from the dataset loader.
Mat arc_dataset(int n, double scale = 1.0) {
  Mat X(2 * n, 5);
  for (int i = 0; i < n; ++i) {
    const double t = 0.5 * M_PI * i / (n - 1);
    Vec q(3);
    q << std::cos(t), std::sin(t), 0.0;
    X(2 * i, 0) = scale * std::cos(t);
    X(2 * i, 1) = scale * std::sin(t);
    X.row(2 * i).tail(3) = q;
    X.row(2 * i + 1) = X.row(2 * i);
    X.row(2 * i + 1).tail(3) = -q.transpose();
  }
  return X;
}

}  // namespace

TEST_CASE("encoder output is split into mean and clamped sigma") {
  // Single identity layer pinned to constant outputs exercises both clamp
  // edges: exp(40) above, exp(-40) below.
  nets::Mlp enc;
  nets::Layer l;
  l.W = Mat::Zero(4, 5);
  l.b = Vec(4);
  l.b << 0.25, -0.5, 40.0, -40.0;
  l.act = nets::Act::Identity;
  enc.layers.push_back(l);

  vae::TaskVae m = tiny_task_model(1);
  m.encoder = enc;
  const auto e = vae::encode(m, Vec::Zero(5));
  CHECK(e.mu[0] == 0.25);
  CHECK(e.mu[1] == -0.5);
  CHECK(e.sigma[0] == 10.0);
  CHECK(e.sigma[1] == 1e-4);
}

TEST_CASE("reparameterize reproduces mu + sigma * eps for a known stream") {
  vae::Encoded e;
  e.mu = Vec(2);
  e.mu << 1.0, -2.0;
  e.sigma = Vec(2);
  e.sigma << 0.5, 2.0;
  Rng draw(99), ref(99);
  const Vec z = vae::reparameterize(e, draw);
  const Vec eps = ref.normal_vec(2);
  CHECK(z[0] == e.mu[0] + e.sigma[0] * eps[0]);
  CHECK(z[1] == e.mu[1] + e.sigma[1] * eps[1]);
}

TEST_CASE("reparameterized samples have the encoded moments") {
  vae::Encoded e;
  e.mu = Vec(2);
  e.mu << 1.0, -2.0;
  e.sigma = Vec(2);
  e.sigma << 0.5, 2.0;
  Rng rng(17);
  const int n = 20000;
  Mat zs(n, 2);
  for (int i = 0; i < n; ++i) zs.row(i) = vae::reparameterize(e, rng);
  for (int j = 0; j < 2; ++j) {
    const double mean = zs.col(j).mean();
    const double sd = std::sqrt((zs.col(j).array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean - e.mu[j]) < 4.0 * e.sigma[j] / std::sqrt(double(n)));
    CHECK(sd == Catch::Approx(e.sigma[j]).epsilon(0.03));
  }
}

TEST_CASE("task ELBO matches a term-by-term oracle") {
  const auto m = tiny_task_model(5);
  const Mat X = task_batch(1, 11);
  nets::TrainConfig cfg;
  cfg.beta1 = 0.7;
  cfg.beta2 = 1.3;
  const double klw = 0.4;

  Rng rng(42);
  const auto terms = vae::elbo_task(m, X, cfg, klw, rng);

  // Replay the forward pass with the already-verified building blocks.
  Rng ref(42);
  const auto e = vae::encode(m, X.row(0).transpose());
  const Vec eps = ref.normal_vec(2);
  const Vec z = e.mu + e.sigma.cwiseProduct(eps);
  const Vec out = m.decoder_mean.forward(z);
  const Vec pos_mean = out.head(2);
  const Vec mu_q = out.tail(3).normalized();
  const Vec sigma_x = m.position_precision.forward(z).cwiseInverse();
  const double kappa = m.concentration.forward(z)[0];

  const double lpos = dist::gaussian_logpdf(X.row(0).head(2).transpose(), pos_mean, sigma_x);
  const double ldir = dist::antipodal_vmf_logpdf(X.row(0).tail(3).transpose(), mu_q, kappa);
  const double kl = dist::kl_diag_gaussian_std_normal(e.mu, e.sigma);

  CHECK(terms.recon_pos == Catch::Approx(lpos).margin(1e-12));
  CHECK(terms.recon_dir == Catch::Approx(ldir).margin(1e-12));
  CHECK(terms.kl == Catch::Approx(kl).margin(1e-12));
  CHECK(terms.loss ==
        Catch::Approx(-(cfg.beta1 * lpos + cfg.beta2 * ldir) + klw * kl).margin(1e-12));
}

TEST_CASE("joint ELBO matches a term-by-term oracle") {
  const auto m = tiny_joint_model(6);
  Mat Theta(1, 2);
  Theta << 0.4, -0.9;
  nets::TrainConfig cfg;
  const double klw = 0.75;

  Rng rng(31);
  const auto terms = vae::elbo_joint(m, Theta, cfg, klw, rng);

  Rng ref(31);
  const auto e = vae::encode(m, Theta.row(0).transpose());
  const Vec eps = ref.normal_vec(2);
  const Vec z = e.mu + e.sigma.cwiseProduct(eps);
  const Vec mu_theta = m.decoder_mean.forward(z);
  const Vec sigma_t = m.joint_precision.forward(z).cwiseInverse();

  const double lrec = dist::gaussian_logpdf(Theta.row(0).transpose(), mu_theta, sigma_t);
  const double logv = std::log(kin::volume_measure(m.chain, mu_theta, m.eps_reg));
  const double kl = dist::kl_diag_gaussian_std_normal(e.mu, e.sigma);

  CHECK(terms.recon_pos == Catch::Approx(lrec).margin(1e-12));
  CHECK(terms.recon_dir == Catch::Approx(-logv).margin(1e-12));
  CHECK(terms.kl == Catch::Approx(kl).margin(1e-12));
  CHECK(terms.loss == Catch::Approx(-(lrec - logv) + klw * kl).margin(1e-12));
}

namespace {

// Loss as a pure function of the flat parameter vector, with the noise
// stream frozen by reseeding, so central differences are well defined.
template <typename Model, typename LossFn>
void check_gradients(Model& m, std::vector<vae::detail::ParamRef> refs,
                     const LossFn& loss, const Vec& analytic) {
  vae::detail::FlatParams params;
  params.refs = std::move(refs);
  params.finalize();
  REQUIRE(analytic.size() == params.total);

  const Vec base = params.gather();
  const double h = 1e-6;
  int checked = 0;
  for (Eigen::Index i = 0; i < params.total; ++i) {
    Vec p = base;
    p[i] = base[i] + h;
    params.scatter(p);
    const double up = loss();
    p[i] = base[i] - h;
    params.scatter(p);
    const double dn = loss();
    const double fd = (up - dn) / (2.0 * h);
    const double tol = 1e-7 + 1e-4 * std::abs(fd);
    if (std::abs(fd - analytic[i]) >= tol) {
      CAPTURE(i, params.name_of(i), fd, analytic[i]);
      REQUIRE(std::abs(fd - analytic[i]) < tol);
    }
    ++checked;
  }
  params.scatter(base);
  CHECK(checked == params.total);
}

}  // namespace

TEST_CASE("zero reconstruction weights reduce the task loss to the KL term") {
  const auto m = tiny_task_model(14);
  const Mat X = task_batch(4, 15);
  nets::TrainConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  Rng rng(2);
  const auto terms = vae::elbo_task(m, X, cfg, 1.0, rng);
  CHECK(terms.loss == Catch::Approx(terms.kl).margin(1e-12));
  CHECK(terms.kl >= 0.0);
}

TEST_CASE("global quaternion sign flip leaves the task loss unchanged") {
  // The direction enters the loss in two places: the encoder input and the
  // antipodal likelihood. The likelihood is exactly sign-symmetric; with an
  // encoder blind to the direction columns the whole loss must be too.
  auto m = tiny_task_model(16);
  m.encoder.layers[0].W.rightCols(3).setZero();
  const Mat X = task_batch(5, 18);
  Mat Xf = X;
  Xf.rightCols(3) = -Xf.rightCols(3);
  nets::TrainConfig cfg;
  Rng r1(7), r2(7);
  const auto a = vae::elbo_task(m, X, cfg, 1.0, r1);
  const auto b = vae::elbo_task(m, Xf, cfg, 1.0, r2);
  CHECK(a.loss == Catch::Approx(b.loss).margin(1e-13));
  CHECK(a.recon_dir == Catch::Approx(b.recon_dir).margin(1e-13));
}

TEST_CASE("task ELBO gradients agree with finite differences everywhere") {
  auto m = tiny_task_model(7);
  const Mat X = task_batch(3, 13);
  nets::TrainConfig cfg;
  cfg.beta1 = 0.9;
  cfg.beta2 = 1.1;
  const double klw = 0.6;

  auto grads = vae::TaskGrads::zero_like(m);
  {
    Rng rng(777);
    vae::elbo_task(m, X, cfg, klw, rng, &grads);
  }
  std::vector<vae::detail::ParamRef> refs, grefs;
  vae::detail::collect(m.encoder, "encoder", refs);
  vae::detail::collect(m.decoder_mean, "decoder_mean", refs);
  vae::detail::collect(m.position_precision, "position_precision", refs);
  vae::detail::collect(m.concentration, "concentration", refs);
  vae::detail::collect(grads.encoder, "encoder", grefs);
  vae::detail::collect(grads.decoder_mean, "decoder_mean", grefs);
  vae::detail::collect(grads.position_precision, "position_precision", grefs);
  vae::detail::collect(grads.concentration, "concentration", grefs);
  vae::detail::FlatParams gp;
  gp.refs = std::move(grefs);
  gp.finalize();

  const auto loss = [&]() {
    Rng rng(777);
    return vae::elbo_task(m, X, cfg, klw, rng).loss;
  };
  check_gradients(m, std::move(refs), loss, gp.gather());
}

TEST_CASE("joint ELBO gradients agree with finite differences everywhere") {
  auto m = tiny_joint_model(8);
  Mat Theta(3, 2);
  Theta << 0.3, -0.8, 1.1, 0.2, -0.4, 0.9;
  nets::TrainConfig cfg;
  const double klw = 0.5;

  auto grads = vae::JointGrads::zero_like(m);
  {
    Rng rng(555);
    vae::elbo_joint(m, Theta, cfg, klw, rng, &grads);
  }
  std::vector<vae::detail::ParamRef> refs, grefs;
  vae::detail::collect(m.encoder, "encoder", refs);
  vae::detail::collect(m.decoder_mean, "decoder_mean", refs);
  vae::detail::collect(m.joint_precision, "joint_precision", refs);
  vae::detail::collect(grads.encoder, "encoder", grefs);
  vae::detail::collect(grads.decoder_mean, "decoder_mean", grefs);
  vae::detail::collect(grads.joint_precision, "joint_precision", grefs);
  vae::detail::FlatParams gp;
  gp.refs = std::move(grefs);
  gp.finalize();

  const auto loss = [&]() {
    Rng rng(555);
    return vae::elbo_joint(m, Theta, cfg, klw, rng).loss;
  };
  check_gradients(m, std::move(refs), loss, gp.gather());
}

TEST_CASE("KL warm-up ramps linearly from zero") {
  nets::TrainConfig cfg;
  cfg.kl_warmup_epochs = 30;
  CHECK(vae::detail::kl_warmup_weight(0, cfg) == 0.0);
  CHECK(vae::detail::kl_warmup_weight(15, cfg) == 0.5);
  CHECK(vae::detail::kl_warmup_weight(30, cfg) == 1.0);
  CHECK(vae::detail::kl_warmup_weight(45, cfg) == 1.0);
  cfg.kl_warmup_epochs = 0;
  CHECK(vae::detail::kl_warmup_weight(0, cfg) == 1.0);
}

TEST_CASE("phase split takes the ceiling of two fifths") {
  CHECK(vae::phase1_epochs(1) == 1);
  CHECK(vae::phase1_epochs(5) == 2);
  CHECK(vae::phase1_epochs(7) == 3);
  CHECK(vae::phase1_epochs(10) == 4);
  CHECK(vae::phase1_epochs(200) == 80);
}

TEST_CASE("decoding normalizes directions and bumps the query counter") {
  const auto m = tiny_task_model(9);
  Vec z(2);
  z << 0.3, -0.1;
  vae::reset_decoder_queries();
  const auto d = vae::decode_task(m, z);
  CHECK(vae::decoder_queries() == 1);
  CHECK(d.dir_mean.norm() == Catch::Approx(1.0).margin(1e-12));
  CHECK((d.pos_sigma.array() > 0.0).all());
  CHECK(d.kappa > 0.0);

  const auto jm = tiny_joint_model(10);
  const auto jd = vae::decode_joint(jm, z);
  CHECK(vae::decoder_queries() == 2);
  const auto body = kin::fk_points(jm.chain, jd.theta_mean);
  CHECK(jd.body.ee_position() == body.ee_position());
  CHECK((jd.theta_sigma.array() > 0.0).all());

  // ELBO evaluation is training-side and must not count as decoding.
  nets::TrainConfig cfg;
  Rng rng(1);
  vae::elbo_task(m, task_batch(2, 3), cfg, 1.0, rng);
  CHECK(vae::decoder_queries() == 2);
  vae::reset_decoder_queries();
  CHECK(vae::decoder_queries() == 0);
}

TEST_CASE("degenerate decoder direction output is an error") {
  auto m = tiny_task_model(12);
  nets::Mlp dead;
  nets::Layer l;
  l.W = Mat::Zero(5, 2);
  l.b = Vec::Zero(5);
  l.act = nets::Act::Identity;
  dead.layers.push_back(l);
  m.decoder_mean = dead;
  Vec z = Vec::Zero(2);
  CHECK_THROWS_AS(vae::decode_task(m, z), std::runtime_error);
}

TEST_CASE("two-phase training lowers the loss deterministically") {
  const Mat X = arc_dataset(40);
  nets::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch = 16;
  cfg.rbf_k = 8;
  cfg.kl_warmup_epochs = 5;
  cfg.seed = 3;

  const auto r1 = vae::train_task(X, 2, 3, 2, cfg);
  REQUIRE(int(r1.loss_history.size()) == cfg.epochs);
  const double head = r1.loss_history.front();
  const double tail = r1.loss_history.back();
  CHECK(tail < head);
  CHECK(r1.model.latent_box.rows() == 2);
  CHECK(r1.model.latent_box.cols() == 2);
  CHECK(all_finite(r1.model.latent_box));
  CHECK((r1.model.latent_box.row(1) - r1.model.latent_box.row(0)).minCoeff() >= 0.0);

  // Same seed, same history, bit for bit; same saved bytes.
  const auto r2 = vae::train_task(X, 2, 3, 2, cfg);
  REQUIRE(r1.loss_history.size() == r2.loss_history.size());
  for (std::size_t i = 0; i < r1.loss_history.size(); ++i)
    CHECK(r1.loss_history[i] == r2.loss_history[i]);
  std::ostringstream s1, s2;
  vae::save_model(r1.model, s1);
  vae::save_model(r2.model, s2);
  CHECK(s1.str() == s2.str());

  nets::TrainConfig other = cfg;
  other.seed = 4;
  const auto r3 = vae::train_task(X, 2, 3, 2, other);
  CHECK(r3.loss_history.back() != r1.loss_history.back());
}

TEST_CASE("joint training runs both phases and improves") {
  const int n = 60;
  Mat Theta(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = double(i) / (n - 1);
    Theta(i, 0) = -0.5 + 1.2 * t;
    Theta(i, 1) = 0.8 * std::sin(2.0 * t);
  }
  nets::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch = 16;
  cfg.rbf_k = 6;
  cfg.kl_warmup_epochs = 4;
  cfg.seed = 5;

  const auto chain = kin::PlanarChain::make({1.0, 0.8});
  const auto r = vae::train_joint(Theta, chain, 2, cfg);
  REQUIRE(int(r.loss_history.size()) == cfg.epochs);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(all_finite(r.model.latent_box));

  const auto r2 = vae::train_joint(Theta, chain, 2, cfg);
  for (std::size_t i = 0; i < r.loss_history.size(); ++i)
    CHECK(r.loss_history[i] == r2.loss_history[i]);
}

TEST_CASE("sustained loss blow-up aborts training") {
  // Positions four orders of magnitude out keep the unit-variance phase-1
  // loss above the divergence threshold without overflowing gradients.
  const Mat X = arc_dataset(20, 1e4);
  nets::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch = 16;
  cfg.rbf_k = 4;
  cfg.seed = 1;
  CHECK_THROWS_AS(vae::train_task(X, 2, 3, 2, cfg), TrainingError);
}

TEST_CASE("model files round-trip byte for byte") {
  const Mat X = arc_dataset(15);
  nets::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 8;
  cfg.rbf_k = 4;
  cfg.seed = 2;
  const auto trained = vae::train_task(X, 2, 3, 2, cfg);

  std::ostringstream first;
  vae::save_model(trained.model, first);
  std::istringstream in(first.str());
  const auto loaded = vae::load_model(in);
  REQUIRE(loaded.task.has_value());
  std::ostringstream second;
  vae::save_model(*loaded.task, second);
  CHECK(first.str() == second.str());

  // Behavior survives the round trip exactly.
  Vec z(2);
  z << 0.2, 0.1;
  const auto a = vae::decode_task(trained.model, z);
  const auto b = vae::decode_task(*loaded.task, z);
  CHECK(a.pos_mean == b.pos_mean);
  CHECK(a.dir_mean == b.dir_mean);
  CHECK(a.pos_sigma == b.pos_sigma);
  CHECK(a.kappa == b.kappa);
}

TEST_CASE("joint model files round-trip byte for byte") {
  Mat Theta(12, 2);
  Rng rng(4);
  for (Eigen::Index i = 0; i < Theta.size(); ++i)
    Theta.data()[i] = rng.uniform(-1.0, 1.0);
  nets::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 6;
  cfg.rbf_k = 3;
  cfg.seed = 6;
  const auto chain = kin::PlanarChain::make({1.0, 0.5}, Eigen::Vector2d(0.1, -0.2));
  const auto trained = vae::train_joint(Theta, chain, 2, cfg);

  std::ostringstream first;
  vae::save_model(trained.model, first);
  std::istringstream in(first.str());
  const auto loaded = vae::load_model(in);
  REQUIRE(loaded.joint.has_value());
  CHECK(loaded.joint->chain.dof() == 2);
  CHECK(loaded.joint->chain.base.x() == 0.1);
  CHECK(loaded.joint->chain.link_lengths[1] == 0.5);
  std::ostringstream second;
  vae::save_model(*loaded.joint, second);
  CHECK(first.str() == second.str());
}

TEST_CASE("model loader rejects malformed files") {
  const auto m = tiny_task_model(20);
  std::ostringstream os;
  vae::save_model(m, os);
  const std::string good = os.str();

  auto expect_reject = [](std::string text) {
    std::istringstream is(text);
    CHECK_THROWS_AS(vae::load_model(is), IoError);
  };

  expect_reject("not-a-model 1\nkind task\n");
  expect_reject("geomot-model 2\nkind task\n");
  expect_reject("geomot-model 1\nkind banana\n");
  expect_reject(good.substr(0, good.size() / 2));

  // A non-finite weight is data corruption, not a tolerable value.
  std::string bad = good;
  const auto pos = bad.find("W ");
  REQUIRE(pos != std::string::npos);
  const auto numpos = bad.find(' ', bad.find(' ', pos + 2) + 1) + 1;
  const auto numend = bad.find_first_of(" \n", numpos);
  bad.replace(numpos, numend - numpos, "nan");
  expect_reject(bad);

  // Kind mismatch through the typed loaders.
  const std::string path = "vae_roundtrip_tmp.model";
  vae::save_model(m, path);
  CHECK_THROWS_AS(vae::load_joint(path), IoError);
  CHECK(vae::load_task(path).pos_dim == 2);
  std::remove(path.c_str());
}
