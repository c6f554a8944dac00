#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kinegen/nn/core.hpp"
#include "kinegen/nn/dense.hpp"
#include "kinegen/nn/gru.hpp"
#include "kinegen/nn/lstm.hpp"
#include "kinegen/rng.hpp"

using namespace kinegen;
using namespace kinegen::nn;

TEST_CASE("rng is reproducible and roughly uniform") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());

  Rng r(7);
  double sum = 0.0, lo = 1.0, hi = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(sum / n == Catch::Approx(0.5).margin(0.01));
  REQUIRE(lo < 0.01);
  REQUIRE(hi > 0.99);
}

TEST_CASE("rng gaussian has expected first two moments") {
  Rng r(123);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  REQUIRE(mean == Catch::Approx(0.0).margin(0.02));
  REQUIRE(var == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("mix_seed separates streams") {
  REQUIRE(mix_seed(1, 0) != mix_seed(1, 1));
  REQUIRE(mix_seed(1, 0) != mix_seed(2, 0));
  REQUIRE(mix_seed(5, 3) == mix_seed(5, 3));
}

TEST_CASE("parameter store bookkeeping") {
  ParameterStore ps(99);
  Mat& w = ps.create("W", 2, 3);
  w.setConstant(1.5);
  REQUIRE(ps.has("W"));
  REQUIRE_FALSE(ps.has("V"));
  REQUIRE(ps.at("W")(1, 2) == 1.5);
  REQUIRE(ps.scalar_count() == 6);
  REQUIRE(ps.seed() == 99);
  REQUIRE_THROWS_AS(ps.at("missing"), validation_error);
  REQUIRE_THROWS_AS(ps.create("W", 1, 1), validation_error);

  ParameterStore z = ps.zeros_like();
  REQUIRE(z.at("W").isZero());
  REQUIRE(ps.all_finite());
  ps.at("W")(0, 0) = std::nan("");
  REQUIRE_FALSE(ps.all_finite());
}

TEST_CASE("sigmoid matches closed form and stays stable") {
  REQUIRE(sigmoid(0.0) == 0.5);
  REQUIRE(sigmoid(2.0) == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))));
  REQUIRE(sigmoid(800.0) == Catch::Approx(1.0));
  REQUIRE(sigmoid(-800.0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(std::isfinite(sigmoid(-800.0)));
}

TEST_CASE("mse against a hand-computed value") {
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1, 1, 1, 1;
  // squared diffs: 0, 1, 4, 9 -> mean 3.5
  REQUIRE(mse(a, b) == Catch::Approx(3.5));
  const Mat g = mse_grad(a, b);
  REQUIRE(g(0, 0) == 0.0);
  REQUIRE(g(1, 1) == Catch::Approx(2.0 * 3.0 / 4.0));
  Mat c(1, 2);
  REQUIRE_THROWS_AS(mse(a, c), shape_error);
}

TEST_CASE("bce with logits matches direct evaluation") {
  // -[t log s + (1-t) log(1-s)] evaluated through the stable form
  const double logit = 0.7, target = 1.0;
  const double s = 1.0 / (1.0 + std::exp(-logit));
  REQUIRE(bce_with_logits(logit, target) == Catch::Approx(-std::log(s)));
  REQUIRE(bce_with_logits(-3.0, 0.0) ==
          Catch::Approx(-std::log(1.0 - 1.0 / (1.0 + std::exp(3.0)))));
  REQUIRE(bce_with_logits_grad(logit, 1.0) == Catch::Approx(s - 1.0));

  Mat logits(1, 3);
  logits << -1.0, 0.0, 2.0;
  double expect = 0.0;
  for (int j = 0; j < 3; ++j) expect += bce_with_logits(logits(0, j), 1.0);
  REQUIRE(bce_with_logits_mean(logits, 1.0) == Catch::Approx(expect / 3.0));
}

TEST_CASE("bce mean gradient agrees with finite differences") {
  Mat logits(2, 3);
  logits << -0.4, 0.8, 1.3, 0.2, -2.0, 0.5;
  for (double target : {0.0, 1.0}) {
    const Mat g = bce_with_logits_mean_grad(logits, target);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      Mat up = logits, dn = logits;
      up.data()[k] += h;
      dn.data()[k] -= h;
      const double num =
          (bce_with_logits_mean(up, target) - bce_with_logits_mean(dn, target)) /
          (2 * h);
      REQUIRE(g.data()[k] == Catch::Approx(num).margin(1e-6));
    }
  }
}

TEST_CASE("softmax and cross entropy oracles") {
  Vec logits(3);
  logits << 1.0, 2.0, 3.0;
  const Vec p = softmax(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  REQUIRE(p(0) == Catch::Approx(std::exp(1.0) / z));
  REQUIRE(p.sum() == Catch::Approx(1.0));

  // shift invariance keeps huge logits finite
  Vec big(2);
  big << 1000.0, 1001.0;
  const Vec pb = softmax(big);
  REQUIRE(std::isfinite(pb(0)));
  REQUIRE(pb(1) == Catch::Approx(1.0 / (1.0 + std::exp(-1.0))));

  Mat batch(3, 2);
  batch.col(0) = logits;
  batch.col(1) << 0.5, 0.5, 0.5;
  std::vector<int> labels{2, 0};
  Mat dlogits;
  const double loss = softmax_cross_entropy(batch, labels, &dlogits);
  const double expect =
      0.5 * (-std::log(std::exp(3.0) / z) - std::log(1.0 / 3.0));
  REQUIRE(loss == Catch::Approx(expect));

  const double h = 1e-6;
  for (Eigen::Index k = 0; k < batch.size(); ++k) {
    Mat up = batch, dn = batch;
    up.data()[k] += h;
    dn.data()[k] -= h;
    const double num = (softmax_cross_entropy(up, labels, nullptr) -
                        softmax_cross_entropy(dn, labels, nullptr)) /
                       (2 * h);
    REQUIRE(dlogits.data()[k] == Catch::Approx(num).margin(1e-6));
  }
}

TEST_CASE("adam first step moves each weight by lr") {
  // with fresh state, m-hat/(sqrt(v-hat)+eps) == g/(|g|+eps), so the first
  // update is lr * sign(g) up to eps rounding
  ParameterStore ps;
  ps.create("w", 2, 1) << 1.0, -2.0;
  ParameterStore g = ps.zeros_like();
  g.at("w") << 0.3, -0.1;
  Adam opt(AdamConfig{.lr = 0.01});
  opt.step(ps, g);
  REQUIRE(ps.at("w")(0, 0) == Catch::Approx(1.0 - 0.01).epsilon(1e-6));
  REQUIRE(ps.at("w")(1, 0) == Catch::Approx(-2.0 + 0.01).epsilon(1e-6));

  g.at("w")(0, 0) = std::nan("");
  REQUIRE_THROWS_AS(opt.step(ps, g), numerical_error);
}

TEST_CASE("adam converges on a quadratic bowl") {
  ParameterStore ps;
  ps.create("w", 3, 1) << 4.0, -3.0, 2.0;
  Adam opt(AdamConfig{.lr = 0.05});
  for (int i = 0; i < 2000; ++i) {
    ParameterStore g = ps.zeros_like();
    g.at("w") = 2.0 * ps.at("w");
    opt.step(ps, g);
  }
  REQUIRE(ps.at("w").norm() < 1e-3);
}

// --- recurrent cells against closed-form values -----------------------

TEST_CASE("gru cell with zero parameters") {
  // all-zero parameters: z = r = 1/2, candidate = tanh(0) = 0,
  // so h = (1 - 1/2) h_prev = h_prev / 2
  GruStackConfig cfg{.layers = 1, .hidden = 2, .input_dim = 2};
  GruStack stack(cfg);
  ParameterStore ps;
  Rng rng(0);
  stack.create_params(ps, rng);
  ps.set_zero();

  Vec x(2), h0(2);
  x << 0.3, -0.7;
  h0.setZero();
  const Vec h1 = gru_cell(x, h0, ps);
  REQUIRE(h1.isZero());

  Vec hprev(2);
  hprev << 1.0, -2.0;
  const Vec h2 = gru_cell(x, hprev, ps);
  REQUIRE(h2(0) == Catch::Approx(0.5));
  REQUIRE(h2(1) == Catch::Approx(-1.0));
}

TEST_CASE("gru cell matches a scalar hand computation") {
  // scalar gru, x=1, h_prev=0.5, all weights 1, biases 0:
  //   z = r = sigmoid(1 + 0.5), hc = tanh(1 + r*0.5)
  GruStackConfig cfg{.layers = 1, .hidden = 1, .input_dim = 1};
  GruStack stack(cfg);
  ParameterStore ps;
  Rng rng(0);
  stack.create_params(ps, rng);
  for (std::size_t i = 0; i < ps.size(); ++i) ps.value(i).setConstant(1.0);
  ps.at("l0.bz").setZero();
  ps.at("l0.br").setZero();
  ps.at("l0.bh").setZero();

  Vec x(1), h(1);
  x << 1.0;
  h << 0.5;
  const double zg = 1.0 / (1.0 + std::exp(-1.5));
  const double rg = zg;
  const double hc = std::tanh(1.0 + rg * 0.5);
  const double expect = (1.0 - zg) * 0.5 + zg * hc;
  REQUIRE(gru_cell(x, h, ps)(0) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gru stack forward equals repeated cell application") {
  const int T = 5, B = 3, D = 2, H = 4;
  GruStackConfig cfg{.layers = 2, .hidden = H, .input_dim = D};
  GruStack stack(cfg);
  ParameterStore ps;
  Rng rng(11);
  stack.create_params(ps, rng);

  Rng data(21);
  Mat X(D, T * B);
  for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = data.uniform(-1, 1);

  const Mat Hseq = stack.forward(ps, X, T, B, nullptr);
  REQUIRE(Hseq.rows() == H);
  REQUIRE(Hseq.cols() == T * B);

  // replay sequence b via gru_cell, layer by layer
  for (int b = 0; b < B; ++b) {
    Vec h0 = Vec::Zero(H), h1 = Vec::Zero(H);
    for (int t = 0; t < T; ++t) {
      h0 = gru_cell(Vec(X.col(t * B + b)), h0, ps, 0);
      h1 = gru_cell(h0, h1, ps, 1);
      for (int i = 0; i < H; ++i) {
        REQUIRE(Hseq(i, t * B + b) == Catch::Approx(h1(i)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("lstm cell with zero parameters halves nothing and gates to zero") {
  // zero parameters: i=f=o=1/2, g=0, c = c_prev/2, h = tanh(c)/2
  LstmConfig cfg{.input_dim = 2, .hidden = 2};
  LstmLayer layer(cfg, "");
  ParameterStore ps;
  Rng rng(0);
  layer.create_params(ps, rng);
  ps.set_zero();

  Vec x(2), h0(2), c0(2);
  x << 0.4, -0.2;
  h0.setZero();
  c0 << 1.0, -3.0;
  const auto [h, c] = lstm_cell(x, h0, c0, ps);
  REQUIRE(c(0) == Catch::Approx(0.5));
  REQUIRE(c(1) == Catch::Approx(-1.5));
  REQUIRE(h(0) == Catch::Approx(0.5 * std::tanh(0.5)));
  REQUIRE(h(1) == Catch::Approx(0.5 * std::tanh(-1.5)));
}

TEST_CASE("lstm forward equals repeated cell application with masking") {
  const int T = 4, B = 2, D = 3, H = 3;
  LstmLayer layer(LstmConfig{.input_dim = D, .hidden = H}, "fw.");
  ParameterStore ps;
  Rng rng(5);
  layer.create_params(ps, rng);

  Rng data(17);
  Mat X(D, T * B);
  for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = data.uniform(-1, 1);
  // sequence 0 runs full length, sequence 1 stops after 2 steps
  Mat mask = Mat::Ones(1, T * B);
  mask(0, 2 * B + 1) = 0.0;
  mask(0, 3 * B + 1) = 0.0;

  const Mat Hseq = layer.forward(ps, X, T, B, &mask, nullptr);

  for (int b = 0; b < B; ++b) {
    Vec h = Vec::Zero(H), c = Vec::Zero(H);
    for (int t = 0; t < T; ++t) {
      if (mask(0, t * B + b) != 0.0) {
        std::tie(h, c) = lstm_cell(Vec(X.col(t * B + b)), h, c, ps, "fw.");
      }
      for (int i = 0; i < H; ++i) {
        REQUIRE(Hseq(i, t * B + b) == Catch::Approx(h(i)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("reverse_time flips blocks and round-trips") {
  Mat X(1, 6);
  X << 0, 1, 10, 11, 20, 21;  // T=3, B=2
  const Mat R = reverse_time(X, 3, 2);
  Mat expect(1, 6);
  expect << 20, 21, 10, 11, 0, 1;
  REQUIRE(R == expect);
  REQUIRE(reverse_time(R, 3, 2) == X);
}

// --- analytic gradients vs central differences ------------------------

namespace {

double rel_tol_for_reports() { return 1e-4; }

Mat random_mat(Rng& rng, int rows, int cols, double scale) {
  Mat m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    m.data()[k] = rng.uniform(-scale, scale);
  }
  return m;
}

}  // namespace

TEST_CASE("dense gradients match finite differences") {
  Rng rng(31);
  for (auto act : {Activation::identity, Activation::sigmoid,
                   Activation::relu, Activation::tanh}) {
    Dense dense(3, 2, act, "d.");
    ParameterStore ps;
    dense.create_params(ps, rng);
    const Mat X = random_mat(rng, 3, 5, 1.0);
    const Mat target = random_mat(rng, 2, 5, 1.0);

    auto loss = [&]() {
      return mse(dense.forward(ps, X, nullptr), target);
    };
    Dense::Cache cache;
    const Mat Y = dense.forward(ps, X, &cache);
    ParameterStore grads = ps.zeros_like();
    dense.backward(ps, cache, mse_grad(Y, target), &grads, false);

    const auto report = grad_check(loss, ps, grads);
    INFO("activation " << static_cast<int>(act) << " worst " << report.worst);
    REQUIRE(report.ok(rel_tol_for_reports()));
  }
}

TEST_CASE("dense input gradient matches finite differences") {
  Rng rng(37);
  Dense dense(4, 3, Activation::tanh, "d.");
  ParameterStore ps;
  dense.create_params(ps, rng);
  Mat X = random_mat(rng, 4, 6, 1.0);
  const Mat target = random_mat(rng, 3, 6, 1.0);

  Dense::Cache cache;
  const Mat Y = dense.forward(ps, X, &cache);
  const Mat dX = dense.backward(ps, cache, mse_grad(Y, target), nullptr, true);

  const double h = 1e-6;
  for (Eigen::Index k = 0; k < X.size(); ++k) {
    const double saved = X.data()[k];
    X.data()[k] = saved + h;
    const double up = mse(dense.forward(ps, X, nullptr), target);
    X.data()[k] = saved - h;
    const double dn = mse(dense.forward(ps, X, nullptr), target);
    X.data()[k] = saved;
    REQUIRE(dX.data()[k] == Catch::Approx((up - dn) / (2 * h)).margin(1e-5));
  }
}

TEST_CASE("gru stack gradients match finite differences") {
  const int T = 6, B = 3, D = 2, H = 3;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GruStack stack(GruStackConfig{.layers = 2, .hidden = H, .input_dim = D});
    ParameterStore ps;
    Rng rng(seed);
    stack.create_params(ps, rng);

    Rng data(seed + 100);
    const Mat X = random_mat(data, D, T * B, 1.0);
    const Mat target = random_mat(data, H, T * B, 0.5);

    auto loss = [&]() { return mse(stack.forward(ps, X, T, B, nullptr), target); };

    GruStack::Cache cache;
    const Mat Hseq = stack.forward(ps, X, T, B, &cache);
    ParameterStore grads = ps.zeros_like();
    stack.backward(ps, cache, mse_grad(Hseq, target), &grads, false);

    const auto report = grad_check(loss, ps, grads);
    INFO("seed " << seed << " worst " << report.worst);
    REQUIRE(report.ok(rel_tol_for_reports()));
  }
}

TEST_CASE("gru input gradients match finite differences") {
  const int T = 4, B = 2, D = 3, H = 2;
  GruStack stack(GruStackConfig{.layers = 1, .hidden = H, .input_dim = D});
  ParameterStore ps;
  Rng rng(9);
  stack.create_params(ps, rng);

  Rng data(19);
  Mat X = random_mat(data, D, T * B, 1.0);
  const Mat target = random_mat(data, H, T * B, 0.5);

  GruStack::Cache cache;
  const Mat Hseq = stack.forward(ps, X, T, B, &cache);
  const Mat dX = stack.backward(ps, cache, mse_grad(Hseq, target), nullptr, true);

  const double h = 1e-6;
  for (Eigen::Index k = 0; k < X.size(); ++k) {
    const double saved = X.data()[k];
    X.data()[k] = saved + h;
    const double up = mse(stack.forward(ps, X, T, B, nullptr), target);
    X.data()[k] = saved - h;
    const double dn = mse(stack.forward(ps, X, T, B, nullptr), target);
    X.data()[k] = saved;
    REQUIRE(dX.data()[k] == Catch::Approx((up - dn) / (2 * h)).margin(1e-5));
  }
}

TEST_CASE("lstm gradients match finite differences under a ragged mask") {
  const int T = 5, B = 3, D = 2, H = 3;
  for (std::uint64_t seed : {4u, 5u}) {
    LstmLayer layer(LstmConfig{.input_dim = D, .hidden = H}, "m.");
    ParameterStore ps;
    Rng rng(seed);
    layer.create_params(ps, rng);

    Rng data(seed + 50);
    const Mat X = random_mat(data, D, T * B, 1.0);
    Mat mask = Mat::Ones(1, T * B);
    // sequences end at t = 5, 3, 4
    for (int t = 3; t < T; ++t) mask(0, t * B + 1) = 0.0;
    mask(0, 4 * B + 2) = 0.0;
    const Mat target = random_mat(data, H, T * B, 0.5);

    // score only unmasked states so padding cannot leak into the loss
    auto masked_mse = [&](const Mat& Hseq) {
      Mat diff = Hseq - target;
      for (Eigen::Index c = 0; c < diff.cols(); ++c) {
        if (mask(0, c) == 0.0) diff.col(c).setZero();
      }
      return diff.squaredNorm() / static_cast<double>(diff.size());
    };
    auto loss = [&]() {
      return masked_mse(layer.forward(ps, X, T, B, &mask, nullptr));
    };

    LstmLayer::Cache cache;
    const Mat Hseq = layer.forward(ps, X, T, B, &mask, &cache);
    Mat dH = (Hseq - target) * (2.0 / static_cast<double>(Hseq.size()));
    for (Eigen::Index c = 0; c < dH.cols(); ++c) {
      if (mask(0, c) == 0.0) dH.col(c).setZero();
    }
    ParameterStore grads = ps.zeros_like();
    layer.backward(ps, cache, dH, &grads, false);

    const auto report = grad_check(loss, ps, grads);
    INFO("seed " << seed << " worst " << report.worst);
    REQUIRE(report.ok(rel_tol_for_reports()));
  }
}

TEST_CASE("grad_check flags a wrong gradient") {
  ParameterStore ps;
  ps.create("w", 2, 1) << 0.5, -0.25;
  auto loss = [&]() { return ps.at("w").squaredNorm(); };
  ParameterStore good = ps.zeros_like();
  good.at("w") = 2.0 * ps.at("w");
  REQUIRE(grad_check(loss, ps, good).ok(1e-6));

  ParameterStore bad = ps.zeros_like();
  bad.at("w") = 3.0 * ps.at("w");
  REQUIRE_FALSE(grad_check(loss, ps, bad).ok(1e-3));
}
