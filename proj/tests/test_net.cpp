#include <doctest.h>

#include <cmath>

#include "evocl/net.hpp"

using namespace evocl;

namespace {

LayerSpec make_spec(std::vector<int> widths, Activation act = Activation::relu) {
  LayerSpec s;
  s.widths = std::move(widths);
  s.hidden_activation = act;
  return s;
}

// Central finite differences over the flat parameter vector.
Vector numeric_gradient(DenseNet net, const std::function<double(const DenseNet&)>& loss,
                        double h = 1e-5) {
  Vector g(net.params.size());
  for (Eigen::Index i = 0; i < net.params.size(); ++i) {
    const double keep = net.params(i);
    net.params(i) = keep + h;
    const double up = loss(net);
    net.params(i) = keep - h;
    const double dn = loss(net);
    net.params(i) = keep;
    g(i) = (up - dn) / (2.0 * h);
  }
  return g;
}

double max_relative_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a(i)), std::abs(b(i)), 1e-8});
    worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("parameter count formula") {
  CHECK(make_spec({784, 100, 100, 64}).param_count() ==
        784 * 100 + 100 + 100 * 100 + 100 + 100 * 64 + 64);
  CHECK(make_spec({784, 100, 100, 64}).param_count() == 95064);
  CHECK(make_spec({2, 1}).param_count() == 3);
}

TEST_CASE("init_network: deterministic, zero biases, fan-in scaling") {
  const LayerSpec spec = make_spec({784, 100, 100, 64});
  const DenseNet a = init_network(spec, 7);
  const DenseNet b = init_network(spec, 7);
  CHECK(a.params.size() == 95064);
  CHECK(a.params == b.params);  // bit-identical
  for (int l = 0; l < spec.num_layers(); ++l)
    CHECK(a.biases(l).cwiseAbs().maxCoeff() == 0.0);
  const DenseNet c = init_network(spec, 8);
  CHECK(a.params != c.params);
  // relu layers scale by sqrt(2/fan_in): check the empirical std is close
  const double std0 = std::sqrt(a.weights(0).array().square().mean());
  CHECK(std0 == doctest::Approx(std::sqrt(2.0 / 784)).epsilon(0.05));
}

TEST_CASE("init_network rejects invalid specs") {
  CHECK_THROWS_AS(init_network(make_spec({5}), 1), std::invalid_argument);
  CHECK_THROWS_AS(init_network(make_spec({}), 1), std::invalid_argument);
  CHECK_THROWS_AS(init_network(make_spec({4, 0, 2}), 1), std::invalid_argument);
}

TEST_CASE("forward: zero params give zero output") {
  DenseNet net{make_spec({3, 4, 2}), Vector::Zero(make_spec({3, 4, 2}).param_count())};
  Matrix x = Matrix::Random(5, 3);
  CHECK(forward(net, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: 1x1 affine") {
  DenseNet net{make_spec({1, 1}), Vector(2)};
  net.params << 2.0, 0.5;  // weight, bias
  Matrix x(1, 1);
  x << 3.0;
  CHECK(forward(net, x)(0, 0) == doctest::Approx(6.5).epsilon(1e-15));
}

TEST_CASE("forward matches a hand-computed chain") {
  // widths [2,2,1]; hand-set weights; oracle computed with scalar arithmetic
  LayerSpec spec = make_spec({2, 2, 1});
  DenseNet net{spec, Vector(spec.param_count())};
  // layer 0: W (2x2, column-major) = [[0.5, -1.0], [2.0, 0.25]], b = [0.1, -0.2]
  // layer 1: W (2x1) = [[1.5], [-0.5]], b = [0.3]
  net.params << 0.5, 2.0, -1.0, 0.25, 0.1, -0.2, 1.5, -0.5, 0.3;
  Matrix x(1, 2);
  x << 1.0, 3.0;

  SUBCASE("relu") {
    // h_pre = [1*0.5 + 3*2.0 + 0.1, 1*(-1.0) + 3*0.25 - 0.2] = [6.6, -0.45]
    // relu  = [6.6, 0]; out = 6.6*1.5 - 0*0.5 + 0.3 = 10.2
    CHECK(forward(net, x)(0, 0) == doctest::Approx(10.2).epsilon(1e-12));
  }
  SUBCASE("tanh") {
    net.spec.hidden_activation = Activation::tanh;
    const double h0 = std::tanh(6.6), h1 = std::tanh(-0.45);
    const double expect = h0 * 1.5 + h1 * -0.5 + 0.3;
    CHECK(forward(net, x)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("forward over an external parameter block matches the owned one") {
  const LayerSpec spec = make_spec({4, 3, 2});
  const DenseNet net = init_network(spec, 3);
  Matrix x = Matrix::Random(6, 4);
  CHECK(forward(net, x) == forward(spec, net.params.data(), x));
}

TEST_CASE("forward rejects dimension mismatch") {
  const DenseNet net = init_network(make_spec({3, 2}), 1);
  CHECK_THROWS_AS(forward(net, Matrix::Random(4, 5)), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one") {
  Matrix logits = Matrix::Random(7, 5) * 3.0;
  Matrix p = softmax(logits);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.minCoeff() >= 0.0);
}

TEST_CASE("cross-entropy: uniform logits give ln K") {
  Matrix logits = Matrix::Zero(4, 10);
  std::vector<int> labels = {0, 3, 9, 5};
  CHECK(softmax_cross_entropy(logits, labels) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy: saturated logits stay finite and near zero") {
  Matrix logits(1, 2);
  logits << 1000.0, 0.0;
  const double loss = softmax_cross_entropy(logits, {0});
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
  // stability up to |logit| = 1e4 with the label on the losing column
  logits << -1e4, 1e4;
  CHECK(std::isfinite(softmax_cross_entropy(logits, {1})));
  CHECK(std::isfinite(softmax_cross_entropy(logits, {0})));
}

TEST_CASE("cross-entropy closed form on a two-logit row") {
  Matrix logits(1, 2);
  logits << 1.0, 2.0;
  // -log(e^2/(e^1+e^2)) = log(1+e^-1) = softplus(-1), evaluated independently
  const double oracle = std::log1p(std::exp(-1.0));
  CHECK(oracle == doctest::Approx(0.313262).epsilon(1e-5));
  CHECK(softmax_cross_entropy(logits, {1}) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("cross-entropy input validation") {
  Matrix logits = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, -1}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), std::invalid_argument);  // count mismatch
  CHECK_THROWS_AS(softmax_cross_entropy(Matrix(0, 3), {}), std::invalid_argument);
  CHECK(softmax_cross_entropy(logits, {0, 1}) >= 0.0);
}

TEST_CASE("mse basics and loop oracle") {
  Matrix a = Matrix::Random(3, 4), b = Matrix::Random(3, 4);
  CHECK(mse(a, a) == 0.0);
  Matrix p(1, 2), t(1, 2);
  p << 1.0, 0.0;
  t << 0.0, 0.0;
  CHECK(mse(p, t) == doctest::Approx(0.5).epsilon(1e-15));
  double acc = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) acc += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  CHECK(mse(a, b) == doctest::Approx(acc / 12.0).epsilon(1e-12));
  CHECK_THROWS_AS(mse(a, Matrix::Random(4, 3)), std::invalid_argument);
}

TEST_CASE("backward: zero inputs leave first-layer weights without gradient") {
  const LayerSpec spec = make_spec({3, 4, 2}, Activation::tanh);
  DenseNet net = init_network(spec, 5);
  Matrix x = Matrix::Zero(6, 3);
  // unbalanced labels, otherwise the per-example deltas cancel in the sum
  const Vector g = backward_cross_entropy(net, x, {0, 1, 1, 1, 1, 1});
  // layer-0 weight block occupies the first 3*4 flat entries
  CHECK(g.segment(0, 12).cwiseAbs().maxCoeff() == 0.0);
  // biases still receive signal
  CHECK(g.segment(12, 4).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("backward matches central finite differences") {
  // tanh keeps the loss smooth so the FD oracle is trustworthy at h=1e-5
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const LayerSpec spec = make_spec({4, 5, 3}, Activation::tanh);
    DenseNet net = init_network(spec, seed);
    auto rng = make_rng(seed, 99);
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix x(7, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2, 1};

    const Vector g_ce = backward_cross_entropy(net, x, labels);
    const Vector fd_ce = numeric_gradient(
        net, [&](const DenseNet& n) { return softmax_cross_entropy(forward(n, x), labels); });
    CHECK(max_relative_error(g_ce, fd_ce) < 1e-5);

    Matrix target(7, 3);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = dist(rng);
    const Vector g_mse = backward_mse(net, x, target);
    const Vector fd_mse =
        numeric_gradient(net, [&](const DenseNet& n) { return mse(forward(n, x), target); });
    CHECK(max_relative_error(g_mse, fd_mse) < 1e-5);
  }
}

TEST_CASE("backward on relu nets at pinned seeds (activation kinks avoided)") {
  const LayerSpec spec = make_spec({3, 4, 2}, Activation::relu);
  DenseNet net = init_network(spec, 11);
  auto rng = make_rng(11, 99);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  std::vector<int> labels = {0, 1, 1, 0, 1};
  const Vector g = backward_cross_entropy(net, x, labels);
  const Vector fd = numeric_gradient(
      net, [&](const DenseNet& n) { return softmax_cross_entropy(forward(n, x), labels); });
  CHECK(max_relative_error(g, fd) < 1e-5);
}

TEST_CASE("backward gradient is a descent direction") {
  const LayerSpec spec = make_spec({4, 6, 3}, Activation::relu);
  DenseNet net = init_network(spec, 21);
  auto rng = make_rng(21, 99);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x(8, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  const double before = softmax_cross_entropy(forward(net, x), labels);
  const Vector g = backward_cross_entropy(net, x, labels);
  DenseNet stepped = net;
  stepped.params -= 0.01 * g;
  CHECK(softmax_cross_entropy(forward(stepped, x), labels) < before);
}

TEST_CASE("chained backprop differentiates a two-net composite") {
  // loss = ce(head(extractor(x))); compare against FD over both nets' params
  const LayerSpec espec = make_spec({3, 4, 3}, Activation::tanh);
  const LayerSpec hspec = make_spec({3, 2}, Activation::tanh);
  DenseNet ext = init_network(espec, 31);
  DenseNet head = init_network(hspec, 32);
  auto rng = make_rng(31, 99);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  std::vector<int> labels = {0, 1, 0, 1, 0};

  const Matrix z = forward(ext, x);
  Matrix gz;
  const Vector gh = backward_cross_entropy(head, z, labels, &gz);
  const Vector ge = backprop(ext, x, gz);

  const Vector fd_h = numeric_gradient(head, [&](const DenseNet& h) {
    return softmax_cross_entropy(forward(h, forward(ext, x)), labels);
  });
  CHECK(max_relative_error(gh, fd_h) < 1e-5);
  const Vector fd_e = numeric_gradient(ext, [&](const DenseNet& e) {
    return softmax_cross_entropy(forward(head, forward(e, x)), labels);
  });
  CHECK(max_relative_error(ge, fd_e) < 1e-5);
}

TEST_CASE("sgd_step") {
  DenseNet net{make_spec({1, 1}), Vector(2)};
  net.params << 1.0, 0.0;
  Vector g(2);
  g << 2.0, 0.0;
  sgd_step(net, g, 0.0);
  CHECK(net.params(0) == 1.0);
  sgd_step(net, g, 0.5);
  CHECK(net.params(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(sgd_step(net, Vector::Zero(5), 0.1), std::invalid_argument);

  // quadratic f(w) = w^2 from w=1 with lr 0.1: w_k = 0.8^k, below 1e-3 by k=100
  net.params << 1.0, 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector grad(2);
    grad << 2.0 * net.params(0), 0.0;
    sgd_step(net, grad, 0.1);
  }
  CHECK(net.params(0) * net.params(0) < 1e-6);
}

TEST_CASE("flat parameter plumbing") {
  const LayerSpec spec = make_spec({3, 4, 2});
  DenseNet net = init_network(spec, 13);
  CHECK(flatten_params(net).size() == spec.param_count());

  Matrix x = Matrix::Random(4, 3);
  const Matrix before = forward(net, x);
  DenseNet other = init_network(spec, 14);
  set_params(other, flatten_params(net));
  CHECK(forward(other, x) == before);  // bit-identical round trip
  CHECK_THROWS_AS(set_params(other, Vector::Zero(7)), std::invalid_argument);

  // flipping one flat entry changes exactly one weight-or-bias coefficient
  Vector v = flatten_params(net);
  const Eigen::Index idx = 5;  // inside layer-0 weights
  v(idx) += 1.0;
  DenseNet bumped = net;
  set_params(bumped, v);
  int changed = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    changed += static_cast<int>((bumped.weights(l).array() != net.weights(l).array()).count());
    changed += static_cast<int>((bumped.biases(l).array() != net.biases(l).array()).count());
  }
  CHECK(changed == 1);
}

TEST_CASE("batch validation") {
  Batch b;
  b.inputs = Matrix::Random(3, 2);
  b.labels = {0, 1, 2};
  CHECK_NOTHROW(b.validate(3));
  CHECK_THROWS_AS(b.validate(2), std::invalid_argument);  // label 2 outside universe
  b.labels = {0, 1};
  CHECK_THROWS_AS(b.validate(3), std::invalid_argument);  // row/label count mismatch
}
