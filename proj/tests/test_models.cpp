#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "corefed/models.hpp"
#include "corefed/rng.hpp"
#include "support/test_support.hpp"

using namespace corefed;
using testsup::tiny_dataset;

TEST_CASE("predict: linear and logistic closed forms") {
  auto lin = ModelSpec::lin_reg(2);
  Predictor zero = Predictor::zeros(lin);
  Eigen::VectorXd x(2);
  x << 3, 4;
  CHECK(predict(lin, zero, x)(0) == 0.0);

  Predictor theta = Predictor::from_flat(lin, Eigen::Vector2d(1, 2));
  CHECK(predict(lin, theta, x)(0) == 11.0);  // 1*3 + 2*4

  auto logreg = ModelSpec::log_reg(1);
  Eigen::VectorXd x1(1);
  x1 << 5;
  CHECK(predict(logreg, Predictor::zeros(logreg), x1)(0) == 0.5);
}

TEST_CASE("predict: dimension and kind errors") {
  auto lin = ModelSpec::lin_reg(2);
  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(predict(lin, Predictor::zeros(lin), bad), DimensionMismatch);

  auto toy = ModelSpec::simplex_toy(3);
  Eigen::VectorXd none(0);
  CHECK_THROWS_AS(predict(toy, Predictor::zeros(toy), none), UnsupportedForKind);
}

TEST_CASE("loss: closed-form values") {
  auto lin = ModelSpec::lin_reg(1);
  CHECK(loss(lin, Predictor::zeros(lin), tiny_dataset({{1.0}}, {1.0})) == 1.0);

  auto logreg = ModelSpec::log_reg(1, 1.0);
  CHECK_THAT(loss(logreg, Predictor::zeros(logreg), tiny_dataset({{1.0}}, {1.0})),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

  auto toy = ModelSpec::simplex_toy(3);
  Predictor uniform = Predictor::from_flat(toy, Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3));
  CHECK_THAT(loss(toy, uniform, simplex_agent_dataset(0)),
             Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("loss: empty dataset and bad labels") {
  auto lin = ModelSpec::lin_reg(1);
  LabeledDataset empty;
  empty.features.resize(0, 1);
  empty.targets.resize(0);
  CHECK_THROWS_AS(loss(lin, Predictor::zeros(lin), empty), EmptyDataset);

  auto logreg = ModelSpec::log_reg(1);
  CHECK_THROWS_AS(loss(logreg, Predictor::zeros(logreg), tiny_dataset({{1.0}}, {0.5})),
                  InvalidShape);
}

TEST_CASE("loss_gradient: closed-form values") {
  auto lin = ModelSpec::lin_reg(1);
  Predictor one = Predictor::from_flat(lin, Eigen::VectorXd::Ones(1));
  Eigen::VectorXd g = loss_gradient(lin, one, tiny_dataset({{1.0}}, {0.0}));
  CHECK_THAT(g(0), Catch::Matchers::WithinAbs(2.0, 1e-12));  // d/dtheta theta^2

  auto logreg = ModelSpec::log_reg(1, 0.0);
  Eigen::VectorXd g2 = loss_gradient(logreg, Predictor::zeros(logreg),
                                     tiny_dataset({{1.0}, {1.0}}, {1.0, -1.0}));
  CHECK(g2.norm() == 0.0);  // symmetric cancellation, alpha = 0 kills the rest

  auto toy = ModelSpec::simplex_toy(3);
  Predictor uniform = Predictor::from_flat(toy, Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3));
  Eigen::VectorXd g3 = loss_gradient(toy, uniform, simplex_agent_dataset(1));
  CHECK(g3(0) == 0.0);
  CHECK(g3(1) == -1.0);
  CHECK(g3(2) == 0.0);
}

TEST_CASE("loss_gradient matches central finite differences on random configs") {
  // 100 random (model, data, theta) configs across all four families
  auto eng = rng::make_engine(20240601);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelSpec spec;
    switch (trial % 4) {
      case 0: spec = ModelSpec::lin_reg(1 + static_cast<int>(eng() % 5)); break;
      case 1: spec = ModelSpec::log_reg(1 + static_cast<int>(eng() % 5),
                                        rng::uniform01(eng) * 2.0); break;
      case 2: {
        int in = 2 + static_cast<int>(eng() % 3);
        int hidden = 2 + static_cast<int>(eng() % 4);
        int classes = 2 + static_cast<int>(eng() % 3);
        spec = ModelSpec::smooth_mlp(in, {hidden, classes});
        break;
      }
      default: spec = ModelSpec::simplex_toy(2 + static_cast<int>(eng() % 4)); break;
    }
    auto data = testsup::random_dataset(spec, 4 + static_cast<int>(eng() % 12), eng);
    auto theta = testsup::random_predictor(spec, eng);

    Eigen::VectorXd analytic = loss_gradient(spec, theta, data);
    Eigen::VectorXd numeric = testsup::central_diff_gradient(
        [&](const Eigen::VectorXd& v) { return loss(spec, Predictor::from_flat(spec, v), data); },
        theta.flat());
    INFO("trial " << trial << " kind " << static_cast<int>(spec.kind));
    CHECK(testsup::rel_err(analytic, numeric) <= 1e-5);
    ++checked;
  }
  REQUIRE(checked == 100);
}

TEST_CASE("linear and logistic losses are convex along random chords") {
  auto eng = rng::make_engine(77001);
  for (int trial = 0; trial < 50; ++trial) {
    ModelSpec spec = trial % 2 == 0
                         ? ModelSpec::lin_reg(1 + static_cast<int>(eng() % 4))
                         : ModelSpec::log_reg(1 + static_cast<int>(eng() % 4),
                                              rng::uniform01(eng) * 2.0);
    auto data = testsup::random_dataset(spec, 6, eng);
    auto a = testsup::random_predictor(spec, eng, 1.0);
    auto b = testsup::random_predictor(spec, eng, 1.0);
    double lam = rng::uniform01(eng);
    Eigen::VectorXd mid = lam * a.flat() + (1.0 - lam) * b.flat();
    double lhs = loss(spec, Predictor::from_flat(spec, mid), data);
    double rhs = lam * loss(spec, a, data) + (1.0 - lam) * loss(spec, b, data);
    CHECK(lhs <= rhs + 1e-10);
    CHECK(loss(spec, a, data) >= 0.0);
  }
}

TEST_CASE("loss and predict are deterministic") {
  auto eng = rng::make_engine(5150);
  auto spec = ModelSpec::smooth_mlp(3, {4, 2});
  auto data = testsup::random_dataset(spec, 8, eng);
  auto theta = testsup::random_predictor(spec, eng);
  double l1 = loss(spec, theta, data);
  double l2 = loss(spec, theta, data);
  CHECK(l1 == l2);
  Eigen::VectorXd x = data.features.row(0).transpose();
  CHECK(predict(spec, theta, x) == predict(spec, theta, x));
}

TEST_CASE("hvp_estimate: quadratic, flat and antisymmetric cases") {
  auto lin = ModelSpec::lin_reg(1);
  Predictor theta = Predictor::from_flat(lin, Eigen::VectorXd::Ones(1));
  Eigen::VectorXd v = Eigen::VectorXd::Ones(1);

  // loss = theta^2 has Hessian 2
  Eigen::VectorXd hv = hvp_estimate(lin, theta, tiny_dataset({{1.0}}, {0.0}), v);
  CHECK_THAT(hv(0), Catch::Matchers::WithinAbs(2.0, 1e-7));

  // zero features make the loss flat in theta
  Eigen::VectorXd flat = hvp_estimate(lin, theta, tiny_dataset({{0.0}}, {1.0}), v);
  CHECK_THAT(flat(0), Catch::Matchers::WithinAbs(0.0, 1e-9));

  auto logreg = ModelSpec::log_reg(2, 1.5);
  auto eng = rng::make_engine(999);
  auto data = testsup::random_dataset(logreg, 6, eng);
  auto t2 = testsup::random_predictor(logreg, eng);
  Eigen::VectorXd dir(3);
  dir << 0.3, -1.2, 0.5;
  Eigen::VectorXd plus = hvp_estimate(logreg, t2, data, dir);
  Eigen::VectorXd minus = hvp_estimate(logreg, t2, data, Eigen::VectorXd(-dir));
  CHECK(testsup::rel_err(plus, Eigen::VectorXd(-minus)) <= 1e-8);

  CHECK_THROWS_AS(hvp_estimate(lin, theta, tiny_dataset({{1.0}}, {0.0}),
                               Eigen::VectorXd::Zero(1)),
                  DegenerateDirection);
}

TEST_CASE("loss: overflow surfaces as NumericOverflow") {
  auto lin = ModelSpec::lin_reg(1);
  Predictor huge = Predictor::from_flat(lin, Eigen::VectorXd::Constant(1, 1e200));
  CHECK_THROWS_AS(loss(lin, huge, tiny_dataset({{1e200}}, {0.0})), NumericOverflow);
}

TEST_CASE("model spec validation") {
  CHECK_THROWS_AS(ModelSpec::log_reg(2, -0.5), InvalidParams);
  CHECK_THROWS_AS(ModelSpec::smooth_mlp(2, {3}), InvalidShape);  // no hidden layer
  CHECK_THROWS_AS(ModelSpec::lin_reg(0), InvalidShape);
  CHECK_THROWS_AS(Predictor::from_flat(ModelSpec::lin_reg(2), Eigen::VectorXd::Zero(3)),
                  DimensionMismatch);
}
