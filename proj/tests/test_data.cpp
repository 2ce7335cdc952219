#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "corefed/data.hpp"
#include "corefed/solver.hpp"
#include "support/test_support.hpp"

using namespace corefed;

namespace {

// Test-local reference reimplementation of the seeded Dirichlet split:
// same engine construction, Marsaglia-Tsang gamma draws, and
// largest-remainder rounding, written independently of data.hpp.
std::vector<int> reference_dirichlet_split(int n_samples, int n_agents, double alpha,
                                           std::uint64_t seed) {
  auto eng = rng::make_engine(seed, {0x646972696368ULL});
  std::vector<double> gammas(static_cast<std::size_t>(n_agents));
  double total = 0.0;
  for (auto& g : gammas) {
    g = rng::gamma(eng, alpha);
    total += g;
  }
  std::vector<double> exact(static_cast<std::size_t>(n_agents));
  std::vector<int> counts(static_cast<std::size_t>(n_agents));
  int assigned = 0;
  for (int a = 0; a < n_agents; ++a) {
    exact[static_cast<std::size_t>(a)] = gammas[static_cast<std::size_t>(a)] / total * n_samples;
    counts[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(exact[static_cast<std::size_t>(a)]));
    assigned += counts[static_cast<std::size_t>(a)];
  }
  std::vector<std::pair<double, int>> rem;
  for (int a = 0; a < n_agents; ++a)
    rem.emplace_back(-(exact[static_cast<std::size_t>(a)] -
                       std::floor(exact[static_cast<std::size_t>(a)])),
                     a);
  std::sort(rem.begin(), rem.end());
  for (int r = 0; r < n_samples - assigned; ++r) counts[static_cast<std::size_t>(rem[static_cast<std::size_t>(r)].second)] += 1;

  std::vector<int> assignment;
  for (int a = 0; a < n_agents; ++a)
    for (int c = 0; c < counts[static_cast<std::size_t>(a)]; ++c) assignment.push_back(a);
  return assignment;
}

std::string write_temp_csv(const std::string& name, const std::string& content) {
  std::string path = std::string("/tmp/corefed_test_") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("gen_synthetic_regression: noiseless line, determinism, OLS recovery") {
  Eigen::VectorXd true_theta(1);
  true_theta << 1.0;
  auto ds = gen_synthetic_regression(1, 1, true_theta, 0.0, 7);
  CHECK(ds.targets(0) == ds.features(0, 0));

  auto a = gen_synthetic_regression(50, 3, Eigen::Vector3d(1.0, -2.0, 0.5), 0.3, 42);
  auto b = gen_synthetic_regression(50, 3, Eigen::Vector3d(1.0, -2.0, 0.5), 0.3, 42);
  CHECK(a.features == b.features);
  CHECK(a.targets == b.targets);

  // closed-form normal equations recover the generator's coefficients
  Eigen::Vector3d truth(0.7, -1.1, 2.2);
  auto clean = gen_synthetic_regression(200, 3, truth, 0.0, 11);
  Eigen::VectorXd ols = (clean.features.transpose() * clean.features)
                            .ldlt()
                            .solve(clean.features.transpose() * clean.targets);
  CHECK((ols - truth).norm() <= 1e-8);

  CHECK_THROWS_AS(gen_synthetic_regression(0, 1, true_theta, 0.0, 1), InvalidShape);
}

TEST_CASE("gen_synthetic_classification: balance, determinism, separability") {
  auto ds = gen_synthetic_classification(10, 2, 2, 1.0, 5);
  int zeros = 0;
  for (int i = 0; i < ds.size(); ++i) zeros += ds.targets(i) == 0.0 ? 1 : 0;
  CHECK(zeros == 5);

  auto a = gen_synthetic_classification(40, 3, 3, 2.0, 9);
  auto b = gen_synthetic_classification(40, 3, 3, 2.0, 9);
  CHECK(a.features == b.features);

  // separation 10: a logistic fit reaches >= 99% training accuracy
  auto wide = as_signed_binary(gen_synthetic_classification(200, 2, 2, 10.0, 3));
  auto spec = ModelSpec::log_reg(2, 1.0);
  AgentProfile solo = testsup::agent_with(0, wide, 0.0);
  SolverConfig cfg;
  cfg.grad_tol = 1e-6;
  auto fit = maximize_agent_utility(solo, spec, cfg);
  int correct = 0;
  for (int i = 0; i < wide.size(); ++i) {
    double p = predict(spec, fit.theta_star, wide.features.row(i).transpose())(0);
    double label = p >= 0.5 ? 1.0 : -1.0;
    correct += label == wide.targets(i) ? 1 : 0;
  }
  CHECK(correct >= 198);

  CHECK_THROWS_AS(gen_synthetic_classification(10, 2, 1, 1.0, 5), InvalidShape);
}

TEST_CASE("dirichlet_partition: exact partition for all tested seeds and alphas") {
  auto pool = gen_synthetic_classification(120, 2, 3, 1.0, 21);
  for (double alpha : {0.1, 0.5, 1.0, 10.0}) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
      auto [plan, shards] = dirichlet_partition(pool, 4, alpha, seed);
      // every sample assigned exactly once, shard sizes sum to the total
      int total = 0;
      for (const auto& shard : shards) total += shard.size();
      CHECK(total == pool.size());
      for (int assignment : plan.assignments) {
        CHECK(assignment >= 0);
        CHECK(assignment < 4);
      }
      // per-agent rows of the label-mix matrix sum to 1 (when non-empty)
      for (int a = 0; a < 4; ++a) {
        double row = plan.per_agent_label_proportions.row(a).sum();
        if (shards[static_cast<std::size_t>(a)].size() > 0)
          CHECK_THAT(row, Catch::Matchers::WithinAbs(1.0, 1e-9));
      }
    }
  }
}

TEST_CASE("dirichlet_partition: single agent takes everything") {
  auto pool = gen_synthetic_classification(30, 2, 2, 1.0, 4);
  auto [plan, shards] = dirichlet_partition(pool, 1, 0.5, 8);
  CHECK(shards[0].size() == 30);
  for (int a : plan.assignments) CHECK(a == 0);
  CHECK(plan.per_agent_label_proportions.rows() == 1);
  CHECK_THAT(plan.per_agent_label_proportions.row(0).sum(),
             Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("dirichlet_partition matches the reference sampler") {
  // single-label pool: the whole split is one seeded Dirichlet draw
  LabeledDataset pool;
  pool.features = Eigen::MatrixXd::Random(100, 2);
  pool.targets = Eigen::VectorXd::Zero(100);
  auto [plan, shards] = dirichlet_partition(pool, 2, 0.5, 7);
  auto expected = reference_dirichlet_split(100, 2, 0.5, 7);
  REQUIRE(expected.size() == plan.assignments.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(plan.assignments[i] == expected[i]);
}

TEST_CASE("dirichlet_partition: strict mode flags empty agents") {
  LabeledDataset tiny;
  tiny.features = Eigen::MatrixXd::Random(2, 1);
  tiny.targets = Eigen::VectorXd::Zero(2);
  // 2 samples over 5 agents: someone must end up empty
  CHECK_THROWS_AS(dirichlet_partition(tiny, 5, 0.5, 3, true), AgentWithNoData);
  CHECK_NOTHROW(dirichlet_partition(tiny, 5, 0.5, 3, false));
  CHECK_THROWS_AS(dirichlet_partition(tiny, 2, 0.0, 3), InvalidParams);
}

TEST_CASE("dirichlet_partition: large alpha approaches the uniform split") {
  auto pool = gen_synthetic_classification(300, 2, 2, 1.0, 77);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [plan, shards] = dirichlet_partition(pool, 3, 1000.0, seed);
    for (int a = 0; a < 3; ++a) {
      double share = static_cast<double>(shards[static_cast<std::size_t>(a)].size()) / pool.size();
      worst = std::max(worst, std::abs(share - 1.0 / 3.0));
    }
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("add_gaussian_noise: identity at zero sigma, variance near sigma^2") {
  auto pool = gen_synthetic_classification(60, 2, 2, 1.0, 15);
  auto same = add_gaussian_noise(pool, 0.0, 1);
  CHECK(same.features == pool.features);
  CHECK(same.targets == pool.targets);

  LabeledDataset big;
  big.features = Eigen::MatrixXd::Zero(10000, 2);
  big.targets = Eigen::VectorXd::Zero(10000);
  const double sigma = 0.7;
  auto noisy = add_gaussian_noise(big, sigma, 123);
  CHECK(noisy.targets == big.targets);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd diff = noisy.features.col(j) - big.features.col(j);
    double var = (diff.array() - diff.mean()).square().sum() / diff.size();
    CHECK_THAT(var, Catch::Matchers::WithinRel(sigma * sigma, 0.10));
  }

  auto n1 = add_gaussian_noise(big, sigma, 9);
  auto n2 = add_gaussian_noise(big, sigma, 9);
  CHECK(n1.features == n2.features);
}

TEST_CASE("load_csv: fixture matrix, one-hot order, target mapping") {
  auto path = write_temp_csv("fixture.csv",
                             "age,color,income,label\n"
                             "25,red,50.5,yes\n"
                             "40,blue,80.25,no\n");
  auto ds = load_csv(path, "label");
  // columns: age, one-hot(blue, red) in sorted order, income
  REQUIRE(ds.dim() == 4);
  CHECK(ds.features(0, 0) == 25.0);
  CHECK(ds.features(0, 1) == 0.0);  // blue
  CHECK(ds.features(0, 2) == 1.0);  // red
  CHECK(ds.features(0, 3) == 50.5);
  CHECK(ds.features(1, 0) == 40.0);
  CHECK(ds.features(1, 1) == 1.0);
  CHECK(ds.features(1, 2) == 0.0);
  CHECK(ds.features(1, 3) == 80.25);
  // binary target, sorted: no -> -1, yes -> +1
  CHECK(ds.targets(0) == 1.0);
  CHECK(ds.targets(1) == -1.0);
  std::remove(path.c_str());
}

TEST_CASE("load_csv: error paths") {
  auto path = write_temp_csv("missing.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(path, "target"), MissingColumn);
  std::remove(path.c_str());

  auto ragged = write_temp_csv("ragged.csv", "a,b,y\n1,2,3\n4,5\n");
  CHECK_THROWS_MATCHES(load_csv(ragged, "y"), MalformedRow,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("row 3")));
  std::remove(ragged.c_str());

  auto multi = write_temp_csv("multi.csv", "a,y\n1,x\n2,y\n3,z\n");
  CHECK_THROWS_AS(load_csv(multi, "y", false, true), NonBinaryTarget);
  std::remove(multi.c_str());
}

TEST_CASE("load_csv: z-score normalization of numeric columns") {
  auto path = write_temp_csv("norm.csv",
                             "f0,f1,y\n"
                             "1,10,0.5\n"
                             "2,20,1.5\n"
                             "3,30,2.5\n"
                             "4,40,3.5\n");
  auto ds = load_csv(path, "y", true);
  for (int j = 0; j < ds.dim(); ++j) {
    double mean = ds.features.col(j).mean();
    double var = (ds.features.col(j).array() - mean).square().sum() / ds.size();
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(std::sqrt(var), Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  std::remove(path.c_str());
}
