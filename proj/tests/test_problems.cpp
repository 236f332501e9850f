#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "leadopt/problems.hpp"

using namespace leadopt;

namespace {

// Central-difference gradient oracle.
Eigen::VectorXd fd_grad(const LocalObjective& f, const Eigen::VectorXd& x,
                        double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd e = x;
  for (int i = 0; i < x.size(); ++i) {
    e(i) = x(i) + h;
    const double up = f.value(e);
    e(i) = x(i) - h;
    const double dn = f.value(e);
    e(i) = x(i);
    g(i) = (up - dn) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd rand_vec(int d, RngStream& rng) {
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("quadratic local: f = ||Ax-b||^2 + lambda||x||^2 with A = I") {
  const Eigen::VectorXd b = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
  QuadraticLocal f(Eigen::MatrixXd::Identity(3, 3), b, 0.0);
  CHECK(f.grad(b).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(f.value(b) == doctest::Approx(0.0));
  CHECK(f.value(Eigen::VectorXd::Zero(3)) == doctest::Approx(b.squaredNorm()));
}

TEST_CASE("gradients match central differences") {
  RngStream rng(5, StreamTag::kDataGen, 0, 0);
  const int d = 6;
  SUBCASE("quadratic") {
    Eigen::MatrixXd a(4, d);
    for (int i = 0; i < a.size(); ++i) a(i / d, i % d) = rng.normal();
    QuadraticLocal f(a, rand_vec(4, rng), 0.3);
    for (int t = 0; t < 5; ++t) {
      const Eigen::VectorXd x = rand_vec(d, rng);
      const Eigen::VectorXd g = f.grad(x), fd = fd_grad(f, x);
      CHECK((g - fd).norm() <= 1e-5 * (1.0 + g.norm()));
    }
  }
  SUBCASE("logistic") {
    Eigen::MatrixXd z(8, d);
    Eigen::VectorXd y(8);
    for (int i = 0; i < z.size(); ++i) z(i / d, i % d) = rng.normal();
    for (int i = 0; i < 8; ++i) y(i) = static_cast<double>(rng.next_below(2));
    LogisticLocal f(z, y, 0.05);
    for (int t = 0; t < 5; ++t) {
      const Eigen::VectorXd x = rand_vec(d, rng);
      const Eigen::VectorXd g = f.grad(x), fd = fd_grad(f, x);
      CHECK((g - fd).norm() <= 1e-5 * (1.0 + g.norm()));
    }
  }
}

TEST_CASE("linreg generator: optimality, curvature bounds, determinism") {
  Problem p = gen_linreg(8, 16, 32, 0.1, 0.5, 21);
  REQUIRE(p.n == 8);
  REQUIRE(p.d == 16);
  REQUIRE(static_cast<int>(p.locals.size()) == 8);

  SUBCASE("x_star is the stacked least-squares optimum") {
    CHECK(p.global_grad(p.x_star).norm() <= 1e-8);
    CHECK(p.f_star == doctest::Approx(p.global_value(p.x_star)));
  }
  SUBCASE("regularization floors mu") {
    CHECK(p.mu >= 0.2);  // grad of lambda||x||^2 contributes 2*lambda
    CHECK(p.lipschitz >= p.mu);
  }
  SUBCASE("strong convexity / smoothness sandwich on the global objective") {
    RngStream rng(77, StreamTag::kDataGen, 0, 0);
    for (int t = 0; t < 1000; ++t) {
      const Eigen::VectorXd x = rand_vec(16, rng), y = rand_vec(16, rng);
      const Eigen::VectorXd gx = p.global_grad(x), gy = p.global_grad(y);
      const double inner = (gx - gy).dot(x - y);
      const double dist2 = (x - y).squaredNorm();
      CHECK(inner >= p.mu * dist2 - 1e-9 * dist2);
      CHECK(inner <= p.lipschitz * dist2 + 1e-9 * dist2);
    }
  }
  SUBCASE("same seed reproduces, different seed differs") {
    Problem q = gen_linreg(8, 16, 32, 0.1, 0.5, 21);
    CHECK((p.x_star - q.x_star).cwiseAbs().maxCoeff() == 0.0);
    Problem r = gen_linreg(8, 16, 32, 0.1, 0.5, 22);
    CHECK((p.x_star - r.x_star).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("logreg generator: optimum quality and partition modes") {
  Problem hom = gen_logreg(4, 8, 50, 1e-2, Partition::kHomogeneous, 3);
  Problem het = gen_logreg(4, 8, 50, 1e-2, Partition::kHeterogeneous, 3);

  CHECK(hom.global_grad(hom.x_star).norm() <= 1e-10);
  CHECK(het.global_grad(het.x_star).norm() <= 1e-10);
  CHECK(hom.mu == doctest::Approx(1e-2));

  SUBCASE("heterogeneous split gives at least one single-label agent") {
    bool single = false;
    for (const auto& loc : het.locals) {
      const auto* lg = dynamic_cast<const LogisticLocal*>(loc.get());
      REQUIRE(lg != nullptr);
      const double lo = lg->y().minCoeff(), hi = lg->y().maxCoeff();
      if (lo == hi) single = true;
    }
    CHECK(single);
  }
  SUBCASE("heterogeneity shows up in local gradients at the optimum") {
    double max_local = 0.0;
    for (const auto& loc : het.locals)
      max_local = std::max(max_local, loc->grad(het.x_star).norm());
    CHECK(max_local > 1e-6);
  }
}

TEST_CASE("stochastic gradient oracle") {
  Problem p = gen_linreg(4, 6, 20, 0.1, 0.5, 9);
  Eigen::MatrixXd x(4, 6);
  RngStream rng(9, StreamTag::kInit, 0, 0);
  for (int i = 0; i < x.size(); ++i) x(i / 6, i % 6) = rng.normal();
  const GradientSample exact = gradient(p, x);

  SUBCASE("sigma = 0 is exact and sigma_sq = 0") {
    NoiseConfig nc;
    GradientSample g = stochastic_gradient(p, x, nc, 1, 0);
    CHECK((g.value - exact.value).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.sigma_sq == 0.0);
  }
  SUBCASE("additive noise is centered with the configured variance") {
    NoiseConfig nc;
    nc.sigma = 0.3;
    const int reps = 20000;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 6);
    double err2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      GradientSample g = stochastic_gradient(p, x, nc, 1, r);
      CHECK(g.sigma_sq == doctest::Approx(0.3 * 0.3 * 6));
      sum += g.value;
      err2 += (g.value.row(0) - exact.value.row(0)).squaredNorm();
    }
    const double se = 0.3 / std::sqrt(static_cast<double>(reps));
    CHECK(((sum / reps) - exact.value).cwiseAbs().maxCoeff() <= 5.0 * se);
    // mean squared perturbation per agent is sigma^2 * d
    CHECK(err2 / reps == doctest::Approx(0.09 * 6).epsilon(0.05));
  }
  SUBCASE("same (seed, round) replays, different round differs") {
    NoiseConfig nc;
    nc.sigma = 0.3;
    GradientSample a = stochastic_gradient(p, x, nc, 1, 5);
    GradientSample b = stochastic_gradient(p, x, nc, 1, 5);
    GradientSample c = stochastic_gradient(p, x, nc, 1, 6);
    CHECK((a.value - b.value).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.value - c.value).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("minibatch oracle: full batch is exact, means converge") {
  Problem p = gen_logreg(3, 5, 24, 1e-2, Partition::kHomogeneous, 4);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 5);
  const GradientSample exact = gradient(p, x);

  NoiseConfig full;
  full.minibatch = 24;  // clamps to the whole local sample
  GradientSample g = stochastic_gradient(p, x, full, 2, 0);
  CHECK((g.value - exact.value).cwiseAbs().maxCoeff() < 1e-12);

  NoiseConfig small;
  small.minibatch = 4;
  const int reps = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 5);
  for (int r = 0; r < reps; ++r)
    sum += stochastic_gradient(p, x, small, 2, r).value;
  CHECK(((sum / reps) - exact.value).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("csv dataset loading") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "leadopt_data.csv").string();
  {
    std::ofstream f(path);
    f << "f1,f2,const,label\n";
    f << "1.0,2.0,5.0,0\n";
    f << "3.0,0.0,5.0,1\n";
    f << "2.0,4.0,5.0,1\n";
    f << "0.0,2.0,5.0,0\n";
  }
  Dataset d = load_csv(path, "label");
  REQUIRE(d.features.rows() == 4);
  REQUIRE(d.features.cols() == 3);
  // standardized: zero mean, unit variance per column
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(d.features.col(j).mean()) < 1e-12);
    const double var = d.features.col(j).squaredNorm() / 4.0;
    CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
  }
  // constant columns become zeros, not NaN
  CHECK(d.features.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.labels(0) == 0.0);
  CHECK(d.labels(1) == 1.0);

  Problem p = gen_logreg_from_data(d, 2, 1e-2, Partition::kHomogeneous, 1);
  CHECK(p.n == 2);
  CHECK(p.d == 3);
  CHECK(p.global_grad(p.x_star).norm() <= 1e-10);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_csv("/nonexistent.csv", "label"), ProblemError);
}

TEST_CASE("dimension mismatches are rejected") {
  CHECK_THROWS_AS(
      QuadraticLocal(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(2), 0.0),
      ProblemError);
  CHECK_THROWS_AS(
      LogisticLocal(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(4), 0.1),
      ProblemError);
  Problem p = gen_linreg(2, 4, 8, 0.1, 0.5, 1);
  CHECK_THROWS_AS(gradient(p, Eigen::MatrixXd::Zero(2, 5)), ProblemError);
}
