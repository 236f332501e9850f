#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "leadopt/rng.hpp"

namespace leadopt {

struct ProblemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One agent's objective with exact gradient and optional minibatch oracle.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;
  virtual double value(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual int sample_count() const { return 0; }
  virtual Eigen::VectorXd grad_minibatch(const Eigen::Ref<const Eigen::VectorXd>& x,
                                         int batch, RngStream& rng) const;
};

// f_i(x) = ||A x - b||^2 + lambda ||x||^2
class QuadraticLocal final : public LocalObjective {
 public:
  QuadraticLocal(Eigen::MatrixXd a, Eigen::VectorXd b, double lambda);
  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }
  double lambda() const { return lambda_; }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::MatrixXd ata_;  // cached A^T A, keeps grad at O(d^2) per call
  Eigen::VectorXd atb_;
  double lambda_;
};

// f_i(x) = mean_j log(1 + exp(-s_j z_j^T x)) + (lambda/2) ||x||^2,
// s_j = 2 y_j - 1 for labels y in {0,1}.
class LogisticLocal final : public LocalObjective {
 public:
  LogisticLocal(Eigen::MatrixXd z, Eigen::VectorXd y, double lambda);
  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  int sample_count() const override { return static_cast<int>(z_.rows()); }
  Eigen::VectorXd grad_minibatch(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int batch, RngStream& rng) const override;
  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::VectorXd& y() const { return y_; }

 private:
  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;  // labels in {0,1}
  double lambda_;
};

struct Problem {
  int n = 0;
  int d = 0;
  double mu = 0.0;
  double lipschitz = 0.0;
  Eigen::VectorXd x_star;
  double f_star = 0.0;
  std::vector<std::shared_ptr<const LocalObjective>> locals;

  double kappa_f() const { return lipschitz / mu; }
  // f(x) = (1/n) sum_i f_i(x)
  double global_value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd global_grad(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

enum class Partition { kHomogeneous, kHeterogeneous };

// Synthetic ridge regression: A_i entries N(0,1)/sqrt(rows), b_i = A_i x' +
// noise * N(0,1); x_star solved from the stacked normal equations.
Problem gen_linreg(int n, int d, int rows_per_agent, double lambda,
                   double noise, std::uint64_t seed);

// Two-Gaussian synthetic logistic regression; heterogeneous mode sorts by
// label before the contiguous split so some agents see a single class.
Problem gen_logreg(int n, int d, int samples_per_agent, double lambda,
                   Partition partition, std::uint64_t seed);

struct Dataset {
  Eigen::MatrixXd features;  // standardized column-wise
  Eigen::VectorXd labels;    // in {0,1}
};

Dataset load_csv(const std::string& path, const std::string& label_column);

Problem gen_logreg_from_data(const Dataset& data, int n, double lambda,
                             Partition partition, std::uint64_t seed);

struct GradientSample {
  Eigen::MatrixXd value;  // n x d, row i = agent i's gradient at its iterate
  double sigma_sq = 0.0;  // configured per-agent variance bound
};

// Exact per-agent gradients, row i = grad f_i(x_i).
GradientSample gradient(const Problem& problem, const Eigen::MatrixXd& x);

struct NoiseConfig {
  double sigma = 0.0;  // additive per-coordinate Gaussian std
  int minibatch = 0;   // > 0 selects minibatch mode (data problems)
};

// Stochastic oracle: additive Gaussian noise or uniform minibatch sampling.
// Streams are keyed (seed, kGradNoise/kMinibatch, round, agent).
GradientSample stochastic_gradient(const Problem& problem,
                                   const Eigen::MatrixXd& x,
                                   const NoiseConfig& noise,
                                   std::uint64_t seed, std::uint64_t round);

}  // namespace leadopt
