#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

#include "leadopt/compression.hpp"
#include "leadopt/problems.hpp"
#include "leadopt/topology.hpp"

namespace leadopt {

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LeadParams {
  double eta = 0.1;
  double gamma = 1.0;
  double alpha = 0.5;
};

// Stacked per-agent state of one synchronized round.
struct SwarmState {
  Eigen::MatrixXd x;        // n x d iterates
  Eigen::MatrixXd d_dual;   // dual correction, lives in Range(I - W)
  Eigen::MatrixXd h;        // compression reference state
  Eigen::MatrixXd h_w;      // W * h, tracked incrementally
  Eigen::MatrixXd x_prev;   // previous iterate (used by the NIDS recursion)
  Eigen::MatrixXd cached_grad;  // gradient sample drawn during the round
  int round = 0;
};

struct StepMetrics {
  double comp_err = 0.0;    // ||Yhat - Y||_F
  std::uint64_t bits = 0;   // total payload bits sent this round
};

// One gradient step from x0; D^1 = 0, H^1 = 0 (hence H_w^1 = 0).
SwarmState lead_init(const Problem& problem, const MixingMatrix& mixing,
                     const LeadParams& params, const Eigen::MatrixXd& x0,
                     const NoiseConfig& noise, std::uint64_t seed);

// One synchronized round, matrix form: a single gradient sample is drawn and
// reused by both the auxiliary and the primal update.
StepMetrics lead_step(SwarmState& state, const Problem& problem,
                      const MixingMatrix& mixing, const LeadParams& params,
                      const Compressor& compressor, const NoiseConfig& noise,
                      std::uint64_t seed);

// Same algorithm computed per agent with explicit neighbor sums; shares RNG
// stream keys with the matrix form so trajectories are directly comparable.
class AgentLead {
 public:
  AgentLead(const Problem& problem, const MixingMatrix& mixing,
            const LeadParams& params, const Eigen::MatrixXd& x0,
            const NoiseConfig& noise, std::uint64_t seed);

  StepMetrics step(const Compressor& compressor);
  StepMetrics step(const Compressor& compressor, const LeadParams& params);
  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::MatrixXd& d_dual() const { return d_; }
  int round() const { return round_; }

 private:
  const Problem& problem_;
  const MixingMatrix& mixing_;
  LeadParams params_;
  NoiseConfig noise_;
  std::uint64_t seed_;
  Eigen::MatrixXd x_, d_, h_, h_w_;
  int round_ = 0;
};

// X^{k+1} = (I+W)/2 (2X^k - X^{k-1} - eta g^k + eta g^{k-1})
Eigen::MatrixXd nids_step(const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& x_prev,
                          const Eigen::MatrixXd& grad_now,
                          const Eigen::MatrixXd& grad_prev,
                          const MixingMatrix& mixing, double eta);

// x_next = W x - eta * grad
Eigen::MatrixXd dgd_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad,
                         const MixingMatrix& mixing, double eta);

struct RateCertificate {
  double a1 = 0.0;
  double rho = 1.0;          // max of the three contraction terms at (gamma, alpha)
  double gamma_lo = 0.0;     // open interval
  double gamma_hi = 0.0;
  double alpha_lo = 0.0;     // closed interval
  double alpha_hi = 0.0;
  bool admissible = false;
};

// Constant-stepsize admissible ranges and the exact contraction factor for a
// candidate (gamma, alpha). C = 0 uses the no-compression limit (a1 = 0).
RateCertificate theorem1_ranges(double mu, double L, double C, double beta,
                                double lambda_min_plus, double eta,
                                double gamma, double alpha);

struct TheoryParams {
  double eta = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double rho_bound = 1.0;
  int alpha_case = 0;  // which case of the gamma/alpha split was taken
};

// eta = 1/L; gamma = min{1/(C beta kappa_f), 1/((1+3C) beta)}; alpha from the
// corresponding case split; rho_bound is the exact constant-stepsize factor
// at those values.
TheoryParams corollary1_params(double mu, double L, double C, double beta,
                               double kappa_g);

struct DiminishingSchedule {
  double theta1 = 0.0, theta2 = 0.0, theta3 = 0.0, theta4 = 0.0, theta5 = 0.0;
  double eta_star = 0.0;
  double c = 0.0, beta = 0.0, mu = 0.0;

  double eta(std::uint64_t k) const {
    return 2.0 * theta5 / (theta3 * theta4 * theta5 * static_cast<double>(k) + 2.0);
  }
  double gamma(std::uint64_t k) const { return theta4 * eta(k); }
  double alpha(std::uint64_t k) const {
    return c * beta * gamma(k) / (2.0 * (1.0 + c));
  }
  LeadParams params(std::uint64_t k) const {
    return LeadParams{eta(k), gamma(k), alpha(k)};
  }
};

// theta4 defaults to the midpoint of its open interval (0, mu/(C beta)).
// Undefined at C = 0; constant-stepsize mode covers that case.
DiminishingSchedule diminishing_schedule(double mu, double L, double C,
                                         double beta, double lambda_max_pinv,
                                         double theta4 = 0.0);

// Lyapunov value of Theorem 1; D* = -grad F(X*) is computed once.
class LyapunovEval {
 public:
  LyapunovEval(const Problem& problem, const MixingMatrix& mixing,
               const LeadParams& params, double C);
  double operator()(const SwarmState& state) const;
  double a1() const { return a1_; }
  double value(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d_dual,
               const Eigen::MatrixXd& h) const;

 private:
  Eigen::MatrixXd x_star_mat_, d_star_, pinv_iw_;
  double a1_, alpha_, eta_, gamma_;
};

}  // namespace leadopt
