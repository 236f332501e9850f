#include "leadopt/algorithms.hpp"

#include <cmath>
#include <limits>

namespace leadopt {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SwarmState lead_init(const Problem& problem, const MixingMatrix& mixing,
                     const LeadParams& params, const Eigen::MatrixXd& x0,
                     const NoiseConfig& noise, std::uint64_t seed) {
  if (x0.rows() != problem.n || x0.cols() != problem.d) {
    throw ProblemError("x0 shape mismatch");
  }
  if (mixing.n != problem.n) {
    throw ProblemError("mixing matrix size does not match agent count");
  }
  SwarmState s;
  GradientSample g0 = stochastic_gradient(problem, x0, noise, seed, 0);
  s.x = x0 - params.eta * g0.value;
  s.x_prev = x0;
  s.cached_grad = g0.value;
  s.d_dual = Eigen::MatrixXd::Zero(problem.n, problem.d);
  s.h = Eigen::MatrixXd::Zero(problem.n, problem.d);
  s.h_w = mixing.w * s.h;
  s.round = 1;
  return s;
}

StepMetrics lead_step(SwarmState& state, const Problem& problem,
                      const MixingMatrix& mixing, const LeadParams& params,
                      const Compressor& compressor, const NoiseConfig& noise,
                      std::uint64_t seed) {
  if (state.round < 1) throw ProblemError("lead_step requires round >= 1");
  const double eta = params.eta;

  GradientSample g =
      stochastic_gradient(problem, state.x, noise, seed, state.round);
  const Eigen::MatrixXd y = state.x - eta * g.value - eta * state.d_dual;

  StepMetrics metrics;
  Eigen::MatrixXd q(problem.n, problem.d);
  for (int i = 0; i < problem.n; ++i) {
    RngStream rng(seed, StreamTag::kDither, state.round, i);
    std::uint64_t bits = 0;
    q.row(i) = compressor
                   .apply((y.row(i) - state.h.row(i)).transpose(), rng, &bits)
                   .transpose();
    metrics.bits += bits;
  }

  const Eigen::MatrixXd y_hat = state.h + q;
  const Eigen::MatrixXd y_hat_w = state.h_w + mixing.w * q;  // the communication
  metrics.comp_err = (y_hat - y).norm();

  state.h = (1.0 - params.alpha) * state.h + params.alpha * y_hat;
  state.h_w = (1.0 - params.alpha) * state.h_w + params.alpha * y_hat_w;
  state.d_dual += (params.gamma / (2.0 * eta)) * (y_hat - y_hat_w);
  state.x_prev = state.x;
  state.x = state.x - eta * g.value - eta * state.d_dual;
  state.cached_grad = g.value;
  ++state.round;
  return metrics;
}

AgentLead::AgentLead(const Problem& problem, const MixingMatrix& mixing,
                     const LeadParams& params, const Eigen::MatrixXd& x0,
                     const NoiseConfig& noise, std::uint64_t seed)
    : problem_(problem),
      mixing_(mixing),
      params_(params),
      noise_(noise),
      seed_(seed) {
  GradientSample g0 = stochastic_gradient(problem, x0, noise, seed, 0);
  x_ = x0 - params.eta * g0.value;
  d_ = Eigen::MatrixXd::Zero(problem.n, problem.d);
  h_ = Eigen::MatrixXd::Zero(problem.n, problem.d);
  h_w_ = Eigen::MatrixXd::Zero(problem.n, problem.d);
  round_ = 1;
}

StepMetrics AgentLead::step(const Compressor& compressor) {
  return step(compressor, params_);
}

StepMetrics AgentLead::step(const Compressor& compressor,
                            const LeadParams& params) {
  const int n = problem_.n;
  const double eta = params.eta;
  StepMetrics metrics;

  Eigen::MatrixXd q(n, problem_.d);
  Eigen::MatrixXd y(n, problem_.d);
  Eigen::MatrixXd grads(n, problem_.d);
  // Local phase: gradient, auxiliary variable, compression.
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xi = x_.row(i).transpose();
    Eigen::VectorXd gi;
    if (noise_.minibatch > 0) {
      RngStream rng(seed_, StreamTag::kMinibatch, round_, i);
      gi = problem_.locals[i]->grad_minibatch(xi, noise_.minibatch, rng);
    } else {
      gi = problem_.locals[i]->grad(xi);
      if (noise_.sigma > 0.0) {
        RngStream rng(seed_, StreamTag::kGradNoise, round_, i);
        for (int j = 0; j < problem_.d; ++j) gi(j) += noise_.sigma * rng.normal();
      }
    }
    grads.row(i) = gi.transpose();
    y.row(i) = x_.row(i) - eta * gi.transpose() - eta * d_.row(i);
    RngStream dither(seed_, StreamTag::kDither, round_, i);
    std::uint64_t bits = 0;
    q.row(i) =
        compressor.apply((y.row(i) - h_.row(i)).transpose(), dither, &bits)
            .transpose();
    metrics.bits += bits;
  }
  metrics.comp_err = (h_ + q - y).norm();

  // Exchange phase: each agent aggregates neighbors' compressed payloads.
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd y_hat_i = h_.row(i) + q.row(i);
    Eigen::RowVectorXd y_hat_w_i = h_w_.row(i);
    for (int j = 0; j < n; ++j) {
      if (mixing_.w(i, j) != 0.0) y_hat_w_i += mixing_.w(i, j) * q.row(j);
    }
    h_.row(i) = (1.0 - params.alpha) * h_.row(i) + params.alpha * y_hat_i;
    h_w_.row(i) = (1.0 - params.alpha) * h_w_.row(i) + params.alpha * y_hat_w_i;
    d_.row(i) += (params.gamma / (2.0 * eta)) * (y_hat_i - y_hat_w_i);
    x_.row(i) = x_.row(i) - eta * grads.row(i) - eta * d_.row(i);
  }
  ++round_;
  return metrics;
}

Eigen::MatrixXd nids_step(const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& x_prev,
                          const Eigen::MatrixXd& grad_now,
                          const Eigen::MatrixXd& grad_prev,
                          const MixingMatrix& mixing, double eta) {
  if (x.rows() != x_prev.rows() || x.rows() != grad_now.rows() ||
      x.rows() != grad_prev.rows()) {
    throw ProblemError("nids_step row mismatch");
  }
  const Eigen::MatrixXd inner =
      2.0 * x - x_prev - eta * grad_now + eta * grad_prev;
  return 0.5 * (inner + mixing.w * inner);
}

Eigen::MatrixXd dgd_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad,
                         const MixingMatrix& mixing, double eta) {
  if (x.rows() != grad.rows() || x.cols() != grad.cols()) {
    throw ProblemError("dgd_step shape mismatch");
  }
  return mixing.w * x - eta * grad;
}

RateCertificate theorem1_ranges(double mu, double L, double C, double beta,
                                double lambda_min_plus, double eta,
                                double gamma, double alpha) {
  if (!(mu > 0.0) || !(L >= mu)) throw ParameterError("need 0 < mu <= L");
  if (C < 0.0) throw ParameterError("need C >= 0");
  if (!(beta > 0.0 && beta < 2.0)) throw ParameterError("need beta in (0, 2)");
  if (!(eta > 0.0 && eta <= 2.0 / (mu + L))) {
    throw ParameterError("need eta in (0, 2/(mu+L)]");
  }

  RateCertificate cert;
  const double contraction = mu * eta * (2.0 - mu * eta);
  const double g1 = 2.0 / ((3.0 * C + 1.0) * beta);
  const double g2 = C > 0.0
                        ? 2.0 * contraction / ((2.0 - contraction) * C * beta)
                        : kInf;
  cert.gamma_hi = std::min(g1, g2);

  if (C > 0.0) {
    cert.a1 = 4.0 * (1.0 + C) / (C * beta * gamma + 2.0);
    cert.alpha_lo = C * beta * gamma / (2.0 * (1.0 + C));
    cert.alpha_hi =
        std::min((2.0 - beta * gamma) / (4.0 - beta * gamma), contraction) /
        cert.a1;
  } else {
    // No-compression limit: the state variable drops out of the Lyapunov
    // function and any alpha in (0, 1] is admissible.
    cert.a1 = 0.0;
    cert.alpha_lo = 0.0;
    cert.alpha_hi = 1.0;
  }

  const double term1 = (1.0 - contraction) / (1.0 - cert.a1 * alpha);
  const double term2 = 1.0 - gamma * lambda_min_plus / 2.0;
  const double term3 = 1.0 - alpha;
  cert.rho = std::max({term1, term2, term3});
  cert.admissible = gamma > cert.gamma_lo && gamma < cert.gamma_hi &&
                    alpha >= cert.alpha_lo && alpha <= cert.alpha_hi &&
                    alpha > 0.0 && alpha <= 1.0 && cert.rho < 1.0;
  return cert;
}

TheoryParams corollary1_params(double mu, double L, double C, double beta,
                               double kappa_g) {
  if (!(mu > 0.0) || !(L >= mu)) throw ParameterError("need 0 < mu <= L");
  if (C < 0.0) throw ParameterError("need C >= 0");
  if (!(beta > 0.0 && kappa_g >= 1.0)) {
    throw ParameterError("need beta > 0 and kappa_g >= 1");
  }
  const double kf = L / mu;
  const double lambda_min_plus = beta / kappa_g;

  TheoryParams tp;
  tp.eta = 1.0 / L;
  const double g1 = C > 0.0 ? 1.0 / (C * beta * kf) : kInf;
  const double g2 = 1.0 / ((3.0 * C + 1.0) * beta);
  tp.gamma = std::min(g1, g2);
  if (g1 <= g2) {
    tp.alpha_case = 1;
    tp.alpha = 1.0 / (2.0 * (1.0 + C) * kf);
  } else {
    tp.alpha_case = 2;
    tp.alpha = std::min((6.0 * C + 1.0) / (12.0 * C + 3.0), 1.0 / kf) *
               (7.0 * C + 2.0) /
               (4.0 * (C + 1.0) * (3.0 * C + 1.0));
  }
  tp.rho_bound = theorem1_ranges(mu, L, C, beta, lambda_min_plus, tp.eta,
                                 tp.gamma, tp.alpha)
                     .rho;
  return tp;
}

DiminishingSchedule diminishing_schedule(double mu, double L, double C,
                                         double beta, double lambda_max_pinv,
                                         double theta4) {
  if (!(C > 0.0)) {
    throw ParameterError(
        "diminishing schedule is undefined at C = 0; use constant-stepsize "
        "mode");
  }
  if (!(mu > 0.0) || !(L >= mu)) throw ParameterError("need 0 < mu <= L");
  const double theta4_max = mu / (C * beta);
  if (theta4 == 0.0) theta4 = 0.5 * theta4_max;
  if (!(theta4 > 0.0 && theta4 < theta4_max)) {
    throw ParameterError("theta4 must lie in (0, mu/(C beta))");
  }

  DiminishingSchedule s;
  s.mu = mu;
  s.c = C;
  s.beta = beta;
  s.theta1 = 1.0 / (2.0 * lambda_max_pinv);
  s.theta2 = C * beta / (2.0 * (1.0 + C));
  s.theta3 = std::min(s.theta1, s.theta2);
  s.theta4 = theta4;
  s.eta_star = 2.0 * (mu - C * beta * theta4) / (mu * mu);
  const double q = 3.0 * C + 1.0;
  s.theta5 = std::min({2.0 / (mu + L), s.eta_star,
                       (q - std::sqrt(q * q - 4.0 * C)) / (C * beta * theta4),
                       2.0 / (beta * theta4)});
  return s;
}

LyapunovEval::LyapunovEval(const Problem& problem, const MixingMatrix& mixing,
                           const LeadParams& params, double C)
    : pinv_iw_(mixing.pinv_iw),
      alpha_(params.alpha),
      eta_(params.eta),
      gamma_(params.gamma) {
  x_star_mat_ = problem.x_star.transpose().replicate(problem.n, 1);
  d_star_ = -gradient(problem, x_star_mat_).value;
  a1_ = C > 0.0 ? 4.0 * (1.0 + C) / (C * mixing.beta * gamma_ + 2.0) : 0.0;
}

double LyapunovEval::value(const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& d_dual,
                           const Eigen::MatrixXd& h) const {
  const Eigen::MatrixXd dx = x - x_star_mat_;
  const Eigen::MatrixXd dd = d_dual - d_star_;
  const Eigen::MatrixXd dh = h - x_star_mat_;
  const double dual_term = (dd.transpose() * pinv_iw_ * dd).trace();
  return (1.0 - a1_ * alpha_) * dx.squaredNorm() +
         (2.0 * eta_ * eta_ / gamma_) * dual_term + a1_ * dh.squaredNorm();
}

double LyapunovEval::operator()(const SwarmState& state) const {
  return value(state.x, state.d_dual, state.h);
}

}  // namespace leadopt
