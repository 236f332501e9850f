#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace leadopt {

struct TopologyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpectralStats {
  double beta = 0.0;             // lambda_max(I - W)
  double lambda_min_plus = 0.0;  // smallest nonzero eigenvalue of I - W
  double kappa_g = 0.0;          // beta / lambda_min_plus
  Eigen::MatrixXd pinv_iw;       // Moore-Penrose pseudoinverse of I - W
};

// Symmetric doubly-stochastic gossip matrix plus the spectral quantities
// the convergence theory consumes. Immutable after construction.
struct MixingMatrix {
  int n = 0;
  Eigen::MatrixXd w;
  double beta = 0.0;
  double lambda_min_plus = 0.0;
  double kappa_g = 0.0;
  Eigen::MatrixXd pinv_iw;

  double lambda_max_pinv() const { return 1.0 / lambda_min_plus; }
};

// Validates w (symmetric, doubly stochastic, connected, eigenvalues in
// (-1, 1]) and attaches spectral stats. Throws TopologyError naming the
// violated invariant.
MixingMatrix make_mixing(Eigen::MatrixXd w);

// Circulant ring: self_weight on the diagonal, (1 - self_weight)/2 on both
// ring neighbors. n = 3 degenerates to the fully connected all-1/3 matrix.
MixingMatrix build_ring(int n, double self_weight = 1.0 / 3.0);

MixingMatrix build_fully_connected(int n);

// Plain CSV, one row per line, comma-separated decimals.
MixingMatrix build_from_file(const std::string& path);

// Eigendecomposition of I - W; pseudoinverse zero-threshold is
// 1e-10 * lambda_max(I - W).
SpectralStats spectral_stats(const Eigen::MatrixXd& w);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& w);

}  // namespace leadopt
