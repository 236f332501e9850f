#include "leadopt/topology.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace leadopt {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kUnitEigTol = 1e-8;

}  // namespace

SpectralStats spectral_stats(const Eigen::MatrixXd& w) {
  const int n = static_cast<int>(w.rows());
  const Eigen::MatrixXd iw =
      Eigen::MatrixXd::Identity(n, n) - 0.5 * (w + w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(iw);
  if (es.info() != Eigen::Success) {
    throw TopologyError("eigensolver failed to converge");
  }
  const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
  const Eigen::MatrixXd& v = es.eigenvectors();

  SpectralStats s;
  s.beta = evals(n - 1);
  const double zero_thresh = 1e-10 * s.beta;

  double lam_min_plus = 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (evals(i) > zero_thresh) {
      if (lam_min_plus == 0.0) lam_min_plus = evals(i);
      inv(i) = 1.0 / evals(i);
    }
  }
  if (lam_min_plus == 0.0) {
    throw TopologyError("I - W has no nonzero eigenvalue (W is identity-like)");
  }
  s.lambda_min_plus = lam_min_plus;
  s.kappa_g = s.beta / s.lambda_min_plus;
  s.pinv_iw = v * inv.asDiagonal() * v.transpose();
  return s;
}

MixingMatrix make_mixing(Eigen::MatrixXd w) {
  if (w.rows() != w.cols() || w.rows() < 2) {
    throw TopologyError("mixing matrix must be square with n >= 2");
  }
  const int n = static_cast<int>(w.rows());
  const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
  if (asym > kStochasticTol) {
    throw TopologyError("mixing matrix is asymmetric (max |w_ij - w_ji| = " +
                        std::to_string(asym) + ")");
  }
  w = 0.5 * (w + w.transpose().eval());  // exact symmetry downstream

  const Eigen::VectorXd row_sums = w.rowwise().sum();
  const double row_err = (row_sums.array() - 1.0).abs().maxCoeff();
  if (row_err > kStochasticTol) {
    throw TopologyError("mixing matrix rows do not sum to 1 (max error " +
                        std::to_string(row_err) + ")");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw TopologyError("eigensolver failed to converge");
  }
  const Eigen::VectorXd evals = es.eigenvalues();
  if (evals(0) <= -1.0 + kUnitEigTol) {
    throw TopologyError("mixing matrix has an eigenvalue at or below -1");
  }
  int at_one = 0;
  for (int i = 0; i < n; ++i) {
    if (evals(i) > 1.0 + kUnitEigTol) {
      throw TopologyError("mixing matrix has an eigenvalue above 1");
    }
    if (evals(i) > 1.0 - kUnitEigTol) ++at_one;
  }
  if (at_one != 1) {
    throw TopologyError(
        "eigenvalue 1 has multiplicity " + std::to_string(at_one) +
        "; the communication graph is disconnected");
  }

  MixingMatrix m;
  m.n = n;
  m.w = std::move(w);
  SpectralStats s = spectral_stats(m.w);
  m.beta = s.beta;
  m.lambda_min_plus = s.lambda_min_plus;
  m.kappa_g = s.kappa_g;
  m.pinv_iw = std::move(s.pinv_iw);
  return m;
}

MixingMatrix build_ring(int n, double self_weight) {
  if (n < 3) {
    throw TopologyError("ring topology requires n >= 3");
  }
  if (!(self_weight > 0.0 && self_weight < 1.0)) {
    throw TopologyError("ring self_weight must lie in (0, 1)");
  }
  const double nb = (1.0 - self_weight) / 2.0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    w(i, i) += self_weight;
    w(i, (i + 1) % n) += nb;
    w(i, (i + n - 1) % n) += nb;
  }
  return make_mixing(std::move(w));
}

MixingMatrix build_fully_connected(int n) {
  if (n < 2) {
    throw TopologyError("fully connected topology requires n >= 2");
  }
  return make_mixing(Eigen::MatrixXd::Constant(n, n, 1.0 / n));
}

MixingMatrix build_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw TopologyError("cannot open matrix file: " + path);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw TopologyError("non-numeric cell in matrix file: '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  const auto n = rows.size();
  Eigen::MatrixXd w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) {
      throw TopologyError("matrix file is not square: row " +
                          std::to_string(i) + " has " +
                          std::to_string(rows[i].size()) + " cells, expected " +
                          std::to_string(n));
    }
    for (std::size_t j = 0; j < n; ++j) w(i, j) = rows[i][j];
  }
  return make_mixing(std::move(w));
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& w) {
  std::ofstream out(path);
  if (!out) throw TopologyError("cannot write matrix file: " + path);
  out.precision(17);
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j) {
      if (j) out << ',';
      out << w(i, j);
    }
    out << '\n';
  }
}

}  // namespace leadopt
