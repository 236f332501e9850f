#include "leadopt/problems.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace leadopt {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow
double softplus(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

Eigen::MatrixXd random_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

Eigen::VectorXd LocalObjective::grad_minibatch(
    const Eigen::Ref<const Eigen::VectorXd>& x, int, RngStream&) const {
  return grad(x);
}

QuadraticLocal::QuadraticLocal(Eigen::MatrixXd a, Eigen::VectorXd b,
                               double lambda)
    : a_(std::move(a)), b_(std::move(b)), lambda_(lambda) {
  if (a_.rows() != b_.size()) throw ProblemError("A/b row mismatch");
  ata_ = a_.transpose() * a_;
  atb_ = a_.transpose() * b_;
}

double QuadraticLocal::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return (a_ * x - b_).squaredNorm() + lambda_ * x.squaredNorm();
}

Eigen::VectorXd QuadraticLocal::grad(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return 2.0 * (ata_ * x - atb_) + 2.0 * lambda_ * x;
}

LogisticLocal::LogisticLocal(Eigen::MatrixXd z, Eigen::VectorXd y,
                             double lambda)
    : z_(std::move(z)), y_(std::move(y)), lambda_(lambda) {
  if (z_.rows() != y_.size()) throw ProblemError("Z/y row mismatch");
}

double LogisticLocal::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd t = z_ * x;
  double loss = 0.0;
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    // -y log(sigma) - (1-y) log(1-sigma) = softplus(t) - y t
    loss += softplus(t(j)) - y_(j) * t(j);
  }
  return loss / static_cast<double>(t.size()) +
         0.5 * lambda_ * x.squaredNorm();
}

Eigen::VectorXd LogisticLocal::grad(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd t = z_ * x;
  Eigen::VectorXd r(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) r(j) = sigmoid(t(j)) - y_(j);
  return z_.transpose() * r / static_cast<double>(t.size()) + lambda_ * x;
}

Eigen::VectorXd LogisticLocal::grad_minibatch(
    const Eigen::Ref<const Eigen::VectorXd>& x, int batch,
    RngStream& rng) const {
  const int m = sample_count();
  if (batch <= 0 || batch >= m) return grad(x);  // clamp to full batch
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (int s = 0; s < batch; ++s) {
    const auto j = static_cast<Eigen::Index>(rng.next_below(m));
    const double r = sigmoid(z_.row(j).dot(x)) - y_(j);
    g += r * z_.row(j).transpose();
  }
  return g / static_cast<double>(batch) + lambda_ * x;
}

double Problem::global_value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double v = 0.0;
  for (const auto& f : locals) v += f->value(x);
  return v / static_cast<double>(n);
}

Eigen::VectorXd Problem::global_grad(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  for (const auto& f : locals) g += f->grad(x);
  return g / static_cast<double>(n);
}

Problem gen_linreg(int n, int d, int rows_per_agent, double lambda,
                   double noise, std::uint64_t seed) {
  if (d < 1 || rows_per_agent < 1 || n < 1) {
    throw ProblemError("gen_linreg requires n, d, rows_per_agent >= 1");
  }
  RngStream sol_rng(seed, StreamTag::kDataGen, 0, static_cast<std::uint64_t>(n));
  Eigen::VectorXd x_true(d);
  for (int j = 0; j < d; ++j) x_true(j) = sol_rng.normal();

  Problem p;
  p.n = n;
  p.d = d;
  const double row_scale = 1.0 / std::sqrt(static_cast<double>(rows_per_agent));

  Eigen::MatrixXd normal_mat = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  double mu = std::numeric_limits<double>::infinity();
  double lip = 0.0;
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, StreamTag::kDataGen, 0, static_cast<std::uint64_t>(i));
    Eigen::MatrixXd a = row_scale * random_matrix(rows_per_agent, d, rng);
    Eigen::VectorXd b = a * x_true;
    for (int r = 0; r < rows_per_agent; ++r) b(r) += noise * rng.normal();

    const Eigen::MatrixXd ata = a.transpose() * a;
    normal_mat += 2.0 * ata;
    rhs += 2.0 * a.transpose() * b;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ata,
                                                      Eigen::EigenvaluesOnly);
    mu = std::min(mu, 2.0 * es.eigenvalues()(0) + 2.0 * lambda);
    lip = std::max(lip, 2.0 * es.eigenvalues()(d - 1) + 2.0 * lambda);
    p.locals.push_back(
        std::make_shared<QuadraticLocal>(std::move(a), std::move(b), lambda));
  }
  normal_mat += 2.0 * n * lambda * Eigen::MatrixXd::Identity(d, d);
  p.x_star = Eigen::LDLT<Eigen::MatrixXd>(normal_mat).solve(rhs);
  p.mu = mu;
  p.lipschitz = lip;
  p.f_star = p.global_value(p.x_star);
  if (!(p.mu > 0.0)) throw ProblemError("problem is not strongly convex");
  return p;
}

namespace {

Problem build_logreg(Eigen::MatrixXd z, Eigen::VectorXd y, int n,
                     double lambda, Partition partition, std::uint64_t seed) {
  const auto m = static_cast<int>(z.rows());
  const auto d = static_cast<int>(z.cols());
  if (m < n) throw ProblemError("fewer samples than agents");
  if (!(lambda > 0.0)) throw ProblemError("logistic problem needs lambda > 0");

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  if (partition == Partition::kHeterogeneous) {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return y(a) < y(b); });
  } else {
    RngStream rng(seed, StreamTag::kDataGen, 1, 0);
    for (int i = m - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
  }

  Problem p;
  p.n = n;
  p.d = d;
  p.mu = lambda;
  double lip = 0.0;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = m / n + (i < m % n ? 1 : 0);
    Eigen::MatrixXd zi(mi, d);
    Eigen::VectorXd yi(mi);
    for (int r = 0; r < mi; ++r, ++pos) {
      zi.row(r) = z.row(order[pos]);
      yi(r) = y(order[pos]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        zi.transpose() * zi, Eigen::EigenvaluesOnly);
    lip = std::max(lip, lambda + es.eigenvalues()(d - 1) / (4.0 * mi));
    p.locals.push_back(
        std::make_shared<LogisticLocal>(std::move(zi), std::move(yi), lambda));
  }
  p.lipschitz = lip;

  // Reference optimum via damped Newton on the global objective, pushed well
  // below the 1e-10 residual the Problem invariant requires.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd g = p.global_grad(x);
    if (g.norm() <= 1e-12 * std::max(1.0, x.norm())) break;
    Eigen::MatrixXd h = lambda * Eigen::MatrixXd::Identity(d, d);
    for (const auto& f : p.locals) {
      const auto* lg = static_cast<const LogisticLocal*>(f.get());
      const Eigen::VectorXd t = lg->z() * x;
      Eigen::VectorXd w(t.size());
      for (Eigen::Index j = 0; j < t.size(); ++j) {
        const double s = sigmoid(t(j));
        w(j) = s * (1.0 - s);
      }
      h += lg->z().transpose() * w.asDiagonal() * lg->z() /
           static_cast<double>(p.n * t.size());
    }
    Eigen::VectorXd step = Eigen::LDLT<Eigen::MatrixXd>(h).solve(g);
    double t = 1.0;
    const double f0 = p.global_value(x);
    while (t > 1e-8 && p.global_value(x - t * step) > f0) t *= 0.5;
    x -= t * step;
  }
  p.x_star = x;
  p.f_star = p.global_value(x);
  return p;
}

}  // namespace

Problem gen_logreg(int n, int d, int samples_per_agent, double lambda,
                   Partition partition, std::uint64_t seed) {
  if (n < 1 || d < 1 || samples_per_agent < 1) {
    throw ProblemError("gen_logreg requires positive sizes");
  }
  const int m = n * samples_per_agent;
  RngStream rng(seed, StreamTag::kDataGen, 0, 0);
  Eigen::VectorXd center(d);
  for (int j = 0; j < d; ++j) center(j) = rng.normal();
  center *= 1.5 / std::max(center.norm(), 1e-12);

  Eigen::MatrixXd z(m, d);
  Eigen::VectorXd y(m);
  for (int s = 0; s < m; ++s) {
    const double label = (s < m / 2) ? 0.0 : 1.0;
    y(s) = label;
    const double side = label > 0.5 ? 1.0 : -1.0;
    for (int j = 0; j < d; ++j) z(s, j) = side * center(j) + rng.normal();
  }
  return build_logreg(std::move(z), std::move(y), n, lambda, partition, seed);
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ProblemError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ProblemError("empty dataset: " + path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_idx = static_cast<int>(i);
  }
  if (label_idx < 0) {
    throw ProblemError("label column '" + label_column + "' not found");
  }

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ProblemError("non-numeric cell '" + cell + "' at line " +
                           std::to_string(line_no));
      }
    }
    if (row.size() != header.size()) {
      throw ProblemError("wrong cell count at line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  const auto m = static_cast<int>(rows.size());
  const auto d = static_cast<int>(header.size()) - 1;
  Dataset ds;
  ds.features.resize(m, d);
  ds.labels.resize(m);
  for (int i = 0; i < m; ++i) {
    int c = 0;
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
      if (j == label_idx) {
        ds.labels(i) = rows[i][j] > 0.5 ? 1.0 : 0.0;
      } else {
        ds.features(i, c++) = rows[i][j];
      }
    }
  }
  // Column-wise standardization; constant columns map to zeros.
  for (int j = 0; j < d; ++j) {
    const double mean = ds.features.col(j).mean();
    ds.features.col(j).array() -= mean;
    const double sd = std::sqrt(ds.features.col(j).squaredNorm() / m);
    if (sd > 1e-12) {
      ds.features.col(j) /= sd;
    } else {
      ds.features.col(j).setZero();
    }
  }
  return ds;
}

Problem gen_logreg_from_data(const Dataset& data, int n, double lambda,
                             Partition partition, std::uint64_t seed) {
  return build_logreg(data.features, data.labels, n, lambda, partition, seed);
}

GradientSample gradient(const Problem& problem, const Eigen::MatrixXd& x) {
  if (x.rows() != problem.n || x.cols() != problem.d) {
    throw ProblemError("iterate matrix shape mismatch");
  }
  GradientSample g;
  g.value.resize(problem.n, problem.d);
  for (int i = 0; i < problem.n; ++i) {
    g.value.row(i) = problem.locals[i]->grad(x.row(i).transpose()).transpose();
  }
  return g;
}

GradientSample stochastic_gradient(const Problem& problem,
                                   const Eigen::MatrixXd& x,
                                   const NoiseConfig& noise,
                                   std::uint64_t seed, std::uint64_t round) {
  if (noise.minibatch > 0) {
    GradientSample g;
    g.value.resize(problem.n, problem.d);
    for (int i = 0; i < problem.n; ++i) {
      RngStream rng(seed, StreamTag::kMinibatch, round, i);
      g.value.row(i) = problem.locals[i]
                           ->grad_minibatch(x.row(i).transpose(),
                                            noise.minibatch, rng)
                           .transpose();
    }
    return g;
  }
  GradientSample g = gradient(problem, x);
  if (noise.sigma > 0.0) {
    for (int i = 0; i < problem.n; ++i) {
      RngStream rng(seed, StreamTag::kGradNoise, round, i);
      for (int j = 0; j < problem.d; ++j) {
        g.value(i, j) += noise.sigma * rng.normal();
      }
    }
    g.sigma_sq = noise.sigma * noise.sigma * problem.d;
  }
  return g;
}

}  // namespace leadopt
