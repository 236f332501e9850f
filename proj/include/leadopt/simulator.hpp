#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "leadopt/algorithms.hpp"
#include "leadopt/compression.hpp"
#include "leadopt/problems.hpp"
#include "leadopt/topology.hpp"

namespace leadopt {

struct SimulatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Algorithm { kLead, kNids, kDgd };

std::string algorithm_name(Algorithm a);

enum class ParamMode { kManual, kTheory, kDiminishing };

struct TopologySpec {
  std::string type = "ring";  // ring | fully_connected | file
  int n = 8;
  double self_weight = 1.0 / 3.0;
  std::string path;
};

struct ProblemSpec {
  std::string type = "linreg";  // linreg | logreg | logreg_csv
  int n = 8;
  int d = 64;
  int rows_per_agent = 128;
  int samples_per_agent = 64;
  double lambda = 0.1;
  double noise = 0.1;
  std::string partition = "heterogeneous";
  std::string path;
  std::string label_column = "label";
  std::uint64_t seed = 1;
};

struct QuantizerSpec {
  std::string type = "pnorm";  // pnorm | none
  int bits = 2;
  double p = std::numeric_limits<double>::infinity();
  int block_size = 512;
};

struct ParamSpec {
  ParamMode mode = ParamMode::kManual;
  double eta = 0.1;
  double gamma = 1.0;
  double alpha = 0.5;
  double theta4 = 0.0;  // 0 = midpoint default
};

struct ExperimentConfig {
  int schema_version = 1;
  TopologySpec topology;
  ProblemSpec problem;
  std::vector<Algorithm> algorithms = {Algorithm::kLead};
  QuantizerSpec quantizer;
  ParamSpec params;
  NoiseConfig noise;
  int rounds = 100;
  std::vector<std::uint64_t> seeds = {1};
  bool record_lyapunov = false;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& cfg);

struct MetricsRecord {
  int round = 0;
  double dist_opt = 0.0;   // ||X^k - X*||_F
  double consensus = 0.0;  // ||X^k - 1 Xbar^k||_F
  double loss_avg = 0.0;   // f(Xbar^k)
  double comp_err = 0.0;   // ||E^k||_F
  std::uint64_t bits_cum = 0;
  std::optional<double> lyapunov;
};

struct RunResult {
  Algorithm algorithm = Algorithm::kLead;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  bool diverged = false;
  // Effective parameters of the run (post theory-mode resolution).
  LeadParams params;
  double theoretical_rho = 0.0;  // 0 when not in theory mode
  double compression_constant = 0.0;
};

// Deterministic given (config, seed); LEADOPT_THREADS (or the threads
// argument) parallelizes across (algorithm, seed) jobs only.
std::vector<RunResult> run(const ExperimentConfig& config, int threads = -1);

// Shared context so callers can run steppers against the same problem
// instance the simulator resolved.
struct ExperimentSetup {
  MixingMatrix mixing;
  Problem problem;
  std::unique_ptr<Compressor> compressor;
  double compression_constant = 0.0;
};

ExperimentSetup build_setup(const ExperimentConfig& config);

// Per-round contraction factor from a log-linear fit over the geometric
// phase: rounds where value is in [1e-10 * initial, 0.1 * initial].
double empirical_rate(const std::vector<double>& series);

struct PlateauCheck {
  double plateau = 0.0;  // median of the last quarter
  double bound = 0.0;    // 10 * eta^2 sigma^2 / (1 - rho)
  bool satisfied = false;
  bool conclusive = false;  // false when the tail still has slope
};

// series holds per-round mean squared distances; sigma_sq is the per-agent
// gradient variance bound.
PlateauCheck stochastic_plateau(const std::vector<double>& series, double eta,
                                double sigma_sq, double rho);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records);
std::string metrics_csv_string(const std::vector<MetricsRecord>& records);

}  // namespace leadopt
