#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "leadopt/algorithms.hpp"
#include "leadopt/compression.hpp"
#include "leadopt/simulator.hpp"
#include "leadopt/topology.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace leadopt;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            bool json_out, bool dump_only, std::int64_t seed_override) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (seed_override >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
  }
  if (dump_only) {
    std::cout << dump_config(cfg) << "\n";
    return 0;
  }

  std::vector<RunResult> results;
  try {
    results = run(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  fs::create_directories(out_dir);
  json summary = json::array();
  for (const auto& res : results) {
    const std::string name = algorithm_name(res.algorithm) + "_seed" +
                             std::to_string(res.seed);
    write_metrics_csv((fs::path(out_dir) / (name + ".csv")).string(),
                      res.records);

    json entry;
    entry["algorithm"] = algorithm_name(res.algorithm);
    entry["seed"] = res.seed;
    entry["diverged"] = res.diverged;
    entry["rounds"] = res.records.size();
    entry["eta"] = res.params.eta;
    entry["gamma"] = res.params.gamma;
    entry["alpha"] = res.params.alpha;
    entry["compression_constant"] = res.compression_constant;
    if (!res.records.empty()) {
      entry["final_dist_opt"] = res.records.back().dist_opt;
      entry["final_consensus"] = res.records.back().consensus;
      entry["total_bits"] = res.records.back().bits_cum;
      std::vector<double> dist;
      dist.reserve(res.records.size());
      for (const auto& r : res.records) dist.push_back(r.dist_opt);
      try {
        entry["fitted_rate"] = empirical_rate(dist);
      } catch (const SimulatorError&) {
        entry["fitted_rate"] = nullptr;
      }
    }
    if (res.theoretical_rho > 0.0) {
      entry["theoretical_rho"] = res.theoretical_rho;
    }
    summary.push_back(std::move(entry));
  }
  std::ofstream((fs::path(out_dir) / "summary.json").string())
      << summary.dump(2) << "\n";
  if (json_out) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << "wrote " << results.size() << " metric file(s) to " << out_dir
              << "\n";
    for (const auto& e : summary) {
      std::cout << "  " << e["algorithm"].get<std::string>() << " seed "
                << e["seed"] << ": final dist_opt = " << e["final_dist_opt"]
                << (e["diverged"].get<bool>() ? " [diverged]" : "") << "\n";
    }
  }
  return 0;
}

int cmd_params(double mu, double L, double C, double beta, double kappa_g,
               double eta, double theta4) {
  json out;
  try {
    const double lambda_min_plus = beta / kappa_g;
    if (eta <= 0.0) eta = 1.0 / L;
    if (eta > 2.0 / (mu + L)) {
      std::cerr << "error: eta exceeds 2/(mu+L) = " << 2.0 / (mu + L)
                << "; the constant-stepsize certificate requires eta in (0, "
                   "2/(mu+L)]\n";
      return 2;
    }
    TheoryParams tp = corollary1_params(mu, L, C, beta, kappa_g);
    RateCertificate cert = theorem1_ranges(mu, L, C, beta, lambda_min_plus,
                                           eta, tp.gamma, tp.alpha);
    out["theorem1"] = {{"eta", eta},
                       {"a1", cert.a1},
                       {"gamma_range", {cert.gamma_lo, cert.gamma_hi}},
                       {"alpha_range", {cert.alpha_lo, cert.alpha_hi}}};
    out["corollary1"] = {{"eta", tp.eta},
                         {"gamma", tp.gamma},
                         {"alpha", tp.alpha},
                         {"alpha_case", tp.alpha_case},
                         {"rho", tp.rho_bound}};
    if (C > 0.0) {
      DiminishingSchedule s = diminishing_schedule(
          mu, L, C, beta, 1.0 / lambda_min_plus, theta4);
      out["diminishing"] = {{"theta1", s.theta1}, {"theta2", s.theta2},
                            {"theta3", s.theta3}, {"theta4", s.theta4},
                            {"theta5", s.theta5}, {"eta_star", s.eta_star},
                            {"eta0", s.eta(0)}};
    } else {
      out["diminishing"] = nullptr;
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_quantcheck(int bits, const std::string& p_str, int d, int trials,
                   std::uint64_t seed, bool json_out) {
  if (trials < 1000) {
    std::cerr << "error: quantcheck needs trials >= 1000\n";
    return 2;
  }
  double p;
  if (p_str == "inf") {
    p = std::numeric_limits<double>::infinity();
  } else {
    p = std::stod(p_str);
  }

  RngStream data_rng(seed, StreamTag::kDataGen, 0, 0);
  Eigen::VectorXd x(d);
  for (int j = 0; j < d; ++j) x(j) = data_rng.normal();

  auto mean_err_for = [&](double pn, Eigen::VectorXd* mean_dev) {
    QuantizerConfig cfg;
    cfg.bits = bits;
    cfg.p = pn;
    cfg.block_size = d;
    RngStream rng(seed, StreamTag::kDither, 0, 0);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    double err2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Eigen::VectorXd q = decode(quantize(x, cfg, rng));
      acc += q;
      err2 += (x - q).squaredNorm();
    }
    if (mean_dev) *mean_dev = acc / trials - x;
    return err2 / trials;
  };

  // Unbiasedness and variance bound at the requested norm.
  Eigen::VectorXd mean_dev;
  const double mse = mean_err_for(p, &mean_dev);
  const double grid = std::ldexp(1.0, -(bits - 1));
  double norm_p;
  {
    QuantizerConfig cfg;
    cfg.bits = bits;
    cfg.p = p;
    cfg.block_size = d;
    RngStream tmp(seed, StreamTag::kDither, 1, 0);
    QuantizedMessage m = quantize(x, cfg, tmp);
    norm_p = m.norms[0];
  }
  const double var_bound = 0.25 * d * grid * grid * norm_p * norm_p;
  // Per-coordinate standard error of the dither noise, bounded by the cell.
  const double se = 0.5 * grid * norm_p / std::sqrt(static_cast<double>(trials));
  const bool unbiased_ok = mean_dev.cwiseAbs().maxCoeff() <= 5.0 * se;
  const bool variance_ok = mse <= var_bound * (1.0 + 3.0 / std::sqrt(trials));

  const double err_inf =
      mean_err_for(std::numeric_limits<double>::infinity(), nullptr);
  const double err_2 = mean_err_for(2.0, nullptr);
  const double err_1 = mean_err_for(1.0, nullptr);
  const bool ordered = err_inf <= err_2 * 1.02 && err_2 <= err_1 * 1.02;

  json out;
  out["bits"] = bits;
  out["p"] = p_str;
  out["d"] = d;
  out["trials"] = trials;
  out["mean_sq_error"] = mse;
  out["variance_bound"] = var_bound;
  out["max_mean_deviation"] = mean_dev.cwiseAbs().maxCoeff();
  out["unbiased"] = unbiased_ok;
  out["variance_bounded"] = variance_ok;
  out["mean_error_inf_2_1"] = {err_inf, err_2, err_1};
  out["norm_ordering"] = ordered;
  out["pass"] = unbiased_ok && variance_ok && ordered;
  if (json_out) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "unbiasedness:   " << (unbiased_ok ? "pass" : "FAIL")
              << "  (max mean deviation " << mean_dev.cwiseAbs().maxCoeff()
              << ", 5se = " << 5.0 * se << ")\n"
              << "variance bound: " << (variance_ok ? "pass" : "FAIL")
              << "  (E||x-Q(x)||^2 = " << mse << " <= " << var_bound << ")\n"
              << "norm ordering:  " << (ordered ? "pass" : "FAIL")
              << "  (inf " << err_inf << " <= 2 " << err_2 << " <= 1 "
              << err_1 << ")\n";
  }
  return out["pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized optimization with communication compression"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  bool json_out = false, dump_cfg = false;
  std::int64_t seed_override = -1;
  auto* run_cmd = app.add_subcommand("run", "Run experiments from a config");
  run_cmd->add_option("--config", config_path, "JSON config path")->required();
  run_cmd->add_option("--out", out_dir, "Output directory for CSVs");
  run_cmd->add_flag("--json", json_out, "Emit machine-readable summary");
  run_cmd->add_flag("--dump-config", dump_cfg,
                    "Print the effective config and exit");
  run_cmd->add_option("--seed", seed_override, "Override the seed list");

  double mu = 1.0, L = 10.0, C = 0.0, beta = 4.0 / 3.0, kappa_g = 1.0,
         eta = 0.0, theta4 = 0.0;
  auto* params_cmd =
      app.add_subcommand("params", "Print theorem-driven parameter choices");
  params_cmd->add_option("--mu", mu, "strong convexity")->required();
  params_cmd->add_option("--L", L, "smoothness")->required();
  params_cmd->add_option("--C", C, "compression constant")->required();
  params_cmd->add_option("--beta", beta, "lambda_max(I-W)")->required();
  params_cmd->add_option("--kappa-g", kappa_g, "graph condition number")
      ->required();
  params_cmd->add_option("--eta", eta, "stepsize (default 1/L)");
  params_cmd->add_option("--theta4", theta4,
                         "diminishing schedule knob (default midpoint)");

  int bits = 2, d = 512, trials = 10000;
  std::string p_str = "inf";
  std::uint64_t qseed = 1;
  auto* quant_cmd =
      app.add_subcommand("quantcheck", "Quantizer unbiasedness/variance report");
  quant_cmd->add_option("--bits", bits, "bits per level");
  quant_cmd->add_option("--p", p_str, "norm: 1, 2, ... or inf");
  quant_cmd->add_option("--d", d, "vector dimension");
  quant_cmd->add_option("--trials", trials, "dither draws");
  quant_cmd->add_option("--seed", qseed, "rng seed");
  quant_cmd->add_flag("--json", json_out, "Emit machine-readable report");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    return cmd_run(config_path, out_dir, json_out, dump_cfg, seed_override);
  }
  if (params_cmd->parsed()) {
    return cmd_params(mu, L, C, beta, kappa_g, eta, theta4);
  }
  if (quant_cmd->parsed()) {
    return cmd_quantcheck(bits, p_str, d, trials, qseed, json_out);
  }
  return 0;
}
