#include "leadopt/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace leadopt {

using nlohmann::json;

namespace {

constexpr double kDivergenceLimit = 1e12;

double parse_p(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    throw ConfigError("quantizer.p must be a number or \"inf\", got '" + s +
                      "'");
  }
  return v.get<double>();
}

json p_to_json(double p) {
  if (std::isinf(p)) return json("inf");
  return json(p);
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kLead:
      return "lead";
    case Algorithm::kNids:
      return "nids";
    case Algorithm::kDgd:
      return "dgd";
  }
  return "?";
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    read_if(j, "schema_version", cfg.schema_version);
    if (cfg.schema_version != 1) {
      throw ConfigError("unsupported schema_version " +
                        std::to_string(cfg.schema_version));
    }
    if (j.contains("topology")) {
      const json& t = j.at("topology");
      read_if(t, "type", cfg.topology.type);
      read_if(t, "n", cfg.topology.n);
      read_if(t, "self_weight", cfg.topology.self_weight);
      read_if(t, "path", cfg.topology.path);
    }
    if (j.contains("problem")) {
      const json& p = j.at("problem");
      read_if(p, "type", cfg.problem.type);
      read_if(p, "n", cfg.problem.n);
      read_if(p, "d", cfg.problem.d);
      read_if(p, "rows_per_agent", cfg.problem.rows_per_agent);
      read_if(p, "samples_per_agent", cfg.problem.samples_per_agent);
      read_if(p, "lambda", cfg.problem.lambda);
      read_if(p, "noise", cfg.problem.noise);
      read_if(p, "partition", cfg.problem.partition);
      read_if(p, "path", cfg.problem.path);
      read_if(p, "label_column", cfg.problem.label_column);
      read_if(p, "seed", cfg.problem.seed);
    }
    if (j.contains("algorithms")) {
      cfg.algorithms.clear();
      for (const auto& a : j.at("algorithms")) {
        const std::string s = a.get<std::string>();
        if (s == "lead") {
          cfg.algorithms.push_back(Algorithm::kLead);
        } else if (s == "nids") {
          cfg.algorithms.push_back(Algorithm::kNids);
        } else if (s == "dgd") {
          cfg.algorithms.push_back(Algorithm::kDgd);
        } else {
          throw ConfigError("unknown algorithm '" + s + "'");
        }
      }
    }
    if (j.contains("quantizer")) {
      const json& q = j.at("quantizer");
      read_if(q, "type", cfg.quantizer.type);
      read_if(q, "bits", cfg.quantizer.bits);
      if (q.contains("p")) cfg.quantizer.p = parse_p(q.at("p"));
      read_if(q, "block_size", cfg.quantizer.block_size);
    }
    if (j.contains("params")) {
      const json& p = j.at("params");
      std::string mode = "manual";
      read_if(p, "mode", mode);
      if (mode == "manual") {
        cfg.params.mode = ParamMode::kManual;
      } else if (mode == "theory") {
        cfg.params.mode = ParamMode::kTheory;
      } else if (mode == "diminishing") {
        cfg.params.mode = ParamMode::kDiminishing;
      } else {
        throw ConfigError("unknown params.mode '" + mode + "'");
      }
      read_if(p, "eta", cfg.params.eta);
      read_if(p, "gamma", cfg.params.gamma);
      read_if(p, "alpha", cfg.params.alpha);
      read_if(p, "theta4", cfg.params.theta4);
    }
    if (j.contains("noise")) {
      read_if(j.at("noise"), "sigma", cfg.noise.sigma);
      read_if(j.at("noise"), "minibatch", cfg.noise.minibatch);
    }
    read_if(j, "rounds", cfg.rounds);
    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    read_if(j, "record_lyapunov", cfg.record_lyapunov);

    if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
    if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
    if (cfg.algorithms.empty()) {
      throw ConfigError("at least one algorithm is required");
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["topology"] = {{"type", cfg.topology.type},
                   {"n", cfg.topology.n},
                   {"self_weight", cfg.topology.self_weight}};
  if (!cfg.topology.path.empty()) j["topology"]["path"] = cfg.topology.path;
  json p = {{"type", cfg.problem.type},
            {"n", cfg.problem.n},
            {"d", cfg.problem.d},
            {"rows_per_agent", cfg.problem.rows_per_agent},
            {"samples_per_agent", cfg.problem.samples_per_agent},
            {"lambda", cfg.problem.lambda},
            {"noise", cfg.problem.noise},
            {"partition", cfg.problem.partition},
            {"seed", cfg.problem.seed}};
  if (!cfg.problem.path.empty()) {
    p["path"] = cfg.problem.path;
    p["label_column"] = cfg.problem.label_column;
  }
  j["problem"] = p;
  json algs = json::array();
  for (auto a : cfg.algorithms) algs.push_back(algorithm_name(a));
  j["algorithms"] = algs;
  j["quantizer"] = {{"type", cfg.quantizer.type},
                    {"bits", cfg.quantizer.bits},
                    {"p", p_to_json(cfg.quantizer.p)},
                    {"block_size", cfg.quantizer.block_size}};
  const char* mode = cfg.params.mode == ParamMode::kManual ? "manual"
                     : cfg.params.mode == ParamMode::kTheory ? "theory"
                                                             : "diminishing";
  j["params"] = {{"mode", mode},
                 {"eta", cfg.params.eta},
                 {"gamma", cfg.params.gamma},
                 {"alpha", cfg.params.alpha},
                 {"theta4", cfg.params.theta4}};
  j["noise"] = {{"sigma", cfg.noise.sigma}, {"minibatch", cfg.noise.minibatch}};
  j["rounds"] = cfg.rounds;
  j["seeds"] = cfg.seeds;
  j["record_lyapunov"] = cfg.record_lyapunov;
  return j.dump(2);
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  ExperimentSetup setup;
  if (cfg.topology.type == "ring") {
    setup.mixing = build_ring(cfg.topology.n, cfg.topology.self_weight);
  } else if (cfg.topology.type == "fully_connected") {
    setup.mixing = build_fully_connected(cfg.topology.n);
  } else if (cfg.topology.type == "file") {
    setup.mixing = build_from_file(cfg.topology.path);
  } else {
    throw ConfigError("unknown topology type '" + cfg.topology.type + "'");
  }

  if (cfg.problem.type == "linreg") {
    setup.problem =
        gen_linreg(cfg.problem.n, cfg.problem.d, cfg.problem.rows_per_agent,
                   cfg.problem.lambda, cfg.problem.noise, cfg.problem.seed);
  } else if (cfg.problem.type == "logreg") {
    const Partition part = cfg.problem.partition == "homogeneous"
                               ? Partition::kHomogeneous
                               : Partition::kHeterogeneous;
    setup.problem =
        gen_logreg(cfg.problem.n, cfg.problem.d, cfg.problem.samples_per_agent,
                   cfg.problem.lambda, part, cfg.problem.seed);
  } else if (cfg.problem.type == "logreg_csv") {
    const Partition part = cfg.problem.partition == "homogeneous"
                               ? Partition::kHomogeneous
                               : Partition::kHeterogeneous;
    Dataset ds = load_csv(cfg.problem.path, cfg.problem.label_column);
    setup.problem = gen_logreg_from_data(ds, cfg.problem.n, cfg.problem.lambda,
                                         part, cfg.problem.seed);
  } else {
    throw ConfigError("unknown problem type '" + cfg.problem.type + "'");
  }
  if (setup.problem.n != setup.mixing.n) {
    throw ConfigError("problem agent count does not match topology");
  }

  if (cfg.quantizer.type == "none") {
    setup.compressor = std::make_unique<IdentityCompressor>();
  } else if (cfg.quantizer.type == "pnorm") {
    QuantizerConfig qc;
    qc.bits = cfg.quantizer.bits;
    qc.p = cfg.quantizer.p;
    qc.block_size = cfg.quantizer.block_size;
    setup.compressor = std::make_unique<PNormQuantizer>(qc);
  } else {
    throw ConfigError("unknown quantizer type '" + cfg.quantizer.type + "'");
  }
  setup.compression_constant =
      setup.compressor->contraction(setup.problem.d);
  return setup;
}

namespace {

struct ResolvedParams {
  LeadParams base;
  std::optional<DiminishingSchedule> schedule;
  double theoretical_rho = 0.0;
};

ResolvedParams resolve_params(const ExperimentConfig& cfg,
                              const ExperimentSetup& setup) {
  ResolvedParams rp;
  const Problem& pb = setup.problem;
  const MixingMatrix& mix = setup.mixing;
  const double c = setup.compression_constant;
  switch (cfg.params.mode) {
    case ParamMode::kManual:
      rp.base = LeadParams{cfg.params.eta, cfg.params.gamma, cfg.params.alpha};
      break;
    case ParamMode::kTheory: {
      TheoryParams tp =
          corollary1_params(pb.mu, pb.lipschitz, c, mix.beta, mix.kappa_g);
      rp.base = LeadParams{tp.eta, tp.gamma, tp.alpha};
      rp.theoretical_rho = tp.rho_bound;
      break;
    }
    case ParamMode::kDiminishing: {
      rp.schedule = diminishing_schedule(pb.mu, pb.lipschitz, c, mix.beta,
                                         mix.lambda_max_pinv(),
                                         cfg.params.theta4);
      rp.base = rp.schedule->params(0);
      break;
    }
  }
  return rp;
}

bool check_finite(const Eigen::MatrixXd& x) {
  return x.allFinite() && x.cwiseAbs().maxCoeff() <= kDivergenceLimit;
}

MetricsRecord make_record(int round, const Eigen::MatrixXd& x,
                          const Problem& pb, double comp_err,
                          std::uint64_t bits_cum) {
  MetricsRecord r;
  r.round = round;
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  r.dist_opt = (x.rowwise() - pb.x_star.transpose()).norm();
  r.consensus = (x.rowwise() - xbar).norm();
  r.loss_avg = pb.global_value(xbar.transpose());
  r.comp_err = comp_err;
  r.bits_cum = bits_cum;
  return r;
}

RunResult run_single(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                     const ResolvedParams& rp, Algorithm alg,
                     std::uint64_t seed) {
  const Problem& pb = setup.problem;
  const MixingMatrix& mix = setup.mixing;
  RunResult res;
  res.algorithm = alg;
  res.seed = seed;
  res.params = rp.base;
  res.theoretical_rho = rp.theoretical_rho;
  res.compression_constant = setup.compression_constant;
  res.records.reserve(cfg.rounds);

  const Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(pb.n, pb.d);
  const std::uint64_t uncompressed_bits =
      32ull * static_cast<std::uint64_t>(pb.n) * pb.d;
  std::uint64_t bits_cum = 0;

  if (alg == Algorithm::kDgd) {
    Eigen::MatrixXd x = x0;
    for (int k = 1; k <= cfg.rounds; ++k) {
      GradientSample g = stochastic_gradient(pb, x, cfg.noise, seed, k);
      x = dgd_step(x, g.value, mix, rp.base.eta);
      bits_cum += uncompressed_bits;
      if (!check_finite(x)) {
        res.diverged = true;
        break;
      }
      res.records.push_back(make_record(k, x, pb, 0.0, bits_cum));
    }
    return res;
  }

  if (alg == Algorithm::kNids) {
    GradientSample g0 = stochastic_gradient(pb, x0, cfg.noise, seed, 0);
    Eigen::MatrixXd x_prev = x0;
    Eigen::MatrixXd x = x0 - rp.base.eta * g0.value;
    Eigen::MatrixXd g_prev = g0.value;
    for (int k = 1; k <= cfg.rounds; ++k) {
      GradientSample g = stochastic_gradient(pb, x, cfg.noise, seed, k);
      Eigen::MatrixXd x_next =
          nids_step(x, x_prev, g.value, g_prev, mix, rp.base.eta);
      x_prev = x;
      x = x_next;
      g_prev = g.value;
      bits_cum += uncompressed_bits;
      if (!check_finite(x)) {
        res.diverged = true;
        break;
      }
      res.records.push_back(make_record(k, x, pb, 0.0, bits_cum));
    }
    return res;
  }

  // LEAD
  std::optional<LyapunovEval> lyap;
  if (cfg.record_lyapunov) {
    lyap.emplace(pb, mix, rp.base, setup.compression_constant);
  }
  SwarmState st = lead_init(pb, mix, rp.base, x0, cfg.noise, seed);
  for (int k = 1; k <= cfg.rounds; ++k) {
    const LeadParams prm =
        rp.schedule ? rp.schedule->params(k - 1) : rp.base;
    StepMetrics m =
        lead_step(st, pb, mix, prm, *setup.compressor, cfg.noise, seed);
    bits_cum += m.bits;
    if (!check_finite(st.x)) {
      res.diverged = true;
      break;
    }
    MetricsRecord rec = make_record(k, st.x, pb, m.comp_err, bits_cum);
    if (lyap) rec.lyapunov = (*lyap)(st);
    res.records.push_back(std::move(rec));
  }
  return res;
}

int thread_budget(int threads) {
  if (threads >= 0) return threads;
  if (const char* env = std::getenv("LEADOPT_THREADS")) {
    return std::max(0, std::atoi(env));
  }
  return 0;
}

}  // namespace

std::vector<RunResult> run(const ExperimentConfig& cfg, int threads) {
  ExperimentSetup setup = build_setup(cfg);
  ResolvedParams rp = resolve_params(cfg, setup);

  struct Job {
    Algorithm alg;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto alg : cfg.algorithms) {
    for (auto seed : cfg.seeds) jobs.push_back({alg, seed});
  }
  std::vector<RunResult> results(jobs.size());

  const int workers = std::min<int>(thread_budget(threads),
                                    static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      results[i] = run_single(cfg, setup, rp, jobs[i].alg, jobs[i].seed);
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          results[i] = run_single(cfg, setup, rp, jobs[i].alg, jobs[i].seed);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return results;
}

double empirical_rate(const std::vector<double>& series) {
  if (series.empty()) throw SimulatorError("empty series");
  const double initial = series.front();
  if (!(initial > 0.0)) throw SimulatorError("series must start positive");
  const double lo = 1e-10 * initial;
  const double hi = 0.1 * initial;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double v = series[k];
    if (v >= lo && v <= hi) {
      const double x = static_cast<double>(k);
      const double y = std::log(v);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++m;
    }
  }
  if (m < 2) {
    throw SimulatorError(
        "insufficient decay: fewer than two points in the geometric window");
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return std::exp(slope);
}

PlateauCheck stochastic_plateau(const std::vector<double>& series, double eta,
                                double sigma_sq, double rho) {
  PlateauCheck pc;
  if (series.size() < 8) throw SimulatorError("series too short for plateau");
  const std::size_t q = series.size() / 4;
  std::vector<double> tail(series.end() - q, series.end());

  // drift over the tail, from a linear fit
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < q; ++i) {
    sx += i;
    sy += tail[i];
    sxx += static_cast<double>(i) * i;
    sxy += i * tail[i];
  }
  const double slope = (q * sxy - sx * sy) / (q * sxx - sx * sx);

  std::nth_element(tail.begin(), tail.begin() + q / 2, tail.end());
  pc.plateau = tail[q / 2];
  pc.bound = 10.0 * eta * eta * sigma_sq / (1.0 - rho);
  pc.conclusive = std::abs(slope) * static_cast<double>(q) <= 0.5 * pc.plateau;
  pc.satisfied = pc.plateau <= pc.bound;
  return pc;
}

std::string metrics_csv_string(const std::vector<MetricsRecord>& records) {
  std::string out = "round,dist_opt,consensus,loss_avg,comp_err,bits_cum,lyapunov\n";
  char buf[512];
  for (const auto& r : records) {
    int len = std::snprintf(buf, sizeof(buf),
                            "%d,%.17e,%.17e,%.17e,%.17e,%llu,", r.round,
                            r.dist_opt, r.consensus, r.loss_avg, r.comp_err,
                            static_cast<unsigned long long>(r.bits_cum));
    out.append(buf, len);
    if (r.lyapunov) {
      len = std::snprintf(buf, sizeof(buf), "%.17e", *r.lyapunov);
      out.append(buf, len);
    }
    out.push_back('\n');
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SimulatorError("cannot write metrics file: " + path);
  out << metrics_csv_string(records);
}

}  // namespace leadopt
