#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "leadopt/simulator.hpp"

using namespace leadopt;

namespace {

const char* kBaseConfig = R"({
  "topology": {"type": "ring", "n": 6},
  "problem": {"type": "linreg", "n": 6, "d": 8, "rows_per_agent": 24,
              "lambda": 0.1, "noise": 0.5, "seed": 5},
  "algorithms": ["lead"],
  "quantizer": {"type": "pnorm", "bits": 2, "p": "inf", "block_size": 512},
  "params": {"mode": "manual", "eta": 0.05, "gamma": 0.05, "alpha": 0.02},
  "rounds": 40,
  "seeds": [1]
})";

ExperimentConfig base_config() { return parse_config(kBaseConfig); }

}  // namespace

TEST_CASE("config parse, dump, re-parse round-trip") {
  ExperimentConfig cfg = base_config();
  CHECK(cfg.topology.n == 6);
  CHECK(cfg.problem.d == 8);
  CHECK(cfg.quantizer.p == std::numeric_limits<double>::infinity());
  CHECK(cfg.params.eta == doctest::Approx(0.05));

  ExperimentConfig back = parse_config(dump_config(cfg));
  CHECK(dump_config(back) == dump_config(cfg));

  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"algorithms": ["bogus"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"rounds": -3})"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("uncompressed gamma=1 run coincides with the two-step recursion") {
  ExperimentConfig cfg = base_config();
  cfg.quantizer.type = "none";
  cfg.params.gamma = 1.0;
  cfg.params.alpha = 1.0;
  cfg.algorithms = {Algorithm::kLead, Algorithm::kNids};
  std::vector<RunResult> results = run(cfg, 1);
  REQUIRE(results.size() == 2);
  REQUIRE(results[0].records.size() == results[1].records.size());
  for (std::size_t k = 0; k < results[0].records.size(); ++k) {
    CHECK(results[0].records[k].dist_opt ==
          doctest::Approx(results[1].records[k].dist_opt).epsilon(1e-10));
    CHECK(results[0].records[k].consensus ==
          doctest::Approx(results[1].records[k].consensus).epsilon(1e-10));
  }
}

TEST_CASE("record bookkeeping") {
  ExperimentConfig cfg = base_config();
  cfg.rounds = 1;
  std::vector<RunResult> r = run(cfg, 1);
  REQUIRE(r.size() == 1);
  REQUIRE(r[0].records.size() == 1);
  CHECK(r[0].records[0].round == 1);

  cfg.rounds = 25;
  cfg.seeds = {1, 2};
  std::vector<RunResult> two = run(cfg, 1);
  REQUIRE(two.size() == 2);
  CHECK(two[0].seed != two[1].seed);
  // per-round bits: n blocks of d=8 elements, 32 + 8*3 bits each
  const std::uint64_t per_round = 6ull * (32 + 8 * 3);
  for (const RunResult& res : two) {
    REQUIRE(res.records.size() == 25);
    for (std::size_t k = 0; k < 25; ++k) {
      CHECK(res.records[k].round == static_cast<int>(k) + 1);
      CHECK(res.records[k].bits_cum == per_round * (k + 1));
    }
  }
  // different seeds draw different dither, so trajectories differ
  CHECK(two[0].records[24].dist_opt != two[1].records[24].dist_opt);
}

TEST_CASE("theory mode resolves parameters and converges") {
  ExperimentConfig cfg = base_config();
  cfg.params.mode = ParamMode::kTheory;
  cfg.rounds = 4000;
  std::vector<RunResult> r = run(cfg, 1);
  REQUIRE(r.size() == 1);
  CHECK(r[0].theoretical_rho > 0.0);
  CHECK(r[0].theoretical_rho < 1.0);
  CHECK(r[0].compression_constant > 0.0);
  CHECK_FALSE(r[0].diverged);
  CHECK(r[0].records.back().dist_opt < 1e-6 * r[0].records.front().dist_opt);
}

TEST_CASE("thread count does not change the output") {
  ExperimentConfig cfg = base_config();
  cfg.algorithms = {Algorithm::kLead, Algorithm::kNids, Algorithm::kDgd};
  cfg.seeds = {1, 2, 3};
  std::vector<RunResult> serial = run(cfg, 1);
  std::vector<RunResult> parallel = run(cfg, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(metrics_csv_string(serial[i].records) ==
          metrics_csv_string(parallel[i].records));
  }
  // env var path
  setenv("LEADOPT_THREADS", "3", 1);
  std::vector<RunResult> from_env = run(cfg);
  unsetenv("LEADOPT_THREADS");
  REQUIRE(from_env.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(metrics_csv_string(from_env[i].records) ==
          metrics_csv_string(serial[i].records));
  }
}

TEST_CASE("csv format") {
  MetricsRecord rec;
  rec.round = 3;
  rec.dist_opt = 1.5;
  rec.consensus = 0.25;
  rec.loss_avg = 2.0;
  rec.comp_err = 0.0;
  rec.bits_cum = 12345;
  std::string csv = metrics_csv_string({rec});
  CHECK(csv.rfind("round,dist_opt,consensus,loss_avg,comp_err,bits_cum,lyapunov\n",
                  0) == 0);
  CHECK(csv.find("\n3,") != std::string::npos);
  CHECK(csv.find("12345") != std::string::npos);
  // trailing field empty without a lyapunov value
  CHECK(csv.back() == '\n');
  CHECK(csv[csv.size() - 2] == ',');

  rec.lyapunov = 7.0;
  std::string with_l = metrics_csv_string({rec});
  CHECK(with_l[with_l.size() - 2] != ',');
}

TEST_CASE("empirical_rate recovers a geometric factor") {
  std::vector<double> series;
  double v = 1.0;
  for (int k = 0; k < 400; ++k) {
    series.push_back(v);
    v *= 0.95;
  }
  CHECK(empirical_rate(series) == doctest::Approx(0.95).epsilon(1e-6));
  CHECK_THROWS_AS(empirical_rate(std::vector<double>(50, 1.0)),
                  SimulatorError);
}

TEST_CASE("stochastic_plateau flags a flat noisy tail") {
  std::vector<double> series;
  double v = 1.0;
  RngStream rng(2, StreamTag::kInit, 0, 0);
  for (int k = 0; k < 800; ++k) {
    series.push_back(std::max(v, 1e-4 * (1.0 + 0.05 * rng.normal())));
    v *= 0.9;
  }
  // bound = 10 eta^2 sigma^2 / (1 - rho); choose values so it sits above 1e-4
  PlateauCheck pc = stochastic_plateau(series, 0.01, 2.0, 0.9);
  CHECK(pc.bound == doctest::Approx(10.0 * 1e-4 * 2.0 / 0.1));
  CHECK(pc.plateau == doctest::Approx(1e-4).epsilon(0.05));
  CHECK(pc.conclusive);
  CHECK(pc.satisfied);

  // still-decaying series is inconclusive
  std::vector<double> decay;
  double w = 1.0;
  for (int k = 0; k < 800; ++k) {
    decay.push_back(w);
    w *= 0.99;
  }
  CHECK_FALSE(stochastic_plateau(decay, 0.01, 2.0, 0.9).conclusive);
}

TEST_CASE("divergence is detected and truncates the run") {
  ExperimentConfig cfg = base_config();
  cfg.params.eta = 1e4;  // far beyond any stable stepsize
  cfg.rounds = 200;
  std::vector<RunResult> r = run(cfg, 1);
  REQUIRE(r.size() == 1);
  CHECK(r[0].diverged);
  CHECK(r[0].records.size() < 200);
}

TEST_CASE("build_setup resolves the pieces consistently") {
  ExperimentConfig cfg = base_config();
  ExperimentSetup setup = build_setup(cfg);
  CHECK(setup.mixing.n == 6);
  CHECK(setup.problem.d == 8);
  CHECK(setup.compression_constant ==
        doctest::Approx(8.0 * 0.25 * 0.25));  // d * 2^-2(b-1) / 4 at d=8, b=2
  cfg.quantizer.type = "none";
  CHECK(build_setup(cfg).compression_constant == 0.0);
}

TEST_CASE("lyapunov column is recorded when requested") {
  ExperimentConfig cfg = base_config();
  cfg.record_lyapunov = true;
  cfg.rounds = 10;
  std::vector<RunResult> r = run(cfg, 1);
  REQUIRE(r.size() == 1);
  for (const MetricsRecord& rec : r[0].records) {
    REQUIRE(rec.lyapunov.has_value());
    CHECK(*rec.lyapunov >= 0.0);
  }
  cfg.record_lyapunov = false;
  std::vector<RunResult> r2 = run(cfg, 1);
  CHECK_FALSE(r2[0].records[0].lyapunov.has_value());
}
