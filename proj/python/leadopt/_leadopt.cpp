#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leadopt/algorithms.hpp"
#include "leadopt/compression.hpp"
#include "leadopt/problems.hpp"
#include "leadopt/simulator.hpp"
#include "leadopt/topology.hpp"

namespace py = pybind11;
using namespace leadopt;

namespace {

py::dict mixing_to_dict(const MixingMatrix& m) {
  py::dict d;
  d["n"] = m.n;
  d["w"] = m.w;
  d["beta"] = m.beta;
  d["lambda_min_plus"] = m.lambda_min_plus;
  d["kappa_g"] = m.kappa_g;
  d["pinv_iw"] = m.pinv_iw;
  return d;
}

QuantizerConfig make_cfg(int bits, double p, int block_size) {
  QuantizerConfig cfg;
  cfg.bits = bits;
  cfg.p = p;
  cfg.block_size = block_size;
  return cfg;
}

py::list results_to_list(const std::vector<RunResult>& results) {
  py::list out;
  for (const auto& res : results) {
    py::dict entry;
    entry["algorithm"] = algorithm_name(res.algorithm);
    entry["seed"] = res.seed;
    entry["diverged"] = res.diverged;
    entry["eta"] = res.params.eta;
    entry["gamma"] = res.params.gamma;
    entry["alpha"] = res.params.alpha;
    entry["theoretical_rho"] = res.theoretical_rho;
    entry["compression_constant"] = res.compression_constant;
    py::list recs;
    for (const auto& r : res.records) {
      py::dict rec;
      rec["round"] = r.round;
      rec["dist_opt"] = r.dist_opt;
      rec["consensus"] = r.consensus;
      rec["loss_avg"] = r.loss_avg;
      rec["comp_err"] = r.comp_err;
      rec["bits_cum"] = r.bits_cum;
      if (r.lyapunov) rec["lyapunov"] = *r.lyapunov;
      recs.append(std::move(rec));
    }
    entry["records"] = std::move(recs);
    out.append(std::move(entry));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_leadopt, m) {
  m.doc() = "Decentralized optimization with communication compression";

  m.def(
      "build_ring",
      [](int n, double self_weight) {
        return mixing_to_dict(build_ring(n, self_weight));
      },
      py::arg("n"), py::arg("self_weight") = 1.0 / 3.0);
  m.def("build_fully_connected",
        [](int n) { return mixing_to_dict(build_fully_connected(n)); });
  m.def("mixing_from_file", [](const std::string& path) {
    return mixing_to_dict(build_from_file(path));
  });
  m.def("spectral_stats", [](const Eigen::MatrixXd& w) {
    SpectralStats s = spectral_stats(w);
    py::dict d;
    d["beta"] = s.beta;
    d["lambda_min_plus"] = s.lambda_min_plus;
    d["kappa_g"] = s.kappa_g;
    d["pinv_iw"] = s.pinv_iw;
    return d;
  });

  m.def(
      "quantize_decode",
      [](const Eigen::VectorXd& x, int bits, double p, int block_size,
         std::uint64_t seed, std::uint64_t round, std::uint64_t agent) {
        RngStream rng(seed, StreamTag::kDither, round, agent);
        QuantizedMessage msg = quantize(x, make_cfg(bits, p, block_size), rng);
        py::dict d;
        d["value"] = decode(msg);
        d["bits"] = message_bits(msg);
        return d;
      },
      py::arg("x"), py::arg("bits") = 2,
      py::arg("p") = std::numeric_limits<double>::infinity(),
      py::arg("block_size") = 512, py::arg("seed") = 1, py::arg("round") = 0,
      py::arg("agent") = 0);
  m.def(
      "payload_bits",
      [](std::uint32_t count, int bits, int block_size) {
        QuantizerConfig cfg;
        cfg.bits = bits;
        cfg.block_size = block_size;
        return payload_bits(count, cfg);
      },
      py::arg("count"), py::arg("bits") = 2, py::arg("block_size") = 512);
  m.def(
      "analytic_c_bound",
      [](int bits, double p, int block_dim) {
        QuantizerConfig cfg = make_cfg(bits, p, block_dim);
        return analytic_c_bound(cfg, block_dim);
      },
      py::arg("bits"), py::arg("p"), py::arg("block_dim"));

  m.def(
      "theorem1_ranges",
      [](double mu, double L, double C, double beta, double lambda_min_plus,
         double eta, double gamma, double alpha) {
        RateCertificate c = theorem1_ranges(mu, L, C, beta, lambda_min_plus,
                                            eta, gamma, alpha);
        py::dict d;
        d["a1"] = c.a1;
        d["rho"] = c.rho;
        d["gamma_range"] = py::make_tuple(c.gamma_lo, c.gamma_hi);
        d["alpha_range"] = py::make_tuple(c.alpha_lo, c.alpha_hi);
        d["admissible"] = c.admissible;
        return d;
      });
  m.def("corollary1_params",
        [](double mu, double L, double C, double beta, double kappa_g) {
          TheoryParams t = corollary1_params(mu, L, C, beta, kappa_g);
          py::dict d;
          d["eta"] = t.eta;
          d["gamma"] = t.gamma;
          d["alpha"] = t.alpha;
          d["rho"] = t.rho_bound;
          d["alpha_case"] = t.alpha_case;
          return d;
        });
  m.def(
      "diminishing_schedule",
      [](double mu, double L, double C, double beta, double lambda_max_pinv,
         double theta4, std::uint64_t k) {
        DiminishingSchedule s =
            diminishing_schedule(mu, L, C, beta, lambda_max_pinv, theta4);
        py::dict d;
        d["theta1"] = s.theta1;
        d["theta2"] = s.theta2;
        d["theta3"] = s.theta3;
        d["theta4"] = s.theta4;
        d["theta5"] = s.theta5;
        d["eta"] = s.eta(k);
        d["gamma"] = s.gamma(k);
        d["alpha"] = s.alpha(k);
        return d;
      },
      py::arg("mu"), py::arg("L"), py::arg("C"), py::arg("beta"),
      py::arg("lambda_max_pinv"), py::arg("theta4") = 0.0, py::arg("k") = 0);

  m.def(
      "run_experiment",
      [](const std::string& config_json, int threads) {
        return results_to_list(run(parse_config(config_json), threads));
      },
      py::arg("config_json"), py::arg("threads") = 0);
  m.def("dump_config", [](const std::string& config_json) {
    return dump_config(parse_config(config_json));
  });
}
