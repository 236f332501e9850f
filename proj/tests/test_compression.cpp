#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "leadopt/compression.hpp"

using namespace leadopt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QuantizerConfig cfg_of(int bits, double p, int block) {
  QuantizerConfig c;
  c.bits = bits;
  c.p = p;
  c.block_size = block;
  return c;
}

Eigen::VectorXd random_vector(int d, RngStream& rng) {
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("zero vector encodes as zero norm and decodes to zero") {
  RngStream rng(1, StreamTag::kDither, 0, 0);
  QuantizedMessage msg = quantize(Eigen::VectorXd::Zero(10), cfg_of(2, kInf, 4), rng);
  for (float n : msg.norms) CHECK(n == 0.0f);
  CHECK(decode(msg).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant-magnitude vectors are reproduced exactly under p=inf") {
  // |x_i| = ||x||_inf and the norm is float32-exact, so every level lands on
  // the grid and the floor ignores dither.
  Eigen::VectorXd x(6);
  x << 0.75, -0.75, 0.75, 0.75, -0.75, -0.75;
  for (int rep = 0; rep < 20; ++rep) {
    RngStream rng(rep, StreamTag::kDither, 0, 0);
    const Eigen::VectorXd q = decode(quantize(x, cfg_of(3, kInf, 6), rng));
    CHECK((q - x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("two-point dither enumeration for x = (1.0, 0.3), b=2, p=inf") {
  // scale = 2, coordinate 2 sits at 0.6 between levels 0 and 1:
  // floor(0.6 + u) is 1 iff u >= 0.4, so decode(x_2) is 0.5 w.p. 0.6.
  const Eigen::VectorXd x = (Eigen::VectorXd(2) << 1.0, 0.3).finished();
  const int trials = 200000;
  int hits = 0;
  double sum2 = 0.0;
  RngStream rng(7, StreamTag::kDither, 0, 0);
  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd q = decode(quantize(x, cfg_of(2, kInf, 2), rng));
    CHECK(q(0) == 1.0);
    CHECK((q(1) == 0.0 || q(1) == 0.5));
    if (q(1) == 0.5) ++hits;
    sum2 += q(1);
  }
  const double p_hat = static_cast<double>(hits) / trials;
  const double se = std::sqrt(0.6 * 0.4 / trials);
  CHECK(std::abs(p_hat - 0.6) < 5.0 * se);
  CHECK(std::abs(sum2 / trials - 0.3) < 5.0 * 0.5 * se);
}

TEST_CASE("decode arithmetic and corruption check") {
  QuantizedMessage msg;
  msg.bits = 2;
  msg.block_size = 4;
  msg.count = 1;
  msg.norms = {1.0f};
  msg.signs = {0};
  msg.levels = {2};
  CHECK(decode(msg)(0) == 1.0);  // 1 * 0.5 * 2
  msg.levels = {3};              // > 2^(b-1)
  CHECK_THROWS_AS(decode(msg), CompressionError);
}

TEST_CASE("payload bit accounting") {
  CHECK(payload_bits(512, cfg_of(2, kInf, 512)) == 1568);
  CHECK(payload_bits(0, cfg_of(2, kInf, 512)) == 0);
  CHECK(payload_bits(1024, cfg_of(2, kInf, 512)) == 3136);
  CHECK(payload_bits(513, cfg_of(2, kInf, 512)) == 1568 + 32 + 3);
  RngStream rng(1, StreamTag::kDither, 0, 0);
  QuantizedMessage msg = quantize(random_vector(512, rng), cfg_of(2, kInf, 512), rng);
  CHECK(message_bits(msg) == 1568);
}

TEST_CASE("serialize/parse round-trip is bit-exact") {
  RngStream rng(42, StreamTag::kDither, 0, 0);
  for (int t = 0; t < 2000; ++t) {
    const int d = 1 + static_cast<int>(rng.next_below(48));
    const int bits = 1 + static_cast<int>(rng.next_below(8));
    const int block = 1 + static_cast<int>(rng.next_below(16));
    const QuantizerConfig cfg = cfg_of(bits, t % 3 == 0 ? 2.0 : kInf, block);
    const Eigen::VectorXd x = random_vector(d, rng);
    const QuantizedMessage msg = quantize(x, cfg, rng);
    const QuantizedMessage back = parse(serialize(msg), cfg);
    REQUIRE(back.count == msg.count);
    REQUIRE(back.norms == msg.norms);
    REQUIRE(back.signs == msg.signs);
    REQUIRE(back.levels == msg.levels);
    const Eigen::VectorXd a = decode(msg), b = decode(back);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("non-finite input is rejected") {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(4);
  x(2) = std::numeric_limits<double>::quiet_NaN();
  RngStream rng(1, StreamTag::kDither, 0, 0);
  CHECK_THROWS_AS(quantize(x, cfg_of(2, kInf, 4), rng), CompressionError);
}

TEST_CASE("unbiasedness: empirical mean matches x within 5 standard errors") {
  // The dither makes each level a two-point distribution whose variance is
  // known exactly, so the standard error is computed from that rather than
  // from the sample (which degenerates for near-grid coordinates).
  RngStream data_rng(3, StreamTag::kDataGen, 0, 0);
  const int d = 8, trials = 100000;
  const Eigen::VectorXd x = random_vector(d, data_rng);
  for (double p : {1.0, 2.0, kInf}) {
    RngStream rng(3, StreamTag::kDither, 0, 0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    double norm_f = 0.0;
    for (int t = 0; t < trials; ++t) {
      const QuantizedMessage msg = quantize(x, cfg_of(2, p, d), rng);
      norm_f = static_cast<double>(msg.norms[0]);
      sum += decode(msg);
    }
    const Eigen::VectorXd mean = sum / trials;
    for (int i = 0; i < d; ++i) {
      const double v = 2.0 * std::abs(x(i)) / norm_f;
      const double frac = v - std::floor(v);
      const double se =
          0.5 * norm_f * std::sqrt(frac * (1.0 - frac) / trials);
      CHECK(std::abs(mean(i) - x(i)) <= 5.0 * se + 1e-12);
    }
  }
}

TEST_CASE("variance bound and norm monotonicity") {
  RngStream data_rng(9, StreamTag::kDataGen, 0, 0);
  const int d = 64, trials = 20000;
  const Eigen::VectorXd x = random_vector(d, data_rng);
  const double grid = std::ldexp(1.0, -1);  // 2^-(b-1) at b=2

  double mean_err[3];
  int idx = 0;
  for (double p : {kInf, 2.0, 1.0}) {
    const double norm_p = p == 1.0  ? x.cwiseAbs().sum()
                          : p == 2.0 ? x.norm()
                                     : x.cwiseAbs().maxCoeff();
    const double bound = 0.25 * d * grid * grid * norm_p * norm_p;
    RngStream rng(9, StreamTag::kDither, 0, 0);
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Eigen::VectorXd q = decode(quantize(x, cfg_of(2, p, d), rng));
      const double e = (x - q).squaredNorm();
      s += e;
      s2 += e * e;
    }
    const double m = s / trials;
    const double se = std::sqrt(std::max(s2 / trials - m * m, 0.0) / trials);
    CHECK(m <= bound + 3.0 * se);
    mean_err[idx++] = m;
  }
  // inf <= 2 <= 1, each with a small statistical allowance
  CHECK(mean_err[0] <= mean_err[1] * 1.02);
  CHECK(mean_err[1] <= mean_err[2] * 1.02);
}

TEST_CASE("estimate_C: fine grids vanish, Monte-Carlo below the bound") {
  auto normal_sampler = [](int d) {
    return [d](RngStream& rng) { return random_vector(d, rng); };
  };
  SUBCASE("b = 16 makes the error negligible") {
    RngStream rng(11, StreamTag::kDither, 0, 0);
    CEstimate est = estimate_C(cfg_of(16, kInf, 64), normal_sampler(64), 50, rng);
    CHECK(est.c_empirical <= 1e-6);
  }
  SUBCASE("analytic bound formula") {
    CHECK(analytic_c_bound(cfg_of(2, kInf, 512), 512) == doctest::Approx(32.0));
    CHECK(analytic_c_bound(cfg_of(2, kInf, 64), 64) == doctest::Approx(4.0));
  }
  SUBCASE("empirical C stays below analytic for standard normals") {
    RngStream rng(13, StreamTag::kDither, 0, 0);
    CEstimate est =
        estimate_C(cfg_of(2, kInf, 100), normal_sampler(100), 200, rng, 16);
    CHECK(est.c_analytic_bound == doctest::Approx(100.0 / 16.0));
    CHECK(est.c_empirical <= est.c_analytic_bound);
    CHECK(est.c_empirical > 0.0);
  }
}

TEST_CASE("grid-aligned vectors are exact for every dither draw") {
  // entries are integral multiples of ||x||_inf * 2^-(b-1)
  Eigen::VectorXd x(4);
  x << 1.0, 0.5, -0.5, 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    RngStream rng(rep, StreamTag::kDither, 1, 0);
    const Eigen::VectorXd q = decode(quantize(x, cfg_of(2, kInf, 4), rng));
    CHECK((q - x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("identity compressor reports zero contraction and 32 bits/elem") {
  IdentityCompressor id;
  RngStream rng(1, StreamTag::kDither, 0, 0);
  std::uint64_t bits = 0;
  const Eigen::VectorXd x = random_vector(10, rng);
  CHECK((id.apply(x, rng, &bits) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(bits == 320);
  CHECK(id.contraction(10) == 0.0);
}
