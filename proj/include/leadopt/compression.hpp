#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "leadopt/rng.hpp"

namespace leadopt {

struct CompressionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuantizerConfig {
  int bits = 2;
  double p = std::numeric_limits<double>::infinity();  // norm selector, p >= 1
  int block_size = 512;
};

// Wire form of Q_p(x): one norm scalar per block, one sign bit and one
// b-bit level per element. Blocks are quantized independently.
struct QuantizedMessage {
  int bits = 2;
  int block_size = 512;
  std::uint32_t count = 0;
  std::vector<float> norms;          // per block
  std::vector<std::uint8_t> signs;   // per element, 0 = +, 1 = -
  std::vector<std::uint32_t> levels; // per element, <= 2^(b-1)

  std::size_t block_count() const {
    return count == 0 ? 0 : (count + block_size - 1) / block_size;
  }
};

// Stochastic dithered quantization: level_i = floor(2^(b-1)|x_i|/||x||_p + u)
// with u ~ U[0,1) per element. The norm is rounded to float32 before the
// levels are computed so decode reproduces the in-memory value bit-exactly.
QuantizedMessage quantize(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const QuantizerConfig& cfg, RngStream& rng);

Eigen::VectorXd decode(const QuantizedMessage& msg);

// Exact payload bits: per block 32 (norm) + d_block * (1 + b).
std::uint64_t message_bits(const QuantizedMessage& msg);
std::uint64_t payload_bits(std::uint32_t count, const QuantizerConfig& cfg);

// Little-endian byte stream: [u32 count][per block: f32 norm, packed sign
// bits, packed b-bit levels]; each block's bit fields are padded to whole
// bytes.
std::vector<std::uint8_t> serialize(const QuantizedMessage& msg);
QuantizedMessage parse(const std::vector<std::uint8_t>& bytes,
                       const QuantizerConfig& cfg);

// Analytic bound on the contraction constant C for block dimension d:
// sup_x ||sign(x) 2^-(b-1)||^2 ||x||_p^2 / (4 ||x||^2).
double analytic_c_bound(const QuantizerConfig& cfg, int block_dim);

struct CEstimate {
  double c_empirical = 0.0;
  double c_analytic_bound = 0.0;
};

// Monte-Carlo estimate of E||x - Q(x)||^2 / ||x||^2 over sampled vectors;
// c_empirical is the max over samples of the per-vector mean ratio.
CEstimate estimate_C(const QuantizerConfig& cfg,
                     const std::function<Eigen::VectorXd(RngStream&)>& sampler,
                     int trials, RngStream& rng, int draws_per_trial = 8);

// Compressor abstraction used by the steppers. apply() returns the value the
// receivers reconstruct; bits is the exact transmitted payload.
class Compressor {
 public:
  virtual ~Compressor() = default;
  virtual Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x,
                                RngStream& rng, std::uint64_t* bits) const = 0;
  // Contraction constant C for vectors of the given dimension.
  virtual double contraction(int dim) const = 0;
};

class IdentityCompressor final : public Compressor {
 public:
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x,
                        RngStream&, std::uint64_t* bits) const override {
    if (bits) *bits = 32ull * static_cast<std::uint64_t>(x.size());
    return x;
  }
  double contraction(int) const override { return 0.0; }
};

class PNormQuantizer final : public Compressor {
 public:
  explicit PNormQuantizer(QuantizerConfig cfg) : cfg_(cfg) {}
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x,
                        RngStream& rng, std::uint64_t* bits) const override {
    QuantizedMessage msg = quantize(x, cfg_, rng);
    if (bits) *bits = message_bits(msg);
    return decode(msg);
  }
  double contraction(int dim) const override {
    const int d_block = std::min(dim, cfg_.block_size);
    return analytic_c_bound(cfg_, d_block);
  }
  const QuantizerConfig& config() const { return cfg_; }

 private:
  QuantizerConfig cfg_;
};

}  // namespace leadopt
