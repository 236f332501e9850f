#include "leadopt/compression.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace leadopt {

namespace {

double pnorm(const Eigen::Ref<const Eigen::VectorXd>& x, double p) {
  if (std::isinf(p)) return x.cwiseAbs().maxCoeff();
  if (p == 1.0) return x.cwiseAbs().sum();
  if (p == 2.0) return x.norm();
  return std::pow(x.cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xffu);
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw CompressionError("truncated message");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

// LSB-first bit packing within a byte stream.
class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(std::uint32_t value, int nbits) {
    for (int i = 0; i < nbits; ++i) {
      if (bit_ == 0) out_.push_back(0);
      if (value & (1u << i)) out_.back() |= (1u << bit_);
      bit_ = (bit_ + 1) & 7;
    }
  }
  void pad_to_byte() { bit_ = 0; }

 private:
  std::vector<std::uint8_t>& out_;
  int bit_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<std::uint8_t>& in, std::size_t& pos)
      : in_(in), pos_(pos) {}
  std::uint32_t get(int nbits) {
    std::uint32_t v = 0;
    for (int i = 0; i < nbits; ++i) {
      if (pos_ >= in_.size()) throw CompressionError("truncated message");
      if (in_[pos_] & (1u << bit_)) v |= (1u << i);
      if (++bit_ == 8) {
        bit_ = 0;
        ++pos_;
      }
    }
    return v;
  }
  void pad_to_byte() {
    if (bit_ != 0) {
      bit_ = 0;
      ++pos_;
    }
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t& pos_;
  int bit_ = 0;
};

}  // namespace

QuantizedMessage quantize(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const QuantizerConfig& cfg, RngStream& rng) {
  if (cfg.bits < 1) throw CompressionError("quantizer bits must be >= 1");
  if (cfg.block_size < 1) throw CompressionError("block_size must be >= 1");
  if (!x.allFinite()) throw CompressionError("quantize input contains NaN/Inf");

  QuantizedMessage msg;
  msg.bits = cfg.bits;
  msg.block_size = cfg.block_size;
  msg.count = static_cast<std::uint32_t>(x.size());
  msg.signs.resize(msg.count);
  msg.levels.resize(msg.count);

  const double scale = std::ldexp(1.0, cfg.bits - 1);  // 2^(b-1)
  const std::uint32_t max_level = static_cast<std::uint32_t>(scale);

  for (Eigen::Index start = 0; start < x.size(); start += cfg.block_size) {
    const Eigen::Index len = std::min<Eigen::Index>(cfg.block_size, x.size() - start);
    const auto block = x.segment(start, len);
    // The float32 norm is rounded up so that no level can exceed 2^(b-1):
    // decode divides the rounding back out, so the estimator stays exactly
    // unbiased, whereas a norm that rounds down would force clamping of the
    // top level and bias it.
    const double norm_d = pnorm(block, cfg.p);
    float norm_f = static_cast<float>(norm_d);
    if (static_cast<double>(norm_f) < norm_d) {
      norm_f = std::nextafterf(norm_f, std::numeric_limits<float>::infinity());
    }
    msg.norms.push_back(norm_f);
    const double norm = static_cast<double>(norm_f);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double v = block(i);
      msg.signs[start + i] = v < 0.0 ? 1 : 0;  // sign(0) = +
      if (norm == 0.0) {
        msg.levels[start + i] = 0;
        continue;
      }
      const double u = rng.uniform();
      const double level = std::floor(scale * std::abs(v) / norm + u);
      msg.levels[start + i] =
          std::min<std::uint32_t>(static_cast<std::uint32_t>(level), max_level);
    }
  }
  return msg;
}

Eigen::VectorXd decode(const QuantizedMessage& msg) {
  const double inv_scale = std::ldexp(1.0, -(msg.bits - 1));  // 2^-(b-1)
  const std::uint32_t max_level = 1u << (msg.bits - 1);
  Eigen::VectorXd out(msg.count);
  for (std::uint32_t i = 0; i < msg.count; ++i) {
    if (msg.levels[i] > max_level) {
      throw CompressionError("corrupt message: level exceeds 2^(b-1)");
    }
    const std::size_t blk = i / msg.block_size;
    const double sign = msg.signs[i] ? -1.0 : 1.0;
    out(i) = static_cast<double>(msg.norms[blk]) * sign * inv_scale *
             static_cast<double>(msg.levels[i]);
  }
  return out;
}

std::uint64_t payload_bits(std::uint32_t count, const QuantizerConfig& cfg) {
  std::uint64_t bits = 0;
  for (std::uint32_t start = 0; start < count; start += cfg.block_size) {
    const std::uint32_t len =
        std::min<std::uint32_t>(cfg.block_size, count - start);
    bits += 32 + static_cast<std::uint64_t>(len) * (1 + cfg.bits);
  }
  return bits;
}

std::uint64_t message_bits(const QuantizedMessage& msg) {
  QuantizerConfig cfg;
  cfg.bits = msg.bits;
  cfg.block_size = msg.block_size;
  return payload_bits(msg.count, cfg);
}

std::vector<std::uint8_t> serialize(const QuantizedMessage& msg) {
  std::vector<std::uint8_t> out;
  append_u32(out, msg.count);
  for (std::uint32_t start = 0; start < msg.count;
       start += msg.block_size) {
    const std::uint32_t len =
        std::min<std::uint32_t>(msg.block_size, msg.count - start);
    const std::size_t blk = start / msg.block_size;
    std::uint32_t norm_bits;
    float norm = msg.norms[blk];
    std::memcpy(&norm_bits, &norm, 4);
    append_u32(out, norm_bits);
    BitWriter bw(out);
    for (std::uint32_t i = 0; i < len; ++i) bw.put(msg.signs[start + i], 1);
    bw.pad_to_byte();
    for (std::uint32_t i = 0; i < len; ++i)
      bw.put(msg.levels[start + i], msg.bits);
  }
  return out;
}

QuantizedMessage parse(const std::vector<std::uint8_t>& bytes,
                       const QuantizerConfig& cfg) {
  std::size_t pos = 0;
  QuantizedMessage msg;
  msg.bits = cfg.bits;
  msg.block_size = cfg.block_size;
  msg.count = read_u32(bytes, pos);
  msg.signs.resize(msg.count);
  msg.levels.resize(msg.count);
  const std::uint32_t max_level = 1u << (cfg.bits - 1);
  for (std::uint32_t start = 0; start < msg.count;
       start += msg.block_size) {
    const std::uint32_t len =
        std::min<std::uint32_t>(cfg.block_size, msg.count - start);
    const std::uint32_t norm_bits = read_u32(bytes, pos);
    float norm;
    std::memcpy(&norm, &norm_bits, 4);
    msg.norms.push_back(norm);
    BitReader br(bytes, pos);
    for (std::uint32_t i = 0; i < len; ++i)
      msg.signs[start + i] = static_cast<std::uint8_t>(br.get(1));
    br.pad_to_byte();
    for (std::uint32_t i = 0; i < len; ++i) {
      msg.levels[start + i] = br.get(cfg.bits);
      if (msg.levels[start + i] > max_level) {
        throw CompressionError("corrupt message: level exceeds 2^(b-1)");
      }
    }
    br.pad_to_byte();
  }
  return msg;
}

double analytic_c_bound(const QuantizerConfig& cfg, int block_dim) {
  const double grid = std::ldexp(1.0, -2 * (cfg.bits - 1));  // 2^-2(b-1)
  const double d = static_cast<double>(block_dim);
  // sup_x nnz(x) ||x||_p^2 / ||x||_2^2, reached at near-degenerate vectors.
  double sup;
  if (std::isinf(cfg.p) || cfg.p >= 2.0) {
    sup = d;  // one dominant coordinate, d-1 vanishing ones
  } else if (cfg.p == 1.0) {
    sup = d * d;  // all-equal vector
  } else {
    sup = std::pow(d, 2.0 / cfg.p);  // all-equal vector, p in (1,2)
  }
  return sup * grid / 4.0;
}

CEstimate estimate_C(const QuantizerConfig& cfg,
                     const std::function<Eigen::VectorXd(RngStream&)>& sampler,
                     int trials, RngStream& rng, int draws_per_trial) {
  if (trials < 1) throw CompressionError("estimate_C needs trials >= 1");
  CEstimate est;
  int block_dim = 0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd x = sampler(rng);
    const double nx2 = x.squaredNorm();
    if (nx2 == 0.0) continue;  // zero-norm samples carry no information
    block_dim = std::max(block_dim,
                         std::min<int>(static_cast<int>(x.size()), cfg.block_size));
    double mean_err = 0.0;
    for (int r = 0; r < draws_per_trial; ++r) {
      const Eigen::VectorXd q = decode(quantize(x, cfg, rng));
      mean_err += (x - q).squaredNorm();
    }
    mean_err /= draws_per_trial;
    est.c_empirical = std::max(est.c_empirical, mean_err / nx2);
  }
  est.c_analytic_bound = analytic_c_bound(cfg, block_dim);
  return est;
}

}  // namespace leadopt
