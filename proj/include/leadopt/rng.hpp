#pragma once

#include <cmath>
#include <cstdint>

namespace leadopt {

// Purpose tags for deriving independent substreams from one master seed.
enum class StreamTag : std::uint64_t {
  kDither = 1,
  kGradNoise = 2,
  kMinibatch = 3,
  kDataGen = 4,
  kInit = 5,
};

// Counter-based stream: each draw hashes (key, counter) with a splitmix64
// finalizer, so streams keyed by (seed, tag, round, agent) are independent
// and reproducible regardless of call interleaving across threads.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, StreamTag tag, std::uint64_t round = 0,
            std::uint64_t agent = 0)
      : key_(combine(combine(combine(master_seed, static_cast<std::uint64_t>(tag)),
                             round),
                     agent)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + 0x9e3779b97f4a7c15ull * (++counter_);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1); 53-bit mantissa, never returns 1.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

 private:
  static std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    std::uint64_t z = h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace leadopt
