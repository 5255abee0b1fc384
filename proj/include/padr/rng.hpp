#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace padr {

/// Named sub-streams. Every stochastic step draws from its own stream so that
/// changing, e.g., the minibatch size never perturbs the initial point.
enum class Stream : std::uint64_t {
  data = 1,
  minibatch = 2,
  index = 3,
  init = 4,
  output = 5,
  sweep = 6,
};

std::string_view stream_name(Stream s);

/// Seeded generator with reproducible output on every platform.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Its state is seeded through SplitMix64 from (seed, stream, keys).
/// Distributions are implemented here rather than taken from <random>, whose
/// distribution algorithms are implementation-defined:
///   uniform()  = (next() >> 11) * 2^-53
///   below(n)   = rejection sampling on the top bits
///   normal()   = Box-Muller, both variates used
class Rng {
public:
  Rng(std::uint64_t seed, Stream stream);

  /// Independent child generator keyed by `key`. Deterministic in
  /// (seed, stream, key chain) and independent of how many draws the parent
  /// has already made.
  Rng derive(std::uint64_t key) const;

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);
  double normal();

  std::uint64_t seed() const { return seed_; }
  Stream stream() const { return stream_; }
  std::uint64_t key() const { return key_; }

private:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t key);

  std::uint64_t seed_;
  Stream stream_;
  std::uint64_t key_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace padr
