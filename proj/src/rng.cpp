#include "padr/rng.hpp"

#include <cmath>
#include <numbers>

namespace padr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::data: return "data";
    case Stream::minibatch: return "minibatch";
    case Stream::index: return "index";
    case Stream::init: return "init";
    case Stream::output: return "output";
    case Stream::sweep: return "sweep";
  }
  return "unknown";
}

namespace {

std::uint64_t mix_state(std::uint64_t seed, Stream stream, std::uint64_t key) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL));
  h = splitmix64(h ^ key);
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed, Stream stream) : Rng(seed, stream, 0) {}

Rng::Rng(std::uint64_t seed, Stream stream, std::uint64_t key)
    : seed_(seed), stream_(stream), key_(key), engine_(mix_state(seed, stream, key)) {}

Rng Rng::derive(std::uint64_t key) const {
  return Rng(seed_, stream_, splitmix64(key_ ^ splitmix64(key + 0x632BE59BD9B4E019ULL)));
}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Largest multiple of n representable; reject draws above it.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n + 1) % n;
  std::uint64_t r = next();
  while (r > limit) r = next();
  return r % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace padr
