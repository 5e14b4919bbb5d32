#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace pce {

// A seeded random stream. Identical (seed, stream_id) pairs produce identical
// draw sequences regardless of how many threads are in use; parallel work gets
// disjoint stream ids and never shares a stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  double gamma(double shape);
  double beta(double a, double b);
  std::int64_t binomial(std::int64_t trials, double p);
  // Index drawn with probabilities proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);
  std::size_t uniform_index(std::size_t n);

  // N(mean, 1) truncated to (0, inf) when positive is true, else (-inf, 0].
  // Inverse-CDF sampling, so exactly one uniform is consumed per draw.
  double truncated_unit_normal(double mean, bool positive);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

}  // namespace pce
