#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace finsler {

/// Seeded generator with platform-independent draws (the std distributions
/// are implementation-defined, so uniform and normal variates are built here
/// directly from the 64-bit Mersenne twister output).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  Eigen::VectorXd normal_vector(int n);
  Eigen::VectorXd unit_vector(int n);

  /// Independent stream seed for shard `stream` of a run seeded with `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace finsler
