#pragma once

#include <cstdint>

namespace multirc {

/// Counter-based pseudorandom generator.
///
/// Every draw is a pure function of (key, counter), so streams are cheap to
/// split: `split(i)` derives an independent key without advancing the parent.
/// There is no global state; callers own and pass generators explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p);

  /// Child generator whose stream depends only on this generator's key and `index`.
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace multirc
