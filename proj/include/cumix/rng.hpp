#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace cumix {

/// Counter-based random stream.
///
/// A stream is identified by a master seed, a name ("init", "batch-shuffle",
/// "mix.input", ...) and an optional list of integer coordinates (epoch,
/// batch, sample). The n-th draw of a stream is a pure function of that
/// identity and n, so results never depend on the order in which streams are
/// consumed or on how work is split across threads.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::string_view name,
            std::initializer_list<std::uint64_t> coords = {});

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1); safe to take the log of.
  double uniform_open();
  /// Standard normal (Box-Muller, one output per call).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cumix
