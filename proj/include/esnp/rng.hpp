#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace esnp {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based random stream. The full state is (key, counter), so a
/// stream checkpoints as two integers and streams for different
/// trajectories are split off a master seed without coordination.
class RngStream {
public:
  RngStream() = default;
  explicit RngStream(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  /// Independent stream for trajectory `index` of a run seeded with `master_seed`.
  static RngStream derive(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return RngStream(detail::splitmix64(detail::splitmix64(master_seed) ^
                                        detail::splitmix64(index + 0x632be59bd9b4e019ULL)));
  }

  RngStream split(std::uint64_t index) const noexcept { return derive(key_, index); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
  }

  /// Uniform on (0, 1).
  double uniform() noexcept { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; consumes exactly two draws.
  double normal() noexcept {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const RngStream&) const = default;

private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace esnp
