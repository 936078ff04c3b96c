#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace condfield {

/**
 * Philox4x32-10 counter-based generator (Salmon et al., SC'11).
 *
 * A (seed, stream) pair selects the key and the upper counter words, so
 * distinct stream ids give non-overlapping sequences and any block of
 * samples can be regenerated without replaying earlier ones. Satisfies
 * UniformRandomBitGenerator with 64-bit output.
 */
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == 2) {
      block_ = generate(counter_block(counter_++), key_);
      used_ = 0;
    }
    const auto lo = block_[2 * used_];
    const auto hi = block_[2 * used_ + 1];
    ++used_;
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  /// Uniform double in the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Bijection counter -> random block under `key` (10 rounds).
  static Block generate(Block ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  Block counter_block(std::uint64_t n) const noexcept {
    return {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block block_{};
  int used_ = 2;
};

}  // namespace condfield
