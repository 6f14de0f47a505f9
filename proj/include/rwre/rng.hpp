#pragma once

// Keyed random substreams.
//
// Every random quantity in the lab is drawn from a stream identified by a
// tuple of integers (seed, purpose tag, replica, site, particle, ...). The
// stream state is derived by hashing the key, so a draw never depends on the
// order in which other streams were consumed or on how work was split across
// threads.

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace rwre {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a key tuple.
inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

/// Maps 64 random bits to a double in [0, 1) with 53-bit resolution.
inline constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Purpose tags so that streams for different uses never collide.
enum class StreamTag : std::uint64_t {
  environment = 1,
  initial_config = 2,
  walk = 3,
  brownian = 4,
  synthetic = 5,
  replica_env = 6,
};

/// xoshiro256** seeded from a hashed key. Satisfies UniformRandomBitGenerator
/// so it can drive the <random> distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept {
    std::uint64_t x = key;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      w = splitmix64(x);
    }
  }

  Stream() noexcept : Stream(std::uint64_t{0}) {}

  Stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> ids) noexcept
      : Stream(derive(seed, tag, ids)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() noexcept { return to_unit((*this)()); }

  static std::uint64_t derive(std::uint64_t seed, StreamTag tag,
                              std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t h = hash_key({seed, static_cast<std::uint64_t>(tag)});
    for (std::uint64_t id : ids) h = hash_key({h, id});
    return h;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

/// Signed site index as a stream id.
inline constexpr std::uint64_t site_id(std::int64_t x) noexcept {
  return static_cast<std::uint64_t>(x);
}

}  // namespace rwre
