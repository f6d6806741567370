#ifndef ADAGOSSIP_RNG_HPP_
#define ADAGOSSIP_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace adagossip {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a; only used to turn purpose tags into stream ids.
inline constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the stream identified by (master seed, agent, purpose).
/// Streams for distinct agents are independent of the agent count.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t agent,
                                           std::string_view purpose) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ splitmix64(agent + 0x632be59bd9b4e019ULL));
  return splitmix64(h ^ tag_hash(purpose));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t agent, std::string_view purpose) {
  return Rng{derive_seed(master, agent, purpose)};
}

}  // namespace adagossip

#endif  // ADAGOSSIP_RNG_HPP_
