#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lsem {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a (parent, path...) tuple. Stable across runs and platforms.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(parent);
  for (std::uint64_t p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags so that generators sharing one config seed do not share a stream.
namespace stream {
inline constexpr std::uint64_t graph = 1;
inline constexpr std::uint64_t lambda = 2;
inline constexpr std::uint64_t omega = 3;
inline constexpr std::uint64_t observations = 4;
inline constexpr std::uint64_t perturbation = 5;
inline constexpr std::uint64_t noise = 6;
}  // namespace stream

}  // namespace lsem
