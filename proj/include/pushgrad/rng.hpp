#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

// Seed derivation and counter-based uniforms. Graph sampling and the various
// per-client streams need values that depend only on (seed, indices), never on
// evaluation order, so schedules and batches are reproducible regardless of
// threading. splitmix64 is the usual mixer for this job.
namespace pushgrad::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fold extra words into a seed, one mixing round per word.
constexpr std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t w : words) h = splitmix64(h ^ w);
  return h;
}

// Tagged stream derivation, e.g. derive(seed, "hgp-graph").
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = splitmix64(seed);
  for (char c : tag) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

// Uniform in [0, 1) from 64 random bits (53-bit mantissa).
constexpr double u01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace pushgrad::rng
