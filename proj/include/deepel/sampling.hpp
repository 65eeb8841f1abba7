// Seed derivation and O(1) discrete sampling.
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "deepel/core.hpp"

namespace deepel {

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (base seed, stream index).
inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return SplitMix64(SplitMix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

/// Uniform double in [0, 1) from 53 random bits; identical on every platform
/// for a given mt19937_64 state.
inline double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on Uniform01, so draws do not depend on the
/// standard library's distribution implementation.
inline double StandardNormal(std::mt19937_64& rng) {
  double u1 = Uniform01(rng);
  while (u1 <= 0.0) u1 = Uniform01(rng);
  const double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform index in [0, n).
inline std::size_t UniformIndex(std::mt19937_64& rng, std::size_t n) {
  auto i = static_cast<std::size_t>(Uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

/// Fisher-Yates on UniformIndex (std::shuffle's output varies by library).
template <class T>
void Shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[UniformIndex(rng, i)]);
}

/// Walker/Vose alias table over indices [0, n).
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    if (n == 0) throw Error("alias table: no outcomes");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error("alias table: weights must be finite and nonnegative");
      total += w;
    }
    if (total <= 0.0) throw Error("alias table: total weight is zero");
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0;
    for (auto i : small) prob_[i] = 1.0;  // numerical leftovers
  }

  std::size_t size() const { return prob_.size(); }

  std::size_t Sample(std::mt19937_64& rng) const {
    const double u = Uniform01(rng) * static_cast<double>(prob_.size());
    auto i = static_cast<std::size_t>(u);
    if (i >= prob_.size()) i = prob_.size() - 1;
    const double frac = u - static_cast<double>(i);
    return frac < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

}  // namespace deepel
