#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace cputs {

inline std::uint64_t splitmix64(std::uint64_t& state)
{
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Derive an independent stream seed from a master seed and a counter.
//! Serial and parallel runs agree because each replication owns stream
//! derive_seed(master, rep_index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter)
{
  std::uint64_t s = master ^ (0x6a09e667f3bcc909ULL + counter * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  return splitmix64(s);
}

//! xoshiro256++ generator with deterministic, platform-independent output.
//! std::shuffle and std::normal_distribution are implementation-defined, so
//! all sampling used in experiments goes through this class.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
  {
    std::uint64_t sm = seed;
    for (auto& word : state_)
      word = splitmix64(sm);
  }

  std::uint64_t next_u64()
  {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  //! Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  //! Standard normal via Box-Muller; pairs are cached.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  //! Uniform index in [0, n). Modulo bias is below 2^-40 for the sizes used here.
  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  //! Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n)
  {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(idx[i - 1], idx[j]);
    }
    return idx;
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace cputs
