#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

#include "smart_rar/errors.hpp"
#include "smart_rar/normal.hpp"

namespace smart_rar {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based generator (Philox 4x32-10) with cheap substream
/// derivation.  Streams derived by label are statistically independent of
/// the parent and of each other, so draws never depend on scheduling or
/// on how many draws another phase consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : chi_(detail::splitmix64(seed)) {}

  /// Independent child stream; the parent is left untouched.
  Rng derive(std::uint64_t label) const {
    Rng child(*this);
    child.chi_ = detail::splitmix64(chi_ ^ detail::splitmix64(label + 0x632BE59BD9B4E019ULL));
    child.block_ = 0;
    child.pos_ = 4;
    return child;
  }

  Rng derive(std::uint64_t a, std::uint64_t b) const { return derive(a).derive(b); }
  Rng derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return derive(a).derive(b).derive(c);
  }

  std::uint32_t next_u32() {
    if (pos_ >= 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  /// Uniform on the open interval (0,1); safe to feed the normal quantile.
  double u01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(u01()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    const int k = static_cast<int>(u01() * n);
    return k >= n ? n - 1 : k;
  }

  /// Index drawn from a probability vector (entries sum to ~1).
  int categorical(const Eigen::VectorXd& p) {
    const double u = u01();
    double cum = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      cum += p[i];
      if (u < cum) return i;
    }
    return static_cast<int>(p.size()) - 1;
  }

 private:
  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = 0x243F6A88u;
    std::uint32_t c3 = 0x85A308D3u;
    std::uint32_t k0 = static_cast<std::uint32_t>(chi_);
    std::uint32_t k1 = static_cast<std::uint32_t>(chi_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buf_ = {c0, c1, c2, c3};
    ++block_;
    pos_ = 0;
  }

  std::uint64_t chi_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

/// Stream labels for the per-replication phases.  Adding draws inside one
/// phase never perturbs another.
enum class Phase : std::uint64_t {
  enroll = 1,
  covariates = 2,
  assignment = 3,
  draws = 4,
  diagnostics = 5,
  oracle = 6,
};

inline Rng phase_stream(const Rng& rep_rng, Phase phase) {
  return rep_rng.derive(static_cast<std::uint64_t>(phase));
}

}  // namespace smart_rar
