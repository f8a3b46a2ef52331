#pragma once

#include <Eigen/Dense>
#include <compare>
#include <complex>
#include <cstdint>

namespace gbsim {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Additive two-component charge label. Unused components stay 0.
struct Charge {
  int a = 0;
  int b = 0;
  friend auto operator<=>(const Charge&, const Charge&) = default;
};

/// Arithmetic rule per charge component: 0 = plain integers, 1 = component
/// unused (always 0), m >= 2 = integers mod m.
struct ChargeMod {
  int a = 0;
  int b = 1;
  friend bool operator==(const ChargeMod&, const ChargeMod&) = default;
};

inline int reduce_component(int v, int m) {
  if (m == 0) return v;
  int r = v % m;
  return r < 0 ? r + m : r;
}

inline Charge reduce(Charge c, ChargeMod m) {
  return {reduce_component(c.a, m.a), reduce_component(c.b, m.b)};
}

inline Charge add(Charge x, Charge y, ChargeMod m) {
  return reduce({x.a + y.a, x.b + y.b}, m);
}

inline Charge scaled(Charge x, int f) { return {f * x.a, f * x.b}; }

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic per-task seed from a base seed and up to three indices.
inline uint64_t derive_seed(uint64_t base, uint64_t i, uint64_t j = 0,
                            uint64_t k = 0) {
  uint64_t s = splitmix64(base);
  s = splitmix64(s ^ (0x100000001b3ull * (i + 1)));
  s = splitmix64(s ^ (0xc2b2ae3d27d4eb4full * (j + 1)));
  s = splitmix64(s ^ (0x165667b19e3779f9ull * (k + 1)));
  return s;
}

}  // namespace gbsim
