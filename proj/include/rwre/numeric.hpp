#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rwre {

/// Neumaier-compensated running sum.
class KahanSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  KahanSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  KahanSum& operator-=(double x) noexcept {
    add(-x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Integer sites of the lattice, inclusive on both ends.
struct Window {
  std::int64_t lo = 0;
  std::int64_t hi = -1;

  std::int64_t size() const noexcept { return hi >= lo ? hi - lo + 1 : 0; }
  bool empty() const noexcept { return hi < lo; }
  bool contains(std::int64_t x) const noexcept { return x >= lo && x <= hi; }
  bool contains(const Window& w) const noexcept { return w.empty() || (w.lo >= lo && w.hi <= hi); }
  friend bool operator==(const Window&, const Window&) = default;
};

inline std::string to_string(const Window& w) {
  return "[" + std::to_string(w.lo) + ", " + std::to_string(w.hi) + "]";
}

/// Thrown when a computation needs sites outside the realized window.
class WindowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest integer <= x, with a guard against representation noise in
/// products such as n * t * v that are integers in exact arithmetic.
inline std::int64_t lattice_floor(double x) noexcept {
  return static_cast<std::int64_t>(std::floor(x + 1e-9));
}

namespace normal {

inline double pdf(double x) noexcept { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
/// Upper tail 1 - cdf(x), accurate for large x.
inline double sf(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Density of N(0, var) at x; var must be positive.
inline double pdf(double x, double var) noexcept {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Distribution function of N(0, var); var = 0 gives the unit step at 0.
inline double cdf(double x, double var) noexcept {
  if (var <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
  return cdf(x / std::sqrt(var));
}

inline double sf(double x, double var) noexcept {
  if (var <= 0.0) return x < 0.0 ? 1.0 : 0.0;
  return sf(x / std::sqrt(var));
}

/// P(X > h, Y > k) for standard normals with correlation r (Genz's
/// Gauss-Legendre scheme, double precision).
inline double bvn_upper(double h, double k, double r) noexcept {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return k == -inf ? 1.0 : sf(k);
  if (k == -inf) return sf(h);
  if (r == 0.0) return sf(h) * sf(k);

  static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr std::array<double, 6> w12{.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                             0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                             0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20{.01761400713915212, .04060142980038694, .06267204833410906,
                                              .08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                              0.1316886384491766, 0.1420961093183821,  0.1491729864726037,
                                              0.1527533871307259};
  static constexpr std::array<double, 10> x20{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                              0.07652652113349733};
  const double* wp;
  const double* xp;
  int ng;
  if (std::abs(r) < 0.3) {
    wp = w6.data(), xp = x6.data(), ng = 3;
  } else if (std::abs(r) < 0.75) {
    wp = w12.data(), xp = x12.data(), ng = 6;
  } else {
    wp = w20.data(), xp = x20.data(), ng = 10;
  }
  constexpr double tp = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (int i = 0; i < ng; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sgn * xp[i]));
        bvn += wp[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / tp + sf(h) * sf(k);
  } else {
    if (r < 0) {
      k = -k;
      hk = -hk;
    }
    if (std::abs(r) < 1.0) {
      const double as = 1.0 - r * r;
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(tp) * cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double acc = 0.0;
      for (int i = 0; i < ng; ++i) {
        for (double sgn : {-1.0, 1.0}) {
          const double xs = std::pow(a * (1.0 + sgn * xp[i]), 2);
          const double asr2 = -(bs / xs + hk) / 2.0;
          if (asr2 <= -100.0) continue;
          const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
          const double rs = std::sqrt(1.0 - xs);
          const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
          acc += wp[i] * std::exp(asr2) * (sp - ep);
        }
      }
      bvn = (a * acc - bvn) / tp;
    }
    if (r > 0) {
      bvn += sf(std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double L = h < 0 ? cdf(k) - cdf(h) : sf(h) - sf(k);
      bvn = L - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace normal
}  // namespace rwre
