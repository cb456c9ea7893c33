#pragma once

// Hyperbolic plane in the upper half-plane model, base point o = i.
//
// Isometries are stored in Cartan form R(left) * diag(e^{t/2}, e^{-t/2}) * R(right)
// with R(x) = [[cos x, -sin x], [sin x, cos x]]. The stretch t equals d(o, m·o),
// so distances from the origin never overflow no matter how long a product gets,
// and the determinant is 1 by construction. All matrices are taken up to sign.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <variant>

#include "errors.hpp"

namespace hypdrift {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Sentinel for the ideal polygon P = ∞.
inline constexpr int kIdealPolygon = std::numeric_limits<int>::max();

namespace detail {

// Reduce to [0, 2π).
inline double wrapTwoPi(double x) {
  double y = std::fmod(x, kTwoPi);
  if (y < 0) y += kTwoPi;
  if (y >= kTwoPi) y = 0.0;
  return y;
}

// Reduce to [-π/2, π/2]; R(x + π) = -R(x) is the same isometry.
inline double wrapHalfTurn(double x) { return std::remainder(x, kPi); }

// log(e^a + e^b) without overflow.
inline double logSumExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace detail

/// Point of the upper half-plane.
class HPoint {
 public:
  HPoint(double re, double im) : re_(re), im_(im) {
    if (!(im > 0.0) || !std::isfinite(im) || !std::isfinite(re))
      throw InvalidArgument("HPoint requires finite coordinates with im > 0, got im = " +
                            std::to_string(im));
  }

  static HPoint origin() { return {0.0, 1.0}; }

  double re() const { return re_; }
  double im() const { return im_; }
  std::complex<double> complex() const { return {re_, im_}; }

  friend bool operator==(const HPoint&, const HPoint&) = default;

 private:
  double re_;
  double im_;
};

/// Position on the circle at infinity, as an angle in the disk model
/// w = (z - i)/(z + i). The half-plane point ∞ sits at angle 0.
class BoundaryPoint {
 public:
  explicit BoundaryPoint(double angle = 0.0) : angle_(detail::wrapTwoPi(angle)) {}
  static BoundaryPoint infinity() { return BoundaryPoint(0.0); }

  double angle() const { return angle_; }
  bool isInfinity() const { return angle_ == 0.0; }

 private:
  double angle_;
};

namespace detail {

// Action of R(angle) on a half-plane point, z -> (c z - s)/(s z + c).
// Scaled so that points far from i neither overflow nor lose their imaginary part.
inline HPoint rotateAboutOrigin(double angle, const HPoint& z) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const std::complex<double> zc = z.complex();
  std::complex<double> num = c * zc - s;
  std::complex<double> den = s * zc + c;
  const double scale = std::max(std::abs(den.real()), std::abs(den.imag()));
  num /= scale;
  den /= scale;
  const double den2 = std::norm(den);
  const double re = (num * std::conj(den)).real() / den2;
  const double im = (z.im() / scale) / scale / den2;
  if (!(im > 0.0) || !std::isfinite(re) || !std::isfinite(im))
    throw NumericalBreakdown("rotation image left the half-plane");
  return {re, im};
}

// log Im(R(psi) · e^t i), stable for any t >= 0.
inline double logImRotatedRay(double psi, double t) {
  const double s = std::sin(psi);
  const double c = std::cos(psi);
  const double logS2 = s == 0.0 ? -std::numeric_limits<double>::infinity() : 2.0 * std::log(std::abs(s));
  const double logC2 = c == 0.0 ? -std::numeric_limits<double>::infinity() : 2.0 * std::log(std::abs(c));
  // Im = e^t / (s^2 e^{2t} + c^2)
  return t - logSumExp(logS2 + 2.0 * t, logC2);
}

// Singular value decomposition of a 2x2 matrix with positive determinant:
// m = R(left) diag(s1, s2) R(right), s1 >= s2 > 0.
struct Svd2 {
  double left;
  double s1;
  double right;
};

inline Svd2 svd2(double m00, double m01, double m10, double m11) {
  const double e = 0.5 * (m00 + m11);
  const double f = 0.5 * (m00 - m11);
  const double g = 0.5 * (m10 + m01);
  const double h = 0.5 * (m10 - m01);
  const double q = std::hypot(e, h);
  const double r = std::hypot(f, g);
  const double a1 = std::atan2(g, f);
  const double a2 = std::atan2(h, e);
  return {0.5 * (a2 + a1), q + r, 0.5 * (a2 - a1)};
}

}  // namespace detail

/// Orientation-preserving isometry of the hyperbolic plane, i.e. an element of
/// PSL(2,R), kept in Cartan form.
class Mobius {
 public:
  Mobius() = default;

  static Mobius identity() { return {}; }

  /// R(left) diag(e^{stretch/2}, e^{-stretch/2}) R(right); stretch >= 0.
  static Mobius fromCartan(double left, double stretch, double right) {
    detail::require(stretch >= 0.0 && std::isfinite(stretch), "Mobius: stretch must be finite and >= 0");
    Mobius m;
    m.left_ = detail::wrapHalfTurn(left);
    m.stretch_ = stretch;
    m.right_ = detail::wrapHalfTurn(right);
    return m;
  }

  /// From explicit entries; the matrix is rescaled to determinant 1.
  static Mobius fromMatrix(double a, double b, double c, double d) {
    const double det = a * d - b * c;
    if (!(det > 0.0) || !std::isfinite(det))
      throw InvalidArgument("Mobius::fromMatrix: determinant must be positive and finite");
    const double k = 1.0 / std::sqrt(det);
    const auto svd = detail::svd2(a * k, b * k, c * k, d * k);
    return fromCartan(svd.left, std::max(0.0, 2.0 * std::log(svd.s1)), svd.right);
  }

  /// Rotation about the origin by `angle` as seen in the disk model.
  static Mobius rotation(double angle) { return fromCartan(-0.5 * angle, 0.0, 0.0); }

  /// Hyperbolic translation along the imaginary axis: i -> e^t i.
  static Mobius translation(double t) {
    return t >= 0 ? fromCartan(0.0, t, 0.0) : fromCartan(0.5 * kPi, -t, -0.5 * kPi);
  }

  /// The isometry z -> x + y z sending the origin to `z`.
  static Mobius translationTo(const HPoint& z) {
    const double sy = std::sqrt(z.im());
    return fromMatrix(sy, z.re() / sy, 0.0, 1.0 / sy);
  }

  double leftAngle() const { return left_; }
  double rightAngle() const { return right_; }
  double stretch() const { return stretch_; }

  /// Natural-log prefactor s in m = e^s [[a, b], [c, d]].
  double logScale() const { return 0.5 * stretch_; }

  // Normalized entries of R(left) diag(1, e^{-t}) R(right); max |entry| lies in [1/2, 2].
  double a() const { return entry(0, 0); }
  double b() const { return entry(0, 1); }
  double c() const { return entry(1, 0); }
  double d() const { return entry(1, 1); }

  /// Determinant of the represented matrix e^{2s}(ad - bc), from the factors.
  double determinant() const {
    const double l = std::cos(left_) * std::cos(left_) + std::sin(left_) * std::sin(left_);
    const double r = std::cos(right_) * std::cos(right_) + std::sin(right_) * std::sin(right_);
    return l * r;
  }

  /// Disk-model direction of m·o seen from the origin (meaningless when stretch = 0).
  double direction() const { return detail::wrapTwoPi(-2.0 * left_); }

  Mobius inverse() const {
    return fromCartan(0.5 * kPi - right_, stretch_, -0.5 * kPi - left_);
  }

 private:
  double entry(int i, int j) const {
    const double cl = std::cos(left_), sl = std::sin(left_);
    const double cr = std::cos(right_), sr = std::sin(right_);
    const double e = std::exp(-stretch_);
    // [[cl, -sl], [sl, cl]] * diag(1, e) * [[cr, -sr], [sr, cr]]
    const double l0 = i == 0 ? cl : sl;
    const double l1 = i == 0 ? -sl : cl;
    const double r0 = j == 0 ? cr : -sr;
    const double r1 = j == 0 ? sr : cr;
    return l0 * r0 + e * l1 * r1;
  }

  double left_ = 0.0;
  double stretch_ = 0.0;
  double right_ = 0.0;
};

/// Product m1 * m2 (apply m2 first).
inline Mobius compose(const Mobius& m1, const Mobius& m2) {
  const double t1 = m1.stretch();
  const double t2 = m2.stretch();
  const double alpha = m1.rightAngle() + m2.leftAngle();
  const double ca = std::cos(alpha);
  const double sa = std::sin(alpha);
  const double e1 = std::exp(-t1);
  const double e2 = std::exp(-t2);
  // diag(e^{t1/2},.) R(alpha) diag(e^{t2/2},.) divided by e^{(t1+t2)/2}.
  double c00 = ca, c01 = -e2 * sa, c10 = e1 * sa, c11 = e1 * e2 * ca;
  double logShift = 0.0;
  const double biggest = std::max({std::abs(c00), std::abs(c01), std::abs(c10)});
  if (biggest < 1e-150) {
    // Redo the scaling in the log domain so the entries do not underflow.
    auto logAbs = [](double x) { return x == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(x)); };
    const double l00 = logAbs(ca), l01 = logAbs(sa) - t2, l10 = logAbs(sa) - t1, l11 = logAbs(ca) - t1 - t2;
    logShift = std::max({l00, l01, l10, l11});
    auto scaled = [&](double l, double sign) { return std::copysign(std::exp(l - logShift), sign); };
    c00 = scaled(l00, ca);
    c01 = scaled(l01, -sa);
    c10 = scaled(l10, sa);
    c11 = scaled(l11, ca);
  }
  const auto svd = detail::svd2(c00, c01, c10, c11);
  const double t = std::max(0.0, t1 + t2 + 2.0 * (logShift + std::log(svd.s1)));
  return Mobius::fromCartan(m1.leftAngle() + svd.left, t, svd.right + m2.rightAngle());
}

/// Canonical representative of the same isometry (angles reduced mod π).
inline Mobius renormalize(const Mobius& m) {
  return Mobius::fromCartan(m.leftAngle(), m.stretch(), m.rightAngle());
}

/// Fractional-linear action. Throws NumericalBreakdown if the image cannot be
/// represented (overflow, or imaginary part lost).
inline HPoint apply(const Mobius& m, const HPoint& z) {
  const HPoint z1 = detail::rotateAboutOrigin(m.rightAngle(), z);
  const double k = std::exp(m.stretch());
  const double re = k * z1.re();
  const double im = k * z1.im();
  if (!std::isfinite(k) || !std::isfinite(re) || !std::isfinite(im) || !(im > 0.0))
    throw NumericalBreakdown("Mobius image not representable in half-plane coordinates");
  return detail::rotateAboutOrigin(m.leftAngle(), HPoint(re, im));
}

/// Hyperbolic distance. Symmetric bit-for-bit.
inline double dist(const HPoint& z, const HPoint& w) {
  const double num = std::hypot(std::abs(z.re() - w.re()), std::abs(z.im() - w.im()));
  if (num == 0.0) return 0.0;
  const double den = 2.0 * (std::sqrt(z.im()) * std::sqrt(w.im()));
  const double h = num / den;
  if (std::isfinite(h) && den > 0.0) return 2.0 * std::asinh(h);
  // asinh(h) = log(2h) for h beyond double range.
  const double logH = std::log(num) - std::log(2.0) - 0.5 * (std::log(z.im()) + std::log(w.im()));
  return 2.0 * (logH + std::log(2.0));
}

/// d(o, m·o), valid for any stretch.
inline double distOrigin(const Mobius& m) { return m.stretch(); }

/// d(m1·o, m2·o).
inline double dist(const Mobius& m1, const Mobius& m2) { return distOrigin(compose(m1.inverse(), m2)); }

/// Rotation by π about z.
inline Mobius pointReflection(const HPoint& z) {
  const double x = z.re();
  const double y = z.im();
  return Mobius::fromMatrix(x / y, -(x * x / y + y), 1.0 / y, -x / y);
}

/// Disk-model angle of z seen from the origin.
inline double diskAngle(const HPoint& z) {
  const std::complex<double> w = (z.complex() - std::complex<double>(0, 1)) /
                                 (z.complex() + std::complex<double>(0, 1));
  return detail::wrapTwoPi(std::arg(w));
}

/// Busemann function of b, increasing toward b and vanishing at the origin.
/// For b = ∞ this is log Im z; other points are rotated onto ∞ first.
inline double busemann(const BoundaryPoint& b, const HPoint& z) {
  if (b.isInfinity()) return std::log(z.im());
  const double half = 0.5 * b.angle();
  return std::log(detail::rotateAboutOrigin(half, z).im()) -
         std::log(detail::rotateAboutOrigin(half, HPoint::origin()).im());
}

/// Busemann function of b at m·o, computed from the Cartan form (no overflow).
inline double busemann(const BoundaryPoint& b, const Mobius& m) {
  const double half = 0.5 * b.angle();
  return detail::logImRotatedRay(half + m.leftAngle(), m.stretch()) -
         detail::logImRotatedRay(half, 0.0);
}

/// f_ξ(z) = ξ_b(z) + d(o, z) for the boundary horofunction at b; always >= 0.
inline double fXi(const BoundaryPoint& b, const HPoint& z) {
  return busemann(b, z) + dist(HPoint::origin(), z);
}

inline double fXi(const BoundaryPoint& b, const Mobius& m) { return busemann(b, m) + distOrigin(m); }

/// Horofunction normalized at the origin: either ξ_x(y) = d(x,o) - d(x,y) for an
/// interior base point x = base·o, or the Busemann function of a boundary point.
class Horofunction {
 public:
  struct Interior {
    Mobius base;
  };
  struct Boundary {
    BoundaryPoint point;
  };

  static Horofunction interior(const Mobius& base) { return Horofunction(Interior{base}); }
  static Horofunction interior(const HPoint& base) {
    return Horofunction(Interior{Mobius::translationTo(base)});
  }
  static Horofunction boundary(const BoundaryPoint& b) { return Horofunction(Boundary{b}); }

  bool isBoundary() const { return std::holds_alternative<Boundary>(kind_); }
  const std::variant<Interior, Boundary>& kind() const { return kind_; }

  /// Value at m·o.
  double operator()(const Mobius& m) const {
    if (const auto* in = std::get_if<Interior>(&kind_)) {
      const Mobius inv = in->base.inverse();
      return distOrigin(compose(inv, Mobius::identity())) - distOrigin(compose(inv, m));
    }
    return busemann(std::get<Boundary>(kind_).point, m);
  }

  double operator()(const HPoint& z) const {
    if (const auto* bd = std::get_if<Boundary>(&kind_)) return busemann(bd->point, z);
    return (*this)(Mobius::translationTo(z));
  }

 private:
  explicit Horofunction(std::variant<Interior, Boundary> k) : kind_(std::move(k)) {}
  std::variant<Interior, Boundary> kind_;
};

/// Visual angle bound 4 atan((e^r - 1)^{-1/2}) of the set {f_ξ > r} seen from o.
inline double coneAngle(double r) {
  detail::require(r > 0.0, "coneAngle: r must be positive");
  return 4.0 * std::atan(1.0 / std::sqrt(std::expm1(r)));
}

inline bool isHyperbolicTiling(int p, int q) {
  if (q < 3 || p < 3) return false;
  if (p == kIdealPolygon) return true;
  return 2LL * (static_cast<long long>(p) + q) < static_cast<long long>(p) * q;
}

/// Edge length of the {P,Q} tiling, 2 acosh(cos(π/P) / sin(π/Q)); P may be kIdealPolygon.
inline double sideLength(int p, int q) {
  if (!isHyperbolicTiling(p, q))
    throw InvalidTiling("{" + std::to_string(p) + "," + std::to_string(q) +
                        "} is not hyperbolic: need 1/P + 1/Q < 1/2");
  const double cosP = p == kIdealPolygon ? 1.0 : std::cos(kPi / p);
  return 2.0 * std::acosh(cosP / std::sin(kPi / q));
}

}  // namespace hypdrift
