#pragma once

// Orientation and in-circle tests with a floating-point filter and an exact
// rational fallback. Inputs are doubles, so the rational evaluation is exact.

#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

namespace specsplit::predicates {

namespace detail {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr double kEps = std::numeric_limits<double>::epsilon() * 0.5;
inline constexpr double kOrientBound = (3.0 + 16.0 * kEps) * kEps;
inline constexpr double kInCircleBound = (10.0 + 96.0 * kEps) * kEps;

inline int sign_of(const Rational& r) {
    return r > 0 ? 1 : (r < 0 ? -1 : 0);
}

inline int orient_exact(double ax, double ay, double bx, double by, double cx, double cy) {
    Rational acx = Rational(ax) - Rational(cx);
    Rational bcx = Rational(bx) - Rational(cx);
    Rational acy = Rational(ay) - Rational(cy);
    Rational bcy = Rational(by) - Rational(cy);
    return sign_of(acx * bcy - acy * bcx);
}

inline int incircle_exact(double ax, double ay, double bx, double by, double cx, double cy,
                          double dx, double dy) {
    Rational adx = Rational(ax) - Rational(dx), ady = Rational(ay) - Rational(dy);
    Rational bdx = Rational(bx) - Rational(dx), bdy = Rational(by) - Rational(dy);
    Rational cdx = Rational(cx) - Rational(dx), cdy = Rational(cy) - Rational(dy);
    Rational alift = adx * adx + ady * ady;
    Rational blift = bdx * bdx + bdy * bdy;
    Rational clift = cdx * cdx + cdy * cdy;
    Rational det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                   clift * (adx * bdy - bdx * ady);
    return sign_of(det);
}

}  // namespace detail

/// +1 if (a, b, c) turn counter-clockwise, -1 if clockwise, 0 if collinear.
inline int orient(double ax, double ay, double bx, double by, double cx, double cy) {
    double detleft = (ax - cx) * (by - cy);
    double detright = (ay - cy) * (bx - cx);
    double det = detleft - detright;
    double detsum = std::fabs(detleft) + std::fabs(detright);
    double bound = detail::kOrientBound * detsum;
    if (det > bound) return 1;
    if (-det > bound) return -1;
    if (detsum == 0.0) return 0;
    return detail::orient_exact(ax, ay, bx, by, cx, cy);
}

/// +1 if d lies strictly inside the circle through the counter-clockwise
/// triangle (a, b, c), -1 if strictly outside, 0 if cocircular.
inline int incircle(double ax, double ay, double bx, double by, double cx, double cy, double dx,
                    double dy) {
    double adx = ax - dx, ady = ay - dy;
    double bdx = bx - dx, bdy = by - dy;
    double cdx = cx - dx, cdy = cy - dy;
    double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    double cdxady = cdx * ady, adxcdy = adx * cdy;
    double adxbdy = adx * bdy, bdxady = bdx * ady;
    double alift = adx * adx + ady * ady;
    double blift = bdx * bdx + bdy * bdy;
    double clift = cdx * cdx + cdy * cdy;
    double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
    double permanent = (std::fabs(bdxcdy) + std::fabs(cdxbdy)) * alift +
                       (std::fabs(cdxady) + std::fabs(adxcdy)) * blift +
                       (std::fabs(adxbdy) + std::fabs(bdxady)) * clift;
    double bound = detail::kInCircleBound * permanent;
    if (det > bound) return 1;
    if (-det > bound) return -1;
    return detail::incircle_exact(ax, ay, bx, by, cx, cy, dx, dy);
}

}  // namespace specsplit::predicates
