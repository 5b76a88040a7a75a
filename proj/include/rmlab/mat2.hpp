#pragma once

#include <cmath>
#include <limits>

#include "rmlab/errors.hpp"

namespace rmlab {

inline constexpr double kDetFloor = 1e-300;
inline constexpr double kPi = 3.14159265358979323846264338327950288;

/// Real 2x2 matrix, row-major [[a, b], [c, d]]. Plain value type; all
/// operations are pure.
struct Mat2 {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    constexpr Mat2() = default;
    constexpr Mat2(double a_, double b_, double c_, double d_) : a(a_), b(b_), c(c_), d(d_) {}

    static constexpr Mat2 identity() { return {1, 0, 0, 1}; }
    static constexpr Mat2 diag(double x, double y) { return {x, 0, 0, y}; }
    static Mat2 rotation(double angle) {
        const double co = std::cos(angle), si = std::sin(angle);
        return {co, -si, si, co};
    }

    constexpr double det() const { return a * d - b * c; }
    constexpr double trace() const { return a + d; }
    constexpr Mat2 transpose() const { return {a, c, b, d}; }

    Mat2 inverse() const {
        const double dt = det();
        if (std::abs(dt) < kDetFloor) throw SingularMatrix("Mat2::inverse: |det| below floor");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }

    constexpr Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
    constexpr Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    constexpr Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
    constexpr Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }

    /// Image of the column vector (x, y).
    constexpr void apply(double x, double y, double& ox, double& oy) const {
        ox = a * x + b * y;
        oy = c * x + d * y;
    }

    double max_abs_entry() const {
        return std::max(std::max(std::abs(a), std::abs(b)), std::max(std::abs(c), std::abs(d)));
    }

    double frobenius() const { return std::sqrt(a * a + b * b + c * c + d * d); }

    bool finite() const {
        return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d);
    }
};

inline Mat2 operator*(double s, const Mat2& m) { return m * s; }

/// Largest singular value, in closed form: with T the sum of squared entries
/// and D the determinant, s1^2 = (T + sqrt(T^2 - 4 D^2)) / 2.
inline double op_norm(const Mat2& g) {
    const double t = g.a * g.a + g.b * g.b + g.c * g.c + g.d * g.d;
    const double dd = g.det();
    const double disc = std::max(t * t - 4.0 * dd * dd, 0.0);
    return std::sqrt(0.5 * (t + std::sqrt(disc)));
}

/// Smallest singular value: |det| / s1 (stable at 2x2).
inline double op_norm_min(const Mat2& g) {
    const double s1 = op_norm(g);
    if (s1 == 0.0) return 0.0;
    return std::abs(g.det()) / s1;
}

/// Rescale to |det| = 1 (sign of det is preserved).
inline Mat2 sl2_normalize(const Mat2& g) {
    const double dt = std::abs(g.det());
    if (dt < kDetFloor) throw SingularMatrix("sl2_normalize: |det| below floor");
    return g * (1.0 / std::sqrt(dt));
}

/// A direction in the real projective line, stored as the angle of a unit
/// representative (cos theta, sin theta) with theta normalized into [0, pi).
struct ProjPoint {
    double theta = 0.0;

    ProjPoint() = default;
    explicit ProjPoint(double angle) : theta(normalize(angle)) {}

    static ProjPoint from_vector(double x, double y) {
        double t = std::atan2(y, x);
        return ProjPoint(t);
    }

    void unit(double& x, double& y) const {
        x = std::cos(theta);
        y = std::sin(theta);
        // snap the axes: atan2/cos round-trips leave ~1e-17 contamination that
        // repelling dynamics would amplify
        if (std::abs(x) < 1e-15) {
            x = 0.0;
            y = y < 0 ? -1.0 : 1.0;
        } else if (std::abs(y) < 1e-15) {
            y = 0.0;
            x = x < 0 ? -1.0 : 1.0;
        }
    }

    static double normalize(double t) {
        t = std::fmod(t, kPi);
        if (t < 0) t += kPi;
        if (t >= kPi) t -= kPi;  // fmod can land exactly on pi
        return t;
    }
};

/// |sin(angle between the two lines)|; symmetric, in [0, 1], zero iff equal.
inline double proj_distance(const ProjPoint& p, const ProjPoint& q) {
    return std::abs(std::sin(p.theta - q.theta));
}

/// Projective action of an invertible matrix.
inline ProjPoint proj_apply(const Mat2& g, const ProjPoint& p) {
    if (std::abs(g.det()) < kDetFloor) throw SingularMatrix("proj_apply: |det| below floor");
    double x, y, ox, oy;
    p.unit(x, y);
    g.apply(x, y, ox, oy);
    return ProjPoint::from_vector(ox, oy);
}

/// Singular directions and values of g; requires a strict gap s1 > s2.
struct SingularFrame {
    ProjPoint v_plus;   // most expanding input direction
    ProjPoint v_minus;  // least expanding input direction
    double s1 = 0.0, s2 = 0.0;
};

inline SingularFrame singular_frame(const Mat2& g) {
    // Eigen-decompose the Gram matrix g^T g (symmetric, 2x2).
    const double m00 = g.a * g.a + g.c * g.c;
    const double m11 = g.b * g.b + g.d * g.d;
    const double m01 = g.a * g.b + g.c * g.d;
    const double tr = m00 + m11;
    const double disc = std::sqrt(std::max((m00 - m11) * (m00 - m11) + 4.0 * m01 * m01, 0.0));
    const double lam1 = 0.5 * (tr + disc);
    const double lam2 = 0.5 * (tr - disc);
    const double s1 = std::sqrt(std::max(lam1, 0.0));
    const double s2 = std::sqrt(std::max(lam2, 0.0));
    if (s1 - s2 <= 1e-12 * std::max(s1, 1.0))
        throw DegenerateSingularValues("singular_frame: s1 ~ s2, directions undefined");

    SingularFrame f;
    f.s1 = s1;
    f.s2 = s2;
    // Eigenvector of the Gram matrix for lam1; pick the better-conditioned row.
    double vx, vy;
    if (std::abs(m01) > 1e-300) {
        if (std::abs(m00 - lam1) > std::abs(m11 - lam1)) {
            vx = m01;
            vy = lam1 - m00;
        } else {
            vx = lam1 - m11;
            vy = m01;
        }
    } else {
        vx = (m00 >= m11) ? 1.0 : 0.0;
        vy = (m00 >= m11) ? 0.0 : 1.0;
    }
    f.v_plus = ProjPoint::from_vector(vx, vy);
    f.v_minus = ProjPoint(f.v_plus.theta + kPi / 2);
    return f;
}

} // namespace rmlab
