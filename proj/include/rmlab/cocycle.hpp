#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmlab/errors.hpp"
#include "rmlab/mat2.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

/// Locally constant random cocycle: a k-tuple of invertible 2x2 matrices with
/// a strictly positive probability vector. Immutable after construction.
struct Cocycle {
    std::vector<Mat2> mats;
    std::vector<double> probs;

    Cocycle() = default;
    Cocycle(std::vector<Mat2> m, std::vector<double> p) : mats(std::move(m)), probs(std::move(p)) {
        validate();
    }

    int k() const { return static_cast<int>(mats.size()); }

    void validate() const {
        if (mats.empty() || mats.size() != probs.size())
            throw DimensionMismatch("Cocycle: needs k >= 1 matrices and matching probs");
        double sum = 0.0;
        for (double p : probs) {
            if (!(p > 0.0)) throw ConfigInvalid("Cocycle: probabilities must be strictly positive");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ConfigInvalid("Cocycle: probabilities must sum to 1");
        for (const Mat2& m : mats) {
            if (!m.finite()) throw ConfigInvalid("Cocycle: non-finite matrix entry");
            if (std::abs(m.det()) < kDetFloor) throw SingularMatrix("Cocycle: member matrix not invertible");
        }
    }

    std::vector<double> cumulative() const {
        std::vector<double> cum(probs.size());
        double s = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            s += probs[i];
            cum[i] = s;
        }
        cum.back() = 1.0;
        return cum;
    }

    /// max over members of max(||A_j||, ||A_j^-1||).
    double norm_bound() const {
        double l = 0.0;
        for (const Mat2& m : mats) l = std::max(l, std::max(op_norm(m), op_norm(m.inverse())));
        return l;
    }
};

/// Finite window of symbols x_0 ... x_{n-1}.
struct SymbolPath {
    std::vector<std::uint32_t> symbols;

    int length() const { return static_cast<int>(symbols.size()); }
};

inline double cocycle_distance(const Cocycle& a, const Cocycle& b) {
    if (a.k() != b.k()) throw DimensionMismatch("cocycle_distance: mismatched k");
    double d = 0.0;
    for (int j = 0; j < a.k(); ++j) d = std::max(d, op_norm(a.mats[j] - b.mats[j]));
    return d;
}

inline SymbolPath sample_path(int k, const std::vector<double>& probs, int n, Rng& rng) {
    if (static_cast<int>(probs.size()) != k) throw DimensionMismatch("sample_path: probs size != k");
    std::vector<double> cum(k);
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
        if (!(probs[i] > 0.0)) throw ConfigInvalid("sample_path: probabilities must be strictly positive");
        s += probs[i];
        cum[i] = s;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ConfigInvalid("sample_path: probabilities must sum to 1");
    cum.back() = 1.0;
    SymbolPath path;
    path.symbols.resize(n);
    for (int i = 0; i < n; ++i) path.symbols[i] = static_cast<std::uint32_t>(rng.pick_cumulative(cum));
    return path;
}

inline SymbolPath sample_path(const Cocycle& a, int n, Rng& rng) {
    return sample_path(a.k(), a.probs, n, rng);
}

/// Product in cocycle order: A_{x_{n-1}} ... A_{x_1} A_{x_0}.
inline Mat2 iterate_product(const Cocycle& a, const SymbolPath& path) {
    Mat2 p = Mat2::identity();
    for (std::uint32_t s : path.symbols) {
        if (static_cast<int>(s) >= a.k()) throw DimensionMismatch("iterate_product: symbol out of range");
        p = a.mats[s] * p;
        if (p.max_abs_entry() > 1e300)
            throw Overflow("iterate_product: intermediate norm above 1e300, use log_norm_product");
    }
    return p;
}

/// Compensated accumulator: long log-sums of near-identical terms drift
/// linearly under naive addition.
struct KahanSum {
    double sum = 0.0, carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

/// Log-scale product statistics, accumulated with periodic renormalization so
/// nothing overflows. log_norm is log of the largest singular value of the
/// full product, log_det the log of |det|.
struct ProductStats {
    double log_norm = 0.0;
    double log_det = 0.0;

    /// log || P^{-1} || = -log s2 = log_norm - log_det  (2x2 identity).
    double log_norm_inverse() const { return log_norm - log_det; }
};

inline constexpr int kRenormPeriod = 64;

inline ProductStats log_product_stats(const Cocycle& a, const SymbolPath& path) {
    Mat2 p = Mat2::identity();
    KahanSum shift, log_det;
    int since = 0;
    for (std::uint32_t s : path.symbols) {
        if (static_cast<int>(s) >= a.k()) throw DimensionMismatch("log_product_stats: symbol out of range");
        log_det.add(std::log(std::abs(a.mats[s].det())));
        p = a.mats[s] * p;
        if (++since == kRenormPeriod) {
            const double f = p.frobenius();
            p = p * (1.0 / f);
            shift.add(std::log(f));
            since = 0;
        }
    }
    ProductStats st;
    st.log_norm = shift.value() + std::log(op_norm(p));
    st.log_det = log_det.value();
    return st;
}

inline double log_norm_product(const Cocycle& a, const SymbolPath& path) {
    return log_product_stats(a, path).log_norm;
}

inline Cocycle inverse_cocycle(const Cocycle& a) {
    std::vector<Mat2> inv(a.mats.size());
    for (std::size_t j = 0; j < a.mats.size(); ++j) inv[j] = a.mats[j].inverse();
    return Cocycle(std::move(inv), a.probs);
}

/// Simultaneous diagonalization certificate: A_j ~ conj * diag(theta_j, 1/theta_j) * conj^-1.
/// residual reports the worst reconstruction error; `accepted` is residual <= tol.
/// Canonical orientation: the expanding line (E[log|theta|] >= 0) is the first column.
struct DiagForm {
    Mat2 conj = Mat2::identity();
    std::vector<double> thetas;
    double residual = std::numeric_limits<double>::infinity();
    bool accepted = false;
};

namespace detail {

/// Real eigen-pair data for a 2x2 matrix with real distinct eigenvalues.
struct EigenPair {
    double lam1, lam2;        // |lam1| >= |lam2|
    ProjPoint dir1, dir2;     // matching eigendirections
};

inline std::optional<EigenPair> real_eigen(const Mat2& g) {
    const double tr = g.trace(), dt = g.det();
    const double disc = tr * tr - 4.0 * dt;
    if (disc <= 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double l1 = 0.5 * (tr + sq), l2 = 0.5 * (tr - sq);
    if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
    if (std::abs(l1) - std::abs(l2) <= 1e-14 * std::abs(l1)) return std::nullopt;
    auto eigvec = [&g](double lam) {
        // (g - lam I) v = 0; pick the better-conditioned row.
        const double r1x = g.a - lam, r1y = g.b;
        const double r2x = g.c, r2y = g.d - lam;
        if (r1x * r1x + r1y * r1y >= r2x * r2x + r2y * r2y)
            return ProjPoint::from_vector(-r1y, r1x);
        return ProjPoint::from_vector(-r2y, r2x);
    };
    EigenPair e{l1, l2, eigvec(l1), eigvec(l2)};
    return e;
}

} // namespace detail

/// Build a common eigenbasis from one member with real simple eigenvalues
/// (the one with the largest |trace| - 2 when several qualify), conjugate all
/// members by it and report the worst off-diagonal reconstruction error.
inline DiagForm simultaneous_diagonalize(const Cocycle& a, double tol = 1e-8) {
    DiagForm out;
    int anchor = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < a.k(); ++j) {
        const auto e = detail::real_eigen(a.mats[j]);
        if (!e) continue;
        const double score = std::abs(a.mats[j].trace()) - 2.0;
        if (score > best_score) {
            best_score = score;
            anchor = j;
        }
    }
    if (anchor < 0) return out;  // nothing hyperbolic to anchor on

    const auto e = *detail::real_eigen(a.mats[anchor]);
    double u1x, u1y, u2x, u2y;
    e.dir1.unit(u1x, u1y);
    e.dir2.unit(u2x, u2y);
    Mat2 p(u1x, u2x, u1y, u2y);
    if (std::abs(p.det()) < 1e-12) return out;
    const Mat2 pinv = p.inverse();

    out.conj = p;
    out.thetas.resize(a.k());
    out.residual = 0.0;
    for (int j = 0; j < a.k(); ++j) {
        const Mat2 m = pinv * a.mats[j] * p;
        out.thetas[j] = m.a;
    }
    // Canonical orientation: expanding line first.
    double mean_log = 0.0;
    for (int j = 0; j < a.k(); ++j) mean_log += a.probs[j] * std::log(std::abs(out.thetas[j]));
    if (mean_log < 0.0) {
        out.conj = Mat2(p.b, p.a, p.d, p.c);  // swap columns
        for (double& t : out.thetas) t = 1.0 / t;
    }
    const Mat2 q = out.conj;
    const Mat2 qinv = q.inverse();
    for (int j = 0; j < a.k(); ++j) {
        const Mat2 rec = q * Mat2::diag(out.thetas[j], 1.0 / out.thetas[j]) * qinv;
        out.residual = std::max(out.residual, op_norm(a.mats[j] - rec));
    }
    out.accepted = out.residual <= tol;
    return out;
}

/// If the line is invariant under every member (within tol), return the
/// restricted Lyapunov exponent sum p_j log|lambda_j|; otherwise nullopt.
inline std::optional<double> invariant_line_le(const Cocycle& a, const ProjPoint& line, double tol = 1e-8) {
    double x, y;
    line.unit(x, y);
    double le = 0.0;
    for (int j = 0; j < a.k(); ++j) {
        const ProjPoint image = proj_apply(a.mats[j], line);
        if (proj_distance(image, line) > tol) return std::nullopt;
        double ox, oy;
        a.mats[j].apply(x, y, ox, oy);
        const double lam = ox * x + oy * y;  // signed component along the unit representative
        if (std::abs(lam) < kDetFloor) throw ZeroEigenvalue("invariant_line_le: zero eigenvalue on line");
        le += a.probs[j] * std::log(std::abs(lam));
    }
    return le;
}

// --- serialization: {"probs": [...], "mats": [[a,b,c,d], ...]} ---

inline void to_json(nlohmann::json& j, const Mat2& m) { j = nlohmann::json::array({m.a, m.b, m.c, m.d}); }

inline void from_json(const nlohmann::json& j, Mat2& m) {
    if (!j.is_array() || j.size() != 4) throw ConfigInvalid("Mat2: expected [a,b,c,d]");
    m = Mat2(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

inline void to_json(nlohmann::json& j, const Cocycle& a) {
    j = nlohmann::json{{"probs", a.probs}, {"mats", a.mats}};
}

inline void from_json(const nlohmann::json& j, Cocycle& a) {
    a.mats = j.at("mats").get<std::vector<Mat2>>();
    a.probs = j.at("probs").get<std::vector<double>>();
    a.validate();
}

} // namespace rmlab
