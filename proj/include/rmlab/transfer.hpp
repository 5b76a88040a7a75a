#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Observable or measure on symbols x angle grid nodes (k rows of G values,
/// grid angles theta_m = pi m / G).
struct GridFunction {
    int k = 0, G = 0;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(int k_, int G_, double fill = 0.0) : k(k_), G(G_), values(k_ * G_, fill) {}

    double& at(int i, int m) { return values[i * G + m]; }
    double at(int i, int m) const { return values[i * G + m]; }
    std::size_t size() const { return values.size(); }

    double angle(int m) const { return kPi * m / G; }
};

/// Grid discretization of the symbol-averaged projective action. Each node
/// (i, m) pushes mass p_l to the two grid nodes bracketing the image angle of
/// theta_m under the i-th matrix; rows are stochastic by construction. The
/// Laplace parameter t tilts the mass by ||B_l v(image)||^t.
struct GridOperator {
    int k = 0, G = 0;
    double t = 0.0;
    struct Entry {
        int col;
        double w;
    };
    std::vector<std::vector<Entry>> rows;  // size k*G

    int index(int i, int m) const { return i * G + m; }

    /// Right action on observables: (Q f)(row) = sum_entries w f(col).
    GridFunction apply(const GridFunction& f) const {
        GridFunction out(k, G);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double acc = 0.0;
            for (const Entry& e : rows[r]) acc += e.w * f.values[e.col];
            out.values[r] = acc;
        }
        return out;
    }

    /// Left action on measures: out(col) += mu(row) w.
    GridFunction apply_left(const GridFunction& mu) const {
        GridFunction out(k, G);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double m = mu.values[r];
            if (m == 0.0) continue;
            for (const Entry& e : rows[r]) out.values[e.col] += m * e.w;
        }
        return out;
    }

    /// Coordinate-list text dump, one "row col weight" line per entry.
    std::string coordinate_list() const {
        std::string out;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (const Entry& e : rows[r]) {
                out += std::to_string(r);
                out += ' ';
                out += std::to_string(e.col);
                out += ' ';
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.17g", e.w);
                out += buf;
                out += '\n';
            }
        }
        return out;
    }
};

inline GridOperator discretize(const Cocycle& b, int G, double t = 0.0) {
    if (G < 8) throw ConfigInvalid("discretize: need G >= 8");
    GridOperator q;
    q.k = b.k();
    q.G = G;
    q.t = t;
    q.rows.resize(static_cast<std::size_t>(b.k()) * G);
    for (int i = 0; i < b.k(); ++i) {
        for (int m = 0; m < G; ++m) {
            const ProjPoint image = proj_apply(b.mats[i], ProjPoint(kPi * m / G));
            double u = image.theta * G / kPi;
            int m0 = static_cast<int>(std::floor(u));
            double frac = u - m0;
            if (frac < 1e-9) frac = 0.0;                 // snap grid fixed points
            if (frac > 1.0 - 1e-9) {
                frac = 0.0;
                ++m0;
            }
            m0 %= G;
            const int m1 = (m0 + 1) % G;
            double ix, iy;
            image.unit(ix, iy);
            auto& row = q.rows[q.index(i, m)];
            for (int l = 0; l < b.k(); ++l) {
                double tilt = 1.0;
                if (t != 0.0) {
                    double ox, oy;
                    b.mats[l].apply(ix, iy, ox, oy);
                    tilt = std::exp(t * 0.5 * std::log(ox * ox + oy * oy));
                }
                const double base = b.probs[l] * tilt;
                if (frac < 1.0) row.push_back({q.index(l, m0), base * (1.0 - frac)});
                if (frac > 0.0) row.push_back({q.index(l, m1), base * frac});
            }
        }
    }
    return q;
}

struct StationaryResult {
    GridFunction weights;  // probability weights over (symbol, node)
    long iterations = 0;
    double residual = 0.0;        // ||mu Q - mu||_1 at exit
    bool nonunique_risk = false;  // second eigenvalue modulus close to 1
    double lambda2_estimate = 0.0;
};

/// Left fixed probability vector by power iteration from the uniform start.
inline StationaryResult stationary_measure(const GridOperator& q, double tol = 1e-10,
                                           long max_iter = 100000) {
    if (q.t != 0.0) throw ConfigInvalid("stationary_measure: needs the t = 0 operator");
    const std::size_t n = q.rows.size();
    StationaryResult res;
    GridFunction mu(q.k, q.G, 1.0 / static_cast<double>(n));
    double residual = std::numeric_limits<double>::infinity();
    long it = 0;
    for (; it < max_iter; ++it) {
        GridFunction next = q.apply_left(mu);
        double mass = 0.0;
        for (double v : next.values) mass += v;
        for (double& v : next.values) v /= mass;
        residual = 0.0;
        for (std::size_t j = 0; j < n; ++j) residual += std::abs(next.values[j] - mu.values[j]);
        mu = std::move(next);
        if (residual <= tol) break;
    }
    if (residual > tol) throw NoConvergence(it, "stationary_measure: power iteration did not settle");
    res.weights = mu;
    res.iterations = it + 1;
    res.residual = residual;

    // crude second-eigenvalue probe: iterate a mass-free perturbation
    GridFunction w(q.k, q.G);
    for (std::size_t j = 0; j < n; ++j) w.values[j] = ((j % 3) - 1.0) / static_cast<double>(n);
    double prev_norm = 0.0;
    for (int probe = 0; probe < 40; ++probe) {
        GridFunction next = q.apply_left(w);
        double mass = 0.0;
        for (double v : next.values) mass += v;
        for (std::size_t j = 0; j < n; ++j) next.values[j] -= mass * mu.values[j];
        double norm = 0.0;
        for (double v : next.values) norm += std::abs(v);
        if (probe == 39 && prev_norm > 0.0) res.lambda2_estimate = norm / prev_norm;
        prev_norm = norm;
        if (norm < 1e-300) break;
        w = std::move(next);
    }
    res.nonunique_risk = res.lambda2_estimate > 1.0 - 1e-6;
    return res;
}

/// Exponent from the stationary measure: sum_i p_i sum_m nu_m log||B_i v_m||
/// with nu the angle marginal of the grid measure.
inline double furstenberg_le(const Cocycle& b, const GridFunction& mu) {
    if (mu.k != b.k()) throw DimensionMismatch("furstenberg_le: measure symbols mismatch");
    std::vector<double> marginal(mu.G, 0.0);
    for (int i = 0; i < mu.k; ++i)
        for (int m = 0; m < mu.G; ++m) marginal[m] += mu.at(i, m);
    double le = 0.0;
    for (int m = 0; m < mu.G; ++m) {
        if (marginal[m] == 0.0) continue;
        double x, y;
        ProjPoint(mu.angle(m)).unit(x, y);
        double contrib = 0.0;
        for (int i = 0; i < b.k(); ++i) {
            double ox, oy;
            b.mats[i].apply(x, y, ox, oy);
            contrib += b.probs[i] * 0.5 * std::log(ox * ox + oy * oy);
        }
        le += marginal[m] * contrib;
    }
    return le;
}

/// Dominant eigenvalue curve of the tilted operators and the quantities
/// derived from it: c(t) = log lambda(t), the curvature bound h, and the
/// central-difference derivative at 0 (the exponent of the untilted process).
struct PressureCurve {
    std::vector<double> ts, lambdas, cs, second_diffs;
    double h = 0.0;
    double c_prime0 = 0.0;
    double t_max = 0.0;
    bool centered = false;

    PressureCurve center() const {
        PressureCurve out = *this;
        for (std::size_t i = 0; i < out.ts.size(); ++i) out.cs[i] -= c_prime0 * out.ts[i];
        out.centered = true;
        return out;
    }
};

inline double dominant_eigenvalue(const GridOperator& q, double tol = 1e-12, long max_iter = 100000) {
    GridFunction f(q.k, q.G, 1.0);
    double lambda = 1.0;
    for (long it = 0; it < max_iter; ++it) {
        GridFunction next = q.apply(f);
        double norm = 0.0;
        for (double v : next.values) norm = std::max(norm, std::abs(v));
        if (norm == 0.0) throw NoConvergence(it, "dominant_eigenvalue: operator annihilated the iterate");
        for (double& v : next.values) v /= norm;
        double diff = 0.0;
        for (std::size_t j = 0; j < f.values.size(); ++j) diff = std::max(diff, std::abs(next.values[j] - f.values[j]));
        f = std::move(next);
        if (std::abs(norm - lambda) <= tol * std::max(1.0, lambda) && diff <= 1e-10) return norm;
        lambda = norm;
    }
    throw NoConvergence(max_iter, "dominant_eigenvalue: power iteration did not settle");
}

inline PressureCurve pressure(const Cocycle& b, const std::vector<double>& t_list, int G,
                              double t_max = 0.5) {
    PressureCurve curve;
    curve.t_max = t_max;
    for (double t : t_list) {
        if (std::abs(t) > t_max) throw ConfigInvalid("pressure: |t| beyond t_max");
        curve.ts.push_back(t);
        const double lam = dominant_eigenvalue(discretize(b, G, t));
        curve.lambdas.push_back(lam);
        curve.cs.push_back(std::log(lam));
    }
    curve.second_diffs.assign(curve.ts.size(), 0.0);
    for (std::size_t i = 1; i + 1 < curve.ts.size(); ++i) {
        const double dt = curve.ts[i + 1] - curve.ts[i];
        const double sd = (curve.cs[i + 1] - 2 * curve.cs[i] + curve.cs[i - 1]) / (dt * dt);
        curve.second_diffs[i] = sd;
        curve.h = std::max(curve.h, std::abs(sd));
    }
    for (std::size_t i = 1; i + 1 < curve.ts.size(); ++i) {
        if (std::abs(curve.ts[i]) < 1e-15) {
            curve.c_prime0 = (curve.cs[i + 1] - curve.cs[i - 1]) / (curve.ts[i + 1] - curve.ts[i - 1]);
            break;
        }
    }
    return curve;
}

/// Local quadratic rate eps^2 / (2h), or the boundary value when the
/// maximizing tilt falls outside the window.
inline double rate_function(const PressureCurve& curve, double eps) {
    if (!curve.centered) throw ConfigInvalid("rate_function: curve must be centered first");
    if (curve.h <= 1e-12) throw DegenerateCurvature("rate_function: vanishing curvature");
    if (eps == 0.0) return 0.0;
    const double t_star = std::abs(eps) / curve.h;
    if (t_star < curve.t_max) return eps * eps / (2.0 * curve.h);
    return curve.t_max * std::abs(eps) - 0.5 * curve.h * curve.t_max * curve.t_max;
}

/// Monte-Carlo contraction coefficient: max over a direction grid of
/// E[ ||B^(n) v||^{-2 alpha} ].
struct KappaEstimate {
    double value = 0.0;
    double std_err = 0.0;  // at the maximizing direction
    double argmax_theta = 0.0;
};

inline KappaEstimate kappa_alpha(const Cocycle& b, int n, double alpha, int dir_grid, long samples,
                                 std::uint64_t seed, int workers = 1) {
    if (!(alpha > 0.0)) throw ConfigInvalid("kappa_alpha: alpha must be positive");
    std::vector<double> mean(dir_grid, 0.0), var(dir_grid, 0.0);
    parallel_for(static_cast<std::size_t>(dir_grid), workers, [&](std::size_t d) {
        const ProjPoint dir(kPi * d / dir_grid);
        double ux, uy;
        dir.unit(ux, uy);
        double sum = 0.0, sumsq = 0.0;
        for (long s = 0; s < samples; ++s) {
            Rng rng = Rng::derive(seed, s);
            const SymbolPath path = sample_path(b, n, rng);
            double x = ux, y = uy, cumlog = 0.0;
            for (std::uint32_t sym : path.symbols) {
                double nx, ny;
                b.mats[sym].apply(x, y, nx, ny);
                const double norm = std::sqrt(nx * nx + ny * ny);
                cumlog += std::log(norm);
                x = nx / norm;
                y = ny / norm;
            }
            const double v = std::exp(-2.0 * alpha * cumlog);
            sum += v;
            sumsq += v * v;
        }
        mean[d] = sum / samples;
        var[d] = std::max(sumsq / samples - mean[d] * mean[d], 0.0);
    });
    KappaEstimate est;
    for (int d = 0; d < dir_grid; ++d) {
        if (mean[d] > est.value) {
            est.value = mean[d];
            est.std_err = std::sqrt(var[d] / samples);
            est.argmax_theta = kPi * d / dir_grid;
        }
    }
    return est;
}

/// max over symbols and node pairs of |f(i,p) - f(i,q)| / d(p,q)^alpha.
inline double holder_seminorm(const GridFunction& f, double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0) throw ConfigInvalid("holder_seminorm: need alpha in (0, 1]");
    double v = 0.0;
    for (int i = 0; i < f.k; ++i) {
        for (int m = 0; m < f.G; ++m) {
            for (int mm = m + 1; mm < f.G; ++mm) {
                const double d = std::abs(std::sin(kPi * (m - mm) / f.G));
                if (d < 1e-15) continue;
                v = std::max(v, std::abs(f.at(i, m) - f.at(i, mm)) / std::pow(d, alpha));
            }
        }
    }
    return v;
}

} // namespace rmlab
