#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/lyapunov.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Indices i with |theta_i| >= e^{L(A)}. Non-empty whenever L(A) > 0.
inline std::vector<int> hyperbolic_symbols(const Cocycle& a, const DiagForm& diag) {
    if (!diag.accepted) throw ConfigInvalid("hyperbolic_symbols: cocycle not diagonalizable");
    const double L = closed_form_diag_le(diag.thetas, a.probs);
    if (L <= 1e-12) throw ZeroLyapunov("hyperbolic_symbols: L(A) = 0");
    std::vector<int> out;
    for (int i = 0; i < a.k(); ++i)
        if (std::abs(diag.thetas[i]) >= std::exp(L) * (1.0 - 1e-12)) out.push_back(i);
    return out;
}

/// Stable/unstable eigendirection displacement under all member actions.
struct RhoResult {
    double rho_minus = 0.0;
    double rho_plus = 0.0;
    double rho = 0.0;
    std::vector<int> sigma_H;
    std::vector<ProjPoint> e_plus;   // per sigma_H entry
    std::vector<ProjPoint> e_minus;  // per sigma_H entry
    int argmax_index = -1;           // sigma_H position attaining rho
};

inline RhoResult rho_measure(const Cocycle& b, const std::vector<int>& sigma_H_ref) {
    RhoResult r;
    r.sigma_H = sigma_H_ref;
    for (int i : sigma_H_ref) {
        const auto e = detail::real_eigen(b.mats[i]);
        if (!e) throw NotHyperbolic(i, "rho_measure: referenced member is not hyperbolic");
        r.e_plus.push_back(e->dir1);
        r.e_minus.push_back(e->dir2);
    }
    for (std::size_t s = 0; s < r.sigma_H.size(); ++s) {
        double dp = 0.0, dm = 0.0;
        for (int j = 0; j < b.k(); ++j) {
            dp = std::max(dp, proj_distance(proj_apply(b.mats[j], r.e_plus[s]), r.e_plus[s]));
            dm = std::max(dm, proj_distance(proj_apply(b.mats[j], r.e_minus[s]), r.e_minus[s]));
        }
        if (std::max(dp, dm) > r.rho) r.argmax_index = static_cast<int>(s);
        r.rho_plus = std::max(r.rho_plus, dp);
        r.rho_minus = std::max(r.rho_minus, dm);
        r.rho = std::max(r.rho, std::max(dp, dm));
    }
    return r;
}

/// N(B): least n at which the direction-wise expected growth clears L(B)/2.
struct NResult {
    enum class Status { found, infinity, inconclusive };
    Status status = Status::inconclusive;
    int n = -1;
    double threshold = 0.0;     // L(B)/2 estimate used
    double min_mean = 0.0;      // at the stopping/stopped scale
    double min_std_err = 0.0;

    bool found() const { return status == Status::found; }
};

struct MeasureNOptions {
    int n_max = 4096;
    int dir_grid_size = 256;
    long samples = 200;
    int workers = 1;
    int le_scale = 256;         // scale of the L(B) estimate behind the threshold
    long le_samples = 400;
};

inline NResult measure_N(const Cocycle& b, const MeasureNOptions& opt, std::uint64_t seed) {
    const auto le = mc_le(b, opt.le_scale, opt.le_samples, seed ^ 0xC0FFEEULL, opt.workers);
    if (le.mean <= 3.0 * le.std_err) throw ZeroLyapunov("measure_N: L(B) estimate not positive at 3 sigma");
    const double threshold = 0.5 * le.mean;

    // A numerically invariant line pins the direction-wise expectation at its
    // restricted exponent for every n, exactly; floating propagation cannot
    // see this (round-off escapes a repelling axis within ~50 steps), so the
    // slow line is handled analytically.
    for (const Mat2& g : b.mats) {
        const auto e = detail::real_eigen(g);
        if (!e) continue;
        for (const ProjPoint& line : {e->dir1, e->dir2}) {
            const auto restricted = invariant_line_le(b, line, 1e-13);
            if (restricted && *restricted <= threshold) {
                NResult res;
                res.status = NResult::Status::infinity;
                res.threshold = threshold;
                res.n = opt.n_max;
                res.min_mean = *restricted;
                res.min_std_err = 0.0;
                return res;
            }
        }
    }

    // Direction set: uniform angle grid, eigendirections of the members, and
    // their images under one- and two-fold member actions. The augmentation
    // captures the near-invariant directions where the minimum is achieved.
    std::vector<ProjPoint> dirs;
    for (int m = 0; m < opt.dir_grid_size; ++m) dirs.emplace_back(kPi * m / opt.dir_grid_size);
    std::vector<ProjPoint> eig;
    for (const Mat2& g : b.mats) {
        const auto e = detail::real_eigen(g);
        if (!e) continue;
        eig.push_back(e->dir1);
        eig.push_back(e->dir2);
    }
    for (const ProjPoint& p : eig) {
        dirs.push_back(p);
        for (int j = 0; j < b.k(); ++j) {
            dirs.push_back(proj_apply(b.mats[j], p));
            for (int l = 0; l < b.k(); ++l) dirs.push_back(proj_apply(b.mats[l], proj_apply(b.mats[j], p)));
        }
    }
    const std::size_t ndirs = dirs.size();

    // Paths are shared across directions: path s always comes from stream
    // (seed, s), so results do not depend on the direction loop or workers.
    std::vector<std::vector<std::uint32_t>> paths(opt.samples);
    auto extend_paths = [&](int upto) {
        for (long s = 0; s < opt.samples; ++s) {
            if (static_cast<int>(paths[s].size()) >= upto) continue;
            Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(s));
            paths[s] = sample_path(b, upto, rng).symbols;
        }
    };

    struct DirState {
        std::vector<double> x, y, cumlog;  // per sample
    };
    std::vector<DirState> state(ndirs);
    for (std::size_t d = 0; d < ndirs; ++d) {
        double ux, uy;
        dirs[d].unit(ux, uy);
        state[d].x.assign(opt.samples, ux);
        state[d].y.assign(opt.samples, uy);
        state[d].cumlog.assign(opt.samples, 0.0);
    }
    // Accumulated sums per (direction, scale): E[(1/n) log ||B^(n) v||].
    std::vector<std::vector<double>> sum(ndirs), sumsq(ndirs);

    NResult res;
    res.threshold = threshold;

    int done = 0;
    int stage_end = 64;
    while (done < opt.n_max) {
        stage_end = std::min(stage_end, opt.n_max);
        extend_paths(stage_end);
        parallel_for(ndirs, opt.workers, [&](std::size_t d) {
            auto& st = state[d];
            sum[d].resize(stage_end, 0.0);
            sumsq[d].resize(stage_end, 0.0);
            for (long s = 0; s < opt.samples; ++s) {
                double x = st.x[s], y = st.y[s], cl = st.cumlog[s];
                const auto& path = paths[s];
                for (int n = done; n < stage_end; ++n) {
                    const Mat2& g = b.mats[path[n]];
                    double nx, ny;
                    g.apply(x, y, nx, ny);
                    const double norm = std::sqrt(nx * nx + ny * ny);
                    cl += std::log(norm);
                    x = nx / norm;
                    y = ny / norm;
                    const double v = cl / (n + 1);
                    sum[d][n] += v;
                    sumsq[d][n] += v * v;
                }
                st.x[s] = x;
                st.y[s] = y;
                st.cumlog[s] = cl;
            }
        });
        // scan the new scales in order for the first qualifying n
        for (int n = done; n < stage_end; ++n) {
            double min_mean = std::numeric_limits<double>::infinity();
            double min_se = 0.0;
            for (std::size_t d = 0; d < ndirs; ++d) {
                const double mean = sum[d][n] / opt.samples;
                if (mean < min_mean) {
                    min_mean = mean;
                    const double var =
                        std::max(sumsq[d][n] / opt.samples - mean * mean, 0.0) * opt.samples / std::max<long>(opt.samples - 1, 1);
                    min_se = std::sqrt(var / opt.samples);
                }
            }
            res.min_mean = min_mean;
            res.min_std_err = min_se;
            if (min_mean - 3.0 * min_se > threshold) {
                res.status = NResult::Status::found;
                res.n = n + 1;
                return res;
            }
        }
        done = stage_end;
        stage_end *= 2;
    }
    res.n = opt.n_max;
    res.status = (std::abs(res.min_mean - threshold) <= 3.0 * res.min_std_err)
                     ? NResult::Status::inconclusive
                     : NResult::Status::infinity;
    return res;
}

/// Replace g by the closest explicit SL2 matrix fixing both given lines:
/// m has columns g p+/||g p+|| and g p-/||g p-||, m' has columns p+, p-
/// (unit, non-obtuse pair), and the result is the SL2 normalization of
/// m' m^{-1} g.
inline Mat2 proximity_project(const Mat2& g, const ProjPoint& p_plus, const ProjPoint& p_minus) {
    if (proj_distance(p_plus, p_minus) < 1e-6) throw ConesCollapsed("proximity_project: lines nearly equal");
    double ux, uy, vx, vy;
    p_plus.unit(ux, uy);
    p_minus.unit(vx, vy);
    if (ux * vx + uy * vy < 0) {
        vx = -vx;
        vy = -vy;
    }
    double gux, guy, gvx, gvy;
    g.apply(ux, uy, gux, guy);
    g.apply(vx, vy, gvx, gvy);
    const double nu = std::sqrt(gux * gux + guy * guy);
    const double nv = std::sqrt(gvx * gvx + gvy * gvy);
    const Mat2 m(gux / nu, gvx / nv, guy / nu, gvy / nv);
    const Mat2 m_prime(ux, vx, uy, vy);
    const Mat2 g_prime = m_prime * m.inverse() * g;
    return sl2_normalize(g_prime);
}

/// Certified diagonalizable witness: every member projected onto the frame of
/// the rho-maximizing hyperbolic member. The witness is explicitly
/// diagonalizable, so its distance to B upper-bounds d(B, Diag).
struct DiagWitness {
    Cocycle witness;
    double distance = 0.0;
    ProjPoint p_plus, p_minus;
    int anchor = -1;  // index into sigma_H
};

inline DiagWitness diag_witness(const Cocycle& b, const std::vector<int>& sigma_H_ref) {
    const RhoResult r = rho_measure(b, sigma_H_ref);
    DiagWitness w;
    w.anchor = r.argmax_index < 0 ? 0 : r.argmax_index;
    w.p_plus = r.e_plus[w.anchor];
    w.p_minus = r.e_minus[w.anchor];
    std::vector<Mat2> mats(b.mats.size());
    for (int j = 0; j < b.k(); ++j) {
        mats[j] = proximity_project(b.mats[j], w.p_plus, w.p_minus);
        w.distance = std::max(w.distance, op_norm(b.mats[j] - mats[j]));
    }
    w.witness = Cocycle(std::move(mats), b.probs);
    return w;
}

inline double diag_distance_upper(const Cocycle& b, const std::vector<int>& sigma_H_ref) {
    return diag_witness(b, sigma_H_ref).distance;
}

/// All constants of the cone/escape construction, evaluated literally from a
/// base diagonalizable cocycle. Rates are per step.
struct ConstantLedger {
    double L_A = 0.0;
    double delta_cone = 0.0;
    double L_bound = 0.0;
    double C_prox = 0.0;
    double r = 0.0;
    double M0 = 0.0;
    std::vector<double> lambda_tilde;
    std::vector<double> lambda_star;
    double s = 0.0;
    double c_hat = 0.0;
    long l0 = 0;
    double kappa = 0.0;
    double M = 0.0;
    long n0 = 0;
    double b0 = 0.0;
    long q = 0;
    long n1 = -1;  // -1 when rho_B is unavailable (ZeroRho)
    long n2 = -1;
    double c0 = 0.0;

    double n_B(double rho_B) const { return c0 * std::log(1.0 / rho_B); }
};

/// Largest delta (scanned downward) for which the member log-growth varies by
/// less than L(A)/20 over both cones of aperture 2*delta around the axes.
inline double cone_radius(const Cocycle& a, const ProjPoint& e_plus, const ProjPoint& e_minus, double L_A) {
    const int grid = 8192;
    auto spread_ok = [&](double delta) {
        for (int sign = 0; sign < 2; ++sign) {
            const ProjPoint& centre = sign == 0 ? e_plus : e_minus;
            const ProjPoint& other = sign == 0 ? e_minus : e_plus;
            for (int i = 0; i < a.k(); ++i) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (int m = 0; m < grid; ++m) {
                    const ProjPoint p(kPi * m / grid);
                    if (proj_distance(p, centre) >= 2 * delta * proj_distance(p, other)) continue;
                    double x, y, ox, oy;
                    p.unit(x, y);
                    a.mats[i].apply(x, y, ox, oy);
                    const double v = 0.5 * std::log(ox * ox + oy * oy);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (hi - lo >= L_A / 20.0) return false;
            }
        }
        return true;
    };
    double delta = 0.3;
    for (int it = 0; it < 40; ++it) {
        if (spread_ok(delta)) return delta;
        delta *= 0.5;
    }
    throw ConfigInvalid("cone_radius: no feasible cone aperture found");
}

inline ConstantLedger constant_ledger(const Cocycle& a, const DiagForm& diag, double rho_B) {
    ConstantLedger led;
    led.L_A = closed_form_diag_le(diag.thetas, a.probs);
    if (led.L_A <= 1e-12) throw ZeroLyapunov("constant_ledger: L(A) = 0");
    led.L_bound = a.norm_bound();
    const double L = led.L_bound;

    const ProjPoint e_plus = ProjPoint::from_vector(diag.conj.a, diag.conj.c);
    const ProjPoint e_minus = ProjPoint::from_vector(diag.conj.b, diag.conj.d);
    led.delta_cone = cone_radius(a, e_plus, e_minus, led.L_A);

    // transversality constant c and the proximity-construction constant
    const double c = 0.5 * proj_distance(e_plus, e_minus);
    led.C_prox = (10.0 / 9.0) * 4.0 * std::sqrt(2.0) * std::pow(L, 3) / c *
                 (std::pow(L, 3.5) + std::sqrt(L));

    led.r = led.L_A / (42.0 * led.L_A + 60.0 * std::log(L));

    const double contr = std::exp(-(5.0 / 3.0) * led.L_A);
    led.M0 = led.C_prox * contr / (1.0 - contr) + led.C_prox / (1.0 - contr) + 1.0;

    led.lambda_tilde.resize(a.k());
    led.lambda_star.resize(a.k());
    for (int j = 0; j < a.k(); ++j) {
        const double la = std::log(std::abs(diag.thetas[j]));
        led.lambda_tilde[j] = std::exp(2.0 * la - led.L_A / 3.0);
        led.lambda_star[j] = std::exp(2.0 * la - led.L_A / 2.0);
    }

    double s = 2.0;
    for (int j = 0; j < a.k(); ++j) {
        s = std::max(s, 3.0 / (led.lambda_tilde[j] - led.lambda_star[j]));
        s = std::max(s, (1.0 + 1.0 / led.lambda_star[j]) /
                            (1.0 / led.lambda_star[j] - 1.0 / led.lambda_tilde[j]));
    }
    led.s = s * (1.0 + 1e-9);

    const double k_h = 2.0 * std::log(L) + led.L_A / 2.0;
    led.c_hat = (1.0 / 18.0) * std::pow(led.L_A / k_h, 2);

    // smallest integer with e^{-c_hat l0} / (1 - e^{-c_hat}) < r/8
    led.l0 = static_cast<long>(
        std::floor(-std::log(led.r / 8.0 * (1.0 - std::exp(-led.c_hat))) / led.c_hat)) + 1;
    while (std::exp(-led.c_hat * led.l0) / (1.0 - std::exp(-led.c_hat)) >= led.r / 8.0) ++led.l0;

    double worst = -std::numeric_limits<double>::infinity();
    for (double lam : led.lambda_star) worst = std::max(worst, -std::log(lam));
    led.kappa = led.l0 * worst;
    led.M = std::exp(led.kappa) * led.s * led.M0;

    const double m_prime = led.M + led.C_prox / (1.0 - contr);
    led.n0 = static_cast<long>(std::ceil((3.0 / 5.0) * std::log(m_prime * (L * L + 1.0)) / led.L_A));

    // pessimistic escape probability: rarest hyperbolic symbol held n0 times,
    // then the rarest symbol once
    double p_min_h = 1.0, p_min = 1.0;
    const auto sig = hyperbolic_symbols(a, diag);
    for (int i : sig) p_min_h = std::min(p_min_h, a.probs[i]);
    for (double p : a.probs) p_min = std::min(p_min, p);
    led.b0 = std::pow(p_min_h, static_cast<double>(led.n0)) * p_min;

    led.q = static_cast<long>(std::ceil(std::log(4.0 / led.r) / led.b0));
    led.c0 = static_cast<double>(led.q) + 3.0 / led.L_A;

    if (rho_B > 0.0) {
        led.n1 = static_cast<long>(std::ceil(2.0 / led.L_A * std::log(1.0 / rho_B)));
        led.n2 = static_cast<long>(std::ceil(1.0 / led.L_A * std::log(1.0 / rho_B)));
    }
    return led;
}

inline void to_json(nlohmann::json& j, const ConstantLedger& l) {
    j = nlohmann::json{{"L_A", l.L_A},
                       {"delta_cone", l.delta_cone},
                       {"L_bound", l.L_bound},
                       {"C_prox", l.C_prox},
                       {"r", l.r},
                       {"M0", l.M0},
                       {"lambda_tilde", l.lambda_tilde},
                       {"lambda_star", l.lambda_star},
                       {"s", l.s},
                       {"c_hat", l.c_hat},
                       {"l0", l.l0},
                       {"kappa", l.kappa},
                       {"M", l.M},
                       {"n0", l.n0},
                       {"b0", l.b0},
                       {"q", l.q},
                       {"n1", l.n1},
                       {"n2", l.n2},
                       {"c0", l.c0}};
}

/// Full irreducibility report for one cocycle.
struct IrredReport {
    double rho_minus = 0.0, rho_plus = 0.0, rho = 0.0;
    NResult N_B, N_Binv;
    std::vector<int> sigma_H;
    std::vector<double> e_plus_i;   // angles, per sigma_H entry
    std::vector<double> e_minus_i;
    double diag_dist_upper = 0.0;
};

inline nlohmann::json n_result_json(const NResult& n) {
    switch (n.status) {
        case NResult::Status::found: return n.n;
        case NResult::Status::infinity: return "infinity";
        default: return "inconclusive";
    }
}

inline void to_json(nlohmann::json& j, const IrredReport& r) {
    j = nlohmann::json{{"rho_minus", r.rho_minus},
                       {"rho_plus", r.rho_plus},
                       {"rho", r.rho},
                       {"N_B", n_result_json(r.N_B)},
                       {"N_Binv", n_result_json(r.N_Binv)},
                       {"sigma_H", r.sigma_H},
                       {"e_plus_i", r.e_plus_i},
                       {"e_minus_i", r.e_minus_i},
                       {"diag_dist_upper", r.diag_dist_upper}};
}

} // namespace rmlab
