#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/irreducibility.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Affine charts of the projective line: psi_-(x:y) = x/y, psi_+(x:y) = y/x.
/// The pole is encoded as infinity.
inline double chart_psi(const ProjPoint& p, int sign) {
    double x, y;
    p.unit(x, y);
    const double num = sign > 0 ? y : x;
    const double den = sign > 0 ? x : y;
    if (std::abs(den) < 1e-15) return std::numeric_limits<double>::infinity();
    return num / den;
}

/// Nested cones around the axes of a diagonalizable witness:
///   Sigma0 = D_-(M rho), Sigma1 = D_-(1/delta), Sigma2 = D_-(1/(M rho)),
/// where D_-(a) = { p : d(p, e_-) < a d(p, e_+) }.
struct ConeFamily {
    ProjPoint e_plus, e_minus;
    double delta = 0.0;
    double M_rho = 0.0;

    double r0() const { return M_rho; }
    double r1() const { return 1.0 / delta; }
    double r2() const { return 1.0 / M_rho; }

    ConeFamily() = default;
    ConeFamily(ProjPoint ep, ProjPoint em, double delta_, double m_rho)
        : e_plus(ep), e_minus(em), delta(delta_), M_rho(m_rho) {
        if (!(M_rho > 0.0) || !(M_rho < delta))
            throw LedgerInfeasible("ConeFamily: need 0 < M rho < delta for nesting");
    }

    bool in_dminus(const ProjPoint& p, double radius) const {
        return proj_distance(p, e_minus) < radius * proj_distance(p, e_plus);
    }
    bool in_sigma0(const ProjPoint& p) const { return in_dminus(p, r0()); }
    bool in_sigma1(const ProjPoint& p) const { return in_dminus(p, r1()); }
    bool in_sigma2(const ProjPoint& p) const { return in_dminus(p, r2()); }

    /// psi_- in the frame of the witness axes: the coefficient along e_+
    /// over the coefficient along e_-. Matches x/y when the axes are the
    /// standard basis.
    double frame_psi_minus(const ProjPoint& p) const {
        double ux, uy, vx, vy, x, y;
        e_plus.unit(ux, uy);
        e_minus.unit(vx, vy);
        p.unit(x, y);
        const Mat2 frame(ux, vx, uy, vy);
        double cp, cm;
        frame.inverse().apply(x, y, cp, cm);
        if (std::abs(cm) < 1e-300) return std::numeric_limits<double>::infinity();
        return cp / cm;
    }

    /// Point with the given frame psi_- coordinate (c_+ = t, c_- = 1).
    ProjPoint from_frame_psi_minus(double t) const {
        double ux, uy, vx, vy;
        e_plus.unit(ux, uy);
        e_minus.unit(vx, vy);
        return ProjPoint::from_vector(t * ux + vx, t * uy + vy);
    }
    /// Point with the given frame psi_+ coordinate (c_+ = 1, c_- = t).
    ProjPoint from_frame_psi_plus(double t) const {
        double ux, uy, vx, vy;
        e_plus.unit(ux, uy);
        e_minus.unit(vx, vy);
        return ProjPoint::from_vector(ux + t * vx, uy + t * vy);
    }
};

/// One projective random-walk step: draw a symbol, apply its action.
inline std::pair<int, ProjPoint> walk_step(const Cocycle& b, const ProjPoint& p, Rng& rng) {
    const int j = rng.pick_cumulative(b.cumulative());
    return {j, proj_apply(b.mats[j], p)};
}

/// Escape/stay estimates for a set of start points at a common horizon.
struct EscapeStats {
    int horizon = 0;
    struct Row {
        ProjPoint start;
        double escape = 0.0;   // P_n estimate
        double stay = 0.0;     // P*_n = 1 - P_n on the same samples
        double std_err = 0.0;
    };
    std::vector<Row> rows;
};

namespace detail {

/// Raw-vector projective walker: no trig per step, membership via cross
/// products with unit axis vectors.
struct VecWalk {
    double x, y;

    explicit VecWalk(const ProjPoint& p) { p.unit(x, y); }

    void step(const Mat2& g) {
        double nx, ny;
        g.apply(x, y, nx, ny);
        const double n = std::sqrt(nx * nx + ny * ny);
        x = nx / n;
        y = ny / n;
    }

    double dist(double ax, double ay) const { return std::abs(x * ay - y * ax); }
};

struct ConeAxes {
    double px, py, mx, my;
    explicit ConeAxes(const ConeFamily& c) {
        c.e_plus.unit(px, py);
        c.e_minus.unit(mx, my);
    }
    bool in_dminus(const VecWalk& w, double radius) const {
        return w.dist(mx, my) < radius * w.dist(px, py);
    }
};

} // namespace detail

/// Monte-Carlo escape probability from D_-(cone_radius) within n steps.
inline EscapeStats::Row escape_prob(const Cocycle& b, const ConeFamily& cones, double cone_radius,
                                    const ProjPoint& start, int n, long samples, std::uint64_t seed,
                                    int workers = 1) {
    const detail::ConeAxes axes(cones);
    const auto cum = b.cumulative();
    std::vector<std::uint8_t> escaped(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        detail::VecWalk w(start);
        bool esc = !axes.in_dminus(w, cone_radius);
        for (int j = 0; j < n && !esc; ++j) {
            w.step(b.mats[rng.pick_cumulative(cum)]);
            esc = !axes.in_dminus(w, cone_radius);
        }
        escaped[s] = esc ? 1 : 0;
    });
    double count = 0;
    for (auto e : escaped) count += e;
    EscapeStats::Row row;
    row.start = start;
    row.escape = count / static_cast<double>(samples);
    row.stay = 1.0 - row.escape;
    row.std_err = std::sqrt(std::max(row.escape * row.stay, 0.0) / static_cast<double>(samples));
    return row;
}

/// Exact stay/escape probabilities on a finite Markov chain by dynamic
/// programming: restrict the kernel to the subset and take powers.
struct ChainEscape {
    std::vector<double> stay;    // P*_n(x, E) per state
    std::vector<double> escape;  // 1 - stay
    double stay_sup = 0.0;       // sup over x in E
};

inline ChainEscape chain_escape_oracle(const std::vector<std::vector<double>>& transition,
                                       const std::vector<int>& subset, int n) {
    const int m = static_cast<int>(transition.size());
    std::vector<char> in_e(m, 0);
    for (int s : subset) in_e.at(s) = 1;
    for (int i = 0; i < m; ++i) {
        if (static_cast<int>(transition[i].size()) != m)
            throw NotStochastic("chain_escape_oracle: non-square transition matrix");
        double sum = 0.0;
        for (double p : transition[i]) {
            if (p < 0.0) throw NotStochastic("chain_escape_oracle: negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw NotStochastic("chain_escape_oracle: row does not sum to 1");
    }
    std::vector<double> u(m), next(m);
    for (int i = 0; i < m; ++i) u[i] = in_e[i] ? 1.0 : 0.0;
    for (int step = 0; step < n; ++step) {
        for (int i = 0; i < m; ++i) {
            if (!in_e[i]) {
                next[i] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += transition[i][j] * u[j];
            next[i] = acc;
        }
        std::swap(u, next);
    }
    ChainEscape out;
    out.stay = u;
    out.escape.resize(m);
    for (int i = 0; i < m; ++i) {
        out.escape[i] = 1.0 - u[i];
        if (in_e[i]) out.stay_sup = std::max(out.stay_sup, u[i]);
    }
    return out;
}

/// Monte-Carlo escape estimate on a finite chain (same estimator logic as the
/// projective walk, for cross-validation against the DP oracle).
inline EscapeStats::Row mc_chain_escape(const std::vector<std::vector<double>>& transition,
                                        const std::vector<int>& subset, int start, int n, long samples,
                                        std::uint64_t seed, int workers = 1) {
    const int m = static_cast<int>(transition.size());
    std::vector<char> in_e(m, 0);
    for (int s : subset) in_e.at(s) = 1;
    std::vector<std::vector<double>> cum(m, std::vector<double>(m));
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) {
            acc += transition[i][j];
            cum[i][j] = acc;
        }
        cum[i][m - 1] = 1.0;
    }
    std::vector<std::uint8_t> escaped(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        int state = start;
        bool esc = !in_e[state];
        for (int j = 0; j < n && !esc; ++j) {
            state = rng.pick_cumulative(cum[state]);
            esc = !in_e[state];
        }
        escaped[s] = esc ? 1 : 0;
    });
    double count = 0;
    for (auto e : escaped) count += e;
    EscapeStats::Row row;
    row.escape = count / static_cast<double>(samples);
    row.stay = 1.0 - row.escape;
    row.std_err = std::sqrt(std::max(row.escape * row.stay, 0.0) / static_cast<double>(samples));
    return row;
}

struct PrisonBreakOptions {
    long samples = 1000;        // walks per start for A1-A3 and the final bound
    long a4_walks = 10000;      // total walks for the permanence check
    int grid_per_band = 32;     // log-spaced starts per cone band
    int workers = 1;
    double c0_cap = 100.0;      // fitted c0 search cap
    long a4_horizon_cap = 20000;
    long final_horizon_cap = 40000;
};

struct PrisonBreakReport {
    double rho_B = 0.0;
    ConstantLedger ledger;
    double M_effective = 0.0;
    bool ledger_cones_feasible = false;

    // named neighborhood conditions, true when they hold for this (A, B)
    std::vector<std::pair<std::string, bool>> n_conditions;

    struct Assumption {
        std::string name;
        int horizon = 0;
        double threshold = 0.0;   // required probability
        double worst = 0.0;       // worst estimate across starts
        double worst_std_err = 0.0;
        bool pass = false;
    };
    Assumption a1, a2, a3, a4;
    double a4_strict_threshold = 0.0;
    bool a4_strict_pass = false;
    long a4_horizon_truncated_from = 0;

    double fitted_c0 = std::numeric_limits<double>::infinity();
    long fitted_horizon = 0;
    double final_bound_estimate = 1.0;  // max over starts of P[exists j >= m*: in Sigma1]
    long final_horizon = 0;
    double r_threshold = 0.0;
    bool phenomenon_pass = false;  // final bound < r at fitted c0 <= cap

    // same bound evaluated at the ledger's own horizon c0 log(1/rho),
    // truncated to the simulated window when that lies beyond it
    double ledger_bound_estimate = 1.0;
    bool ledger_horizon_truncated = false;
};

inline void to_json(nlohmann::json& j, const PrisonBreakReport::Assumption& a) {
    j = nlohmann::json{{"name", a.name},     {"horizon", a.horizon},
                       {"threshold", a.threshold}, {"worst", a.worst},
                       {"worst_std_err", a.worst_std_err}, {"pass", a.pass}};
}

inline void to_json(nlohmann::json& j, const PrisonBreakReport& r) {
    nlohmann::json conds = nlohmann::json::object();
    for (const auto& [name, ok] : r.n_conditions) conds[name] = ok;
    j = nlohmann::json{{"rho_B", r.rho_B},
                       {"ledger", r.ledger},
                       {"M_effective", r.M_effective},
                       {"ledger_cones_feasible", r.ledger_cones_feasible},
                       {"n_conditions", conds},
                       {"A1", r.a1},
                       {"A2", r.a2},
                       {"A3", r.a3},
                       {"A4", r.a4},
                       {"a4_strict_pass", r.a4_strict_pass},
                       {"a4_horizon_truncated_from", r.a4_horizon_truncated_from},
                       {"fitted_c0", r.fitted_c0},
                       {"final_bound_estimate", r.final_bound_estimate},
                       {"final_horizon", r.final_horizon},
                       {"ledger_bound_estimate", r.ledger_bound_estimate},
                       {"ledger_horizon_truncated", r.ledger_horizon_truncated},
                       {"r", r.r_threshold},
                       {"phenomenon_pass", r.phenomenon_pass}};
}

namespace detail {

inline bool cone_inclusion_holds(const ProjPoint& inner_p, const ProjPoint& inner_m, double inner_r,
                                 const ProjPoint& outer_p, const ProjPoint& outer_m, double outer_r) {
    // sampled check D(inner) subset of D(outer) on an angle grid
    for (int m = 0; m < 4096; ++m) {
        const ProjPoint p(kPi * m / 4096);
        const bool in_inner = proj_distance(p, inner_m) < inner_r * proj_distance(p, inner_p);
        if (!in_inner) continue;
        if (!(proj_distance(p, outer_m) < outer_r * proj_distance(p, outer_p))) return false;
    }
    return true;
}

inline bool map_preserves_cone(const Mat2& g, const ProjPoint& ax_p, const ProjPoint& ax_m, double radius,
                               bool around_minus) {
    for (int m = 0; m < 4096; ++m) {
        const ProjPoint p(kPi * m / 4096);
        const ProjPoint c = around_minus ? ax_m : ax_p;
        const ProjPoint o = around_minus ? ax_p : ax_m;
        if (!(proj_distance(p, c) < radius * proj_distance(p, o))) continue;
        const ProjPoint q = proj_apply(g, p);
        if (!(proj_distance(q, c) < radius * proj_distance(q, o))) return false;
    }
    return true;
}

} // namespace detail

/// Cone-hierarchy escape experiment around a diagonalizable base cocycle.
/// The witness cones come from the certified projection of B onto the frame
/// of its rho-maximizing hyperbolic member. When the ledger's literal M
/// yields non-nested cones, a feasible M is substituted and reported.
inline PrisonBreakReport prison_break_experiment(const Cocycle& a_diag, const Cocycle& b,
                                                 const ConstantLedger& ledger,
                                                 const PrisonBreakOptions& opt, std::uint64_t seed) {
    PrisonBreakReport rep;
    rep.ledger = ledger;
    rep.r_threshold = ledger.r;

    const auto a_form = simultaneous_diagonalize(a_diag, 1e-9);
    if (!a_form.accepted) throw ConfigInvalid("prison_break_experiment: base cocycle not diagonalizable");
    const auto sigma_h = hyperbolic_symbols(a_diag, a_form);
    const auto rho = rho_measure(b, sigma_h);
    rep.rho_B = rho.rho_minus;
    if (!(rep.rho_B > 0.0)) throw ZeroRho("prison_break_experiment: rho_-(B) = 0");

    // diagonal witness and cone family
    const auto wit = diag_witness(b, sigma_h);
    const double delta = ledger.delta_cone;
    const double m_cap = delta / (2.0 * rep.rho_B);  // nesting M rho < delta with margin
    if (m_cap < 2.0)
        throw LedgerInfeasible("prison_break_experiment: rho_B too large for nested cones at this delta");
    rep.ledger_cones_feasible = ledger.M >= 2.0 && ledger.M <= m_cap;
    rep.M_effective = std::clamp(ledger.M, 2.0, m_cap);
    const ConeFamily cones(wit.p_plus, wit.p_minus, delta, rep.M_effective * rep.rho_B);

    // --- neighborhood conditions (reported, not enforced) ---
    {
        const double d_ab = cocycle_distance(a_diag, b);
        const double L = ledger.L_bound, LA = ledger.L_A;
        auto push = [&](const char* name, bool ok) { rep.n_conditions.emplace_back(name, ok); };
        push("N0a", d_ab < delta / L * std::exp(-LA / 4) * (std::exp(LA / 12) - 1));
        push("N0b", d_ab < (std::sqrt(std::exp(LA / 12) - 1) / L) / (1 + std::sqrt(std::exp(LA / 12) - 1)));
        push("N0c", d_ab < delta / L * std::exp(-LA / 8) * (1 - std::exp(-LA / 24)));
        bool n1 = true;
        for (int i : sigma_h) n1 = n1 && detail::real_eigen(b.mats[i]).has_value();
        push("N1", n1);
        const auto leb = mc_le(b, 256, 400, seed ^ 0xB0B0ULL, opt.workers);
        push("N2", (4.0 / 3.0) * LA > leb.mean);
        push("N3", b.norm_bound() < L);
        const ProjPoint ea_p = ProjPoint::from_vector(a_form.conj.a, a_form.conj.c);
        const ProjPoint ea_m = ProjPoint::from_vector(a_form.conj.b, a_form.conj.d);
        const double c_transversal = 0.5 * proj_distance(ea_p, ea_m);
        bool n4 = true;
        for (std::size_t s = 0; s < rho.sigma_H.size(); ++s)
            n4 = n4 && proj_distance(rho.e_plus[s], rho.e_minus[s]) > c_transversal;
        push("N4", n4);
        push("N6", ledger.M * std::sqrt(rep.rho_B) < delta);
        const double d_binv_dinv = cocycle_distance(inverse_cocycle(b), inverse_cocycle(wit.witness));
        const auto d_le = invariant_line_le(wit.witness, wit.p_plus, 1e-8);
        push("N7", d_binv_dinv <= ledger.C_prox * rep.rho_B && d_le && std::abs(*d_le) > 0.9 * LA);
        bool n8 = true;
        for (int i : sigma_h) {
            double x, y, ox, oy;
            wit.p_plus.unit(x, y);
            wit.witness.mats[i].apply(x, y, ox, oy);
            n8 = n8 && std::abs(ox * x + oy * y) >= std::exp(LA / 2);
        }
        push("N8", n8);
        push("N9", detail::cone_inclusion_holds(wit.p_plus, wit.p_minus, delta, ea_p, ea_m, 2 * delta) &&
                       detail::cone_inclusion_holds(wit.p_minus, wit.p_plus, delta, ea_m, ea_p, 2 * delta));
        bool n10 = true;
        for (int i : sigma_h) {
            n10 = n10 && detail::map_preserves_cone(b.mats[i], wit.p_plus, wit.p_minus, delta, false);
            n10 = n10 && detail::map_preserves_cone(b.mats[i].inverse(), wit.p_plus, wit.p_minus, delta, true);
        }
        push("N10", n10);
        push("N11", std::log(1.0 / rep.rho_B) > std::max(2.0 * ledger.kappa, ledger.l0 * LA));
    }

    // --- start grids, log-spaced in the frame coordinate per band ---
    auto band_starts = [&](double lo, double hi) {
        std::vector<ProjPoint> pts;
        for (int i = 0; i < opt.grid_per_band; ++i) {
            const double t = lo * std::pow(hi / lo, (i + 0.5) / opt.grid_per_band);
            pts.push_back(cones.from_frame_psi_minus(t));
        }
        return pts;
    };
    const double r0 = cones.r0(), r1 = cones.r1(), r2 = cones.r2();

    auto run_band = [&](const char* name, const std::vector<ProjPoint>& starts, double radius, int horizon,
                        double threshold, std::uint64_t salt) {
        PrisonBreakReport::Assumption as;
        as.name = name;
        as.horizon = horizon;
        as.threshold = threshold;
        as.worst = 1.0;
        for (std::size_t i = 0; i < starts.size(); ++i) {
            const auto row =
                escape_prob(b, cones, radius, starts[i], horizon, opt.samples, seed + salt * 131 + i, opt.workers);
            if (row.escape < as.worst) {
                as.worst = row.escape;
                as.worst_std_err = row.std_err;
            }
        }
        as.pass = as.worst >= threshold - 3 * as.worst_std_err;
        return as;
    };

    // A1: escape the cell within n0 with probability at least b0
    {
        auto starts = band_starts(r0 * 1e-3, r0 * 0.98);
        starts.push_back(wit.p_minus);  // the trap axis itself
        rep.a1 = run_band("A1", starts, r0, static_cast<int>(ledger.n0), ledger.b0, 1);
    }
    // A2: escape the prison within n1 with probability at least 1 - r/4
    {
        const auto starts = band_starts(r0 * 1.02, r1 * 0.98);
        rep.a2 = run_band("A2", starts, r1, static_cast<int>(std::max<long>(ledger.n1, 1)), 1 - ledger.r / 4, 2);
    }
    // A3: escape the state within n2 with probability at least 1 - r/4
    {
        const auto starts = band_starts(r1 * 1.02, r2 * 0.98);
        rep.a3 = run_band("A3", starts, r2, static_cast<int>(std::max<long>(ledger.n2, 1)), 1 - ledger.r / 4, 3);
    }

    // A4: from outside Sigma2, never hit Sigma1 (horizon-truncated)
    {
        const double n_b_lit = ledger.n_B(rep.rho_B);
        const long wanted = static_cast<long>(std::min(10.0 * n_b_lit, 1e18));
        const long horizon = std::min(wanted, opt.a4_horizon_cap);
        rep.a4_horizon_truncated_from = wanted > horizon ? wanted : 0;
        std::vector<ProjPoint> starts;
        for (int i = 0; i < opt.grid_per_band; ++i) {
            const double t = r0 * 1e-3 * std::pow(0.98 / 1e-3, (i + 0.5) / opt.grid_per_band);
            starts.push_back(cones.from_frame_psi_plus(t));
        }
        const long per_start = std::max<long>(opt.a4_walks / starts.size(), 16);
        const detail::ConeAxes axes(cones);
        const auto cum = b.cumulative();
        PrisonBreakReport::Assumption as;
        as.name = "A4";
        as.horizon = static_cast<int>(horizon);
        as.threshold = 1 - ledger.r / 2;
        as.worst = 1.0;
        for (std::size_t i = 0; i < starts.size(); ++i) {
            std::vector<std::uint8_t> stayed(per_start);
            parallel_for(static_cast<std::size_t>(per_start), opt.workers, [&](std::size_t s) {
                Rng rng = Rng::derive(seed + 7919 * i, s);
                detail::VecWalk w(starts[i]);
                bool outside = true;
                for (long j = 0; j < horizon && outside; ++j) {
                    w.step(b.mats[rng.pick_cumulative(cum)]);
                    outside = !axes.in_dminus(w, r1);
                }
                stayed[s] = outside ? 1 : 0;
            });
            double count = 0;
            for (auto v : stayed) count += v;
            const double freq = count / static_cast<double>(per_start);
            if (freq < as.worst) {
                as.worst = freq;
                as.worst_std_err = std::sqrt(std::max(freq * (1 - freq), 0.0) / per_start);
            }
        }
        as.pass = as.worst >= as.threshold - 3 * as.worst_std_err;
        rep.a4 = as;
        rep.a4_strict_threshold = 1 - ledger.r / 4;
        rep.a4_strict_pass = as.worst >= rep.a4_strict_threshold - 3 * as.worst_std_err;
    }

    // Final bound: last visit to Sigma1, survival across all grid starts.
    {
        const double log_inv_rho = std::log(1.0 / rep.rho_B);
        const long horizon =
            std::min<long>(static_cast<long>(std::ceil(opt.c0_cap * log_inv_rho)) +
                               10 * std::max<long>(ledger.n2, 1) + 100,
                           opt.final_horizon_cap);
        rep.final_horizon = horizon;

        std::vector<ProjPoint> starts = band_starts(r0 * 1e-3, r0 * 0.98);
        {
            const auto mid = band_starts(r0 * 1.02, r1 * 0.98);
            starts.insert(starts.end(), mid.begin(), mid.end());
            const auto outer = band_starts(r1 * 1.02, r2 * 0.98);
            starts.insert(starts.end(), outer.begin(), outer.end());
            starts.push_back(wit.p_minus);
        }
        const detail::ConeAxes axes(cones);
        const auto cum = b.cumulative();

        // survival[m] (per start) = fraction of walks whose last visit to
        // Sigma1 happens at step >= m
        std::vector<std::vector<long>> last_visit(starts.size(), std::vector<long>(opt.samples));
        for (std::size_t i = 0; i < starts.size(); ++i) {
            auto& lv = last_visit[i];
            parallel_for(static_cast<std::size_t>(opt.samples), opt.workers, [&](std::size_t s) {
                Rng rng = Rng::derive(seed + 104729 * (i + 1), s);
                detail::VecWalk w(starts[i]);
                long last = axes.in_dminus(w, r1) ? 0 : -1;
                for (long j = 1; j <= horizon; ++j) {
                    w.step(b.mats[rng.pick_cumulative(cum)]);
                    if (axes.in_dminus(w, r1)) last = j;
                }
                lv[s] = last;
            });
        }
        // smallest m with sup over starts of P[last >= m] < r: per start this
        // is one past the K-th largest last-visit time, K = ceil(r * samples)
        const double r = ledger.r;
        const long K = static_cast<long>(std::ceil(r * opt.samples));
        long m_star = 0;
        for (auto& lv : last_visit) {
            std::sort(lv.begin(), lv.end(), std::greater<long>());
            if (K >= 1 && K <= opt.samples) m_star = std::max(m_star, lv[K - 1] + 1);
        }
        auto worst_survival = [&](long m) {
            double worst = 0.0;
            for (const auto& lv : last_visit) {
                long cnt = 0;
                for (long v : lv) cnt += (v >= m);
                worst = std::max(worst, static_cast<double>(cnt) / opt.samples);
            }
            return worst;
        };
        if (m_star <= horizon) {
            rep.final_bound_estimate = worst_survival(m_star);
            rep.fitted_horizon = m_star;
            rep.fitted_c0 = static_cast<double>(m_star) / log_inv_rho;
            rep.phenomenon_pass = rep.fitted_c0 <= opt.c0_cap && rep.final_bound_estimate < r;
        }
        const long ledger_m = static_cast<long>(std::ceil(ledger.n_B(rep.rho_B)));
        rep.ledger_horizon_truncated = ledger_m > horizon;
        rep.ledger_bound_estimate = worst_survival(std::min(ledger_m, horizon));
    }
    return rep;
}

} // namespace rmlab
