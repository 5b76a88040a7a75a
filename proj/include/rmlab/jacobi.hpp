#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/lyapunov.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Finite-support distributions for the diagonal and off-diagonal entries of
/// a random tridiagonal operator. Weights must stay away from zero.
struct JacobiEnsemble {
    std::vector<double> v_support, v_probs;
    std::vector<double> w_support, w_probs;

    JacobiEnsemble() = default;
    JacobiEnsemble(std::vector<double> vs, std::vector<double> vp, std::vector<double> ws,
                   std::vector<double> wp)
        : v_support(std::move(vs)), v_probs(std::move(vp)), w_support(std::move(ws)), w_probs(std::move(wp)) {
        validate();
    }

    static JacobiEnsemble free_case() { return JacobiEnsemble({0.0}, {1.0}, {1.0}, {1.0}); }

    void validate() const {
        auto check = [](const std::vector<double>& sup, const std::vector<double>& pr, const char* what) {
            if (sup.empty() || sup.size() != pr.size()) throw ConfigInvalid(std::string(what) + ": bad support");
            double s = 0.0;
            for (double p : pr) {
                if (!(p > 0.0)) throw ConfigInvalid(std::string(what) + ": probabilities must be positive");
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-12) throw ConfigInvalid(std::string(what) + ": probabilities must sum to 1");
        };
        check(v_support, v_probs, "JacobiEnsemble.v");
        check(w_support, w_probs, "JacobiEnsemble.w");
        for (double w : w_support)
            if (w == 0.0) throw ZeroWeight("JacobiEnsemble: zero off-diagonal weight");
    }

    double mean_log_abs_w() const {
        double s = 0.0;
        for (std::size_t i = 0; i < w_support.size(); ++i) s += w_probs[i] * std::log(std::abs(w_support[i]));
        return s;
    }
};

inline void to_json(nlohmann::json& j, const JacobiEnsemble& e) {
    j = nlohmann::json{{"v_support", e.v_support},
                       {"v_probs", e.v_probs},
                       {"w_support", e.w_support},
                       {"w_probs", e.w_probs}};
}

inline void from_json(const nlohmann::json& j, JacobiEnsemble& e) {
    e.v_support = j.at("v_support").get<std::vector<double>>();
    e.v_probs = j.at("v_probs").get<std::vector<double>>();
    e.w_support = j.at("w_support").get<std::vector<double>>();
    e.w_probs = j.at("w_probs").get<std::vector<double>>();
    e.validate();
}

/// One-step transfer matrix of the eigenvalue equation at energy E.
inline Mat2 transfer_matrix(double v, double w_n, double w_np1, double E) {
    if (w_np1 == 0.0) throw ZeroWeight("transfer_matrix: zero weight");
    return Mat2((v - E) / w_np1, -w_n / w_np1, 1.0, 0.0);
}

/// Unimodular conjugate of the one-step transfer matrix.
inline Mat2 sl2_conjugated_transfer(double v, double w, double E) {
    if (w == 0.0) throw ZeroWeight("sl2_conjugated_transfer: zero weight");
    return Mat2((v - E) / w, -w, 1.0 / w, 0.0);
}

/// Two-step transfer matrix of the alternating-weight operator; diagonal at
/// E = 0.
inline Mat2 toy_two_step(double omega, double E) {
    if (omega == 0.0) throw ZeroWeight("toy_two_step: zero weight");
    return Mat2((E * E - 1.0) / omega, -E * omega, E / omega, -omega);
}

inline Cocycle toy_process(double E, const std::vector<double>& omegas, const std::vector<double>& probs) {
    std::vector<Mat2> mats;
    for (double w : omegas) mats.push_back(toy_two_step(w, E));
    return Cocycle(std::move(mats), probs);
}

/// Number of eigenvalues <= E of the symmetric tridiagonal matrix with
/// diagonal v and off-diagonal couplings -w (signs are irrelevant: the Sturm
/// recursion uses w^2). Exact up to floating tolerance.
inline int eig_count_leq(const std::vector<double>& v_seq, const std::vector<double>& w_seq, double E) {
    const std::size_t n = v_seq.size();
    if (n == 0) return 0;
    if (w_seq.size() + 1 != n) throw DimensionMismatch("eig_count_leq: need n-1 couplings for n sites");
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        d = (v_seq[i] - E) - (i > 0 ? w_seq[i - 1] * w_seq[i - 1] / d : 0.0);
        if (std::abs(d) < 1e-300) d = -1e-300;  // pivot at E counts as <=
        if (d < 0.0) ++count;
    }
    return count;
}

/// Normalized eigenvalue-counting curve of finite truncations.
struct IdsCurve {
    std::vector<double> energies;
    std::vector<double> N_values;
    std::vector<double> std_err;
    int n_truncation = 0;
    long samples = 0;

    double value_at(double E) const {
        // piecewise-linear interpolation on the grid
        if (E <= energies.front()) return N_values.front();
        if (E >= energies.back()) return N_values.back();
        const auto it = std::upper_bound(energies.begin(), energies.end(), E);
        const std::size_t i = static_cast<std::size_t>(it - energies.begin());
        const double t = (E - energies[i - 1]) / (energies[i] - energies[i - 1]);
        return N_values[i - 1] + t * (N_values[i] - N_values[i - 1]);
    }
};

namespace detail {

inline std::vector<double> draw_from(const std::vector<double>& support, const std::vector<double>& probs,
                                     int n, Rng& rng) {
    std::vector<double> cum(probs.size());
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        s += probs[i];
        cum[i] = s;
    }
    cum.back() = 1.0;
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = support[rng.pick_cumulative(cum)];
    return out;
}

} // namespace detail

inline IdsCurve ids_curve(const JacobiEnsemble& ens, const std::vector<double>& energies, int n,
                          long samples, std::uint64_t seed, int workers = 1) {
    if (n < 16) throw ConfigInvalid("ids_curve: need n >= 16");
    IdsCurve curve;
    curve.energies = energies;
    curve.n_truncation = n;
    curve.samples = samples;
    const std::size_t ne = energies.size();
    std::vector<std::vector<double>> per_sample(samples, std::vector<double>(ne));
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const auto v = detail::draw_from(ens.v_support, ens.v_probs, n, rng);
        const auto w = detail::draw_from(ens.w_support, ens.w_probs, n - 1, rng);
        for (std::size_t e = 0; e < ne; ++e)
            per_sample[s][e] = static_cast<double>(eig_count_leq(v, w, energies[e])) / n;
    });
    curve.N_values.assign(ne, 0.0);
    curve.std_err.assign(ne, 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
        double sum = 0.0, sumsq = 0.0;
        for (long s = 0; s < samples; ++s) {
            sum += per_sample[s][e];
            sumsq += per_sample[s][e] * per_sample[s][e];
        }
        const double mean = sum / samples;
        curve.N_values[e] = mean;
        if (samples > 1)
            curve.std_err[e] = std::sqrt(std::max(sumsq / samples - mean * mean, 0.0) / (samples - 1));
    }
    return curve;
}

/// Monte-Carlo exponent of the one-step transfer process at energy E.
inline LyapEstimate jacobi_le(const JacobiEnsemble& ens, double E, int n, long samples,
                              std::uint64_t seed, int workers = 1) {
    std::vector<double> vals(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const auto v = detail::draw_from(ens.v_support, ens.v_probs, n, rng);
        const auto w = detail::draw_from(ens.w_support, ens.w_probs, n + 1, rng);
        Mat2 p = Mat2::identity();
        double shift = 0.0;
        int since = 0;
        for (int i = 0; i < n; ++i) {
            p = transfer_matrix(v[i], w[i], w[i + 1], E) * p;
            if (++since == kRenormPeriod) {
                const double f = p.frobenius();
                p = p * (1.0 / f);
                shift += std::log(f);
                since = 0;
            }
        }
        vals[s] = (shift + std::log(op_norm(p))) / n;
    });
    const auto mv = detail::mean_and_std_err(vals);
    LyapEstimate est;
    est.scale_n = n;
    est.samples = samples;
    est.mean = mv.mean;
    est.std_err = mv.std_err;
    est.top = mv.mean;
    est.top_std_err = mv.std_err;
    return est;
}

/// Exponent-vs-counting consistency: the Stieltjes integral of log|E - E'|
/// against dN, with the singular window handled analytically and the mean log
/// weight subtracted, compared against the Monte-Carlo exponent.
struct ThoulessRow {
    double E = 0.0;
    double thouless = 0.0;
    double mc = 0.0;
    double mc_std_err = 0.0;
    double residual = 0.0;
};

/// Integral of log|E - E'| dN(E') over the curve's grid. The window of width
/// 2 * grid step around E is replaced by the analytic integral of log|x|
/// against the locally linear counting function.
inline double thouless_integral(const IdsCurve& ids, double E, double mean_log_w = 0.0) {
    if (ids.N_values.front() > 1e-3 || ids.N_values.back() < 1.0 - 1e-3)
        throw GridTooNarrow("thouless_integral: counting function not resolved at the grid edges");
    const std::size_t ne = ids.energies.size();
    double step = 0.0;
    for (std::size_t i = 1; i < ne; ++i) step = std::max(step, ids.energies[i] - ids.energies[i - 1]);
    const double window = 2.0 * step;
    double acc = 0.0;
    for (std::size_t i = 1; i < ne; ++i) {
        const double mid = 0.5 * (ids.energies[i] + ids.energies[i - 1]);
        const double dn = ids.N_values[i] - ids.N_values[i - 1];
        if (std::abs(mid - E) >= window) acc += dn * std::log(std::abs(E - mid));
    }
    // local density from the counting increments across the window
    const double n_hi = ids.value_at(E + window);
    const double n_lo = ids.value_at(E - window);
    const double density = (n_hi - n_lo) / (2.0 * window);
    acc += density * 2.0 * window * (std::log(window) - 1.0);
    return acc - mean_log_w;
}

inline std::vector<ThoulessRow> thouless_check(const IdsCurve& ids, const JacobiEnsemble& ens,
                                               const std::vector<double>& test_energies, int n_le,
                                               long samples, std::uint64_t seed, int workers = 1) {
    std::vector<ThoulessRow> rows;
    for (std::size_t i = 0; i < test_energies.size(); ++i) {
        ThoulessRow row;
        row.E = test_energies[i];
        row.thouless = thouless_integral(ids, row.E, ens.mean_log_abs_w());
        const auto mc = jacobi_le(ens, row.E, n_le, samples, seed + 7 * i, workers);
        row.mc = mc.mean;
        row.mc_std_err = mc.std_err;
        row.residual = std::abs(row.thouless - row.mc);
        rows.push_back(row);
    }
    return rows;
}

/// Alternating-weight truncation of the case-study operator: zero diagonal,
/// couplings ..., 1, omega_0, 1, omega_1, ... The omega values are i.i.d., the
/// bond sequence itself is Markov.
inline std::vector<double> toy_weight_sequence(const std::vector<double>& support,
                                               const std::vector<double>& probs, int bonds, Rng& rng) {
    const auto omegas = detail::draw_from(support, probs, bonds / 2 + 1, rng);
    std::vector<double> w(bonds);
    for (int i = 0; i < bonds; ++i) w[i] = (i % 2 == 1) ? omegas[(i + 1) / 2] : 1.0;
    return w;
}

struct ToyReport {
    std::vector<double> energies;
    std::vector<double> L_plus;      // per energy, from the two-step process
    std::vector<double> L_std_err;
    IdsCurve ids;
    struct WegnerRow {
        double cell_width = 0.0;
        double max_density = 0.0;  // max over cells of E[#eigenvalues in cell] / (n width)
    };
    std::vector<WegnerRow> wegner;
};

inline ToyReport toy_ids_localization_diag(const std::vector<double>& mu_support,
                                           const std::vector<double>& mu_probs,
                                           const std::vector<double>& energy_window, int n, long samples,
                                           std::uint64_t seed, int workers = 1) {
    for (double w : mu_support)
        if (!(w > 0.0)) throw ConfigInvalid("toy_ids_localization_diag: support must be positive");
    double mean_log = 0.0;
    for (std::size_t i = 0; i < mu_support.size(); ++i) mean_log += mu_probs[i] * std::log(mu_support[i]);
    if (std::abs(mean_log) < 1e-12)
        throw ConfigInvalid("toy_ids_localization_diag: mean log weight must be nonzero");

    ToyReport rep;
    rep.energies = energy_window;

    // exponent of the operator = half the exponent of the two-step process
    for (std::size_t e = 0; e < energy_window.size(); ++e) {
        const Cocycle proc = toy_process(energy_window[e], mu_support, mu_probs);
        const auto le = mc_le(proc, 400, samples, seed + 11 * e, workers);
        rep.L_plus.push_back(0.5 * le.mean);
        rep.L_std_err.push_back(0.5 * le.std_err);
    }

    // counting curve of the alternating-weight truncation
    rep.ids.energies = energy_window;
    rep.ids.n_truncation = n;
    rep.ids.samples = samples;
    const std::size_t ne = energy_window.size();
    std::vector<std::vector<double>> per_sample(samples, std::vector<double>(ne));
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed ^ 0x70D0ULL, s);
        const auto w = toy_weight_sequence(mu_support, mu_probs, n - 1, rng);
        const std::vector<double> v(n, 0.0);
        for (std::size_t e = 0; e < ne; ++e)
            per_sample[s][e] = static_cast<double>(eig_count_leq(v, w, energy_window[e])) / n;
    });
    rep.ids.N_values.assign(ne, 0.0);
    rep.ids.std_err.assign(ne, 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
        double sum = 0.0, sumsq = 0.0;
        for (long s = 0; s < samples; ++s) {
            sum += per_sample[s][e];
            sumsq += per_sample[s][e] * per_sample[s][e];
        }
        rep.ids.N_values[e] = sum / samples;
        if (samples > 1)
            rep.ids.std_err[e] = std::sqrt(
                std::max(sumsq / samples - rep.ids.N_values[e] * rep.ids.N_values[e], 0.0) / (samples - 1));
    }

    // eigenvalue-density diagnostic at a few cell widths
    const double base = energy_window.back() - energy_window.front();
    for (int scale : {16, 8, 4}) {
        const double width = base / scale;
        ToyReport::WegnerRow row;
        row.cell_width = width;
        for (int c = 0; c < scale; ++c) {
            const double lo = energy_window.front() + c * width;
            const double hi = lo + width;
            const double dn = rep.ids.value_at(hi) - rep.ids.value_at(lo);
            row.max_density = std::max(row.max_density, dn / width);
        }
        rep.wegner.push_back(row);
    }
    return rep;
}

} // namespace rmlab
