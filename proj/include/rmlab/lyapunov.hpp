#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <tuple>
#include <vector>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Finite-scale Lyapunov estimate. `mean` is the top-exponent estimate
/// E[(1/n) log ||A^(n)||]; bottom comes from -(1/n) log ||(A^(n))^{-1}|| on
/// the same sample paths.
struct LyapEstimate {
    int scale_n = 0;
    double mean = 0.0;
    double std_err = 0.0;
    long samples = 0;
    double top = 0.0;
    double bottom = 0.0;
    double top_std_err = 0.0;
    double bottom_std_err = 0.0;
};

/// |sum p_j log|theta_j||, the exact exponent of a diagonal cocycle.
inline double closed_form_diag_le(const std::vector<double>& thetas, const std::vector<double>& probs) {
    if (thetas.size() != probs.size()) throw DimensionMismatch("closed_form_diag_le: size mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < thetas.size(); ++j) {
        if (thetas[j] == 0.0) throw ZeroEigenvalue("closed_form_diag_le: zero theta");
        s += probs[j] * std::log(std::abs(thetas[j]));
    }
    return std::abs(s);
}

namespace detail {

struct MeanVar {
    double mean = 0.0, std_err = 0.0;
};

inline MeanVar mean_and_std_err(const std::vector<double>& xs) {
    MeanVar mv;
    const double n = static_cast<double>(xs.size());
    if (xs.empty()) return mv;
    mv.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) return mv;
    double ss = 0.0;
    for (double x : xs) ss += (x - mv.mean) * (x - mv.mean);
    mv.std_err = std::sqrt(ss / (n - 1.0) / n);
    return mv;
}

} // namespace detail

inline LyapEstimate mc_le(const Cocycle& a, int n, long samples, std::uint64_t seed, int workers = 1) {
    if (n < 1 || samples < 2) throw ConfigInvalid("mc_le: need n >= 1 and samples >= 2");
    std::vector<double> top(samples), bottom(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const SymbolPath path = sample_path(a, n, rng);
        const ProductStats st = log_product_stats(a, path);
        top[s] = st.log_norm / n;
        bottom[s] = -st.log_norm_inverse() / n;
    });
    const auto t = detail::mean_and_std_err(top);
    const auto b = detail::mean_and_std_err(bottom);
    LyapEstimate est;
    est.scale_n = n;
    est.samples = samples;
    est.mean = t.mean;
    est.std_err = t.std_err;
    est.top = t.mean;
    est.top_std_err = t.std_err;
    est.bottom = b.mean;
    est.bottom_std_err = b.std_err;
    return est;
}

/// Empirical deviation probability P[ |(1/n) log||A^(n)|| - reference_L| > epsilon ]
/// with its binomial standard error.
inline std::pair<double, double> ldt_tail(const Cocycle& a, int n, double epsilon, double reference_L,
                                          long samples, std::uint64_t seed, int workers = 1) {
    if (!(epsilon > 0.0)) throw ConfigInvalid("ldt_tail: epsilon must be positive");
    std::vector<std::uint8_t> hit(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const SymbolPath path = sample_path(a, n, rng);
        const double v = log_norm_product(a, path) / n;
        hit[s] = std::abs(v - reference_L) > epsilon ? 1 : 0;
    });
    double count = 0.0;
    for (auto h : hit) count += h;
    const double p = count / static_cast<double>(samples);
    const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(samples));
    return {p, se};
}

/// exp(-epsilon^2 n / (2 K^2)): deviation bound for bounded i.i.d. sums.
inline double hoeffding_bound(double K, double epsilon, long n) {
    if (!(K > 0.0) || !(epsilon > 0.0) || n < 0) throw ConfigInvalid("hoeffding_bound: need K, eps > 0, n >= 0");
    return std::exp(-epsilon * epsilon * static_cast<double>(n) / (2.0 * K * K));
}

struct LdtRow {
    int n = 0;
    double epsilon = 0.0;
    double tail_prob = 0.0;
    double std_err = 0.0;
    double hoeffding = 0.0;
    long samples = 0;
    std::uint64_t seed = 0;
};

/// Tail curve across scales plus fitted decay parameters:
///   c: least-squares rate in tail = exp(-c eps^2 n)
///   b: slope of log(-log tail) against log n
///   a: the deviation-size exponent when eps(n) = n^-a (0 for fixed eps)
struct LdtCurve {
    std::vector<LdtRow> rows;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    bool fit_degenerate = true;
};

struct EpsRule {
    // fixed epsilon when a == 0, else eps(n) = n^-a
    double fixed_eps = 0.1;
    double a = 0.0;

    double eval(int n) const { return a == 0.0 ? fixed_eps : std::pow(static_cast<double>(n), -a); }
};

struct LdtCurveOptions {
    bool use_asymptotic_reference = false;  // default: finite-scale LE at each n
    int workers = 1;
};

inline LdtCurve ldt_curve(const Cocycle& a, const std::vector<int>& n_list, const EpsRule& rule,
                          long samples, std::uint64_t seed, const LdtCurveOptions& opt = {}) {
    LdtCurve curve;
    curve.a = rule.a;
    const double K = [&] {
        double k = 0.0;
        for (const Mat2& m : a.mats)
            k = std::max(k, std::max(std::abs(std::log(op_norm(m))), std::abs(std::log(op_norm(m.inverse())))));
        return std::max(k, 1e-12);
    }();

    double asymptotic_ref = 0.0;
    if (opt.use_asymptotic_reference) {
        const int n_ref = 2 * *std::max_element(n_list.begin(), n_list.end());
        asymptotic_ref = mc_le(a, n_ref, samples, seed ^ 0xA5A5A5A5ULL, opt.workers).mean;
    }

    for (std::size_t i = 0; i < n_list.size(); ++i) {
        const int n = n_list[i];
        const double eps = rule.eval(n);
        const std::uint64_t row_seed = seed + 1000003ULL * (i + 1);
        double ref = asymptotic_ref;
        if (!opt.use_asymptotic_reference) ref = mc_le(a, n, samples, row_seed ^ 0x5BD1E995ULL, opt.workers).mean;
        const auto [p, se] = ldt_tail(a, n, eps, ref, samples, row_seed, opt.workers);
        LdtRow row;
        row.n = n;
        row.epsilon = eps;
        row.tail_prob = p;
        row.std_err = se;
        row.hoeffding = hoeffding_bound(K, eps, n);
        row.samples = samples;
        row.seed = row_seed;
        curve.rows.push_back(row);
    }

    // Rate fits restricted to rows where the estimate is meaningful.
    const double lo = 10.0 / static_cast<double>(samples);
    std::vector<const LdtRow*> fit_rows;
    for (const auto& r : curve.rows)
        if (r.tail_prob >= lo && r.tail_prob <= 0.5) fit_rows.push_back(&r);
    if (fit_rows.size() >= 2) {
        double sxx = 0.0, sxy = 0.0;
        for (const auto* r : fit_rows) {
            const double x = r->epsilon * r->epsilon * r->n;
            const double y = -std::log(r->tail_prob);
            sxx += x * x;
            sxy += x * y;
        }
        if (sxx > 0.0) {
            curve.c = sxy / sxx;
            curve.fit_degenerate = false;
        }
        // b: log(-log tail) vs log n
        double mx = 0.0, my = 0.0;
        for (const auto* r : fit_rows) {
            mx += std::log(static_cast<double>(r->n));
            my += std::log(-std::log(r->tail_prob));
        }
        mx /= fit_rows.size();
        my /= fit_rows.size();
        double vxx = 0.0, vxy = 0.0;
        for (const auto* r : fit_rows) {
            const double dx = std::log(static_cast<double>(r->n)) - mx;
            vxx += dx * dx;
            vxy += dx * (std::log(-std::log(r->tail_prob)) - my);
        }
        if (vxx > 0.0) curve.b = vxy / vxx;
    }
    return curve;
}

/// Decompose log||A^(n)(x)|| = log||A_star^(n)(x)|| + (1/2) sum_i log|det A_{x_i}|.
struct SlSplit {
    double lognorm_total = 0.0;
    double lognorm_sl2 = 0.0;
    double birkhoff_half_sum = 0.0;
};

inline SlSplit sl_reduction_split(const Cocycle& a, const SymbolPath& path) {
    SlSplit out;
    out.lognorm_total = log_norm_product(a, path);
    std::vector<Mat2> star(a.mats.size());
    for (std::size_t j = 0; j < a.mats.size(); ++j) star[j] = sl2_normalize(a.mats[j]);
    const Cocycle a_star(star, a.probs);
    out.lognorm_sl2 = log_norm_product(a_star, path);
    double s = 0.0;
    for (std::uint32_t sym : path.symbols) s += std::log(std::abs(a.mats[sym].det()));
    out.birkhoff_half_sum = 0.5 * s;
    return out;
}

} // namespace rmlab
