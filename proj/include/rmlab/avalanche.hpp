#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rmlab/cocycle.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/lyapunov.hpp"
#include "rmlab/parallel.hpp"

namespace rmlab {

/// Gap and angle conditions for a chain g_0, ..., g_{n-1}:
///   gap:   ||g_i|| >= 1/kappa            (every index)
///   angle: ||g_i g_{i-1}|| / (||g_i|| ||g_{i-1}||) >= eps   (i = 1..n-1)
struct ApConditions {
    std::vector<bool> gap_ok;    // size n
    std::vector<bool> angle_ok;  // size n-1, entry i-1 refers to the pair (i, i-1)
    bool all_ok = true;
};

inline ApConditions ap_conditions(const std::vector<Mat2>& gs, double eps, double kappa) {
    const int n = static_cast<int>(gs.size());
    if (n < 3) throw ChainTooShort("ap_conditions: need at least 3 matrices");
    ApConditions c;
    c.gap_ok.resize(n);
    c.angle_ok.resize(n - 1);
    for (int i = 0; i < n; ++i) {
        c.gap_ok[i] = op_norm(gs[i]) >= 1.0 / kappa;
        c.all_ok = c.all_ok && c.gap_ok[i];
    }
    for (int i = 1; i < n; ++i) {
        const double ratio = op_norm(gs[i] * gs[i - 1]) / (op_norm(gs[i]) * op_norm(gs[i - 1]));
        c.angle_ok[i - 1] = ratio >= eps;
        c.all_ok = c.all_ok && c.angle_ok[i - 1];
    }
    return c;
}

/// Log-norm of the chain product g_{n-1} ... g_0, renormalized periodically.
inline double chain_log_norm(const std::vector<Mat2>& gs) {
    Mat2 p = Mat2::identity();
    KahanSum shift;
    int since = 0;
    for (const Mat2& g : gs) {
        p = g * p;
        if (++since == kRenormPeriod) {
            const double f = p.frobenius();
            p = p * (1.0 / f);
            shift.add(std::log(f));
            since = 0;
        }
    }
    return shift.value() + std::log(op_norm(p));
}

/// Long-product log-norm via single and pairwise block log-norms, with the
/// exact value and the residual reported unconditionally.
struct ApReport {
    int n = 0;
    double eps = 0.0;        // measured min angle ratio
    double kappa_inv = 0.0;  // measured min norm
    double ap_value = 0.0;
    double exact_value = 0.0;
    double residual = 0.0;
    ApConditions conditions;
    bool thresholds_supplied = false;
};

inline ApReport ap_estimate(const std::vector<Mat2>& gs, double eps_threshold = -1.0,
                            double kappa_threshold = -1.0) {
    const int n = static_cast<int>(gs.size());
    if (n < 3) throw ChainTooShort("ap_estimate: need at least 3 matrices");
    ApReport rep;
    rep.n = n;

    std::vector<double> lognorms(n);
    for (int i = 0; i < n; ++i) lognorms[i] = std::log(op_norm(gs[i]));
    double min_norm = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) min_norm = std::min(min_norm, op_norm(gs[i]));
    rep.kappa_inv = min_norm;

    KahanSum ap;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= n - 2; ++i) ap.add(-lognorms[i]);
    for (int i = 1; i <= n - 1; ++i) {
        const double pair = std::log(op_norm(gs[i] * gs[i - 1]));
        ap.add(pair);
        min_ratio = std::min(min_ratio, std::exp(pair - lognorms[i] - lognorms[i - 1]));
    }
    rep.eps = min_ratio;
    rep.ap_value = ap.value();
    rep.exact_value = chain_log_norm(gs);
    rep.residual = std::abs(rep.exact_value - rep.ap_value);

    if (eps_threshold > 0.0 && kappa_threshold > 0.0) {
        rep.thresholds_supplied = true;
        rep.conditions = ap_conditions(gs, eps_threshold, kappa_threshold);
    } else {
        rep.conditions.gap_ok.assign(n, true);
        rep.conditions.angle_ok.assign(n - 1, true);
        rep.conditions.all_ok = true;
    }
    return rep;
}

/// Composite-scale deviation estimate built from length-n0 blocks: per path,
/// block conditions are checked with thresholds derived from the finite-scale
/// exponent at n0, the block decomposition is fed through the log-norm
/// identity, and the tail at the target scale is compared against the direct
/// product on the same paths.
struct BridgeResult {
    int n_target = 0;
    int n0 = 0;
    int m0 = 0;      // last block length, n0 <= m0 < 2 n0
    int blocks = 0;
    double block_le = 0.0;        // finite-scale LE at n0
    double kappa_threshold = 0.0; // e^{-c n0}, c = block_le / 4
    double eps_threshold = 0.0;   // e^{-8 n0^{4/5}}
    double cond_fail_fraction = 0.0;
    double ap_vs_direct_max_abs_diff = 0.0;
    double agree_fraction = 0.0;  // |ap - direct| <= n_target^{3/4}
    double epsilon_tail = 0.0;    // n_target^{-1/5}
    double tail_prob_ap = 0.0;
    double tail_prob_direct = 0.0;
    long samples = 0;
    std::uint64_t seed = 0;
};

inline BridgeResult bridging_experiment(const Cocycle& b, int n0, int n_target, long samples,
                                        std::uint64_t seed, int workers = 1) {
    if (n0 < 3 || n_target < 3 * n0)
        throw ConfigInvalid("bridging_experiment: need n_target >= 3 n0 for a block decomposition");
    BridgeResult res;
    res.n_target = n_target;
    res.n0 = n0;
    res.samples = samples;
    res.seed = seed;
    const int blocks = n_target / n0;  // q-1 blocks of n0, one of m0 = n0 + remainder
    res.blocks = blocks;
    res.m0 = n_target - (blocks - 1) * n0;

    const auto le0 = mc_le(b, n0, std::max<long>(samples, 500), seed ^ 0xB41D6EULL, workers);
    res.block_le = le0.mean;
    const double c = le0.mean / 4.0;
    res.kappa_threshold = std::exp(-c * n0);
    res.eps_threshold = std::exp(-8.0 * std::pow(static_cast<double>(n0), 0.8));
    res.epsilon_tail = std::pow(static_cast<double>(n_target), -0.2);

    std::vector<double> ap_vals(samples), direct_vals(samples);
    std::vector<std::uint8_t> cond_fail(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const SymbolPath path = sample_path(b, n_target, rng);
        std::vector<Mat2> gs(blocks);
        int pos = 0;
        for (int i = 0; i < blocks; ++i) {
            const int len = (i == blocks - 1) ? res.m0 : n0;
            Mat2 block = Mat2::identity();
            for (int t = 0; t < len; ++t) block = b.mats[path.symbols[pos + t]] * block;
            gs[i] = block;
            pos += len;
        }
        const auto rep = ap_estimate(gs, res.eps_threshold, res.kappa_threshold);
        ap_vals[s] = rep.ap_value;
        direct_vals[s] = log_norm_product(b, path);
        cond_fail[s] = rep.conditions.all_ok ? 0 : 1;
    });

    double fails = 0.0, agree = 0.0, ref = 0.0;
    for (long s = 0; s < samples; ++s) {
        fails += cond_fail[s];
        const double diff = std::abs(ap_vals[s] - direct_vals[s]);
        res.ap_vs_direct_max_abs_diff = std::max(res.ap_vs_direct_max_abs_diff, diff);
        agree += diff <= std::pow(static_cast<double>(n_target), 0.75) ? 1 : 0;
        ref += direct_vals[s] / n_target;
    }
    ref /= samples;
    res.cond_fail_fraction = fails / samples;
    res.agree_fraction = agree / samples;
    double tail_ap = 0.0, tail_direct = 0.0;
    for (long s = 0; s < samples; ++s) {
        tail_ap += std::abs(ap_vals[s] / n_target - ref) > res.epsilon_tail ? 1 : 0;
        tail_direct += std::abs(direct_vals[s] / n_target - ref) > res.epsilon_tail ? 1 : 0;
    }
    res.tail_prob_ap = tail_ap / samples;
    res.tail_prob_direct = tail_direct / samples;
    return res;
}

} // namespace rmlab
