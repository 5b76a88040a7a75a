#pragma once

// Experiment runner behind the command-line tool: strict config validation,
// deterministic outputs given (config, seed), CSV bodies independent of the
// worker count.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmlab/avalanche.hpp"
#include "rmlab/cocycle.hpp"
#include "rmlab/csv.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/irreducibility.hpp"
#include "rmlab/jacobi.hpp"
#include "rmlab/lyapunov.hpp"
#include "rmlab/prisonbreak.hpp"
#include "rmlab/transfer.hpp"

namespace rmlab::experiments {

using nlohmann::json;

struct Output {
    json resolved;       // full config after defaults, embedded in the header
    CsvWriter csv;
    json report;         // auxiliary JSON report (may be null)
    std::uint64_t seed = 0;

    std::string document() const { return csv.document(resolved.dump(), seed); }
};

/// Merge user config over defaults; unknown keys are rejected.
inline json resolve_config(const json& defaults, const json& user) {
    if (!user.is_object()) throw ConfigInvalid("config: expected a JSON object");
    json out = defaults;
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (!defaults.contains(it.key()))
            throw ConfigInvalid("config: unknown field '" + it.key() + "'");
        out[it.key()] = it.value();
    }
    return out;
}

/// Cocycle from an explicit matrix list or a named family:
///   {"mats": [[a,b,c,d],...], "probs": [...]}
///   {"family": "diag", "thetas": [...], "probs": [...]}
///   {"family": "diag_rot", "thetas": [...], "eta": x, "probs": [...]}
///   {"family": "toy", "omegas": [...], "E": e, "probs": [...]}
inline Cocycle parse_cocycle(const json& desc) {
    if (!desc.is_object()) throw ConfigInvalid("cocycle: expected a JSON object");
    if (desc.contains("mats")) return desc.get<Cocycle>();
    const std::string family = desc.value("family", "");
    std::vector<double> probs = desc.value("probs", std::vector<double>{});
    auto equi = [&](std::size_t k) {
        if (probs.empty()) probs.assign(k, 1.0 / static_cast<double>(k));
    };
    if (family == "diag" || family == "diag_rot") {
        const auto thetas = desc.at("thetas").get<std::vector<double>>();
        equi(thetas.size());
        std::vector<Mat2> mats;
        const Mat2 rot = family == "diag_rot" ? Mat2::rotation(desc.at("eta").get<double>()) : Mat2::identity();
        for (double t : thetas) {
            if (t == 0.0) throw ConfigInvalid("cocycle: zero theta");
            mats.push_back(rot * Mat2::diag(t, 1.0 / t));
        }
        return Cocycle(std::move(mats), std::move(probs));
    }
    if (family == "toy") {
        const auto omegas = desc.at("omegas").get<std::vector<double>>();
        equi(omegas.size());
        return toy_process(desc.at("E").get<double>(), omegas, probs);
    }
    throw ConfigInvalid("cocycle: need 'mats' or a known 'family'");
}

inline JacobiEnsemble parse_ensemble(const json& desc) {
    if (desc.is_string() && desc.get<std::string>() == "free") return JacobiEnsemble::free_case();
    return desc.get<JacobiEnsemble>();
}

inline std::vector<double> parse_grid(const json& desc) {
    if (desc.is_array()) return desc.get<std::vector<double>>();
    const double lo = desc.at("min").get<double>();
    const double hi = desc.at("max").get<double>();
    const int steps = desc.at("steps").get<int>();
    if (steps < 1 || !(hi > lo)) throw ConfigInvalid("grid: need min < max and steps >= 1");
    std::vector<double> out;
    for (int i = 0; i <= steps; ++i) out.push_back(lo + (hi - lo) * i / steps);
    return out;
}

namespace detail {

inline json default_cocycle() {
    return json{{"family", "diag"}, {"thetas", {2.0, 8.0}}, {"probs", {0.5, 0.5}}};
}

inline json default_ensemble() { return "free"; }

} // namespace detail

// --- individual experiments ---

inline Output run_le(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "le"},
                                              {"cocycle", detail::default_cocycle()},
                                              {"n", 1000},
                                              {"samples", 2000}},
                                         cfg);
    const Cocycle a = parse_cocycle(resolved.at("cocycle"));
    const auto est = mc_le(a, resolved.at("n").get<int>(), resolved.at("samples").get<long>(), seed, workers);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"n", "mean", "std_err", "top", "bottom", "bottom_std_err", "samples", "seed"});
    out.csv.add_row({std::to_string(est.scale_n), format_double(est.mean), format_double(est.std_err),
                     format_double(est.top), format_double(est.bottom), format_double(est.bottom_std_err),
                     std::to_string(est.samples), std::to_string(seed)});
    out.report = json{{"mean", est.mean}, {"std_err", est.std_err}, {"top", est.top}, {"bottom", est.bottom}};
    return out;
}

inline Output run_ldt(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "ldt"},
                                              {"cocycle", detail::default_cocycle()},
                                              {"n_list", {50, 100, 200, 400}},
                                              {"epsilon", 0.2},
                                              {"eps_exponent", 0.0},
                                              {"samples", 2000},
                                              {"asymptotic_reference", false}},
                                         cfg);
    const Cocycle a = parse_cocycle(resolved.at("cocycle"));
    EpsRule rule;
    rule.fixed_eps = resolved.at("epsilon").get<double>();
    rule.a = resolved.at("eps_exponent").get<double>();
    LdtCurveOptions opt;
    opt.use_asymptotic_reference = resolved.at("asymptotic_reference").get<bool>();
    opt.workers = workers;
    const auto curve = ldt_curve(a, resolved.at("n_list").get<std::vector<int>>(), rule,
                                 resolved.at("samples").get<long>(), seed, opt);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"n", "epsilon", "tail_prob", "std_err", "hoeffding_bound", "samples", "seed"});
    for (const auto& row : curve.rows)
        out.csv.add_row({std::to_string(row.n), format_double(row.epsilon), format_double(row.tail_prob),
                         format_double(row.std_err), format_double(row.hoeffding),
                         std::to_string(row.samples), std::to_string(row.seed)});
    out.report = json{{"a", curve.a}, {"b", curve.b}, {"c", curve.c}, {"fit_degenerate", curve.fit_degenerate}};
    return out;
}

inline Output run_irred(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "irred"},
                                              {"cocycle", detail::default_cocycle()},
                                              {"base_cocycle", nullptr},
                                              {"n_max", 4096},
                                              {"dir_grid_size", 256},
                                              {"samples", 200},
                                              {"le_scale", 256},
                                              {"le_samples", 400},
                                              {"measure_n", true}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const Cocycle base =
        resolved.at("base_cocycle").is_null() ? b : parse_cocycle(resolved.at("base_cocycle"));
    const auto form = simultaneous_diagonalize(base, 1e-9);
    if (!form.accepted)
        throw ConfigInvalid("irred: the base cocycle must be diagonalizable (supply base_cocycle)");
    const auto sig = hyperbolic_symbols(base, form);

    IrredReport rep;
    const auto rho = rho_measure(b, sig);
    rep.rho_minus = rho.rho_minus;
    rep.rho_plus = rho.rho_plus;
    rep.rho = rho.rho;
    rep.sigma_H = rho.sigma_H;
    for (std::size_t s = 0; s < rho.sigma_H.size(); ++s) {
        rep.e_plus_i.push_back(rho.e_plus[s].theta);
        rep.e_minus_i.push_back(rho.e_minus[s].theta);
    }
    rep.diag_dist_upper = diag_distance_upper(b, sig);
    if (resolved.at("measure_n").get<bool>()) {
        MeasureNOptions opt;
        opt.n_max = resolved.at("n_max").get<int>();
        opt.dir_grid_size = resolved.at("dir_grid_size").get<int>();
        opt.samples = resolved.at("samples").get<long>();
        opt.le_scale = resolved.at("le_scale").get<int>();
        opt.le_samples = resolved.at("le_samples").get<long>();
        opt.workers = workers;
        rep.N_B = measure_N(b, opt, seed);
        rep.N_Binv = measure_N(inverse_cocycle(b), opt, seed ^ 0x1234ABCDULL);
    }

    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"rho_minus", "rho_plus", "rho", "N_B", "N_Binv", "diag_dist_upper", "seed"});
    out.csv.add_row({format_double(rep.rho_minus), format_double(rep.rho_plus), format_double(rep.rho),
                     n_result_json(rep.N_B).dump(), n_result_json(rep.N_Binv).dump(),
                     format_double(rep.diag_dist_upper), std::to_string(seed)});
    out.report = rep;
    return out;
}

inline Output run_prison(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "prison"},
                                              {"cocycle", json{{"family", "diag_rot"},
                                                               {"thetas", {2.0, 8.0}},
                                                               {"eta", 1e-4},
                                                               {"probs", {0.5, 0.5}}}},
                                              {"base_cocycle", detail::default_cocycle()},
                                              {"samples", 1000},
                                              {"a4_walks", 10000},
                                              {"grid_per_band", 32},
                                              {"c0_cap", 100.0},
                                              {"a4_horizon_cap", 20000},
                                              {"final_horizon_cap", 40000}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const Cocycle a = parse_cocycle(resolved.at("base_cocycle"));
    const auto form = simultaneous_diagonalize(a, 1e-9);
    if (!form.accepted) throw ConfigInvalid("prison: base cocycle must be diagonalizable");
    const auto sig = hyperbolic_symbols(a, form);
    const auto rho = rho_measure(b, sig);
    if (!(rho.rho_minus > 0.0)) throw ZeroRho("prison: rho_-(B) = 0");
    const auto ledger = constant_ledger(a, form, rho.rho_minus);

    PrisonBreakOptions opt;
    opt.samples = resolved.at("samples").get<long>();
    opt.a4_walks = resolved.at("a4_walks").get<long>();
    opt.grid_per_band = resolved.at("grid_per_band").get<int>();
    opt.c0_cap = resolved.at("c0_cap").get<double>();
    opt.a4_horizon_cap = resolved.at("a4_horizon_cap").get<long>();
    opt.final_horizon_cap = resolved.at("final_horizon_cap").get<long>();
    opt.workers = workers;
    const auto rep = prison_break_experiment(a, b, ledger, opt, seed);

    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"rho_B", "r", "fitted_c0", "final_bound_estimate", "a1", "a2", "a3", "a4",
                         "phenomenon_pass", "seed"});
    out.csv.add_row({format_double(rep.rho_B), format_double(rep.r_threshold), format_double(rep.fitted_c0),
                     format_double(rep.final_bound_estimate), rep.a1.pass ? "1" : "0",
                     rep.a2.pass ? "1" : "0", rep.a3.pass ? "1" : "0", rep.a4.pass ? "1" : "0",
                     rep.phenomenon_pass ? "1" : "0", std::to_string(seed)});
    out.report = rep;
    return out;
}

inline Output run_ap(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "ap"},
                                              {"cocycle", detail::default_cocycle()},
                                              {"blocks", 10},
                                              {"block_len", 16},
                                              {"samples", 100}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const int blocks = resolved.at("blocks").get<int>();
    const int block_len = resolved.at("block_len").get<int>();
    const long samples = resolved.at("samples").get<long>();
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"sample", "blocks", "eps", "kappa_inv", "ap_value", "exact_value", "residual"});
    std::vector<ApReport> reps(samples);
    parallel_for(static_cast<std::size_t>(samples), workers, [&](std::size_t s) {
        Rng rng = Rng::derive(seed, s);
        const SymbolPath path = sample_path(b, blocks * block_len, rng);
        std::vector<Mat2> gs(blocks);
        for (int i = 0; i < blocks; ++i) {
            Mat2 m = Mat2::identity();
            for (int t = 0; t < block_len; ++t) m = b.mats[path.symbols[i * block_len + t]] * m;
            gs[i] = m;
        }
        reps[s] = ap_estimate(gs);
    });
    for (long s = 0; s < samples; ++s)
        out.csv.add_row({std::to_string(s), std::to_string(blocks), format_double(reps[s].eps),
                         format_double(reps[s].kappa_inv), format_double(reps[s].ap_value),
                         format_double(reps[s].exact_value), format_double(reps[s].residual)});
    return out;
}

inline Output run_bridge(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "bridge"},
                                              {"cocycle", json{{"family", "toy"},
                                                               {"omegas", {2.0, 8.0}},
                                                               {"E", 0.5},
                                                               {"probs", {0.5, 0.5}}}},
                                              {"n0", 32},
                                              {"n_target", 320},
                                              {"samples", 10000}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const auto res = bridging_experiment(b, resolved.at("n0").get<int>(), resolved.at("n_target").get<int>(),
                                         resolved.at("samples").get<long>(), seed, workers);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"n_target", "n0", "cond_fail_fraction", "ap_vs_direct_max_abs_diff",
                         "tail_prob_ap", "tail_prob_direct"});
    out.csv.add_numeric_row({static_cast<double>(res.n_target), static_cast<double>(res.n0),
                             res.cond_fail_fraction, res.ap_vs_direct_max_abs_diff, res.tail_prob_ap,
                             res.tail_prob_direct});
    out.report = json{{"m0", res.m0},
                      {"blocks", res.blocks},
                      {"block_le", res.block_le},
                      {"kappa_threshold", res.kappa_threshold},
                      {"eps_threshold", res.eps_threshold},
                      {"agree_fraction", res.agree_fraction},
                      {"epsilon_tail", res.epsilon_tail}};
    return out;
}

inline Output run_transfer(const json& cfg, std::uint64_t seed, int workers) {
    (void)workers;
    const json resolved = resolve_config(json{{"experiment", "transfer"},
                                              {"cocycle", json{{"family", "toy"},
                                                               {"omegas", {2.0, 8.0}},
                                                               {"E", 0.5},
                                                               {"probs", {0.5, 0.5}}}},
                                              {"G", 512},
                                              {"tol", 1e-10},
                                              {"max_iter", 100000}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const int G = resolved.at("G").get<int>();
    const auto st = stationary_measure(discretize(b, G), resolved.at("tol").get<double>(),
                                       resolved.at("max_iter").get<long>());
    const double le = furstenberg_le(b, st.weights);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"symbol", "node", "theta", "weight"});
    for (int i = 0; i < st.weights.k; ++i)
        for (int m = 0; m < st.weights.G; ++m)
            out.csv.add_row({std::to_string(i), std::to_string(m), format_double(st.weights.angle(m)),
                             format_double(st.weights.at(i, m))});
    out.report = json{{"furstenberg_le", le},
                      {"iterations", st.iterations},
                      {"residual", st.residual},
                      {"nonunique_risk", st.nonunique_risk},
                      {"lambda2_estimate", st.lambda2_estimate}};
    return out;
}

inline Output run_pressure(const json& cfg, std::uint64_t seed, int workers) {
    (void)workers;
    const json resolved = resolve_config(json{{"experiment", "pressure"},
                                              {"cocycle", json{{"family", "toy"},
                                                               {"omegas", {2.0, 8.0}},
                                                               {"E", 0.5},
                                                               {"probs", {0.5, 0.5}}}},
                                              {"G", 256},
                                              {"t_grid", json{{"min", -0.25}, {"max", 0.25}, {"steps", 10}}},
                                              {"t_max", 0.5}},
                                         cfg);
    const Cocycle b = parse_cocycle(resolved.at("cocycle"));
    const auto curve = pressure(b, parse_grid(resolved.at("t_grid")), resolved.at("G").get<int>(),
                                resolved.at("t_max").get<double>());
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"t", "lambda", "c", "c_second_diff"});
    for (std::size_t i = 0; i < curve.ts.size(); ++i)
        out.csv.add_numeric_row({curve.ts[i], curve.lambdas[i], curve.cs[i], curve.second_diffs[i]});
    out.report = json{{"h", curve.h}, {"c_prime0", curve.c_prime0}, {"t_max", curve.t_max}};
    return out;
}

inline Output run_ids(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "ids"},
                                              {"ensemble", detail::default_ensemble()},
                                              {"energies", json{{"min", -3.0}, {"max", 3.0}, {"steps", 120}}},
                                              {"n", 2000},
                                              {"samples", 50}},
                                         cfg);
    const auto ens = parse_ensemble(resolved.at("ensemble"));
    const auto curve = ids_curve(ens, parse_grid(resolved.at("energies")), resolved.at("n").get<int>(),
                                 resolved.at("samples").get<long>(), seed, workers);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"E", "N", "std_err"});
    for (std::size_t i = 0; i < curve.energies.size(); ++i)
        out.csv.add_numeric_row({curve.energies[i], curve.N_values[i], curve.std_err[i]});
    out.report = json{{"n", curve.n_truncation}, {"samples", curve.samples}};
    return out;
}

inline Output run_thouless(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(
        json{{"experiment", "thouless"},
             {"ensemble", detail::default_ensemble()},
             {"energies", json{{"min", -3.5}, {"max", 3.5}, {"steps", 200}}},
             {"test_energies", {0.0, 3.0}},
             {"n", 2000},
             {"samples", 50},
             {"n_le", 2000},
             {"le_samples", 200}},
        cfg);
    const auto ens = parse_ensemble(resolved.at("ensemble"));
    const auto curve = ids_curve(ens, parse_grid(resolved.at("energies")), resolved.at("n").get<int>(),
                                 resolved.at("samples").get<long>(), seed, workers);
    const auto rows = thouless_check(curve, ens, resolved.at("test_energies").get<std::vector<double>>(),
                                     resolved.at("n_le").get<int>(), resolved.at("le_samples").get<long>(),
                                     seed ^ 0x7110ULL, workers);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"E", "thouless", "mc", "mc_std_err", "residual"});
    for (const auto& r : rows) out.csv.add_numeric_row({r.E, r.thouless, r.mc, r.mc_std_err, r.residual});
    return out;
}

inline Output run_toy(const json& cfg, std::uint64_t seed, int workers) {
    const json resolved = resolve_config(json{{"experiment", "toy"},
                                              {"omegas", {2.0, 8.0}},
                                              {"probs", {0.5, 0.5}},
                                              {"energies", json{{"min", -4.0}, {"max", 4.0}, {"steps", 40}}},
                                              {"n", 1000},
                                              {"samples", 120}},
                                         cfg);
    const auto rep = toy_ids_localization_diag(
        resolved.at("omegas").get<std::vector<double>>(), resolved.at("probs").get<std::vector<double>>(),
        parse_grid(resolved.at("energies")), resolved.at("n").get<int>(), resolved.at("samples").get<long>(),
        seed, workers);
    Output out;
    out.resolved = resolved;
    out.seed = seed;
    out.csv.set_columns({"E", "L_plus", "std_err", "N", "N_std_err"});
    for (std::size_t i = 0; i < rep.energies.size(); ++i)
        out.csv.add_numeric_row(
            {rep.energies[i], rep.L_plus[i], rep.L_std_err[i], rep.ids.N_values[i], rep.ids.std_err[i]});
    json wegner = json::array();
    for (const auto& w : rep.wegner)
        wegner.push_back(json{{"cell_width", w.cell_width}, {"max_density", w.max_density}});
    out.report = json{{"wegner", wegner}};
    return out;
}

inline Output run_experiment(const std::string& name, const json& cfg, std::uint64_t seed, int workers) {
    if (cfg.contains("experiment") && cfg.at("experiment").get<std::string>() != name)
        throw ConfigInvalid("config: experiment field does not match the subcommand");
    if (name == "le") return run_le(cfg, seed, workers);
    if (name == "ldt") return run_ldt(cfg, seed, workers);
    if (name == "irred") return run_irred(cfg, seed, workers);
    if (name == "prison") return run_prison(cfg, seed, workers);
    if (name == "ap") return run_ap(cfg, seed, workers);
    if (name == "bridge") return run_bridge(cfg, seed, workers);
    if (name == "transfer") return run_transfer(cfg, seed, workers);
    if (name == "pressure") return run_pressure(cfg, seed, workers);
    if (name == "ids") return run_ids(cfg, seed, workers);
    if (name == "thouless") return run_thouless(cfg, seed, workers);
    if (name == "toy") return run_toy(cfg, seed, workers);
    throw ConfigInvalid("unknown experiment '" + name + "'");
}

/// Set a dotted path ("cocycle.eta") inside a JSON object.
inline void set_by_path(json& obj, const std::string& path, const json& value) {
    json* cur = &obj;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key)) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

/// One row-block per parameter value; the block seed derives from
/// (seed, value index).
inline Output sweep(const std::string& name, const json& cfg, const std::string& parameter,
                    const std::vector<json>& values, std::uint64_t seed, int workers) {
    if (values.empty()) throw ConfigInvalid("sweep: empty value list");
    Output combined;
    combined.seed = seed;
    bool first = true;
    std::vector<std::string> columns;
    for (std::size_t i = 0; i < values.size(); ++i) {
        json sub = cfg;
        set_by_path(sub, parameter, values[i]);
        const std::uint64_t sub_seed = Rng::derive(seed, i).next_u64();
        Output res = run_experiment(name, sub, sub_seed, workers);
        const std::string body = res.csv.body();
        // prepend the swept value as the leading column of every data row
        std::size_t pos = 0;
        bool header_row = true;
        while (pos < body.size()) {
            std::size_t end = body.find('\n', pos);
            if (end == std::string::npos) end = body.size();
            const std::string line = body.substr(pos, end - pos);
            pos = end + 1;
            if (line.empty()) continue;
            if (header_row) {
                if (first) combined.csv.set_columns({parameter + "," + line});
                header_row = false;
                continue;
            }
            combined.csv.add_row({values[i].dump() + "," + line});
        }
        if (first) {
            combined.resolved = json{{"sweep", parameter}, {"values", values}, {"config", res.resolved}};
            first = false;
        }
    }
    return combined;
}

} // namespace rmlab::experiments
