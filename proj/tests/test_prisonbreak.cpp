#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rmlab/prisonbreak.hpp"

using namespace rmlab;

namespace {

Cocycle diag_cocycle(std::vector<double> thetas, std::vector<double> probs) {
    std::vector<Mat2> mats;
    for (double t : thetas) mats.push_back(Mat2::diag(t, 1.0 / t));
    return Cocycle(std::move(mats), std::move(probs));
}

Cocycle rotated_diag(double eta) {
    const Mat2 r = Mat2::rotation(eta);
    return Cocycle({r * Mat2::diag(2, 0.5), r * Mat2::diag(8, 0.125)}, {0.5, 0.5});
}

std::vector<std::vector<double>> random_stochastic(int m, Rng& rng) {
    std::vector<std::vector<double>> p(m, std::vector<double>(m));
    for (int i = 0; i < m; ++i) {
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            p[i][j] = rng.uniform(0.01, 1.0);
            sum += p[i][j];
        }
        for (int j = 0; j < m; ++j) p[i][j] /= sum;
        // counter float drift: pin the last entry
        double acc = 0.0;
        for (int j = 0; j < m - 1; ++j) acc += p[i][j];
        p[i][m - 1] = 1.0 - acc;
    }
    return p;
}

} // namespace

TEST_CASE("chart_psi", "[prisonbreak]") {
    CHECK(chart_psi(ProjPoint::from_vector(1, 0), +1) == 0.0);
    CHECK(std::isinf(chart_psi(ProjPoint::from_vector(1, 0), -1)));
    CHECK(chart_psi(ProjPoint::from_vector(1, 1), +1) == Catch::Approx(1.0));
    CHECK(chart_psi(ProjPoint::from_vector(2, 1), -1) == Catch::Approx(2.0));

    // psi_+(D_+(r)) = (-r, r): a point at angle atan(0.05) sits inside for r = 0.1
    const double psi = chart_psi(ProjPoint(std::atan(0.05)), +1);
    CHECK(std::abs(psi) < 0.1);
    CHECK(psi == Catch::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("cone family membership and frame coordinates", "[prisonbreak]") {
    const ConeFamily cones(ProjPoint::from_vector(1, 0), ProjPoint::from_vector(0, 1), 0.2, 1e-3);
    CHECK(cones.r0() == Catch::Approx(1e-3));
    CHECK(cones.r1() == Catch::Approx(5.0));
    CHECK(cones.r2() == Catch::Approx(1e3));

    // nested: Sigma0 subset Sigma1 subset Sigma2
    for (double t : {1e-4, 5e-4}) {
        const ProjPoint p = cones.from_frame_psi_minus(t);
        CHECK(cones.in_sigma0(p));
        CHECK(cones.in_sigma1(p));
        CHECK(cones.in_sigma2(p));
    }
    const ProjPoint mid = cones.from_frame_psi_minus(1.0);
    CHECK_FALSE(cones.in_sigma0(mid));
    CHECK(cones.in_sigma1(mid));
    const ProjPoint outer = cones.from_frame_psi_minus(100.0);
    CHECK_FALSE(cones.in_sigma1(outer));
    CHECK(cones.in_sigma2(outer));

    // frame psi round trip; standard axes make it the literal chart
    CHECK(cones.frame_psi_minus(cones.from_frame_psi_minus(0.37)) == Catch::Approx(0.37).epsilon(1e-10));
    CHECK(cones.frame_psi_minus(ProjPoint::from_vector(3, 4)) == Catch::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(ConeFamily(ProjPoint(0.0), ProjPoint(kPi / 2), 0.1, 0.2), LedgerInfeasible);
}

TEST_CASE("walk_step", "[prisonbreak]") {
    const Cocycle id({Mat2::identity()}, {1.0});
    Rng rng = Rng::from_seed(81);
    const ProjPoint p(0.77);
    const auto [sym, q] = walk_step(id, p, rng);
    CHECK(sym == 0);
    CHECK(proj_distance(p, q) < 1e-15);

    // k=1 contraction toward the horizontal axis: psi_+ coordinate is 4^-n
    const Cocycle c({Mat2::diag(2, 0.5)}, {1.0});
    ProjPoint x(kPi / 4);
    for (int n = 1; n <= 20; ++n) {
        x = walk_step(c, x, rng).second;
        CHECK(chart_psi(x, +1) == Catch::Approx(std::pow(4.0, -n)).epsilon(1e-9));
    }

    // first-symbol distribution matches the probability vector
    const Cocycle two({Mat2::identity(), Mat2::identity()}, {0.3, 0.7});
    Rng rng2 = Rng::from_seed(82);
    long ones = 0;
    const long draws = 1000000;
    for (long i = 0; i < draws; ++i) ones += walk_step(two, p, rng2).first;
    const double freq = static_cast<double>(ones) / draws;
    CHECK(std::abs(freq - 0.7) <= 3 * std::sqrt(0.3 * 0.7 / draws));
}

TEST_CASE("chain_escape_oracle", "[prisonbreak]") {
    // absorbing chain: exit probability q from a single cell state
    const double q = 0.23;
    const std::vector<std::vector<double>> p = {{1 - q, q}, {0.0, 1.0}};
    for (int n : {1, 2, 5, 10}) {
        const auto r = chain_escape_oracle(p, {0}, n);
        CHECK(r.escape[0] == Catch::Approx(1 - std::pow(1 - q, n)).epsilon(1e-12));
    }

    // subset = all states: no escape possible
    Rng rng = Rng::from_seed(83);
    const auto full = random_stochastic(4, rng);
    const auto r_all = chain_escape_oracle(full, {0, 1, 2, 3}, 7);
    for (double e : r_all.escape) CHECK(e == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(chain_escape_oracle({{0.5, 0.4}, {0.5, 0.5}}, {0}, 3), NotStochastic);
}

TEST_CASE("stay probabilities are submultiplicative (exact DP)", "[prisonbreak]") {
    Rng rng = Rng::from_seed(84);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 6;
        const auto p = random_stochastic(m, rng);
        const std::vector<int> subset = {0, 1, 2};
        for (auto [n, mm] : {std::pair{1, 1}, {2, 3}, {4, 2}, {5, 5}}) {
            const double lhs = chain_escape_oracle(p, subset, n + mm).stay_sup;
            const double rhs =
                chain_escape_oracle(p, subset, n).stay_sup * chain_escape_oracle(p, subset, mm).stay_sup;
            CHECK(lhs <= rhs + 1e-12);
        }
    }
}

TEST_CASE("escape composition inequality (exact DP)", "[prisonbreak]") {
    Rng rng = Rng::from_seed(85);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 6;
        const auto p = random_stochastic(m, rng);
        const std::vector<int> e = {0, 1};
        const std::vector<int> f = {0, 1, 2, 3};
        const int n = 3, mm = 4;
        const auto esc_f = chain_escape_oracle(p, f, n);
        double inf_outside_e = 1.0;
        for (int x = 0; x < m; ++x) {
            if (x == 0 || x == 1) continue;  // x in E excluded
            inf_outside_e = std::min(inf_outside_e, esc_f.escape[x]);
        }
        const double lhs = chain_escape_oracle(p, f, n + mm).escape[0];
        const double rhs = chain_escape_oracle(p, e, mm).escape[0] * inf_outside_e;
        CHECK(lhs >= rhs - 1e-12);
    }
}

TEST_CASE("complementarity of escape and stay estimates", "[prisonbreak]") {
    const Cocycle b = rotated_diag(1e-3);
    const ConeFamily cones(ProjPoint::from_vector(1, 0), ProjPoint::from_vector(0, 1), 0.15, 1e-2);
    const auto row = escape_prob(b, cones, cones.r1(), cones.from_frame_psi_minus(0.5), 30, 500, 86);
    CHECK(row.escape + row.stay == 1.0);
}

TEST_CASE("escape estimator matches the DP oracle on a 5-state chain", "[prisonbreak]") {
    Rng rng = Rng::from_seed(87);
    const auto p = random_stochastic(5, rng);
    const std::vector<int> subset = {0, 1, 2};
    const int n = 6;
    const auto exact = chain_escape_oracle(p, subset, n);
    for (int start : subset) {
        const auto est = mc_chain_escape(p, subset, start, n, 4000, 88 + start);
        const double se = std::max(est.std_err, 1e-4);
        CHECK(std::abs(est.escape - exact.escape[start]) <= 3 * se);
    }
}

TEST_CASE("escape from trivial cones", "[prisonbreak]") {
    const Cocycle b = rotated_diag(1e-3);
    const ConeFamily cones(ProjPoint::from_vector(1, 0), ProjPoint::from_vector(0, 1), 1e-10, 1e-12);
    // radius 1e9: practically the whole projective line, nothing outside
    const auto row = escape_prob(b, cones, 1e9, ProjPoint(0.3), 50, 300, 89);
    CHECK(row.escape == 0.0);

    // purely diagonal cocycle: the repelling axis is fixed, walks from it never leave
    const Cocycle d = diag_cocycle({2, 8}, {0.5, 0.5});
    const auto fixed = escape_prob(d, cones, 1e-6, ProjPoint::from_vector(0, 1), 100, 300, 90);
    CHECK(fixed.escape == 0.0);
}

TEST_CASE("prison_break_experiment on the rotated family", "[prisonbreak]") {
    const Cocycle a = diag_cocycle({2, 8}, {0.5, 0.5});
    const auto form = simultaneous_diagonalize(a);
    const auto sig = hyperbolic_symbols(a, form);
    const Cocycle b = rotated_diag(1e-4);
    const auto rho = rho_measure(b, sig);
    REQUIRE(rho.rho_minus > 0.0);
    const auto ledger = constant_ledger(a, form, rho.rho_minus);

    PrisonBreakOptions opt;
    opt.samples = 400;
    opt.a4_walks = 2000;
    opt.grid_per_band = 16;
    opt.workers = 2;
    opt.a4_horizon_cap = 4000;
    const auto rep = prison_break_experiment(a, b, ledger, opt, 91);

    CHECK(rep.rho_B == Catch::Approx(rho.rho_minus));
    CHECK(rep.a1.pass);
    CHECK(rep.a2.pass);
    CHECK(rep.a3.pass);
    CHECK(rep.a4.pass);
    CHECK(rep.phenomenon_pass);
    CHECK(rep.fitted_c0 <= 100.0);
    CHECK(rep.final_bound_estimate < ledger.r);

    // the literal ledger cones are infeasible at this scale and reported so
    CHECK_FALSE(rep.ledger_cones_feasible);
    CHECK(rep.M_effective >= 2.0);

    const nlohmann::json j = rep;
    CHECK(j.contains("ledger"));
    CHECK(j.contains("n_conditions"));
    CHECK(j.contains("fitted_c0"));

    // rho_B = 0 is rejected upstream
    CHECK_THROWS_AS(prison_break_experiment(a, a, ledger, opt, 92), ZeroRho);
}

TEST_CASE("contraction factor inside the stable cone", "[prisonbreak]") {
    // hyperbolic members contract D_-(delta) at least as fast as
    // e^{-(5/3) L(A)}, up to 10 percent tolerance
    const Cocycle a = diag_cocycle({2, 8}, {0.5, 0.5});
    const auto form = simultaneous_diagonalize(a);
    const auto sig = hyperbolic_symbols(a, form);
    const Cocycle b = rotated_diag(1e-4);
    const auto led = constant_ledger(a, form, 1e-4);
    const auto wit = diag_witness(b, sig);
    const ConeFamily cones(wit.p_plus, wit.p_minus, led.delta_cone, 1e-3);

    Rng rng = Rng::from_seed(93);
    const double bound = std::exp(-(5.0 / 3.0) * led.L_A) * 1.10;
    for (int trial = 0; trial < 500; ++trial) {
        const ProjPoint x = cones.from_frame_psi_minus(rng.uniform(-led.delta_cone, led.delta_cone));
        const ProjPoint y = cones.from_frame_psi_minus(rng.uniform(-led.delta_cone, led.delta_cone));
        if (proj_distance(x, y) < 1e-12) continue;
        for (int i : sig) {
            const Mat2& g = b.mats[i];
            const double ratio = proj_distance(proj_apply(g.inverse(), x), proj_apply(g.inverse(), y)) /
                                 proj_distance(x, y);
            CHECK(ratio <= bound);
        }
    }
}

TEST_CASE("axis displacement bounded by M0 rho", "[prisonbreak]") {
    const Cocycle a = diag_cocycle({2, 8}, {0.5, 0.5});
    const auto form = simultaneous_diagonalize(a);
    const auto sig = hyperbolic_symbols(a, form);
    const auto led = constant_ledger(a, form, 1e-4);
    for (double eta : {1e-3, 1e-4, 1e-5}) {
        const Cocycle b = rotated_diag(eta);
        const auto rho = rho_measure(b, sig);
        const auto wit = diag_witness(b, sig);
        double disp = 0.0;
        for (const Mat2& g : b.mats) {
            disp = std::max(disp, proj_distance(proj_apply(g, wit.p_plus), wit.p_plus));
            disp = std::max(disp, proj_distance(proj_apply(g, wit.p_minus), wit.p_minus));
            disp = std::max(disp, proj_distance(proj_apply(g.inverse(), wit.p_plus), wit.p_plus));
            disp = std::max(disp, proj_distance(proj_apply(g.inverse(), wit.p_minus), wit.p_minus));
        }
        CHECK(disp <= led.M0 * rho.rho);
    }
}
