#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "rmlab/irreducibility.hpp"
#include "rmlab/lyapunov.hpp"
#include "rmlab/transfer.hpp"

using namespace rmlab;

namespace {

Cocycle toy_cocycle(double E, std::vector<double> omegas, std::vector<double> probs) {
    std::vector<Mat2> mats;
    for (double w : omegas) mats.push_back(Mat2((E * E - 1) / w, -E * w, E / w, -w));
    return Cocycle(std::move(mats), std::move(probs));
}

Cocycle diag_cocycle(std::vector<double> thetas, std::vector<double> probs) {
    std::vector<Mat2> mats;
    for (double t : thetas) mats.push_back(Mat2::diag(t, 1.0 / t));
    return Cocycle(std::move(mats), std::move(probs));
}

double row_sum(const GridOperator& q, std::size_t r) {
    double s = 0.0;
    for (const auto& e : q.rows[r]) s += e.w;
    return s;
}

} // namespace

TEST_CASE("discretize structure", "[transfer]") {
    // identity cocycle: every node maps to itself with weight 1
    const Cocycle id({Mat2::identity(), Mat2::identity()}, {0.4, 0.6});
    const auto q = discretize(id, 64);
    for (int i = 0; i < 2; ++i) {
        for (int m = 0; m < 64; ++m) {
            const auto& row = q.rows[q.index(i, m)];
            REQUIRE(row.size() == 2);  // one destination node per symbol
            for (const auto& e : row) CHECK(e.col % 64 == m);
        }
    }

    // rotation by exactly one grid step: cyclic permutation
    const int G = 32;
    const Cocycle rot({Mat2::rotation(kPi / G)}, {1.0});
    const auto qr = discretize(rot, G);
    for (int m = 0; m < G; ++m) {
        const auto& row = qr.rows[m];
        REQUIRE(row.size() == 1);
        CHECK(row[0].col == (m + 1) % G);
        CHECK(row[0].w == Catch::Approx(1.0));
    }

    // stochastic rows for random cocycles at both grid sizes
    Rng rng = Rng::from_seed(121);
    for (int g : {64, 512}) {
        const Cocycle c({oracles::random_sl2(rng), oracles::random_sl2(rng)}, {0.3, 0.7});
        const auto qq = discretize(c, g);
        for (std::size_t r = 0; r < qq.rows.size(); ++r)
            CHECK(row_sum(qq, r) == Catch::Approx(1.0).margin(1e-12));
    }

    CHECK_THROWS_AS(discretize(id, 4), ConfigInvalid);
}

TEST_CASE("coordinate-list export", "[transfer]") {
    const Cocycle rot({Mat2::rotation(kPi / 8)}, {1.0});
    const auto q = discretize(rot, 8);
    const std::string dump = q.coordinate_list();
    // the one-grid-step rotation is a permutation: 8 lines "r (r+1 mod 8) 1"
    std::stringstream ss(dump);
    std::string line;
    int rows = 0;
    while (std::getline(ss, line)) {
        std::stringstream ls(line);
        int r, c;
        double w;
        ls >> r >> c >> w;
        CHECK(c == (r + 1) % 8);
        CHECK(w == Catch::Approx(1.0));
        ++rows;
    }
    CHECK(rows == 8);
}

TEST_CASE("constant function is fixed", "[transfer]") {
    Rng rng = Rng::from_seed(122);
    const Cocycle c({oracles::random_sl2(rng), oracles::random_sl2(rng)}, {0.5, 0.5});
    const auto q = discretize(c, 128);
    GridFunction one(2, 128, 1.0);
    const auto img = q.apply(one);
    for (double v : img.values) CHECK(std::abs(v - 1.0) <= 1e-12);
}

TEST_CASE("stationary measure of a rotation is near uniform", "[transfer]") {
    const int G = 256;
    const Cocycle rot({Mat2::rotation(1.0 / std::sqrt(2.0))}, {1.0});
    const auto q = discretize(rot, G);
    const auto st = stationary_measure(q, 1e-10, 400000);
    double tv = 0.0, total = 0.0;
    for (double v : st.weights.values) {
        tv += std::abs(v - 1.0 / G);
        total += v;
        CHECK(v >= 0.0);
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
    CHECK(0.5 * tv <= 0.05);
}

TEST_CASE("stationary measure of the toy process", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const auto st = stationary_measure(discretize(b, 256));
    CHECK_FALSE(st.nonunique_risk);
    double total = 0.0;
    for (double v : st.weights.values) {
        CHECK(v >= 0.0);
        total += v;
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("diagonal cocycle concentrates on the axes and is flagged", "[transfer]") {
    const int G = 64;  // even: both axes are grid nodes
    const Cocycle d = diag_cocycle({2, 8}, {0.5, 0.5});
    const auto st = stationary_measure(discretize(d, G), 1e-10, 200000);
    CHECK(st.nonunique_risk);
    double axis_mass = 0.0;
    for (int i = 0; i < 2; ++i) axis_mass += st.weights.at(i, 0) + st.weights.at(i, G / 2);
    CHECK(axis_mass >= 0.99);
}

TEST_CASE("furstenberg_le", "[transfer]") {
    // identity cocycle: zero no matter the measure
    const Cocycle id({Mat2::identity(), Mat2::identity()}, {0.5, 0.5});
    GridFunction uniform(2, 64, 1.0 / 128.0);
    CHECK(furstenberg_le(id, uniform) == Catch::Approx(0.0).margin(1e-14));

    // delta mass on the expanding axis of the diagonal cocycle
    const Cocycle d = diag_cocycle({2, 8}, {0.5, 0.5});
    GridFunction axis(2, 64, 0.0);
    axis.at(0, 0) = 0.5;
    axis.at(1, 0) = 0.5;
    CHECK(furstenberg_le(d, axis) == Catch::Approx(2 * std::log(2.0)).epsilon(1e-12));

    // toy process: grid estimate against the Monte-Carlo exponent
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const auto st = stationary_measure(discretize(b, 512));
    const double grid_le = furstenberg_le(b, st.weights);
    const auto mc = mc_le(b, 2000, 2000, 123);
    CHECK(std::abs(grid_le - mc.mean) <= std::max(0.02, 3 * mc.std_err));
}

TEST_CASE("grid refinement self-consistency", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const auto coarse = stationary_measure(discretize(b, 256));
    const auto fine = stationary_measure(discretize(b, 512));
    // coarsen the fine angle marginal onto the coarse grid
    std::vector<double> mc(256, 0.0), mf(256, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int m = 0; m < 256; ++m) {
            mc[m] += coarse.weights.at(i, m);
            mf[m] += fine.weights.at(i, 2 * m) + fine.weights.at(i, 2 * m + 1);
        }
    double tv = 0.0;
    for (int m = 0; m < 256; ++m) tv += std::abs(mc[m] - mf[m]);
    tv *= 0.5;
    const double le_diff = std::abs(furstenberg_le(b, coarse.weights) - furstenberg_le(b, fine.weights));
    CHECK(le_diff <= 2.0 * tv + 1e-9);
}

TEST_CASE("pressure curve", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    std::vector<double> ts;
    for (int i = -5; i <= 5; ++i) ts.push_back(0.04 * i);
    const auto curve = pressure(b, ts, 256);

    // lambda(0) = 1 for any cocycle
    CHECK(curve.lambdas[5] == Catch::Approx(1.0).margin(1e-10));
    CHECK(curve.cs[5] == Catch::Approx(0.0).margin(1e-10));

    // c'(0) matches the Monte-Carlo exponent
    const auto mc = mc_le(b, 2000, 2000, 124);
    CHECK(std::abs(curve.c_prime0 - mc.mean) <= std::max(0.02, 3 * mc.std_err));

    // convex on the window
    for (double sd : curve.second_diffs) CHECK(sd >= -1e-6);
    CHECK(curve.h >= 0.0);

    CHECK_THROWS_AS(pressure(b, {0.9}, 64), ConfigInvalid);
}

TEST_CASE("rate_function", "[transfer]") {
    PressureCurve curve;
    curve.h = 2.0;
    curve.t_max = 0.5;
    curve.centered = true;
    CHECK(rate_function(curve, 0.0) == 0.0);
    CHECK(rate_function(curve, 0.2) == Catch::Approx(0.01).epsilon(1e-12));
    // boundary regime: maximizing tilt outside the window
    CHECK(rate_function(curve, 2.0) == Catch::Approx(0.5 * 2.0 - 0.5 * 2.0 * 0.25).epsilon(1e-12));

    PressureCurve flat = curve;
    flat.h = 0.0;
    CHECK_THROWS_AS(rate_function(flat, 0.1), DegenerateCurvature);
    PressureCurve raw = curve;
    raw.centered = false;
    CHECK_THROWS_AS(rate_function(raw, 0.1), ConfigInvalid);
}

TEST_CASE("rate function upper-bounds empirical tails up to a constant", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    std::vector<double> ts;
    for (int i = -6; i <= 6; ++i) ts.push_back(0.05 * i);
    const auto curve = pressure(b, ts, 256).center();
    const double eps = 0.35;
    const double rate = rate_function(curve, eps);
    CHECK(rate > 0.0);

    const auto ref = mc_le(b, 1500, 1500, 125);
    double fitted_const = 0.0;
    for (int n : {200, 400, 800}) {
        const auto [tail, se] = ldt_tail(b, n, eps, ref.mean, 3000, 126 + n);
        const double bound = std::exp(-n * rate);
        fitted_const = std::max(fitted_const, (tail + 3 * se) / bound);
    }
    // one moderate constant covers the whole scale range
    CHECK(fitted_const < 50.0);
}

TEST_CASE("kappa_alpha", "[transfer]") {
    const Cocycle id({Mat2::identity(), Mat2::identity()}, {0.5, 0.5});
    const auto k_id = kappa_alpha(id, 10, 0.3, 16, 100, 127);
    CHECK(k_id.value == Catch::Approx(1.0).epsilon(1e-12));

    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const double L = b.norm_bound();
    const int n = 12;
    // below the alpha threshold the coefficient is bounded by the norm bound
    const double alpha_small = 0.9 / (4.0 * n);
    const auto k1 = kappa_alpha(b, n, alpha_small, 64, 400, 128);
    CHECK(k1.value <= L + 3 * k1.std_err);

    // submultiplicativity with 3 sigma tolerance
    const double alpha = 0.01;
    const auto k_n = kappa_alpha(b, 8, alpha, 64, 800, 129);
    const auto k_m = kappa_alpha(b, 6, alpha, 64, 800, 130);
    const auto k_nm = kappa_alpha(b, 14, alpha, 64, 800, 131);
    const double sigma = 3 * (k_nm.std_err + k_n.std_err + k_m.std_err);
    CHECK(k_nm.value <= k_n.value * k_m.value + sigma);

    CHECK_THROWS_AS(kappa_alpha(b, 5, 0.0, 8, 10, 1), ConfigInvalid);
}

TEST_CASE("kappa contraction at the irreducibility scale", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    MeasureNOptions opt;
    opt.n_max = 256;
    opt.dir_grid_size = 64;
    opt.samples = 200;
    opt.le_scale = 200;
    opt.le_samples = 400;
    const auto nres = measure_N(b, opt, 132);
    REQUIRE(nres.found());
    const int N = nres.n;
    const double L = b.norm_bound();
    const double alpha = 1.0 / (4.0 * L * std::pow(std::log(L), 2) * N * N);
    const auto k = kappa_alpha(b, N, alpha, 64, 1500, 133);
    CHECK(k.value <= 1.0 - alpha / 2 + 3 * k.std_err);
}

TEST_CASE("holder_seminorm", "[transfer]") {
    GridFunction constant(2, 64, 3.7);
    CHECK(holder_seminorm(constant, 0.5) == 0.0);

    // f(i, theta) = d(theta, axis) is 1-Lipschitz in the projective metric
    GridFunction dist(2, 128);
    const ProjPoint axis(0.4);
    for (int i = 0; i < 2; ++i)
        for (int m = 0; m < 128; ++m) dist.at(i, m) = proj_distance(ProjPoint(dist.angle(m)), axis);
    CHECK(holder_seminorm(dist, 1.0) <= 1.0 + 1e-9);

    CHECK_THROWS_AS(holder_seminorm(constant, 1.5), ConfigInvalid);
}

TEST_CASE("seminorm decay under iteration", "[transfer]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const int G = 128;
    const auto q = discretize(b, G);
    GridFunction f(2, G);
    const ProjPoint axis(1.1);
    for (int i = 0; i < 2; ++i)
        for (int m = 0; m < G; ++m) f.at(i, m) = proj_distance(ProjPoint(f.angle(m)), axis);

    const int n = 4;
    const double alpha = 0.5;
    GridFunction qf = f;
    for (int it = 0; it < n; ++it) qf = q.apply(qf);

    const auto kap = kappa_alpha(b, n - 1, alpha, 64, 2000, 134);
    const double L = b.norm_bound();
    const double lhs = holder_seminorm(qf, alpha);
    const double rhs = std::pow(L, 2 * alpha) * (kap.value + 3 * kap.std_err) * holder_seminorm(f, alpha);
    // grid transport adds discretization slack
    CHECK(lhs <= rhs * 1.15 + 0.05);
}
