#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rmlab/avalanche.hpp"

using namespace rmlab;

namespace {

Cocycle toy_cocycle(double E, std::vector<double> omegas, std::vector<double> probs) {
    std::vector<Mat2> mats;
    for (double w : omegas) mats.push_back(Mat2((E * E - 1) / w, -E * w, E / w, -w));
    return Cocycle(std::move(mats), std::move(probs));
}

} // namespace

TEST_CASE("ap_conditions", "[avalanche]") {
    // commuting expanders: angle ratio 1, gap from the norm
    std::vector<Mat2> chain(5, Mat2::diag(10, 0.1));
    const auto c = ap_conditions(chain, 0.9, 0.1);
    CHECK(c.all_ok);

    // a rotation by pi/2 between two axis expanders kills the angle ratio
    std::vector<Mat2> bad = {Mat2::diag(10, 0.1), Mat2::rotation(kPi / 2) * Mat2::diag(10, 0.1),
                             Mat2::diag(10, 0.1)};
    const double ratio = op_norm(bad[2] * bad[1]) / (op_norm(bad[2]) * op_norm(bad[1]));
    CHECK(ratio < 0.5);
    const auto cb = ap_conditions(bad, 0.5, 0.1);
    CHECK_FALSE(cb.all_ok);
    CHECK_FALSE(cb.angle_ok[1]);

    // any chain containing a rotation fails the gap for kappa < 1
    std::vector<Mat2> rot = {Mat2::diag(10, 0.1), Mat2::rotation(0.3), Mat2::diag(10, 0.1)};
    const auto cr = ap_conditions(rot, 0.1, 0.99);
    CHECK_FALSE(cr.gap_ok[1]);

    CHECK_THROWS_AS(ap_conditions({Mat2::identity(), Mat2::identity()}, 0.5, 0.5), ChainTooShort);
}

TEST_CASE("ap_estimate telescopes exactly on commuting diagonal chains", "[avalanche]") {
    Rng rng = Rng::from_seed(101);
    // short chain with varying factors
    std::vector<Mat2> gs;
    double expected = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double lam = std::exp(rng.uniform(std::log(2.0), std::log(40.0)));
        gs.push_back(Mat2::diag(lam, 1 / lam));
        expected += std::log(lam);
    }
    const auto rep = ap_estimate(gs);
    CHECK(rep.ap_value == Catch::Approx(expected).epsilon(1e-12));
    CHECK(rep.residual <= 1e-10);

    // residual stays at rounding level regardless of length, up to 1e5 blocks
    for (int len : {10000, 100000}) {
        std::vector<Mat2> long_chain(len, Mat2::diag(2, 0.5));
        const auto rep2 = ap_estimate(long_chain);
        CHECK(rep2.residual <= 1e-9);
        CHECK(rep2.exact_value == Catch::Approx(len * std::log(2.0)).epsilon(1e-10));
    }

    // n = 3 strong hyperbolic: tiny residual
    std::vector<Mat2> strong(3, Mat2::diag(100, 0.01));
    CHECK(ap_estimate(strong).residual <= 1e-6);
}

TEST_CASE("ap_estimate flags violated conditions", "[avalanche]") {
    std::vector<Mat2> bad = {Mat2::diag(10, 0.1), Mat2::rotation(kPi / 2) * Mat2::diag(10, 0.1),
                             Mat2::diag(10, 0.1)};
    const auto rep = ap_estimate(bad, 0.5, 0.2);
    CHECK(rep.thresholds_supplied);
    CHECK_FALSE(rep.conditions.all_ok);
    // the identity is not valid here, residual may be large; it is still reported
    CHECK(std::isfinite(rep.residual));
}

TEST_CASE("residual bound on random hyperbolic chains", "[avalanche]") {
    Rng rng = Rng::from_seed(102);
    int accepted = 0;
    while (accepted < 100) {
        const int n = 3 + static_cast<int>(rng.next_u64() % 18);
        std::vector<Mat2> gs;
        for (int i = 0; i < n; ++i) {
            const double lam = std::exp(rng.uniform(std::log(20.0), std::log(200.0)));
            // mild rotations keep the singular axes roughly aligned
            gs.push_back(Mat2::rotation(rng.uniform(-0.3, 0.3)) * Mat2::diag(lam, 1 / lam) *
                         Mat2::rotation(rng.uniform(-0.3, 0.3)));
        }
        const auto rep = ap_estimate(gs);
        const double kappa = 1.0 / rep.kappa_inv;
        if (kappa / rep.eps > 0.1) continue;  // keep only well-conditioned chains
        ++accepted;
        CHECK(rep.residual <= 10.0 * n * kappa * kappa / (rep.eps * rep.eps));
    }
}

TEST_CASE("bridging: diagonal cocycle is exact", "[avalanche]") {
    const Cocycle d({Mat2::diag(2, 0.5), Mat2::diag(8, 0.125)}, {0.5, 0.5});
    const auto res = bridging_experiment(d, 16, 160, 400, 111);
    CHECK(res.m0 >= res.n0);
    CHECK(res.m0 < 2 * res.n0);
    CHECK((res.blocks - 1) * res.n0 + res.m0 == res.n_target);
    // diagonal blocks commute: the identity telescopes, both pipelines agree
    CHECK(res.ap_vs_direct_max_abs_diff <= 1e-8);
    CHECK(res.tail_prob_ap == res.tail_prob_direct);
    CHECK(res.agree_fraction == 1.0);
}

TEST_CASE("bridging on the quasi-irreducible toy process", "[avalanche]") {
    const Cocycle b = toy_cocycle(0.5, {2, 8}, {0.5, 0.5});
    const auto res = bridging_experiment(b, 32, 320, 2000, 112, 2);
    CHECK(res.block_le > 0.5);
    // condition failures are rare at this scale
    CHECK(res.cond_fail_fraction <= 0.05);
    // composed log-norms track the direct product within n^{3/4} nearly always
    CHECK(res.agree_fraction >= 0.99);
    // both tails see the same deviation scale
    CHECK(std::abs(res.tail_prob_ap - res.tail_prob_direct) <= 0.02);
}

TEST_CASE("bridging rejects non-decomposable targets", "[avalanche]") {
    const Cocycle d({Mat2::diag(2, 0.5)}, {1.0});
    CHECK_THROWS_AS(bridging_experiment(d, 16, 40, 100, 113), ConfigInvalid);
}
