#include <cmath>

#include <gtest/gtest.h>

#include "locsync/asymptotics.hpp"
#include "locsync/continuation.hpp"

using namespace locsync;

namespace {

const NonlinearitySpec& quintic() {
    static const auto s = builtin_spec("quintic");
    return s;
}

NonlinearitySpec quintic_with_omega1(double slope) {
    const double p[] = {0.0, 2.0, -1.0};
    const double q[] = {-1.0};
    const double w[] = {0.0, slope};
    return polynomial_spec("quintic_w", p, q, 0.0, w);
}

} // namespace

TEST(CoreCorrection, AllPlusInteriorVanishesAndLastNode) {
    const std::vector<RootChoice> pat(4, RootChoice::plus);
    const Vec s = core_correction(quintic(), 0.75, pat, Boundary::off_site, 8);
    EXPECT_NEAR(s(1), 0.0, 1e-15);
    EXPECT_NEAR(s(2), 0.0, 1e-15);
    EXPECT_NEAR(s(3), -0.4082482904638630, 1e-9);
}

TEST(CoreCorrection, MixedPatternFirstNode) {
    const std::vector<RootChoice> pat{RootChoice::plus, RootChoice::minus};
    const Vec s = core_correction(quintic(), 0.75, pat, Boundary::off_site, 5);
    const auto p = bistable_roots(quintic(), 0.75);
    EXPECT_NEAR(p.r_plus - p.r_minus, 0.5176380902050415, 1e-9);
    EXPECT_NEAR(p.r_plus * p.lambda_r_plus, -3.0, 1e-9);
    EXPECT_NEAR(s(0), 0.5176380902050415 / -3.0, 1e-9);
}

TEST(FarfieldTail, LeadingAmplitudeAndRatio) {
    const double rp = bistable_roots(quintic(), 0.75).r_plus;
    const Vec t = farfield_tail(quintic(), 0.75, 0.01, 3, 8, rp);
    ASSERT_EQ(t.size(), 5);
    EXPECT_NEAR(t(0), 0.016329931618554523, 1e-12);
    EXPECT_NEAR(t(1) / t(0), 0.01 / 0.75, 1e-12);
    EXPECT_EQ(farfield_tail(quintic(), 0.75, 0.0, 3, 8, rp).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FarfieldTail, CorrectedNodeMatchesToSecondOrder) {
    const double eps = 0.01, mu = 0.75;
    const auto a = uniform_ansatz(8, 3, RootChoice::plus, PhaseTemplate::in_phase, Boundary::off_site);
    const LatticeSystem sys{quintic(), Coupling::dissipative(), eps, Boundary::off_site};
    const auto res = newton_correct(sys, build_seed(quintic(), mu, eps, a, sys.c), ContinuationConfig{});
    const double rp = bistable_roots(quintic(), mu).r_plus;
    const double lead = farfield_tail(quintic(), mu, eps, 3, 8, rp)(0);
    EXPECT_LT(std::abs(res.state.r(3) - lead) / lead, 5.0 * eps);
}

TEST(BuildSeed, ZeroCouplingIsExact) {
    const auto a = uniform_ansatz(6, 2, RootChoice::minus, PhaseTemplate::in_phase, Boundary::on_site);
    const auto s = build_seed(quintic(), 0.4, 0.0, a, Coupling::dissipative());
    const LatticeSystem sys{quintic(), Coupling::dissipative(), 0.0, Boundary::on_site};
    EXPECT_LT(residual(sys, s).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildSeed, DissipativeThreeNodeCore) {
    const double eps = 0.01;
    const auto a = uniform_ansatz(10, 3, RootChoice::plus, PhaseTemplate::in_phase, Boundary::off_site);
    const LatticeSystem sys{quintic(), Coupling::dissipative(), eps, Boundary::off_site};
    const auto seed = build_seed(quintic(), 0.5, eps, a, sys.c);
    const auto res = newton_correct(sys, seed, ContinuationConfig{});
    EXPECT_LE(res.iterations, 6);
    EXPECT_LE(canonicalize(res.state).phi.cwiseAbs().maxCoeff(), 10 * eps);
    const Vec sig = core_correction(quintic(), 0.5, a.pattern, a.bc, a.N);
    const double rp = bistable_roots(quintic(), 0.5).r_plus;
    EXPECT_LT(std::abs(res.state.r(2) - (rp + eps * sig(2))), 5 * eps * eps);
}

TEST(BuildSeed, ConservativeTwoNodeCore) {
    const double eps = 0.01;
    const auto a = isola_seed_ansatz(10, 2, IsolaHalf::lower);
    const LatticeSystem sys{quintic(), Coupling::conservative(), eps, Boundary::on_site};
    const auto res = newton_correct(sys, build_seed(quintic(), 0.5, eps, a, sys.c), ContinuationConfig{});
    const auto c = canonicalize(res.state);
    const double h = std::numbers::pi / 2;
    EXPECT_NEAR(c.phi(0), -h, 10 * eps);
    EXPECT_NEAR(c.phi(1), -h, 10 * eps);
    EXPECT_NEAR(c.phi(2), h, 10 * eps);
}

TEST(SnakingCurve, Examples) {
    const auto a = snaking_curve(quintic(), 4, 1.0);
    EXPECT_NEAR(a.mu, 1.0, 0.0);
    EXPECT_NEAR(a.r(0), 1.0, 1e-6);
    const auto b = snaking_curve(quintic(), 4, 0.5);
    EXPECT_NEAR(b.r(0), 0.5411961001461970, 1e-9);
    const auto c = snaking_curve(quintic(), 4, 1.5);
    EXPECT_NEAR(c.r(0), 1.3065629648763766, 1e-9);
    const auto d = snaking_curve(quintic(), 4, 2.5);
    EXPECT_NEAR(d.r(0), 1.3065629648763766, 1e-9);
    EXPECT_NEAR(d.r(1), 0.5411961001461970, 1e-9);
    EXPECT_THROW(snaking_curve(quintic(), 4, 8.5), RangeError);
}

TEST(IsolaCurve, Examples) {
    const auto lo = isola_curve(quintic(), 6, 2, 0.0, IsolaHalf::lower);
    EXPECT_EQ(lo.r(2), 0.0);
    const auto up = isola_curve(quintic(), 6, 2, 0.5, IsolaHalf::upper);
    EXPECT_NEAR(up.r(2), 1.3065629648763766, 1e-9);
    EXPECT_NEAR(up.r(3), 0.5411961001461970, 1e-9);
    const auto l1 = isola_curve(quintic(), 6, 2, 1.0, IsolaHalf::lower);
    const auto u1 = isola_curve(quintic(), 6, 2, 1.0, IsolaHalf::upper);
    EXPECT_NEAR(l1.r(2), 1.0, 1e-6);
    EXPECT_NEAR(u1.r(2), 1.0, 1e-6);
    EXPECT_EQ(up.phi(0), -std::numbers::pi / 2);
    EXPECT_EQ(up.phi(2), std::numbers::pi / 2);
    EXPECT_THROW(isola_curve(quintic(), 6, 5, 0.5, IsolaHalf::lower), RangeError);
}

TEST(FoldPredictors, Values) {
    EXPECT_NEAR(fold_prediction_mu1(0.01).mu, 0.99, 1e-15);
    EXPECT_EQ(fold_prediction_mu1(0.0).mu, 1.0);
    EXPECT_NEAR(kRecruitmentConstant, 1.8898815748423097, 1e-12);
    EXPECT_NEAR(fold_prediction_mu0(0.01).mu, 0.08772053214638597, 1e-12);
    EXPECT_EQ(fold_prediction_mu0(0.0).mu, 0.0);
    EXPECT_NEAR(fold_prediction_mu0(0.01).amplitude, std::cbrt(0.01 / 2.0), 1e-15);
    EXPECT_LT(fold_prediction_mu0(1e-3).mu, fold_prediction_mu0(1e-2).mu);
    EXPECT_GT(fold_prediction_mu1(1e-3).mu, fold_prediction_mu1(1e-2).mu);
}

TEST(FoldPredictors, ModelScaledMatchesNormalFormUnits) {
    // lambda = -mu + r^2 has a = m = 1; with r_+(0) = 1 the model predictor reduces to the
    // normal-form constant minus the 2 eps shift.
    const double p[] = {0.0, 1.0, -1.0};
    const double q[] = {-1.0};
    const auto nf = polynomial_spec("nf", p, q);
    const double eps = 1e-3;
    EXPECT_NEAR(fold_prediction_mu0_model(nf, eps).mu, fold_prediction_mu0(eps).mu - 2 * eps, 1e-6);
}

TEST(Charts, OverlapRoots) {
    const auto roots = chart_overlap_roots();
    ASSERT_EQ(roots.size(), 2u);
    EXPECT_NEAR(roots[0], (std::sqrt(5.0) - 1.0) / 2.0, 1e-14);
    EXPECT_NEAR(roots[1], 1.0, 1e-14);
}

TEST(Charts, FoldPointsReproducePredictor) {
    const double eps = 1e-3;
    const auto p = eps_chart_point(1.0 / std::cbrt(2.0), eps);
    EXPECT_TRUE(p.fold_flag);
    EXPECT_NEAR(p.mu, fold_prediction_mu0(eps).mu, 1e-14);
    const auto m = mu_chart_point(std::sqrt(2.0 / 3.0), 0.3);
    EXPECT_TRUE(m.fold_flag);
    EXPECT_NEAR(m.eps, std::sqrt(2.0 / 3.0) * (2.0 - 2.0 / 3.0) * std::pow(0.3, 1.5) / std::pow(2.0, 1.5), 1e-15);
}

TEST(Mismatch, BelowThreshold) {
    const auto m = mismatch_bound(quintic_with_omega1(1.0), 0.75);
    EXPECT_NEAR(m.delta, 0.5176380902050415, 1e-9);
    EXPECT_NEAR(m.threshold, 1.7320508075688772, 1e-9);
    EXPECT_FALSE(m.obstructed);
    EXPECT_NEAR(m.sin_phi_inf, -0.2988584907226845, 1e-9);
    EXPECT_TRUE(m.real_solution);
    EXPECT_FALSE(m.order_one_mismatch);
}

TEST(Mismatch, AboveThresholdAndMatched) {
    const auto m = mismatch_bound(quintic_with_omega1(5.0), 0.75);
    EXPECT_NEAR(m.delta, 2.5881904510252074, 1e-9);
    EXPECT_TRUE(m.obstructed);
    EXPECT_FALSE(m.real_solution);
    const auto z = mismatch_bound(quintic(), 0.75);
    EXPECT_EQ(z.delta, 0.0);
    EXPECT_EQ(z.sin_phi_inf, 0.0);
    EXPECT_FALSE(z.obstructed);
}

TEST(Mismatch, LargeCoreConvergesToLimit) {
    const auto spec = quintic_with_omega1(1.0);
    const int k = 200;
    const double s = mismatch_phase_exact(spec, 0.75, k);
    EXPECT_LT(std::abs(s - mismatch_bound(spec, 0.75).sin_phi_inf), 2.0 / k);
}

TEST(Recruitment, NearOne) {
    EXPECT_EQ(conservative_recruitment(-1, 3), 3);
    EXPECT_EQ(conservative_recruitment(1, 3), 2);
    EXPECT_THROW(conservative_recruitment(0, 3), RangeError);
    EXPECT_THROW(conservative_recruitment(1, 1), RangeError);
}

TEST(Recruitment, NearZero) {
    EXPECT_EQ(conservative_recruitment_mu0(1, 1, 3), 3);
    EXPECT_EQ(conservative_recruitment_mu0(-1, 1, 3), 4);
    EXPECT_THROW(conservative_recruitment_mu0(-1, -1, 3), RangeError);
}

TEST(PhaseBlock, PrintedFormula) {
    const double rp = bistable_roots(quintic(), 0.75).r_plus;
    Vec r0(2);
    r0 << rp, rp;
    const auto rep = phase_block_determinant(r0, Boundary::off_site);
    EXPECT_NEAR(rep.printed, -3.0 * rp * rp * rp, 1e-12);
    EXPECT_NEAR(rep.printed, -5.511351921262151, 1e-9);
    Vec z(3);
    z << rp, 0.0, rp;
    EXPECT_EQ(phase_block_determinant(z, Boundary::on_site).printed, 0.0);
}

TEST(PhaseBlock, AssembledBlockNonsingular) {
    const auto p = bistable_roots(quintic(), 0.6);
    for (int k = 1; k <= 8; ++k) {
        Vec r0(k);
        for (int n = 0; n < k; ++n) r0(n) = n % 3 == 2 ? p.r_minus : p.r_plus;
        for (auto bc : {Boundary::on_site, Boundary::off_site}) {
            const auto rep = phase_block_determinant(r0, bc);
            EXPECT_TRUE(rep.nonsingular) << "k=" << k;
            EXPECT_GT(std::abs(rep.numeric), 1e-8);
        }
    }
}

TEST(SeedAnsatz, Validation) {
    EXPECT_THROW(uniform_ansatz(5, 5, RootChoice::plus, PhaseTemplate::in_phase, Boundary::on_site), RangeError);
    EXPECT_THROW(uniform_ansatz(5, 0, RootChoice::plus, PhaseTemplate::in_phase, Boundary::on_site), RangeError);
    const auto a = isola_seed_ansatz(10, 3, IsolaHalf::upper);
    EXPECT_EQ(a.k, 5);
    EXPECT_EQ(*a.plus_interface, 4);
}
