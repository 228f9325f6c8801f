// Randomized and scaling properties of the lattice system, the asymptotic seeds and the
// time integrator.

#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "locsync/asymptotics.hpp"
#include "locsync/continuation.hpp"
#include "locsync/dynamics.hpp"

using namespace locsync;

namespace {

struct Case {
    const char* name;
    Coupling c;
    Boundary bc;
};

std::vector<Case> cases() {
    return {{"dissipative_off", Coupling::dissipative(), Boundary::off_site},
            {"dissipative_on", Coupling::dissipative(), Boundary::on_site},
            {"conservative_off", Coupling::conservative(), Boundary::off_site},
            {"conservative_on", Coupling::conservative(), Boundary::on_site},
            {"general_off", Coupling::general(0.6, 0.8), Boundary::off_site},
            {"general_on", Coupling::general(0.6, 0.8), Boundary::on_site}};
}

NonlinearitySpec rich_spec() {
    const double p[] = {0.0, 2.0, -1.0};
    const double q[] = {-1.0, 0.3};
    const double w[] = {0.2, 1.0, -0.5};
    return polynomial_spec("rich", p, q, 0.7, w);
}

PolarState random_state(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> amp(-0.3, 1.5), ang(-3.2, 3.2), unit(0.05, 0.95);
    PolarState s{Vec(n), Vec(n - 1), 0.0, unit(rng)};
    for (int i = 0; i < n; ++i) s.r(i) = amp(rng);
    for (int i = 0; i < n - 1; ++i) s.phi(i) = ang(rng);
    s.rho = ang(rng);
    return s;
}

} // namespace

TEST(Property, JacobianMatchesCentralDifferences) {
    const auto spec = rich_spec();
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> size(2, 9);
    std::uniform_real_distribution<double> eps_d(0.0, 0.3);
    for (const auto& cs : cases()) {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = size(rng);
            const auto s = random_state(rng, n);
            const LatticeSystem sys{spec, cs.c, eps_d(rng), cs.bc};
            const Mat jac = jacobian(sys, s);
            const Vec x = pack(s);
            for (int col = 0; col < x.size(); ++col) {
                const double h = 1e-6 * (1.0 + std::abs(x(col)));
                Vec xp = x, xm = x;
                xp(col) += h;
                xm(col) -= h;
                const Vec fd = (residual(sys, unpack(xp)) - residual(sys, unpack(xm))) / (2.0 * h);
                worst = std::max(worst, (fd - jac.col(col)).cwiseAbs().maxCoeff());
            }
        }
        EXPECT_LE(worst, 1e-6) << cs.name;
    }
}

TEST(Property, PolarAndComplexResidualsAgree) {
    const auto spec = rich_spec();
    std::mt19937_64 rng(7);
    for (const auto& cs : cases()) {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            auto s = random_state(rng, 2 + trial % 7);
            s.r = s.r.cwiseAbs().array() + 0.01;
            s.mu = 0.5;
            const LatticeSystem sys{spec, cs.c, 0.01, cs.bc};
            const Vec f = residual(sys, s);
            const CVec z = to_complex(s);
            const CVec g = complex_residual(sys, z, s.rho, s.mu);
            double theta = 0.0;
            for (int n = 0; n < s.size(); ++n) {
                if (n > 0) theta += s.phi(n - 1);
                const auto back = g(n) * std::polar(1.0, -theta);
                worst = std::max(worst, std::abs(back - std::complex<double>(f(2 * n), f(2 * n + 1))));
            }
        }
        EXPECT_LE(worst, 1e-12) << cs.name;
    }
}

TEST(Property, GaugeEquivariance) {
    const auto spec = rich_spec();
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 0.7);
    const auto rot = std::polar(1.0, 0.7);
    for (const auto& cs : cases()) {
        const LatticeSystem sys{spec, cs.c, 0.05, cs.bc};
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            CVec z(5);
            for (int n = 0; n < 5; ++n) z(n) = {g(rng), g(rng)};
            const CVec a = complex_residual(sys, rot * z, 0.3, 0.4);
            const CVec b = rot * complex_residual(sys, z, 0.3, 0.4);
            worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
        }
        EXPECT_LE(worst, 1e-12) << cs.name;
    }
}

TEST(Property, UncoupledCurvesHaveZeroResidual) {
    for (const char* name : {"quintic", "quintic_rotating", "hbm"}) {
        const auto spec = builtin_spec(name);
        const int N = 6;
        double worst = 0.0;
        for (int i = 0; i <= 240; ++i) {
            const double s = 2.0 * N * i / 240.0;
            for (auto bc : {Boundary::off_site, Boundary::on_site}) {
                const LatticeSystem sys{spec, Coupling::dissipative(), 0.0, bc};
                worst = std::max(worst, residual(sys, snaking_curve(spec, N, s)).cwiseAbs().maxCoeff());
            }
        }
        for (int k = 1; k <= N - 2; ++k) {
            for (int i = 0; i <= 40; ++i) {
                for (auto half : {IsolaHalf::lower, IsolaHalf::upper}) {
                    const LatticeSystem sys{spec, Coupling::conservative(), 0.0, Boundary::on_site};
                    worst = std::max(worst,
                                     residual(sys, isola_curve(spec, N, k, 0.05 * i, half)).cwiseAbs().maxCoeff());
                }
            }
        }
        // Absolute 1e-12 where the lambda monomials are O(1); hbm's reach ~4e3 at r_+, so there
        // the bound is relative to r^2 |lambda_r| at r_+.
        const double rp = bistable_roots(spec, 1.0).r_plus;
        const double scale = std::max(1.0, std::abs(spec.lam_r(rp, 1.0)) * rp * rp);
        EXPECT_LE(worst, 1e-12 * scale) << name;
    }
}

TEST(Property, BranchPointsAreRelativeEquilibria) {
    const auto spec = builtin_spec("quintic_rotating");
    const LatticeSystem sys{spec, Coupling::dissipative(), 0.01, Boundary::off_site};
    const auto a = uniform_ansatz(10, 1, RootChoice::minus, PhaseTemplate::in_phase, Boundary::off_site);
    const auto seed = newton_correct(sys, build_seed(spec, 0.5, 0.01, a, sys.c), ContinuationConfig{}).state;
    const auto br = trace_branch(sys, seed, ContinuationConfig{});
    ASSERT_GE(br.points.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        const auto& p = br.points[(br.points.size() - 1) * i / 4];
        EXPECT_LE(relative_equilibrium_check(sys, p.state), 1e-6) << "point " << i << " mu=" << p.state.mu;
    }
}

TEST(Property, Rk4ObservedOrder) {
    const auto spec = builtin_spec("quintic_rotating");
    CVec z0(5);
    using C = std::complex<double>;
    z0 << C(1.2, 0.1), C(0.9, -0.3), C(0.4, 0.5), C(0.1, 0.0), C(0.6, 0.2);
    const double T = 1.0;
    auto end = [&](double dt) {
        return integrate(spec, Coupling::general(0.6, 0.8), z0, 0.2, 0.4, T, dt, 1000000).z_samples.back();
    };
    const CVec ref = end(1.0 / 1280.0);
    const double e1 = (end(0.04) - ref).cwiseAbs().maxCoeff();
    const double e2 = (end(0.02) - ref).cwiseAbs().maxCoeff();
    const double e3 = (end(0.01) - ref).cwiseAbs().maxCoeff();
    const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
    EXPECT_GE(o1, 3.8);
    EXPECT_LE(o1, 4.2);
    EXPECT_GE(o2, 3.8);
    EXPECT_LE(o2, 4.2);
}

namespace {

double seed_gap(const LatticeSystem& sys, const SeedAnsatz& a, double mu) {
    const auto seed = build_seed(sys.spec, mu, sys.eps, a, sys.c);
    const auto res = newton_correct(sys, seed, ContinuationConfig{});
    return (res.state.r - seed.r).cwiseAbs().maxCoeff();
}

} // namespace

TEST(Property, SeedErrorIsSecondOrder) {
    const auto q = builtin_spec("quintic");
    struct SeedCase {
        const char* name;
        SeedAnsatz a;
        Coupling c;
    };
    SeedAnsatz mixed;
    mixed.N = 8;
    mixed.k = 3;
    mixed.bc = Boundary::off_site;
    mixed.pattern = {RootChoice::plus, RootChoice::minus, RootChoice::plus};
    const std::vector<SeedCase> list{
        {"plus3_off", uniform_ansatz(8, 3, RootChoice::plus, PhaseTemplate::in_phase, Boundary::off_site),
         Coupling::dissipative()},
        {"minus1_on", uniform_ansatz(8, 1, RootChoice::minus, PhaseTemplate::in_phase, Boundary::on_site),
         Coupling::dissipative()},
        {"mixed_off", mixed, Coupling::dissipative()},
        {"isola2_lower", isola_seed_ansatz(8, 2, IsolaHalf::lower), Coupling::conservative()},
        {"isola2_upper", isola_seed_ansatz(8, 2, IsolaHalf::upper), Coupling::conservative()},
    };
    for (const auto& sc : list) {
        const LatticeSystem s1{q, sc.c, 0.01, sc.a.bc};
        const LatticeSystem s2{q, sc.c, 0.005, sc.a.bc};
        const double ratio = seed_gap(s1, sc.a, 0.5) / seed_gap(s2, sc.a, 0.5);
        EXPECT_GE(ratio, 3.0) << sc.name;
        EXPECT_LE(ratio, 5.0) << sc.name;
    }
}
