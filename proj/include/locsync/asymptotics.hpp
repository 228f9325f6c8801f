#pragma once

// Leading-order asymptotics: seeds, far-field tails, the exact eps = 0 branches, fold
// predictors near mu = 0 and mu = 1, the frequency-mismatch obstruction and the
// conservative recruitment rule.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "locsync/errors.hpp"
#include "locsync/lattice.hpp"
#include "locsync/model.hpp"

namespace locsync {

enum class RootChoice { minus, plus };
enum class PhaseTemplate { in_phase, conservative };
enum class IsolaHalf { lower, upper };

inline const char* to_string(PhaseTemplate t) { return t == PhaseTemplate::in_phase ? "in_phase" : "conservative"; }
inline const char* to_string(IsolaHalf h) { return h == IsolaHalf::lower ? "lower" : "upper"; }

struct SeedAnsatz {
    int k = 1;
    std::vector<RootChoice> pattern;
    PhaseTemplate phase_template = PhaseTemplate::in_phase;
    Boundary bc = Boundary::off_site;
    int N = 2;
    // Conservative template: phi_n = -pi/2 for n < plus_interface, +pi/2 for n >= plus_interface.
    // Defaults to k, the interface between the last core node and the tail.
    std::optional<int> plus_interface;

    void validate() const {
        if (N < 2) throw RangeError("SeedAnsatz: need N >= 2");
        if (k < 1 || k > N - 1) throw RangeError("SeedAnsatz: need 1 <= k <= N-1");
        if (static_cast<int>(pattern.size()) != k) throw RangeError("SeedAnsatz: pattern length must equal k");
        if (plus_interface && (*plus_interface < 1 || *plus_interface > N - 1)) {
            throw RangeError("SeedAnsatz: plus_interface must lie in [1, N-1]");
        }
    }

    std::string describe() const {
        std::string p;
        for (auto c : pattern) p += c == RootChoice::plus ? '+' : '-';
        std::string s = "k=" + std::to_string(k) + " pattern=" + p + " template=" + to_string(phase_template) +
                        " bc=" + to_string(bc) + " N=" + std::to_string(N);
        if (plus_interface) s += " plus_interface=" + std::to_string(*plus_interface);
        return s;
    }
};

inline SeedAnsatz uniform_ansatz(int N, int k, RootChoice root, PhaseTemplate t, Boundary bc) {
    SeedAnsatz a;
    a.N = N;
    a.k = k;
    a.pattern.assign(std::max(k, 0), root);
    a.phase_template = t;
    a.bc = bc;
    a.validate();
    return a;
}

/// Seed pattern for a point of the isola Gamma_k at mid-window (see isola_curve).
inline SeedAnsatz isola_seed_ansatz(int N, int k_iso, IsolaHalf half, Boundary bc = Boundary::on_site) {
    SeedAnsatz a;
    a.N = N;
    a.bc = bc;
    a.phase_template = PhaseTemplate::conservative;
    const int plus = half == IsolaHalf::lower ? k_iso : k_iso + 1;
    a.pattern.assign(std::max(plus, 0), RootChoice::plus);
    a.pattern.push_back(RootChoice::minus);
    a.k = static_cast<int>(a.pattern.size());
    a.plus_interface = k_iso + 1;
    a.validate();
    return a;
}

namespace detail {

struct RootPair {
    double minus = 0.0;
    double plus = 0.0;
};

// r_-(mu), r_+(mu) on the closed window [0, 1]; r_-(0) = 0 at the pitchfork and r_-(1) = r_+(1).
inline RootPair closed_window_roots(const NonlinearitySpec& spec, double mu) {
    if (mu < 0.0 || mu > 1.0) throw RangeError("mu outside [0, 1]");
    if (mu == 0.0) {
        const auto scan = positive_roots(spec, 0.0);
        if (scan.roots.empty()) throw NotBistable("no positive root at mu = 0");
        return {0.0, scan.roots.back()};
    }
    const auto p = bistable_roots(spec, mu);
    return {p.r_minus, p.r_plus};
}

inline double tent(double s) { return s <= 1.0 ? s : 2.0 - s; }

// Core amplitude profile r0 (zeros beyond the core) for an ansatz.
inline Vec core_profile(const NonlinearitySpec& spec, double mu, const SeedAnsatz& a) {
    const auto prof = bistable_roots(spec, mu);
    Vec r0 = Vec::Zero(a.N);
    for (int n = 0; n < a.k; ++n) r0(n) = a.pattern[n] == RootChoice::plus ? prof.r_plus : prof.r_minus;
    return r0;
}

// Order-eps amplitude correction -(c_re A0 - c_im B0) / (lambda + r lambda_r) on the core.
inline Vec amplitude_correction(const NonlinearitySpec& spec, double mu, const Vec& r0, const Vec& phi0, int k,
                                const Coupling& c, Boundary bc) {
    PolarState s{r0, phi0, 0.0, mu};
    const auto g = ghost_values(s, bc);
    const int n = s.size();
    Vec sigma = Vec::Zero(k);
    for (int i = 0; i < k; ++i) {
        const double r_next = i + 1 < n ? r0(i + 1) : g.r_right;
        const double p_next = i + 1 < n ? phi0(i) : g.phi_right;
        const double r_prev = i > 0 ? r0(i - 1) : g.r0;
        const double p_prev = i > 0 ? phi0(i - 1) : g.phi0;
        const double a = r_next * std::cos(p_next) - 2.0 * r0(i) + r_prev * std::cos(p_prev);
        const double b = r_next * std::sin(p_next) - r_prev * std::sin(p_prev);
        const double den = spec.lam(r0(i), mu) + r0(i) * spec.lam_r(r0(i), mu);
        if (std::abs(den) < 1e-12) throw DegenerateDenominator("core correction: lambda + r lambda_r vanishes");
        sigma(i) = -(c.re * a - c.im * b) / den;
    }
    return sigma;
}

// Leading-order phase system of the dissipative core:
//   0 = (omega1(r_n) - Omega) r_n + r_{n+1} s_n - r_{n-1} s_{n-1},  n = 1..k,
// unknowns (Omega, s_1..s_{k-1}) with s = sin(phi). Returns (Omega, s).
struct PhaseSolution {
    double omega = 0.0;
    Vec s;
};

inline Mat phase_system_matrix(const Vec& r0, int k, Boundary bc) {
    Mat m = Mat::Zero(k, k);
    for (int n = 0; n < k; ++n) {
        m(n, 0) = -r0(n);
        if (n + 1 < k) m(n, n + 1) += r0(n + 1);
        if (n > 0) m(n, n) -= r0(n - 1);
    }
    if (bc == Boundary::on_site && k >= 2) m(0, 1) += r0(1);  // -r_0 sin(phi_0) = r_2 sin(phi_1)
    return m;
}

inline PhaseSolution solve_phase_system(const NonlinearitySpec& spec, double mu, const Vec& r0, int k, Boundary bc) {
    const Mat m = phase_system_matrix(r0, k, bc);
    Vec rhs(k);
    for (int n = 0; n < k; ++n) rhs(n) = -spec.omega1(r0(n), mu, 0.0) * r0(n);
    Eigen::FullPivLU<Mat> lu(m);
    if (!lu.isInvertible()) throw SingularJacobian("leading-order phase system is singular");
    const Vec x = lu.solve(rhs);
    return {x(0), x.tail(k - 1)};
}

} // namespace detail

/// eps-order amplitude correction of the dissipative in-phase core (length k).
inline Vec core_correction(const NonlinearitySpec& spec, double mu, const std::vector<RootChoice>& pattern,
                           Boundary bc, int N = -1) {
    if (!(mu > 0.0 && mu < 1.0)) throw RangeError("core_correction: mu outside (0, 1)");
    const int k = static_cast<int>(pattern.size());
    if (k < 1) throw RangeError("core_correction: empty pattern");
    SeedAnsatz a;
    a.k = k;
    a.pattern = pattern;
    a.N = std::max(N, k + 1);
    a.bc = bc;
    a.validate();
    const Vec r0 = detail::core_profile(spec, mu, a);
    return detail::amplitude_correction(spec, mu, r0, Vec::Zero(a.N - 1), k, Coupling::dissipative(), bc);
}

/// Geometric tail r_n = (eps / lambda(0, mu))^(n-k) r0_k (-1)^(n-k) for nodes k+1..N.
inline Vec farfield_tail(const NonlinearitySpec& spec, double mu, double eps, int k, int N, double r0_k) {
    if (eps < 0.0) throw RangeError("farfield_tail: eps must be >= 0");
    if (k < 1 || k > N) throw RangeError("farfield_tail: need 1 <= k <= N");
    const double l0 = spec.lam(0.0, mu);
    if (std::abs(l0) < 1e-12) throw DegenerateDenominator("farfield_tail: lambda(0, mu) vanishes");
    Vec tail(N - k);
    double v = r0_k;
    for (int m = 0; m < N - k; ++m) {
        v *= -eps / l0;
        tail(m) = v;
    }
    return tail;
}

/// Leading-order seed: core roots plus eps corrections, far-field tail, templated phases, and the
/// frequency minimizing the core phase-equation residual.
inline PolarState build_seed(const NonlinearitySpec& spec, double mu, double eps, const SeedAnsatz& a,
                             const Coupling& c) {
    a.validate();
    if (!(mu > 0.0 && mu < 1.0)) throw RangeError("build_seed: mu outside (0, 1)");
    if (eps < 0.0) throw RangeError("build_seed: eps must be >= 0");
    const int N = a.N, k = a.k;
    const Vec r0 = detail::core_profile(spec, mu, a);

    Vec phi = Vec::Zero(N - 1);
    if (a.phase_template == PhaseTemplate::conservative) {
        const int m = a.plus_interface.value_or(k);
        for (int j = 1; j <= N - 1; ++j) phi(j - 1) = j < m ? -std::numbers::pi / 2 : std::numbers::pi / 2;
    } else if (!spec.frequency_matched() && k >= 2) {
        const auto ps = detail::solve_phase_system(spec, mu, r0, k, a.bc);
        for (int j = 0; j < k - 1; ++j) phi(j) = std::asin(std::clamp(ps.s(j), -1.0, 1.0));
    }

    PolarState s{r0, phi, spec.omega_base(mu), mu};
    const Vec sigma = detail::amplitude_correction(spec, mu, r0, phi, k, c, a.bc);
    for (int n = 0; n < k; ++n) s.r(n) = r0(n) + eps * sigma(n);
    if (k < N) {
        const Vec tail = farfield_tail(spec, mu, eps, k, N, r0(k - 1));
        for (int n = k; n < N; ++n) {
            const double sg = std::sin(phi(n - 1));
            const double sign = a.phase_template == PhaseTemplate::conservative ? (sg < 0 ? -1.0 : 1.0) : 1.0;
            s.r(n) = sign * tail(n - k);
        }
    }

    // rho from least squares on the core phase rows.
    LatticeSystem sys{spec, c, eps, a.bc};
    s.rho = 0.0;
    const Vec f0 = residual(sys, s);  // phase rows = (omega - 0) r + eps P
    double num = 0.0, den = 0.0;
    for (int n = 0; n < k; ++n) {
        num += s.r(n) * f0(2 * n + 1);
        den += s.r(n) * s.r(n);
    }
    s.rho = den > 0.0 ? num / den : spec.omega_base(mu);
    return s;
}

/// Point of the exact eps = 0 snaking branch; s in [0, 2N] concatenates the segments
/// k = 0..N-1 with local parameter in [0, 2].
inline PolarState snaking_curve(const NonlinearitySpec& spec, int N, double s) {
    if (N < 2) throw RangeError("snaking_curve: need N >= 2");
    if (!(s >= 0.0 && s <= 2.0 * N)) throw RangeError("snaking_curve: s outside [0, 2N]");
    int seg = std::min(static_cast<int>(std::floor(s / 2.0)), N - 1);
    const double loc = s - 2.0 * seg;
    const double mu = detail::tent(loc);
    const auto roots = detail::closed_window_roots(spec, mu);
    PolarState p{Vec::Zero(N), Vec::Zero(N - 1), spec.omega_base(mu), mu};
    for (int n = 0; n < seg; ++n) p.r(n) = roots.plus;
    p.r(seg) = loc <= 1.0 ? roots.minus : roots.plus;
    return p;
}

/// Point of the exact eps = 0 isola Gamma_k, s in [0, 2].
inline PolarState isola_curve(const NonlinearitySpec& spec, int N, int k, double s, IsolaHalf half) {
    if (k < 1 || k > N - 2) throw RangeError("isola_curve: need 1 <= k <= N-2");
    if (!(s >= 0.0 && s <= 2.0)) throw RangeError("isola_curve: s outside [0, 2]");
    const double mu = detail::tent(s);
    const auto roots = detail::closed_window_roots(spec, mu);
    auto r0 = [&](double t) { return t <= 1.0 ? roots.minus : roots.plus; };
    PolarState p{Vec::Zero(N), Vec::Zero(N - 1), spec.omega_base(mu), mu};
    for (int n = 0; n < k; ++n) p.r(n) = roots.plus;
    if (half == IsolaHalf::lower) {
        p.r(k) = r0(s);
    } else {
        p.r(k) = r0(2.0 - s);
        p.r(k + 1) = roots.minus;
    }
    for (int j = 0; j < k; ++j) p.phi(j) = -std::numbers::pi / 2;
    p.phi(k) = std::numbers::pi / 2;
    return p;
}

struct FoldPrediction {
    double mu = 0.0;
    double amplitude = 0.0;    // amplitude of the folding node
    std::string correction;    // order of the neglected term in mu
};

/// Folds near mu = 1: mu = 1 - eps (1 + O(sqrt(eps))).
inline FoldPrediction fold_prediction_mu1(double eps) {
    if (eps < 0.0) throw RangeError("fold_prediction_mu1: eps must be >= 0");
    return {1.0 - eps, 1.0, "O(eps^1.5)"};
}

inline constexpr double kRecruitmentConstant = 1.5 * 1.2599210498948732;  // (3/2) 2^(1/3)

/// Recruitment folds near mu = 0 in normal-form units: mu = (3/2) 2^(1/3) eps^(2/3).
inline FoldPrediction fold_prediction_mu0(double eps) {
    if (eps < 0.0) throw RangeError("fold_prediction_mu0: eps must be >= 0");
    return {kRecruitmentConstant * std::cbrt(eps * eps), std::cbrt(eps) / std::cbrt(2.0), "O(eps)"};
}

/// The same fold with the model's own scales: for lambda(r, mu) ~ -m mu + a r^2 near the origin
/// and r_+(0) = b, mu = (3/2) 2^(1/3) a^(1/3) b^(2/3) eps^(2/3) / m - 2 eps / m.
inline FoldPrediction fold_prediction_mu0_model(const NonlinearitySpec& spec, double eps) {
    if (eps < 0.0) throw RangeError("fold_prediction_mu0_model: eps must be >= 0");
    const double h = 1e-4;
    const double a = (spec.lam(h, 0.0) - spec.lam(0.0, 0.0)) / (h * h);
    const double m = -spec.lam_mu(0.0, 0.0);
    if (!(a > 0.0) || !(m > 0.0)) throw DegenerateDenominator("fold_prediction_mu0_model: not a subcritical pitchfork");
    const double b = detail::closed_window_roots(spec, 0.0).plus;
    const double scale = std::cbrt(a) * std::cbrt(b * b) / m;
    return {kRecruitmentConstant * scale * std::cbrt(eps * eps) - 2.0 * eps / m,
            std::cbrt(b * eps / (2.0 * a)), "O(eps^(4/3))"};
}

enum class Chart { eps_chart, mu_chart };

struct ChartPrediction {
    Chart chart = Chart::eps_chart;
    double s = 0.0;
    double mu = 0.0;
    double eps = 0.0;
    double amplitude = 0.0;
    bool fold_flag = false;
};

/// Chart eps~ = 1 near mu = 0: mu = ((1 + s^3)/s) eps^(2/3), r_k = s eps^(1/3).
inline ChartPrediction eps_chart_point(double s, double eps) {
    if (!(s > 0.0)) throw RangeError("eps_chart_point: need s > 0");
    ChartPrediction p;
    p.chart = Chart::eps_chart;
    p.s = s;
    p.eps = eps;
    p.mu = (1.0 + s * s * s) / s * std::cbrt(eps * eps);
    p.amplitude = s * std::cbrt(eps);
    p.fold_flag = std::abs(s - 1.0 / std::cbrt(2.0)) < 1e-12;
    return p;
}

/// Chart mu~ = 2 near mu = 0: eps = s (2 - s^2) mu^(3/2) / 2^(3/2), r_k = s sqrt(2 mu) / 2.
inline ChartPrediction mu_chart_point(double s, double mu) {
    if (mu < 0.0) throw RangeError("mu_chart_point: need mu >= 0");
    ChartPrediction p;
    p.chart = Chart::mu_chart;
    p.s = s;
    p.mu = mu;
    p.eps = s * (2.0 - s * s) * std::pow(mu, 1.5) / std::pow(2.0, 1.5);
    p.amplitude = s * std::sqrt(2.0 * mu) / 2.0;
    p.fold_flag = std::abs(s - std::sqrt(2.0 / 3.0)) < 1e-12;
    return p;
}

/// Positive parameters where the eps~ = 1 chart reaches mu~ = 2: positive roots of s^3 - 2 s + 1.
inline std::vector<double> chart_overlap_roots() {
    Mat companion = Mat::Zero(3, 3);
    companion(0, 1) = 2.0;   // s^3 = 0 s^2 + 2 s - 1
    companion(0, 2) = -1.0;
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    Eigen::EigenSolver<Mat> es(companion);
    std::vector<double> out;
    for (int i = 0; i < 3; ++i) {
        const auto ev = es.eigenvalues()(i);
        if (std::abs(ev.imag()) < 1e-12 && ev.real() > 0.0) {
            double x = ev.real();
            for (int it = 0; it < 3; ++it) x -= (x * x * x - 2.0 * x + 1.0) / (3.0 * x * x - 2.0);
            out.push_back(x);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct MismatchReport {
    double mu = 0.0;
    double r_minus = 0.0;
    double r_plus = 0.0;
    double delta = 0.0;
    double threshold = 0.0;
    bool obstructed = false;
    double sin_phi_inf = 0.0;
    bool real_solution = true;   // |sin_phi_inf| <= 1
    bool order_one_mismatch = false;
};

inline MismatchReport mismatch_bound(const NonlinearitySpec& spec, double mu) {
    if (!(mu > 0.0 && mu < 1.0)) throw RangeError("mismatch_bound: mu outside (0, 1)");
    const auto p = bistable_roots(spec, mu);
    MismatchReport m;
    m.mu = mu;
    m.r_minus = p.r_minus;
    m.r_plus = p.r_plus;
    const double w_minus = spec.omega1(p.r_minus, mu, 0.0);
    const double w_plus = spec.omega1(p.r_plus, mu, 0.0);
    m.delta = std::abs(w_minus - w_plus);
    m.threshold = p.r_plus / p.r_minus;
    m.obstructed = m.delta > m.threshold;
    m.sin_phi_inf = p.r_minus / p.r_plus * (w_minus - w_plus);
    m.real_solution = std::abs(m.sin_phi_inf) <= 1.0;
    m.order_one_mismatch = std::abs(spec.omega(p.r_minus, mu, 0.0) - spec.omega(p.r_plus, mu, 0.0)) > 1e-10;
    return m;
}

/// Interface value sin(phi_k) of the leading-order phase system for k nodes at r_+ followed by
/// one node at r_- (off-site left end).
inline double mismatch_phase_exact(const NonlinearitySpec& spec, double mu, int k) {
    if (k < 1) throw RangeError("mismatch_phase_exact: need k >= 1");
    const auto p = bistable_roots(spec, mu);
    Vec r0(k + 1);
    r0.head(k).setConstant(p.r_plus);
    r0(k) = p.r_minus;
    return detail::solve_phase_system(spec, mu, r0, k + 1, Boundary::off_site).s(k - 1);
}

/// Node predicted to fold first near mu = 1 on a conservative pattern with k active nodes:
/// kappa = -1 (all phase differences -pi/2) -> k, kappa = +1 (last one +pi/2) -> k - 1.
inline int conservative_recruitment(int kappa, int k) {
    if (k < 2) throw RangeError("conservative_recruitment: need k >= 2");
    if (kappa == -1) return k;
    if (kappa == 1) return k - 1;
    throw RangeError("conservative_recruitment: kappa must be -1 or +1");
}

/// Recruitment near mu = 0: phi_{k-1} = +pi/2 recruits node k; phi_{k-1} = -pi/2 with
/// phi_k = +pi/2 recruits node k+1. Arguments are the signs of sin(phi_{k-1}), sin(phi_k).
inline int conservative_recruitment_mu0(int sign_phi_km1, int sign_phi_k, int k) {
    if (k < 2) throw RangeError("conservative_recruitment_mu0: need k >= 2");
    if (sign_phi_km1 == 1) return k;
    if (sign_phi_km1 == -1 && sign_phi_k == 1) return k + 1;
    throw RangeError("conservative_recruitment_mu0: no recruitment rule for this phase pattern");
}

struct PhaseBlockReport {
    double printed = 0.0;    // closed-form value as printed
    double numeric = 0.0;    // determinant of the assembled phase-equation block
    bool nonsingular = false;
};

/// Core phase-block determinant. `r0` holds the k core roots; the ghost r0_0 follows the boundary.
inline PhaseBlockReport phase_block_determinant(const Vec& r0, Boundary bc) {
    const int k = static_cast<int>(r0.size());
    if (k < 1) throw RangeError("phase_block_determinant: need k >= 1");
    const double ghost = bc == Boundary::off_site ? r0(0) : (k >= 2 ? r0(1) : 0.0);
    double prod = 1.0;
    for (int n = 0; n + 1 < k; ++n) prod *= r0(n);
    double sum = 0.0;
    for (int n = 0; n < k; ++n) sum += r0(n) * r0(n);
    const double sign = (k + 1) % 2 == 0 ? 1.0 : -1.0;
    PhaseBlockReport rep;
    rep.printed = bc == Boundary::off_site ? sign * prod * (ghost * ghost + sum)
                                           : sign * (ghost * ghost + 2.0 * sum) * prod;

    // Phase rows of the eps = 1 Jacobian at phi = 0 against the columns (rho, phi_1..phi_{k-1}).
    const int N = k + 1;
    PolarState s{Vec::Zero(N), Vec::Zero(N - 1), 0.0, 0.5};
    s.r.head(k) = r0;
    const double p[] = {0.0, 2.0, -1.0};
    const double q[] = {-1.0};
    LatticeSystem sys{polynomial_spec("block", p, q), Coupling::dissipative(), 1.0, bc};
    const Mat jac = jacobian(sys, s);
    Mat block(k, k);
    for (int n = 0; n < k; ++n) {
        block(n, 0) = jac(2 * n + 1, rho_col(N));
        for (int j = 1; j < k; ++j) block(n, j) = jac(2 * n + 1, phi_col(N, j - 1));
    }
    rep.numeric = block.determinant();
    rep.nonsingular = std::abs(rep.numeric) > 1e-8;
    return rep;
}

} // namespace locsync
