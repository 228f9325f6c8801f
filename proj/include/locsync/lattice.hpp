#pragma once

// Steady-state polar system of the N-node chain
//
//   0 = lambda(r_n) r_n + eps (c_re A_n - c_im B_n)
//   0 = (omega(r_n) - rho) r_n + eps (c_re B_n + c_im A_n)
//
// with A_n = r_{n+1} cos phi_n - 2 r_n + r_{n-1} cos phi_{n-1} and
//      B_n = r_{n+1} sin phi_n - r_{n-1} sin phi_{n-1}.
// Rows are interleaved per node (amplitude, phase). Unknowns are packed as
// x = (r_1..r_N, phi_1..phi_{N-1}, rho, mu).

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "locsync/errors.hpp"
#include "locsync/model.hpp"

namespace locsync {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;

struct PolarState {
    Vec r;
    Vec phi;
    double rho = 0.0;
    double mu = 0.0;

    int size() const { return static_cast<int>(r.size()); }

    void check() const {
        if (r.size() < 1 || phi.size() != r.size() - 1) {
            throw DimensionError("PolarState: need len(phi) = len(r) - 1, got " + std::to_string(r.size()) +
                                 " amplitudes and " + std::to_string(phi.size()) + " phases");
        }
    }

    bool finite() const { return r.allFinite() && phi.allFinite() && std::isfinite(rho) && std::isfinite(mu); }
};

enum class Boundary { on_site, off_site };

inline const char* to_string(Boundary b) { return b == Boundary::on_site ? "on_site" : "off_site"; }

/// Unit-modulus coupling constant c = c_re + i c_im.
struct Coupling {
    double re = 1.0;
    double im = 0.0;

    static Coupling dissipative() { return {1.0, 0.0}; }
    static Coupling conservative() { return {0.0, 1.0}; }
    static Coupling general(double re, double im) {
        if (std::abs(re * re + im * im - 1.0) > 1e-12) {
            throw RangeError("coupling constant must have modulus 1");
        }
        return {re, im};
    }
    std::complex<double> value() const { return {re, im}; }
};

/// The lattice problem: nonlinearity, coupling constant, coupling strength and left boundary.
struct LatticeSystem {
    NonlinearitySpec spec;
    Coupling c = Coupling::dissipative();
    double eps = 0.0;
    Boundary bc = Boundary::off_site;
};

// Index helpers for the packed unknown vector.
inline int unknown_count(int n) { return 2 * n + 1; }
inline int phi_col(int n, int j) { return n + j; }  // j = 0-based phase index
inline int rho_col(int n) { return 2 * n - 1; }
inline int mu_col(int n) { return 2 * n; }

inline Vec pack(const PolarState& s) {
    const int n = s.size();
    Vec x(unknown_count(n));
    x.head(n) = s.r;
    x.segment(n, n - 1) = s.phi;
    x(rho_col(n)) = s.rho;
    x(mu_col(n)) = s.mu;
    return x;
}

inline PolarState unpack(const Vec& x) {
    const int n = static_cast<int>((x.size() - 1) / 2);
    PolarState s;
    s.r = x.head(n);
    s.phi = x.segment(n, n - 1);
    s.rho = x(rho_col(n));
    s.mu = x(mu_col(n));
    return s;
}

struct Ghosts {
    double r0 = 0.0;
    double phi0 = 0.0;
    double r_right = 0.0;
    double phi_right = 0.0;
};

inline Ghosts ghost_values(const PolarState& s, Boundary bc) {
    s.check();
    if (s.size() < 2) throw DimensionError("ghost_values: need N >= 2");
    Ghosts g;
    if (bc == Boundary::on_site) {
        g.r0 = s.r(1);
        g.phi0 = -s.phi(0);
    } else {
        g.r0 = s.r(0);
        g.phi0 = 0.0;
    }
    g.r_right = s.r(s.size() - 1);
    g.phi_right = 0.0;
    return g;
}

inline Vec residual(const LatticeSystem& sys, const PolarState& s) {
    s.check();
    const int n = s.size();
    const auto g = ghost_values(s, sys.bc);
    Vec f(2 * n);
    for (int i = 0; i < n; ++i) {
        const double r = s.r(i);
        const double r_next = i + 1 < n ? s.r(i + 1) : g.r_right;
        const double phi_next = i + 1 < n ? s.phi(i) : g.phi_right;
        const double r_prev = i > 0 ? s.r(i - 1) : g.r0;
        const double phi_prev = i > 0 ? s.phi(i - 1) : g.phi0;
        const double a = r_next * std::cos(phi_next) - 2.0 * r + r_prev * std::cos(phi_prev);
        const double b = r_next * std::sin(phi_next) - r_prev * std::sin(phi_prev);
        f(2 * i) = sys.spec.lam(r, s.mu) * r + sys.eps * (sys.c.re * a - sys.c.im * b);
        f(2 * i + 1) = (sys.spec.omega(r, s.mu, sys.eps) - s.rho) * r + sys.eps * (sys.c.re * b + sys.c.im * a);
    }
    return f;
}

/// Analytic derivatives of `residual` with respect to (r, phi, rho) and, in the last column, mu.
inline Mat jacobian(const LatticeSystem& sys, const PolarState& s) {
    s.check();
    const int n = s.size();
    if (n < 2) throw DimensionError("jacobian: need N >= 2");
    const auto g = ghost_values(s, sys.bc);
    const bool on_site = sys.bc == Boundary::on_site;
    Mat jac = Mat::Zero(2 * n, unknown_count(n));

    for (int i = 0; i < n; ++i) {
        const int amp = 2 * i, ph = 2 * i + 1;
        const double r = s.r(i);
        const double mu = s.mu;

        // Accumulates eps * c * (dA + i dB) into column col.
        auto couple = [&](int col, double da, double db) {
            jac(amp, col) += sys.eps * (sys.c.re * da - sys.c.im * db);
            jac(ph, col) += sys.eps * (sys.c.re * db + sys.c.im * da);
        };

        couple(i, -2.0, 0.0);

        // Right neighbour: r_{N+1} = r_N and phi_N = 0 at the right end.
        if (i + 1 < n) {
            const double rn = s.r(i + 1), p = s.phi(i);
            couple(i + 1, std::cos(p), std::sin(p));
            couple(phi_col(n, i), -rn * std::sin(p), rn * std::cos(p));
        } else {
            couple(i, std::cos(g.phi_right), std::sin(g.phi_right));
        }

        // Left neighbour, with ghost chain rules at n = 1.
        if (i > 0) {
            const double rp = s.r(i - 1), p = s.phi(i - 1);
            couple(i - 1, std::cos(p), -std::sin(p));
            couple(phi_col(n, i - 1), -rp * std::sin(p), -rp * std::cos(p));
        } else if (on_site) {
            const double p = g.phi0;  // phi_0 = -phi_1, r_0 = r_2
            couple(1, std::cos(p), -std::sin(p));
            couple(phi_col(n, 0), g.r0 * std::sin(p), g.r0 * std::cos(p));
        } else {
            couple(0, 1.0, 0.0);  // r_0 = r_1, phi_0 = 0
        }

        jac(amp, i) += sys.spec.lam(r, mu) + r * sys.spec.lam_r(r, mu);
        jac(amp, mu_col(n)) += sys.spec.lam_mu(r, mu) * r;
        jac(ph, i) += (sys.spec.omega(r, mu, sys.eps) - s.rho) + r * sys.spec.omega_r(r, mu, sys.eps);
        jac(ph, rho_col(n)) += -r;
        jac(ph, mu_col(n)) += sys.spec.omega_mu(r, mu, sys.eps) * r;
    }
    return jac;
}

/// z_n = r_n exp(i theta_n) with theta_1 = 0 and theta_{n+1} = theta_n + phi_n.
inline CVec to_complex(const PolarState& s) {
    s.check();
    CVec z(s.size());
    double theta = 0.0;
    for (int i = 0; i < s.size(); ++i) {
        if (i > 0) theta += s.phi(i - 1);
        z(i) = std::polar(s.r(i), theta);
    }
    return z;
}

/// Complex form f(|z_n|) z_n - i rho z_n + eps c (z_{n+1} - 2 z_n + z_{n-1}) with the same ghosts.
inline CVec complex_residual(const LatticeSystem& sys, const CVec& z, double rho, double mu) {
    const auto n = z.size();
    if (n < 2) throw DimensionError("complex_residual: need N >= 2");
    const std::complex<double> i1(0.0, 1.0);
    const auto c = sys.c.value();
    CVec out(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto zp = k > 0 ? z(k - 1) : (sys.bc == Boundary::on_site ? z(1) : z(0));
        const auto zn = k + 1 < n ? z(k + 1) : z(n - 1);
        const double a = std::abs(z(k));
        const std::complex<double> f(sys.spec.lam(a, mu), sys.spec.omega(a, mu, sys.eps));
        out(k) = f * z(k) - i1 * rho * z(k) + sys.eps * c * (zn - 2.0 * z(k) + zp);
    }
    return out;
}

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::remainder(a, two_pi);
    if (w <= -std::numbers::pi) w += two_pi;
    return w;
}

/// Canonical representative: negative amplitudes flipped (adjacent phase differences shifted
/// by pi), phases wrapped into (-pi, pi]. `flipped`, if given, receives the flip mask.
inline PolarState canonicalize(PolarState s, std::vector<bool>* flipped = nullptr) {
    s.check();
    const int n = s.size();
    if (flipped) flipped->assign(n, false);
    for (int i = 0; i < n; ++i) {
        if (s.r(i) < 0.0) {
            s.r(i) = -s.r(i);
            if (i > 0) s.phi(i - 1) += std::numbers::pi;
            if (i + 1 < n) s.phi(i) -= std::numbers::pi;
            if (flipped) (*flipped)[i] = true;
        }
    }
    for (int j = 0; j < n - 1; ++j) s.phi(j) = wrap_angle(s.phi(j));
    return s;
}

} // namespace locsync
