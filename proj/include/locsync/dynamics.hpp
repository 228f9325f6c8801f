#pragma once

// Time-domain checks: fixed-step RK4 on the complex oscillator chain, relative-equilibrium
// verification and the spectrum of the co-rotating linearization.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "locsync/errors.hpp"
#include "locsync/lattice.hpp"
#include "locsync/model.hpp"

namespace locsync {

struct Trajectory {
    std::vector<double> times;
    std::vector<CVec> z_samples;
    double dt = 0.0;
    int order = 4;
    bool aborted = false;
};

/// Right-hand side f(|Z_n|) Z_n - i rho Z_n + eps c (Z_{n+1} - 2 Z_n + Z_{n-1}).
/// The right end always uses Z_{N+1} = Z_N; the left end follows `left`.
inline CVec chain_field(const NonlinearitySpec& spec, const Coupling& c, double eps, double mu, double rho,
                        const CVec& z, Boundary left = Boundary::off_site) {
    const auto n = z.size();
    const auto cc = c.value();
    CVec out(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto zp = k > 0 ? z(k - 1) : (left == Boundary::on_site && n > 1 ? z(1) : z(0));
        const auto zn = k + 1 < n ? z(k + 1) : z(n - 1);
        const double a = std::abs(z(k));
        const std::complex<double> f(spec.lam(a, mu), spec.omega(a, mu, eps) - rho);
        out(k) = f * z(k) + eps * cc * (zn - 2.0 * z(k) + zp);
    }
    return out;
}

/// Classical RK4 with fixed step dt up to time T (the final step is shortened to land on T).
/// Every `stride`-th state and the final state are sampled.
inline Trajectory integrate(const NonlinearitySpec& spec, const Coupling& c, const CVec& z0, double eps, double mu,
                            double T, double dt, int stride = 1) {
    if (!(dt > 0.0)) throw RangeError("integrate: dt must be positive");
    if (!(T >= dt)) throw RangeError("integrate: need T >= dt");
    if (stride < 1) throw RangeError("integrate: stride must be >= 1");
    Trajectory tr;
    tr.dt = dt;
    CVec z = z0;
    double t = 0.0;
    tr.times.push_back(t);
    tr.z_samples.push_back(z);
    auto f = [&](const CVec& y) { return chain_field(spec, c, eps, mu, 0.0, y); };
    const long steps = static_cast<long>(std::ceil(T / dt - 1e-9));
    for (long s = 1; s <= steps; ++s) {
        const double h = s == steps ? T - t : dt;
        const CVec k1 = f(z);
        const CVec k2 = f(z + 0.5 * h * k1);
        const CVec k3 = f(z + 0.5 * h * k2);
        const CVec k4 = f(z + h * k3);
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = s == steps ? T : s * dt;
        if (!z.allFinite()) {
            tr.aborted = true;
            break;
        }
        if (s % stride == 0 || s == steps) {
            tr.times.push_back(t);
            tr.z_samples.push_back(z);
        }
    }
    return tr;
}

/// Reflects a half-lattice state into the full symmetric chain: off-site -> 2N nodes
/// (z_N..z_1, z_1..z_N), on-site -> 2N-1 nodes (z_N..z_2, z_1, z_2..z_N).
inline CVec unfold(const PolarState& s, Boundary bc) {
    const CVec half = to_complex(s);
    const auto n = half.size();
    const auto m = bc == Boundary::off_site ? 2 * n : 2 * n - 1;
    CVec full(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        full(m - n + i) = half(i);
        full(n - 1 - i) = half(i);
    }
    return full;
}

/// max_t || Z(t) - exp(i rho t) z0 ||_inf over the samples.
inline double rotation_deviation(const Trajectory& tr, const CVec& z0, double rho) {
    double dev = 0.0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const auto rot = std::polar(1.0, rho * tr.times[i]);
        dev = std::max(dev, (tr.z_samples[i] - rot * z0).cwiseAbs().maxCoeff());
    }
    return dev;
}

inline double rotation_period(double rho) {
    if (std::abs(rho) < 1e-6) throw PeriodUndefined("rotation period undefined for |rho| < 1e-6");
    return 2.0 * std::numbers::pi / std::abs(rho);
}

/// Deviation of the trajectory from a rigid rotation; requires a defined rotation period.
inline double verify_relative_equilibrium(const Trajectory& tr, const CVec& z0, double rho) {
    rotation_period(rho);
    return rotation_deviation(tr, z0, rho);
}

/// Unfolds a lattice state, integrates it for one rotation period and returns the deviation.
inline double relative_equilibrium_check(const LatticeSystem& sys, const PolarState& s, double dt = 1e-3) {
    const double T = rotation_period(s.rho);
    const CVec z0 = unfold(s, sys.bc);
    const auto tr = integrate(sys.spec, sys.c, z0, sys.eps, s.mu, T, dt, 10);
    if (tr.aborted) return std::numeric_limits<double>::infinity();
    return verify_relative_equilibrium(tr, z0, s.rho);
}

/// Eigenvalues of the real 2N x 2N Jacobian of the co-rotating half-lattice field at a state.
/// Unknowns are ordered (Re z_1, Im z_1, ..., Re z_N, Im z_N).
inline Eigen::VectorXcd linearization_spectrum(const LatticeSystem& sys, const PolarState& s) {
    s.check();
    const CVec z = to_complex(s);
    const int n = static_cast<int>(z.size());
    Mat jac = Mat::Zero(2 * n, 2 * n);
    const auto cc = sys.c.value();
    auto add_complex = [&](int row, int col, std::complex<double> w) {
        jac(2 * row, 2 * col) += w.real();
        jac(2 * row, 2 * col + 1) -= w.imag();
        jac(2 * row + 1, 2 * col) += w.imag();
        jac(2 * row + 1, 2 * col + 1) += w.real();
    };
    for (int k = 0; k < n; ++k) {
        const double a = std::abs(z(k));
        const std::complex<double> f(sys.spec.lam(a, s.mu), sys.spec.omega(a, s.mu, sys.eps) - s.rho);
        add_complex(k, k, f - 2.0 * sys.eps * cc);
        if (a > 0.0) {
            // d/dx and d/dy of f'(a) (x/a, y/a) z
            const std::complex<double> fp(sys.spec.lam_r(a, s.mu), sys.spec.omega_r(a, s.mu, sys.eps));
            const std::complex<double> gx = fp * (z(k).real() / a) * z(k);
            const std::complex<double> gy = fp * (z(k).imag() / a) * z(k);
            jac(2 * k, 2 * k) += gx.real();
            jac(2 * k + 1, 2 * k) += gx.imag();
            jac(2 * k, 2 * k + 1) += gy.real();
            jac(2 * k + 1, 2 * k + 1) += gy.imag();
        }
        const int right = k + 1 < n ? k + 1 : n - 1;
        const int left = k > 0 ? k - 1 : (sys.bc == Boundary::on_site && n > 1 ? 1 : 0);
        add_complex(k, right, sys.eps * cc);
        add_complex(k, left, sys.eps * cc);
    }
    Eigen::EigenSolver<Mat> es(jac, false);
    if (es.info() != Eigen::Success) throw Error("linearization_spectrum: eigenvalue computation failed");
    return es.eigenvalues();
}

} // namespace locsync
