#pragma once

// Oscillator nonlinearities f(r, mu, eps) = lambda(r, mu) + i omega(r, mu, eps)
// and the bistability structure of the uncoupled amplitude equation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locsync/errors.hpp"

namespace locsync {

/// Polynomial in (r, mu): sum of coeffs[i][j] * r^i * mu^j.
class Polynomial2 {
public:
    Polynomial2() = default;
    explicit Polynomial2(std::vector<std::vector<double>> coeffs) : c_(std::move(coeffs)) {}

    double operator()(double r, double mu) const {
        double acc = 0.0;
        for (auto i = c_.size(); i-- > 0;) {
            double row = 0.0;
            for (auto j = c_[i].size(); j-- > 0;) row = row * mu + c_[i][j];
            acc = acc * r + row;
        }
        return acc;
    }

    Polynomial2 d_r() const {
        std::vector<std::vector<double>> out;
        for (std::size_t i = 1; i < c_.size(); ++i) {
            auto row = c_[i];
            for (auto& v : row) v *= static_cast<double>(i);
            out.push_back(std::move(row));
        }
        return Polynomial2(std::move(out));
    }

    Polynomial2 d_mu() const {
        std::vector<std::vector<double>> out;
        for (const auto& row : c_) {
            std::vector<double> d;
            for (std::size_t j = 1; j < row.size(); ++j) d.push_back(row[j] * static_cast<double>(j));
            out.push_back(std::move(d));
        }
        return Polynomial2(std::move(out));
    }

    bool is_zero() const {
        return std::all_of(c_.begin(), c_.end(), [](const auto& row) {
            return std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
        });
    }

    const std::vector<std::vector<double>>& coefficients() const { return c_; }

    /// P(r^2) + mu * Q(r^2), with P and Q given by ascending coefficients in r^2.
    static Polynomial2 even_in_r(std::span<const double> p, std::span<const double> q) {
        const std::size_t terms = std::max(p.size(), q.size());
        std::vector<std::vector<double>> c(terms == 0 ? 0 : 2 * terms - 1);
        for (std::size_t m = 0; m < terms; ++m) {
            c[2 * m] = {m < p.size() ? p[m] : 0.0, m < q.size() ? q[m] : 0.0};
        }
        return Polynomial2(std::move(c));
    }

    /// Ascending coefficients in r, independent of mu.
    static Polynomial2 in_r(std::span<const double> a) {
        std::vector<std::vector<double>> c;
        for (double v : a) c.push_back({v});
        return Polynomial2(std::move(c));
    }

private:
    std::vector<std::vector<double>> c_;
};

/// A smooth real function g(r, mu, eps) with its partial derivatives in r and mu.
struct Field {
    using Fn = std::function<double(double, double, double)>;
    Fn value;
    Fn d_r;
    Fn d_mu;
    bool identically_zero = false;

    double operator()(double r, double mu, double eps = 0.0) const { return value(r, mu, eps); }

    static Field zero() {
        auto z = [](double, double, double) { return 0.0; };
        return {z, z, z, true};
    }

    static Field constant(double v) {
        if (v == 0.0) return zero();
        auto z = [](double, double, double) { return 0.0; };
        return {[v](double, double, double) { return v; }, z, z, false};
    }

    static Field polynomial(const Polynomial2& p) {
        if (p.is_zero()) return zero();
        return {[p](double r, double mu, double) { return p(r, mu); },
                [dp = p.d_r()](double r, double mu, double) { return dp(r, mu); },
                [dp = p.d_mu()](double r, double mu, double) { return dp(r, mu); }, false};
    }
};

/// The split nonlinearity lambda(r, mu) + i (omega0(mu) + eps omega1 + eps^2 omega2).
/// omega0 ignores its r and eps arguments.
struct NonlinearitySpec {
    std::string name;
    Field lambda;
    Field omega0 = Field::zero();
    Field omega1 = Field::zero();
    Field omega2 = Field::zero();

    double lam(double r, double mu) const { return lambda.value(r, mu, 0.0); }
    double lam_r(double r, double mu) const { return lambda.d_r(r, mu, 0.0); }
    double lam_mu(double r, double mu) const { return lambda.d_mu(r, mu, 0.0); }

    double omega_base(double mu) const { return omega0.value(0.0, mu, 0.0); }

    double omega(double r, double mu, double eps) const {
        return omega0.value(0.0, mu, 0.0) + eps * omega1.value(r, mu, eps) +
               eps * eps * omega2.value(r, mu, eps);
    }
    double omega_r(double r, double mu, double eps) const {
        return eps * omega1.d_r(r, mu, eps) + eps * eps * omega2.d_r(r, mu, eps);
    }
    double omega_mu(double r, double mu, double eps) const {
        return omega0.d_mu(0.0, mu, 0.0) + eps * omega1.d_mu(r, mu, eps) +
               eps * eps * omega2.d_mu(r, mu, eps);
    }

    /// True when the frequency has no O(eps) amplitude dependence.
    bool frequency_matched() const { return omega1.identically_zero; }
};

/// lambda = P(r^2) + mu Q(r^2); omega0 constant; optional omega1 polynomial in r.
inline NonlinearitySpec polynomial_spec(std::string name, std::span<const double> lambda_r2,
                                        std::span<const double> lambda_mu_r2, double omega0_const = 0.0,
                                        std::span<const double> omega1_r = {}) {
    NonlinearitySpec s;
    s.name = std::move(name);
    s.lambda = Field::polynomial(Polynomial2::even_in_r(lambda_r2, lambda_mu_r2));
    s.omega0 = Field::constant(omega0_const);
    s.omega1 = Field::polynomial(Polynomial2::in_r(omega1_r));
    return s;
}

/// Built-in nonlinearities: "quintic", "quintic_rotating", "hbm".
inline NonlinearitySpec builtin_spec(const std::string& name) {
    constexpr double pi = std::numbers::pi;
    if (name == "quintic" || name == "quintic_rotating") {
        const double p[] = {0.0, 2.0, -1.0};
        const double q[] = {-1.0};
        return polynomial_spec(name, p, q, name == "quintic" ? 0.0 : 1.0);
    }
    if (name == "hbm") {
        // Real part of the harmonic-balance nonlinearity at rho = 1.
        const double p[] = {0.0, 12.0 * pi * pi * pi * pi / 5.0, -12.0 * pi * pi / 8.0};
        const double q[] = {-2.0};
        return polynomial_spec(name, p, q, 0.0);
    }
    throw UnknownSpec("unknown built-in nonlinearity '" + name + "'");
}

struct BistabilityProfile {
    double mu = 0.0;
    double r_minus = 0.0;
    double r_plus = 0.0;
    double lambda_r_minus = 0.0;
    double lambda_r_plus = 0.0;
    double lambda_at_zero = 0.0;
    bool near_fold = false;
};

namespace detail {

inline constexpr double kRootLo = 1e-8;
inline constexpr double kRootHi = 10.0;
inline constexpr int kRootSamples = 20000;

template <class F>
double bisect(F&& f, double a, double b) {
    double fa = f(a);
    for (int it = 0; it < 200 && std::abs(b - a) > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if (fm == 0.0) return m;
        if ((fm < 0) == (fa < 0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

struct RootScan {
    std::vector<double> roots;  // ascending, a double root listed twice
    bool touching = false;
};

/// Positive roots of lambda(., mu) on (kRootLo, kRootHi). lambda is split into monotone
/// pieces at the zeros of lambda_r, so closely spaced root pairs near a fold are not missed.
inline RootScan positive_roots(const NonlinearitySpec& spec, double mu) {
    auto f = [&](double r) { return spec.lam(r, mu); };
    auto fr = [&](double r) { return spec.lam_r(r, mu); };

    std::vector<double> knots{kRootLo};
    const double h = (kRootHi - kRootLo) / kRootSamples;
    double prev = fr(kRootLo);
    for (int i = 1; i <= kRootSamples; ++i) {
        const double x = kRootLo + i * h;
        const double cur = fr(x);
        if (cur == 0.0 || (cur < 0) != (prev < 0)) {
            if (prev != 0.0) knots.push_back(cur == 0.0 ? x : bisect(fr, x - h, x));
        }
        prev = cur;
    }
    knots.push_back(kRootHi);

    RootScan scan;
    double scale = 0.0;
    for (double k : knots) scale = std::max(scale, std::abs(f(k)));
    const double touch_tol = 1e-12 * std::max(1.0, scale);

    std::vector<bool> bracketed(knots.size() - 1, false);
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = knots[i], b = knots[i + 1];
        const double fa = f(a), fb = f(b);
        if (fa != 0.0 && fb != 0.0 && (fa < 0) != (fb < 0)) {
            double x = bisect(f, a, b);
            for (int it = 0; it < 3; ++it) {  // Newton polish inside the bracket
                const double d = fr(x);
                if (d == 0.0) break;
                const double y = x - f(x) / d;
                if (!(y > a && y < b)) break;
                x = y;
            }
            scan.roots.push_back(x);
            bracketed[i] = true;
        }
    }
    // Interior critical points where lambda just touches zero: a degenerate double root.
    for (std::size_t i = 1; i + 1 < knots.size(); ++i) {
        if (std::abs(f(knots[i])) <= touch_tol && !bracketed[i - 1] && !bracketed[i]) {
            scan.roots.push_back(knots[i]);
            scan.roots.push_back(knots[i]);
            scan.touching = true;
        }
    }
    std::sort(scan.roots.begin(), scan.roots.end());
    return scan;
}

} // namespace detail

/// The two positive roots r_-(mu) < r_+(mu) of lambda(., mu) and the derivative data at them.
/// mu = 1 is accepted so that the fold limit can be reached; the profile is then flagged near_fold.
inline BistabilityProfile bistable_roots(const NonlinearitySpec& spec, double mu) {
    if (!(mu > 0.0 && mu <= 1.0)) {
        throw RangeError("bistable_roots: mu = " + std::to_string(mu) + " outside (0, 1]");
    }
    const auto scan = detail::positive_roots(spec, mu);
    if (scan.roots.size() != 2) {
        const auto n = scan.roots.size();
        throw NotBistable("not bistable at mu = " + std::to_string(mu) + ": " +
                          (n == 0 ? std::string("no positive root")
                                  : n == 1 ? std::string("one positive root")
                                           : std::to_string(n) + " positive roots"));
    }
    BistabilityProfile p;
    p.mu = mu;
    p.r_minus = scan.roots[0];
    p.r_plus = scan.roots[1];
    p.lambda_r_minus = spec.lam_r(p.r_minus, mu);
    p.lambda_r_plus = spec.lam_r(p.r_plus, mu);
    p.lambda_at_zero = spec.lam(0.0, mu);
    p.near_fold = scan.touching || (p.r_plus - p.r_minus) < 1e-6;
    return p;
}

struct HypothesisRow {
    double mu = 0.0;
    int root_count = 0;
    bool stability_ok = false;
    bool even_ok = false;
    double r_minus = 0.0;
    double r_plus = 0.0;
};

struct HypothesisReport {
    std::vector<HypothesisRow> rows;
    bool pitchfork_trend_ok = false;  // r_- shrinks towards mu -> 0
    bool fold_trend_ok = false;       // r_+ - r_- shrinks towards mu -> 1
    bool admissible = false;
    std::vector<std::string> issues;
};

/// Numerical check of the bistability hypotheses on a parameter grid. Never throws for a
/// failing spec; failures are listed in the report.
inline HypothesisReport verify_hypotheses(const NonlinearitySpec& spec, std::vector<double> mu_grid) {
    HypothesisReport rep;
    std::sort(mu_grid.begin(), mu_grid.end());
    if (mu_grid.empty()) {
        rep.issues.push_back("empty mu grid");
        return rep;
    }
    bool all_rows = true;
    for (double mu : mu_grid) {
        HypothesisRow row;
        row.mu = mu;
        if (!(mu > 0.0 && mu < 1.0)) {
            rep.issues.push_back("mu = " + std::to_string(mu) + " outside (0, 1)");
            all_rows = false;
            rep.rows.push_back(row);
            continue;
        }
        const auto scan = detail::positive_roots(spec, mu);
        row.root_count = static_cast<int>(scan.roots.size());
        double odd = 0.0;
        for (int i = 0; i <= 40; ++i) {
            const double r = 0.1 * i;
            odd = std::max(odd, std::abs(spec.lam(r, mu) - spec.lam(-r, mu)));
        }
        row.even_ok = odd <= 1e-12;
        if (row.root_count == 2) {
            row.r_minus = scan.roots[0];
            row.r_plus = scan.roots[1];
            row.stability_ok = spec.lam(0.0, mu) < 0.0 && spec.lam_r(row.r_plus, mu) < 0.0 &&
                               spec.lam_r(row.r_minus, mu) > 0.0;
        }
        if (row.root_count != 2) {
            rep.issues.push_back("mu = " + std::to_string(mu) + ": " +
                                 (row.root_count == 1 ? std::string("one positive root")
                                                      : std::to_string(row.root_count) + " positive roots"));
        } else if (!row.stability_ok) {
            rep.issues.push_back("mu = " + std::to_string(mu) + ": stability signs violated");
        }
        if (!row.even_ok) rep.issues.push_back("mu = " + std::to_string(mu) + ": lambda not even in r");
        all_rows = all_rows && row.root_count == 2 && row.stability_ok && row.even_ok;
        rep.rows.push_back(row);
    }
    if (all_rows) {
        rep.pitchfork_trend_ok = true;
        rep.fold_trend_ok = true;
        for (std::size_t i = 1; i < rep.rows.size(); ++i) {
            const auto& a = rep.rows[i - 1];
            const auto& b = rep.rows[i];
            rep.pitchfork_trend_ok = rep.pitchfork_trend_ok && a.r_minus < b.r_minus;
            rep.fold_trend_ok = rep.fold_trend_ok && (a.r_plus - a.r_minus) > (b.r_plus - b.r_minus);
        }
        if (!rep.pitchfork_trend_ok) rep.issues.push_back("r_- does not decrease towards mu = 0");
        if (!rep.fold_trend_ok) rep.issues.push_back("r_+ - r_- does not decrease towards mu = 1");
    }
    rep.admissible = all_rows && rep.pitchfork_trend_ok && rep.fold_trend_ok;
    return rep;
}

} // namespace locsync
