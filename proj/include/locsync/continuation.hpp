#pragma once

// Pseudo-arclength predictor-corrector continuation in mu for the lattice system,
// fold detection/refinement and branch topology classification.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "locsync/errors.hpp"
#include "locsync/lattice.hpp"

namespace locsync {

struct ContinuationConfig {
    double ds_init = 0.01;
    double ds_min = 1e-9;
    double ds_max = 0.02;
    double newton_tol = 1e-10;
    int newton_max_iter = 12;
    int max_steps = 20000;
    double mu_lo = -0.05;
    double mu_hi = 1.05;
    double closure_tol = 1e-6;
    double fold_refine_tol = 1e-10;
    double growth = 1.3;
    int fast_iters = 3;
    // A branch that becomes spatially homogeneous (max r - min r below this) has reached the
    // symmetric state it bifurcates from; continuing would retrace its mirror image.
    double min_spread = 0.02;
    // Minimum cosine between consecutive tangents before a step is retried with half the size.
    double min_tangent_cos = 0.95;
    // Maximum corrector displacement relative to ds before a step is retried.
    double max_correction = 0.5;

    void validate() const {
        if (!(0.0 < ds_min && ds_min <= ds_init && ds_init <= ds_max)) {
            throw ConfigError("continuation: need 0 < ds_min <= ds_init <= ds_max");
        }
        if (!(newton_tol > 0 && closure_tol > 0 && fold_refine_tol > 0)) {
            throw ConfigError("continuation: tolerances must be positive");
        }
        if (newton_max_iter < 1 || max_steps < 1) throw ConfigError("continuation: iteration limits must be >= 1");
        if (!(mu_lo < mu_hi)) throw ConfigError("continuation: empty mu window");
        if (!(growth >= 1.0)) throw ConfigError("continuation: growth factor must be >= 1");
        if (!(min_spread >= 0.0)) throw ConfigError("continuation: min_spread must be >= 0");
        if (!(max_correction > 0.0)) throw ConfigError("continuation: max_correction must be positive");
        if (!(min_tangent_cos > -1.0 && min_tangent_cos < 1.0)) {
            throw ConfigError("continuation: min_tangent_cos must lie in (-1, 1)");
        }
    }
};

enum class Closure { closed_isola, open, window_exit, step_limit };

inline const char* to_string(Closure c) {
    switch (c) {
    case Closure::closed_isola: return "closed_isola";
    case Closure::open: return "open";
    case Closure::window_exit: return "window_exit";
    case Closure::step_limit: return "step_limit";
    }
    return "?";
}

struct BranchPoint {
    PolarState state;  // raw coordinates; see canonicalize() for reporting
    Vec tangent;       // unit vector in packed (r, phi, rho, mu) space
    double arclength = 0.0;
    bool is_fold = false;
    int newton_iters = 0;
};

struct FoldRecord {
    double mu = 0.0;
    double arclength = 0.0;
    PolarState state;
    std::size_t after_point = 0;  // fold lies between points after_point-1 and after_point
    bool refined = false;
};

struct Branch {
    std::vector<BranchPoint> points;
    std::vector<FoldRecord> folds;
    Closure closure = Closure::open;
    Closure start_end = Closure::open;  // termination reason at the first point (two-sided runs)
    std::string provenance;
};

/// Bordering data for the pseudo-arclength condition <x - x_prev, tangent> = ds.
struct Bordered {
    Vec x_prev;
    Vec tangent;
    double ds = 0.0;
};

struct NewtonResult {
    PolarState state;
    int iterations = 0;
    double residual_norm = 0.0;
};

namespace detail {

inline void equilibrate_rows(Mat& a, Vec* b = nullptr) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double s = a.row(i).cwiseAbs().maxCoeff();
        if (!(s > 0.0) || !std::isfinite(s)) throw SingularJacobian("zero or non-finite Jacobian row " + std::to_string(i));
        a.row(i) /= s;
        if (b) (*b)(i) /= s;
    }
}

// Column weights: amplitudes are measured relative to their own size, everything else absolutely.
inline Vec column_weights(const Vec& x) {
    const auto n = (x.size() - 1) / 2;
    Vec w = Vec::Ones(x.size());
    for (Eigen::Index j = 0; j < n; ++j) w(j) = std::max(std::abs(x(j)), 1e-300);
    return w;
}

// Solves a dx = b after scaling the columns by w and equilibrating the rows.
inline Vec equilibrated_solve(Mat a, Vec b, const Vec& w) {
    a = a * w.asDiagonal();
    equilibrate_rows(a, &b);
    Eigen::FullPivLU<Mat> lu(a);
    if (!lu.isInvertible()) throw SingularJacobian("singular equilibrated Newton system");
    return w.cwiseProduct(lu.solve(b));
}

inline double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Residual of each row relative to the size of its terms, with amplitudes weighted by their
// own magnitude and angles, rho and mu by one. Keeps exponentially small tails resolved.
inline double scaled_residual(const Mat& jac, const Vec& x, const Vec& f) {
    const Vec w = column_weights(x);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const double m = jac.row(i).cwiseAbs().dot(w);
        if (m > 0.0) worst = std::max(worst, std::abs(f(i)) / m);
    }
    return worst;
}

inline double amplitude_spread(const PolarState& s) {
    const Vec a = s.r.cwiseAbs();
    return a.maxCoeff() - a.minCoeff();
}

} // namespace detail

/// Newton corrector. Without bordering, solves the square system in (r, phi, rho) at frozen mu;
/// with bordering, solves the extended system in (r, phi, rho, mu).
inline NewtonResult newton_correct(const LatticeSystem& sys, const PolarState& start, const ContinuationConfig& cfg,
                                   const std::optional<Bordered>& border = std::nullopt, double tol = -1.0) {
    start.check();
    const int n = start.size();
    const double target = tol > 0.0 ? tol : cfg.newton_tol;
    Vec x = pack(start);

    auto evaluate = [&](const Vec& xv, Vec& f) {
        const PolarState s = unpack(xv);
        Vec res = residual(sys, s);
        if (border) {
            f.resize(res.size() + 1);
            f.head(res.size()) = res;
            f(res.size()) = (xv - border->x_prev).dot(border->tangent) - border->ds;
        } else {
            f = std::move(res);
        }
    };

    Vec f;
    evaluate(x, f);
    int it = 0;
    while (true) {
        const PolarState s = unpack(x);
        const Mat jac = jacobian(sys, s);
        if (f.allFinite() && detail::max_abs(f) <= target &&
            detail::scaled_residual(jac, x, f.head(2 * n)) <= target) {
            break;
        }
        if (it == cfg.newton_max_iter || !f.allFinite()) {
            throw NoConvergence("Newton: residual " + std::to_string(detail::max_abs(f)) + " after " +
                                std::to_string(it) + " iterations");
        }
        if (border) {
            Mat a(2 * n + 1, 2 * n + 1);
            a.topRows(2 * n) = jac;
            a.row(2 * n) = border->tangent.transpose();
            x -= detail::equilibrated_solve(std::move(a), f, detail::column_weights(x));
        } else {
            const Vec dx = detail::equilibrated_solve(jac.leftCols(2 * n), f, detail::column_weights(x).head(2 * n));
            x.head(2 * n) -= dx;
        }
        ++it;
        evaluate(x, f);
    }
    return {unpack(x), it, detail::max_abs(f)};
}

/// Unit null vector of the 2N x (2N+1) Jacobian (sign unspecified), computed with the
/// columns scaled by w.
inline Vec null_tangent(const Mat& jac, const Vec& w) {
    Mat a = jac * w.asDiagonal();
    detail::equilibrate_rows(a);
    Eigen::HouseholderQR<Mat> qr(a.transpose());
    const Mat q = qr.householderQ();
    const Vec y = q.col(a.cols() - 1);
    if (!(detail::max_abs(a * y) < 1e-8)) throw SingularJacobian("tangent computation failed");
    return w.cwiseProduct(y).normalized();
}

inline Vec null_tangent(const LatticeSystem& sys, const PolarState& s) {
    return null_tangent(jacobian(sys, s), detail::column_weights(pack(s)));
}

inline Vec oriented_tangent(const LatticeSystem& sys, const PolarState& s, const Vec& reference) {
    Vec t = null_tangent(sys, s);
    if (t.dot(reference) < 0.0) t = -t;
    return t;
}

namespace detail {

struct Leg {
    std::vector<BranchPoint> points;
    Closure reason = Closure::open;
};

inline void mark_folds(std::vector<BranchPoint>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i == 0) {
            pts[i].is_fold = false;
            continue;
        }
        const int n = pts[i].state.size();
        const double a = pts[i - 1].tangent(mu_col(n));
        const double b = pts[i].tangent(mu_col(n));
        pts[i].is_fold = (a < 0.0) != (b < 0.0);
    }
}

/// x0 - x with phase entries reduced modulo 2 pi, so that a branch whose phases have wound
/// around still registers as back at its start.
inline Vec closure_offset(const Vec& x0, const Vec& x) {
    Vec d = x0 - x;
    const int n = static_cast<int>((x.size() - 1) / 2);
    for (int j = 0; j < n - 1; ++j) {
        d(phi_col(n, j)) = std::remainder(d(phi_col(n, j)), 2.0 * std::numbers::pi);
    }
    return d;
}

// Attempts to land exactly on the start point when the branch has come back around to it.
inline std::optional<BranchPoint> try_close(const LatticeSystem& sys, const BranchPoint& cur, const Vec& x0,
                                            double ds, const ContinuationConfig& cfg) {
    const Vec x = pack(cur.state);
    const Vec d = closure_offset(x0, x);
    const double dist = d.norm();
    const double proj = d.dot(cur.tangent);
    if (!(dist <= 2.0 * std::max(ds, cfg.ds_init)) || !(proj > 0.5 * dist)) return std::nullopt;
    try {
        const auto res = newton_correct(sys, unpack(x + proj * cur.tangent), cfg, Bordered{x, cur.tangent, proj});
        if (closure_offset(x0, pack(res.state)).cwiseAbs().maxCoeff() >= cfg.closure_tol) return std::nullopt;
        BranchPoint bp;
        bp.state = res.state;
        bp.tangent = oriented_tangent(sys, res.state, cur.tangent);
        bp.arclength = cur.arclength + proj;
        bp.newton_iters = res.iterations;
        return bp;
    } catch (const Error&) {
        return std::nullopt;
    }
}

inline Leg continue_leg(const LatticeSystem& sys, const PolarState& seed, int direction,
                        const ContinuationConfig& cfg) {
    cfg.validate();
    seed.check();
    const int n = seed.size();
    if (!(detail::max_abs(residual(sys, seed)) <= cfg.newton_tol)) {
        throw Error("continuation seed is not converged at its mu");
    }

    Leg leg;
    BranchPoint first;
    first.state = seed;
    first.tangent = null_tangent(sys, seed);
    if ((first.tangent(mu_col(n)) < 0.0) != (direction < 0)) first.tangent = -first.tangent;
    leg.points.push_back(first);
    const Vec x0 = pack(seed);

    double ds = cfg.ds_init;
    int steps = 0;
    while (true) {
        if (steps == cfg.max_steps) {
            leg.reason = Closure::step_limit;
            break;
        }
        const BranchPoint& cur = leg.points.back();
        const Vec x = pack(cur.state);

        std::optional<BranchPoint> next;
        try {
            const auto res = newton_correct(sys, unpack(x + ds * cur.tangent), cfg, Bordered{x, cur.tangent, ds});
            Vec t;
            try {
                t = oriented_tangent(sys, res.state, cur.tangent);
            } catch (const SingularJacobian&) {
                t = (pack(res.state) - x).normalized();  // secant fallback
            }
            const Vec xp = x + ds * cur.tangent;
            const double moved = (pack(res.state) - xp).norm();
            if ((t.dot(cur.tangent) >= cfg.min_tangent_cos && moved <= cfg.max_correction * ds) ||
                ds <= 2.0 * cfg.ds_min) {
                BranchPoint bp;
                bp.state = res.state;
                bp.tangent = t;
                bp.arclength = cur.arclength + ds;
                bp.newton_iters = res.iterations;
                next = bp;
            }
        } catch (const NoConvergence&) {
        } catch (const SingularJacobian&) {
        }

        if (!next) {
            ds *= 0.5;
            if (ds < cfg.ds_min) {
                leg.reason = Closure::open;
                break;
            }
            continue;
        }

        ++steps;
        const int iters = next->newton_iters;
        leg.points.push_back(std::move(*next));
        const BranchPoint& p = leg.points.back();
        if (iters <= cfg.fast_iters) ds = std::min(ds * cfg.growth, cfg.ds_max);

        if (p.state.mu < cfg.mu_lo || p.state.mu > cfg.mu_hi ||
            (n > 1 && detail::amplitude_spread(p.state) < cfg.min_spread)) {
            leg.reason = Closure::window_exit;
            break;
        }
        if (p.arclength > 10.0 * cfg.ds_init) {
            if (auto closing = try_close(sys, p, x0, ds, cfg)) {
                leg.points.push_back(std::move(*closing));
                leg.reason = Closure::closed_isola;
                break;
            }
        }
    }
    mark_folds(leg.points);
    return leg;
}

} // namespace detail

/// Refines every sign change of the tangent's mu-component by regula falsi on arclength.
inline std::vector<FoldRecord> detect_folds(const Branch& branch, const LatticeSystem& sys,
                                            const ContinuationConfig& cfg) {
    std::vector<FoldRecord> folds;
    if (branch.points.size() < 2) return folds;
    for (std::size_t i = 1; i < branch.points.size(); ++i) {
        const auto& a = branch.points[i - 1];
        const auto& b = branch.points[i];
        const int n = a.state.size();
        const double ga0 = a.tangent(mu_col(n));
        const double gb0 = b.tangent(mu_col(n));
        if ((ga0 < 0.0) == (gb0 < 0.0)) continue;

        FoldRecord rec;
        rec.after_point = i;
        const bool a_closer = std::abs(ga0) < std::abs(gb0);
        rec.mu = a_closer ? a.state.mu : b.state.mu;
        rec.arclength = a_closer ? a.arclength : b.arclength;
        rec.state = a_closer ? a.state : b.state;

        try {
            const Vec xa = pack(a.state);
            double lo = 0.0, glo = ga0;
            double hi = (pack(b.state) - xa).dot(a.tangent), ghi = gb0;
            int side = 0;
            double best = std::min(std::abs(ga0), std::abs(gb0));
            const double tight = std::min(cfg.newton_tol, 1e-13);
            for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
                double sigma = (lo * ghi - hi * glo) / (ghi - glo);
                if (!(sigma > lo && sigma < hi)) sigma = 0.5 * (lo + hi);
                PolarState s;
                try {
                    s = newton_correct(sys, unpack(xa + sigma * a.tangent), cfg, Bordered{xa, a.tangent, sigma}, tight)
                            .state;
                } catch (const NoConvergence&) {
                    s = newton_correct(sys, unpack(xa + sigma * a.tangent), cfg, Bordered{xa, a.tangent, sigma}).state;
                }
                const double g = oriented_tangent(sys, s, a.tangent)(mu_col(n));
                if (std::abs(g) < best) {
                    best = std::abs(g);
                    rec.mu = s.mu;
                    rec.arclength = a.arclength + sigma;
                    rec.state = s;
                }
                if (std::abs(g) < cfg.fold_refine_tol) {
                    rec.refined = true;
                    break;
                }
                if ((g < 0.0) == (glo < 0.0)) {
                    lo = sigma;
                    glo = g;
                    if (side == -1) ghi *= 0.5;
                    side = -1;
                } else {
                    hi = sigma;
                    ghi = g;
                    if (side == 1) glo *= 0.5;
                    side = 1;
                }
            }
        } catch (const Error&) {
            rec.refined = false;
        }
        folds.push_back(std::move(rec));
    }
    return folds;
}

/// closed_isola iff the branch returns to its first point after a nontrivial arclength;
/// otherwise the recorded termination reason.
inline Closure classify_closure(const Branch& branch, const ContinuationConfig& cfg) {
    if (branch.points.size() >= 2) {
        const auto& f = branch.points.front();
        const auto& l = branch.points.back();
        const double total = std::abs(l.arclength - f.arclength);
        if (total > 10.0 * cfg.ds_init &&
            detail::closure_offset(pack(f.state), pack(l.state)).cwiseAbs().maxCoeff() < cfg.closure_tol) {
            return Closure::closed_isola;
        }
    }
    return branch.closure == Closure::closed_isola ? Closure::open : branch.closure;
}

/// One-sided continuation from a converged seed; direction fixes the sign of the initial mu-velocity.
inline Branch continue_branch(const LatticeSystem& sys, const PolarState& seed, int direction,
                              const ContinuationConfig& cfg) {
    auto leg = detail::continue_leg(sys, seed, direction, cfg);
    Branch br;
    br.points = std::move(leg.points);
    br.closure = leg.reason;
    br.start_end = Closure::open;
    br.folds = detect_folds(br, sys, cfg);
    return br;
}

/// Two-sided continuation: forward first; if either leg closes an isola that leg is the branch,
/// otherwise the backward leg is prepended so the branch reads in a single orientation.
inline Branch trace_branch(const LatticeSystem& sys, const PolarState& seed, const ContinuationConfig& cfg) {
    auto fwd = detail::continue_leg(sys, seed, +1, cfg);
    Branch br;
    if (fwd.reason == Closure::closed_isola) {
        br.points = std::move(fwd.points);
        br.closure = Closure::closed_isola;
        br.start_end = Closure::closed_isola;
    } else {
        auto bwd = detail::continue_leg(sys, seed, -1, cfg);
        const double s_back = bwd.points.back().arclength;
        if (bwd.reason == Closure::closed_isola) {
            // The loop is already complete backwards; read it in forward orientation.
            for (std::size_t i = bwd.points.size(); i-- > 0;) {
                BranchPoint p = bwd.points[i];
                p.tangent = -p.tangent;
                p.arclength = s_back - p.arclength;
                br.points.push_back(std::move(p));
            }
            detail::mark_folds(br.points);
            br.closure = Closure::closed_isola;
            br.start_end = Closure::closed_isola;
            br.folds = detect_folds(br, sys, cfg);
            return br;
        }
        for (std::size_t i = bwd.points.size(); i-- > 1;) {
            BranchPoint p = bwd.points[i];
            p.tangent = -p.tangent;
            p.arclength = s_back - p.arclength;
            br.points.push_back(std::move(p));
        }
        for (auto& p : fwd.points) {
            p.arclength += s_back;
            br.points.push_back(std::move(p));
        }
        detail::mark_folds(br.points);
        br.start_end = bwd.reason;
        br.closure = fwd.reason;
        if (bwd.reason == Closure::step_limit || fwd.reason == Closure::step_limit) {
            br.closure = Closure::step_limit;
        } else if (bwd.reason == Closure::window_exit && fwd.reason == Closure::window_exit) {
            br.closure = Closure::window_exit;
        } else {
            br.closure = Closure::open;
        }
    }
    br.folds = detect_folds(br, sys, cfg);
    return br;
}

} // namespace locsync
