#pragma once

// Run orchestration behind the command-line tool. Every function writes into its own output
// directory and returns the JSON document it wrote.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "locsync/asymptotics.hpp"
#include "locsync/continuation.hpp"
#include "locsync/dynamics.hpp"
#include "locsync/errors.hpp"
#include "locsync/io.hpp"

namespace locsync {

/// Newton failed on the seed; the CLI maps this to exit code 3.
class SeedFailure : public Error {
public:
    using Error::Error;
};

inline constexpr int kExitConfig = 2;
inline constexpr int kExitSeed = 3;

inline std::filesystem::path run_dir(const RunConfig& cfg) {
    std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / cfg.run_id;
    std::filesystem::create_directories(dir);
    return dir;
}

struct SeedResult {
    PolarState seed;
    NewtonResult corrected;
};

inline SeedResult corrected_seed(const RunConfig& cfg) {
    const auto sys = cfg.system();
    SeedResult out;
    out.seed = build_seed(sys.spec, cfg.seed.mu, cfg.eps, cfg.ansatz(), sys.c);
    try {
        out.corrected = newton_correct(sys, out.seed, cfg.continuation);
    } catch (const Error& e) {
        throw SeedFailure(std::string("Newton failed at the seed: ") + e.what());
    }
    return out;
}

inline json cmd_seed(const RunConfig& cfg) {
    const auto sr = corrected_seed(cfg);
    const auto sys = cfg.system();
    json j;
    j["run_id"] = cfg.run_id;
    j["ansatz"] = cfg.ansatz().describe();
    j["seed"] = state_json(sr.seed);
    j["corrected"] = state_json(sr.corrected.state);
    j["newton_iters"] = sr.corrected.iterations;
    j["residual_max"] = detail::max_abs(residual(sys, sr.corrected.state));
    j["seed_distance"] = (sr.corrected.state.r - sr.seed.r).cwiseAbs().maxCoeff();
    write_text((run_dir(cfg) / "seed.json").string(), j.dump(2) + "\n");
    return j;
}

inline json cmd_continue(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sys = cfg.system();
    const auto sr = corrected_seed(cfg);
    auto br = trace_branch(sys, sr.corrected.state, cfg.continuation);
    br.provenance = cfg.ansatz().describe() + " mu_seed=" + fmt17(cfg.seed.mu) + " config=" + config_hash(cfg.echo);
    const auto dir = run_dir(cfg);
    {
        std::ofstream csv(dir / "branch.csv", std::ios::binary);
        if (!csv) throw Error("cannot write branch.csv");
        write_branch_csv(csv, br);
    }
    const auto summary = summary_json(cfg, br);
    write_text((dir / "summary.json").string(), summary.dump(2) + "\n");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text((dir / "timing.json").string(), json{{"run_id", cfg.run_id}, {"wall_seconds", secs}}.dump(2) + "\n");
    return summary;
}

/// Rebuilds a branch from CSV rows: tangents from the Jacobian null space, oriented along the
/// row order, so folds can be detected and refined again.
inline Branch branch_from_rows(const LatticeSystem& sys, const std::vector<CsvRow>& rows) {
    Branch br;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        BranchPoint p;
        p.state = rows[i].state;
        p.arclength = rows[i].arclength;
        p.newton_iters = rows[i].newton_iters;
        p.tangent = null_tangent(sys, p.state);
        br.points.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < br.points.size(); ++i) {
        const std::size_t a = i + 1 < br.points.size() ? i : i - 1;
        if (br.points.size() < 2) break;
        Vec secant = detail::closure_offset(pack(br.points[a + 1].state), pack(br.points[a].state));
        if (br.points[i].tangent.dot(secant) < 0.0) br.points[i].tangent = -br.points[i].tangent;
    }
    detail::mark_folds(br.points);
    return br;
}

inline json cmd_verify(const RunConfig& cfg, const std::string& branch_file) {
    std::ifstream in(branch_file);
    if (!in) throw ConfigError("cannot open branch file '" + branch_file + "'");
    const auto rows = read_branch_csv(in);
    const auto sys = cfg.system();
    if (rows.front().state.size() != cfg.N) throw ConfigError("branch file lattice size does not match config N");

    json j;
    j["run_id"] = cfg.run_id;
    j["branch_file"] = std::filesystem::path(branch_file).filename().string();
    bool all_pass = true;

    const double res_tol = 10.0 * cfg.continuation.newton_tol;
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, detail::max_abs(residual(sys, r.state)));
    const bool res_ok = worst <= res_tol;
    all_pass = all_pass && res_ok;
    j["residual"] = {{"max", worst}, {"tolerance", res_tol}, {"pass", res_ok}};

    json re = json::array();
    const std::size_t samples = std::min<std::size_t>(5, rows.size());
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t idx = samples == 1 ? 0 : s * (rows.size() - 1) / (samples - 1);
        const auto& st = rows[idx].state;
        json e{{"step", rows[idx].step}, {"mu", st.mu}, {"rho", st.rho}};
        try {
            const double dev = relative_equilibrium_check(sys, st, cfg.simulate.dt);
            e["deviation"] = dev;
            e["pass"] = dev <= 1e-6;
            all_pass = all_pass && dev <= 1e-6;
        } catch (const PeriodUndefined&) {
            e["skipped"] = "rotation period undefined (|rho| < 1e-6)";
        }
        re.push_back(e);
    }
    j["relative_equilibrium"] = re;

    json folds = json::array();
    if (cfg.eps > 0.0 && rows.size() >= 2) {
        auto br = branch_from_rows(sys, rows);
        br.folds = detect_folds(br, sys, cfg.continuation);
        const auto p1 = fold_prediction_mu1(cfg.eps);
        const auto p0 = fold_prediction_mu0(cfg.eps);
        double smallest = std::numeric_limits<double>::infinity();
        for (const auto& f : br.folds) {
            json fj{{"mu", f.mu}, {"refined", f.refined}};
            if (f.mu > 0.9) {
                fj["near"] = "mu=1";
                fj["predicted"] = p1.mu;
                fj["deviation"] = std::abs(1.0 - (1.0 - f.mu) / cfg.eps);
            }
            smallest = std::min(smallest, f.mu);
            folds.push_back(fj);
        }
        if (std::isfinite(smallest)) {
            j["smallest_fold"] = {{"mu", smallest},
                                  {"predicted", p0.mu},
                                  {"ratio", smallest / std::pow(cfg.eps, 2.0 / 3.0)},
                                  {"relative_error", std::abs(smallest - p0.mu) / p0.mu}};
        }
    }
    j["folds"] = folds;
    j["pass"] = all_pass;
    write_text((run_dir(cfg) / "verify.json").string(), j.dump(2) + "\n");
    return j;
}

struct MismatchAttempt {
    double eps = 0.0;
    std::string status;  // converged | left_pattern | no_convergence
    double pattern_distance = std::numeric_limits<double>::quiet_NaN();
    double sin_phi_k = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
};

/// Newton on the mixed pattern (core nodes at r_+, one node at r_-) at fixed mu. A run that
/// converges to a state farther than `radius` from the seed amplitudes has left the pattern.
inline MismatchAttempt mismatch_attempt(const NonlinearitySpec& spec, const Coupling& c, Boundary bc, double mu,
                                        int core, double eps, double radius, const ContinuationConfig& cc) {
    SeedAnsatz a;
    a.N = core + 3;
    a.k = core + 1;
    a.bc = bc;
    a.pattern.assign(core, RootChoice::plus);
    a.pattern.push_back(RootChoice::minus);
    MismatchAttempt out;
    out.eps = eps;
    const auto seed = build_seed(spec, mu, eps, a, c);
    const LatticeSystem sys{spec, c, eps, bc};
    try {
        const auto res = newton_correct(sys, seed, cc);
        out.iterations = res.iterations;
        out.pattern_distance = (res.state.r - seed.r).cwiseAbs().maxCoeff();
        const auto canon = canonicalize(res.state);
        out.sin_phi_k = std::sin(canon.phi(core - 1));
        out.status = out.pattern_distance <= radius ? "converged" : "left_pattern";
    } catch (const NoConvergence&) {
        out.status = "no_convergence";
    } catch (const SingularJacobian&) {
        out.status = "no_convergence";
    }
    return out;
}

inline json cmd_mismatch(const RunConfig& cfg) {
    const auto spec = cfg.model.build();
    const auto m = mismatch_bound(spec, cfg.mismatch.mu);
    json j;
    j["run_id"] = cfg.run_id;
    j["mu"] = m.mu;
    j["r_minus"] = m.r_minus;
    j["r_plus"] = m.r_plus;
    j["delta"] = m.delta;
    j["threshold"] = m.threshold;
    j["obstructed"] = m.obstructed;
    j["sin_phi_inf"] = m.sin_phi_inf;
    j["real_solution"] = m.real_solution;
    j["order_one_mismatch"] = m.order_one_mismatch;
    j["core"] = cfg.mismatch.core;
    j["sin_phi_core"] = mismatch_phase_exact(spec, cfg.mismatch.mu, cfg.mismatch.core);
    json sweep = json::array();
    for (double e : cfg.mismatch.eps) {
        const auto a = mismatch_attempt(spec, cfg.coupling, cfg.bc, cfg.mismatch.mu, cfg.mismatch.core, e,
                                        cfg.mismatch.pattern_radius, cfg.continuation);
        json aj{{"eps", a.eps}, {"status", a.status}, {"iterations", a.iterations}};
        if (std::isfinite(a.pattern_distance)) aj["pattern_distance"] = a.pattern_distance;
        if (std::isfinite(a.sin_phi_k)) aj["sin_phi_k"] = a.sin_phi_k;
        sweep.push_back(aj);
    }
    j["attempts"] = sweep;
    write_text((run_dir(cfg) / "mismatch.json").string(), j.dump(2) + "\n");
    return j;
}

inline json cmd_simulate(const RunConfig& cfg) {
    const auto sys = cfg.system();
    const auto sr = corrected_seed(cfg);
    const auto& s = sr.corrected.state;
    const double period = rotation_period(s.rho);
    const CVec z0 = unfold(s, sys.bc);
    const auto tr = integrate(sys.spec, sys.c, z0, sys.eps, s.mu, cfg.simulate.periods * period, cfg.simulate.dt,
                              cfg.simulate.stride);
    const double dev = tr.aborted ? std::numeric_limits<double>::infinity() : rotation_deviation(tr, z0, s.rho);
    const auto dir = run_dir(cfg);
    {
        std::ofstream out(dir / "trajectory.csv", std::ios::binary);
        out << "t";
        for (Eigen::Index i = 0; i < z0.size(); ++i) out << ",abs_z_" << i + 1;
        out << '\n';
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            out << fmt17(tr.times[i]);
            for (Eigen::Index n = 0; n < z0.size(); ++n) out << ',' << fmt17(std::abs(tr.z_samples[i](n)));
            out << '\n';
        }
    }
    json j{{"run_id", cfg.run_id},     {"mu", s.mu},          {"rho", s.rho},
           {"period", period},         {"dt", tr.dt},         {"samples", tr.times.size()},
           {"aborted", tr.aborted},    {"deviation", dev},    {"pass", dev <= 1e-6}};
    write_text((dir / "simulate.json").string(), j.dump(2) + "\n");
    return j;
}

/// Runs cmd_continue for every (eps, k) combination on up to `threads` workers; each run gets
/// its own sub-directory "<run_id>_eps<eps>_k<k>".
inline json cmd_sweep(const RunConfig& cfg, unsigned threads) {
    std::vector<RunConfig> runs;
    const auto eps_list = cfg.sweep.eps.empty() ? std::vector<double>{cfg.eps} : cfg.sweep.eps;
    const auto k_list = cfg.sweep.k.empty() ? std::vector<int>{cfg.seed.k} : cfg.sweep.k;
    for (double e : eps_list) {
        for (int k : k_list) {
            RunConfig r = cfg;
            r.eps = e;
            r.seed.k = k;
            r.echo["eps"] = e;
            r.echo["seed"]["k"] = k;
            r.echo.erase("sweep");
            char tag[64];
            std::snprintf(tag, sizeof tag, "_eps%g_k%d", e, k);
            r.run_id = cfg.run_id + tag;
            r.echo["run_id"] = r.run_id;
            r.validate();
            runs.push_back(std::move(r));
        }
    }
    std::vector<json> results(runs.size());
    std::size_t next = 0;
    std::mutex m;
    auto worker = [&] {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(m);
                if (next == runs.size()) return;
                i = next++;
            }
            try {
                const auto s = cmd_continue(runs[i]);
                results[i] = {{"run_id", runs[i].run_id}, {"closure", s["closure"]}, {"fold_count", s["fold_count"]}};
            } catch (const Error& e) {
                results[i] = {{"run_id", runs[i].run_id}, {"error", e.what()}};
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(runs.size())));
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    json j{{"run_id", cfg.run_id}, {"runs", results}};
    write_text((run_dir(cfg) / "sweep.json").string(), j.dump(2) + "\n");
    return j;
}

} // namespace locsync
