#pragma once

// Run configuration (JSON), branch CSV and summary/verification JSON.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "locsync/asymptotics.hpp"
#include "locsync/continuation.hpp"
#include "locsync/errors.hpp"
#include "locsync/lattice.hpp"
#include "locsync/model.hpp"

namespace locsync {

using json = nlohmann::ordered_json;

class ParseError : public Error {
public:
    using Error::Error;
};

/// Either a built-in name or lambda = P(r^2) + mu Q(r^2) with omega0 constant. omega1_r
/// (ascending coefficients in r) adds an O(eps) amplitude-dependent frequency to either form.
struct ModelConfig {
    std::string builtin = "quintic";  // empty when the polynomial fields are used
    std::string name;
    std::vector<double> lambda_r2;
    std::vector<double> lambda_mu_r2;
    double omega0 = 0.0;
    std::vector<double> omega1_r;

    NonlinearitySpec build() const {
        if (!builtin.empty()) {
            auto s = builtin_spec(builtin);
            if (!omega1_r.empty()) s.omega1 = Field::polynomial(Polynomial2::in_r(omega1_r));
            return s;
        }
        return polynomial_spec(name.empty() ? "custom" : name, lambda_r2, lambda_mu_r2, omega0, omega1_r);
    }
};

struct SeedConfig {
    std::string kind = "uniform";  // uniform | isola | pattern
    int k = 1;
    std::string root = "minus";    // uniform only
    std::string pattern;           // pattern only, e.g. "+++-"
    std::string half = "lower";    // isola only
    std::string phase_template = "in_phase";
    double mu = 0.5;
};

struct MismatchConfig {
    double mu = 0.75;
    int core = 20;
    std::vector<double> eps = {1e-2, 1e-3, 1e-4};
    double pattern_radius = 0.1;
};

struct SimulateConfig {
    double periods = 1.0;
    double dt = 1e-3;
    int stride = 10;
};

struct SweepConfig {
    std::vector<double> eps;
    std::vector<int> k;
};

struct RunConfig {
    std::string run_id = "run";
    ModelConfig model;
    Coupling coupling = Coupling::dissipative();
    std::string coupling_name = "dissipative";
    int N = 10;
    double eps = 0.01;
    Boundary bc = Boundary::off_site;
    SeedConfig seed;
    ContinuationConfig continuation;
    std::string output_dir = "out";
    MismatchConfig mismatch;
    SimulateConfig simulate;
    SweepConfig sweep;
    json echo;  // the parsed document

    LatticeSystem system() const { return {model.build(), coupling, eps, bc}; }

    SeedAnsatz ansatz() const {
        SeedAnsatz a;
        if (seed.kind == "isola") {
            a = isola_seed_ansatz(N, seed.k, seed.half == "upper" ? IsolaHalf::upper : IsolaHalf::lower, bc);
        } else if (seed.kind == "pattern") {
            a.N = N;
            a.k = static_cast<int>(seed.pattern.size());
            a.bc = bc;
            a.phase_template = seed.phase_template == "conservative" ? PhaseTemplate::conservative
                                                                      : PhaseTemplate::in_phase;
            for (char ch : seed.pattern) a.pattern.push_back(ch == '+' ? RootChoice::plus : RootChoice::minus);
        } else {
            a = uniform_ansatz(N, seed.k, seed.root == "plus" ? RootChoice::plus : RootChoice::minus,
                               seed.phase_template == "conservative" ? PhaseTemplate::conservative
                                                                     : PhaseTemplate::in_phase,
                               bc);
        }
        a.validate();
        return a;
    }

    void validate() const {
        if (run_id.empty()) throw ConfigError("run_id must not be empty");
        if (N < 2 || N > 64) throw ConfigError("N must lie in [2, 64]");
        if (!(eps >= 0.0 && std::isfinite(eps))) throw ConfigError("eps must be finite and >= 0");
        if (!(seed.mu > 0.0 && seed.mu < 1.0)) throw ConfigError("seed.mu must lie in (0, 1)");
        if (seed.kind != "uniform" && seed.kind != "isola" && seed.kind != "pattern") {
            throw ConfigError("seed.kind must be uniform, isola or pattern");
        }
        if (seed.root != "plus" && seed.root != "minus") throw ConfigError("seed.root must be plus or minus");
        if (seed.half != "lower" && seed.half != "upper") throw ConfigError("seed.half must be lower or upper");
        if (seed.phase_template != "in_phase" && seed.phase_template != "conservative") {
            throw ConfigError("seed.template must be in_phase or conservative");
        }
        if (seed.kind == "pattern") {
            if (seed.pattern.empty()) throw ConfigError("seed.pattern must not be empty");
            for (char ch : seed.pattern) {
                if (ch != '+' && ch != '-') throw ConfigError("seed.pattern may only contain '+' and '-'");
            }
        }
        if (seed.kind == "isola" && (seed.k < 1 || seed.k > N - 2)) throw ConfigError("isola seed needs 1 <= k <= N-2");
        if (seed.kind == "uniform" && (seed.k < 1 || seed.k > N - 1)) throw ConfigError("seed needs 1 <= k <= N-1");
        continuation.validate();
        if (!(mismatch.mu > 0.0 && mismatch.mu < 1.0)) throw ConfigError("mismatch.mu must lie in (0, 1)");
        if (mismatch.core < 1) throw ConfigError("mismatch.core must be >= 1");
        for (double e : mismatch.eps) {
            if (!(e > 0.0)) throw ConfigError("mismatch.eps entries must be positive");
        }
        if (!(simulate.periods > 0.0 && simulate.dt > 0.0) || simulate.stride < 1) {
            throw ConfigError("simulate: periods and dt must be positive, stride >= 1");
        }
        for (double e : sweep.eps) {
            if (!(e >= 0.0)) throw ConfigError("sweep.eps entries must be >= 0");
        }
        try {
            model.build();
            (void)ansatz();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
};

namespace detail {

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || a == it.key();
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad type for '" + std::string(key) + "' in " + where);
    }
}

inline ModelConfig parse_model(const json& j) {
    ModelConfig m;
    if (j.is_string()) {
        m.builtin = j.get<std::string>();
        return m;
    }
    reject_unknown(j, {"name", "polynomial_lambda", "polynomial_lambda_mu", "omega0_const", "omega1_r"}, "model");
    read(j, "name", m.name, "model");
    read(j, "polynomial_lambda", m.lambda_r2, "model");
    read(j, "polynomial_lambda_mu", m.lambda_mu_r2, "model");
    read(j, "omega0_const", m.omega0, "model");
    read(j, "omega1_r", m.omega1_r, "model");
    if (m.lambda_r2.empty()) {
        if (m.name.empty()) throw ConfigError("model needs 'name' or 'polynomial_lambda'");
        if (!m.lambda_mu_r2.empty() || j.contains("omega0_const")) {
            throw ConfigError("built-in model '" + m.name + "' takes no polynomial coefficients");
        }
        m.builtin = m.name;
    } else {
        m.builtin.clear();
    }
    return m;
}

} // namespace detail

inline RunConfig parse_config(const json& j) {
    using detail::read;
    using detail::reject_unknown;
    reject_unknown(j, {"run_id", "model", "coupling", "N", "eps", "boundary", "seed", "continuation", "output_dir",
                       "mismatch", "simulate", "sweep"},
                   "config");
    RunConfig c;
    c.echo = j;
    read(j, "run_id", c.run_id, "config");
    if (j.contains("model")) c.model = detail::parse_model(j.at("model"));
    if (j.contains("coupling")) {
        const auto& cj = j.at("coupling");
        if (cj.is_string()) {
            c.coupling_name = cj.get<std::string>();
            if (c.coupling_name == "dissipative") {
                c.coupling = Coupling::dissipative();
            } else if (c.coupling_name == "conservative") {
                c.coupling = Coupling::conservative();
            } else {
                throw ConfigError("coupling must be dissipative, conservative or {re, im}");
            }
        } else {
            reject_unknown(cj, {"re", "im"}, "coupling");
            double re = 0.0, im = 0.0;
            read(cj, "re", re, "coupling");
            read(cj, "im", im, "coupling");
            try {
                c.coupling = Coupling::general(re, im);
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
            c.coupling_name = "general";
        }
    }
    read(j, "N", c.N, "config");
    read(j, "eps", c.eps, "config");
    if (j.contains("boundary")) {
        std::string b;
        read(j, "boundary", b, "config");
        if (b == "on_site") {
            c.bc = Boundary::on_site;
        } else if (b == "off_site") {
            c.bc = Boundary::off_site;
        } else {
            throw ConfigError("boundary must be on_site or off_site");
        }
    }
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        reject_unknown(s, {"kind", "k", "root", "pattern", "half", "template", "mu"}, "seed");
        read(s, "kind", c.seed.kind, "seed");
        read(s, "k", c.seed.k, "seed");
        read(s, "root", c.seed.root, "seed");
        read(s, "pattern", c.seed.pattern, "seed");
        read(s, "half", c.seed.half, "seed");
        read(s, "template", c.seed.phase_template, "seed");
        read(s, "mu", c.seed.mu, "seed");
    }
    if (j.contains("continuation")) {
        const auto& s = j.at("continuation");
        auto& cc = c.continuation;
        reject_unknown(s, {"ds_init", "ds_min", "ds_max", "newton_tol", "newton_max_iter", "max_steps", "mu_lo",
                           "mu_hi", "closure_tol", "fold_refine_tol", "growth", "fast_iters", "min_spread",
                           "min_tangent_cos", "max_correction"},
                       "continuation");
        read(s, "ds_init", cc.ds_init, "continuation");
        read(s, "ds_min", cc.ds_min, "continuation");
        read(s, "ds_max", cc.ds_max, "continuation");
        read(s, "newton_tol", cc.newton_tol, "continuation");
        read(s, "newton_max_iter", cc.newton_max_iter, "continuation");
        read(s, "max_steps", cc.max_steps, "continuation");
        read(s, "mu_lo", cc.mu_lo, "continuation");
        read(s, "mu_hi", cc.mu_hi, "continuation");
        read(s, "closure_tol", cc.closure_tol, "continuation");
        read(s, "fold_refine_tol", cc.fold_refine_tol, "continuation");
        read(s, "growth", cc.growth, "continuation");
        read(s, "fast_iters", cc.fast_iters, "continuation");
        read(s, "min_spread", cc.min_spread, "continuation");
        read(s, "min_tangent_cos", cc.min_tangent_cos, "continuation");
        read(s, "max_correction", cc.max_correction, "continuation");
    }
    read(j, "output_dir", c.output_dir, "config");
    if (j.contains("mismatch")) {
        const auto& s = j.at("mismatch");
        reject_unknown(s, {"mu", "core", "eps", "pattern_radius"}, "mismatch");
        read(s, "mu", c.mismatch.mu, "mismatch");
        read(s, "core", c.mismatch.core, "mismatch");
        read(s, "eps", c.mismatch.eps, "mismatch");
        read(s, "pattern_radius", c.mismatch.pattern_radius, "mismatch");
    }
    if (j.contains("simulate")) {
        const auto& s = j.at("simulate");
        reject_unknown(s, {"periods", "dt", "stride"}, "simulate");
        read(s, "periods", c.simulate.periods, "simulate");
        read(s, "dt", c.simulate.dt, "simulate");
        read(s, "stride", c.simulate.stride, "simulate");
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        reject_unknown(s, {"eps", "k"}, "sweep");
        read(s, "eps", c.sweep.eps, "sweep");
        read(s, "k", c.sweep.k, "sweep");
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

/// FNV-1a over the compact config dump.
inline std::string config_hash(const json& j) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string branch_csv_header(int n) {
    std::string h = "step,arclength,mu,rho,r_l2";
    for (int i = 1; i <= n; ++i) h += ",r_" + std::to_string(i);
    for (int i = 1; i < n; ++i) h += ",phi_" + std::to_string(i);
    h += ",is_fold,newton_iters";
    return h;
}

/// Branch points in canonical coordinates, one row per point.
inline void write_branch_csv(std::ostream& out, const Branch& br) {
    const int n = br.points.empty() ? 0 : br.points.front().state.size();
    out << branch_csv_header(n) << '\n';
    for (std::size_t i = 0; i < br.points.size(); ++i) {
        const auto& p = br.points[i];
        const auto c = canonicalize(p.state);
        out << i << ',' << fmt17(p.arclength) << ',' << fmt17(c.mu) << ',' << fmt17(c.rho) << ','
            << fmt17(c.r.norm());
        for (int j = 0; j < n; ++j) out << ',' << fmt17(c.r(j));
        for (int j = 0; j < n - 1; ++j) out << ',' << fmt17(c.phi(j));
        out << ',' << (p.is_fold ? 1 : 0) << ',' << p.newton_iters << '\n';
    }
}

struct CsvRow {
    long step = 0;
    double arclength = 0.0;
    PolarState state;
    double r_l2 = 0.0;
    bool is_fold = false;
    int newton_iters = 0;
};

namespace detail {

inline double parse_double(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("branch csv line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace detail

inline std::vector<CsvRow> read_branch_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("branch csv is empty");
    const auto head = detail::split(line);
    const int cols = static_cast<int>(head.size());
    if (cols < 10 || (cols - 6) % 2 != 0) throw ParseError("branch csv header has an unexpected column count");
    const int n = (cols - 6) / 2;
    if (line != branch_csv_header(n)) throw ParseError("branch csv header does not match the expected layout");
    std::vector<CsvRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split(line);
        if (static_cast<int>(cells.size()) != cols) {
            throw ParseError("branch csv line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                             " fields");
        }
        CsvRow r;
        r.step = static_cast<long>(detail::parse_double(cells[0], lineno));
        r.arclength = detail::parse_double(cells[1], lineno);
        r.state.mu = detail::parse_double(cells[2], lineno);
        r.state.rho = detail::parse_double(cells[3], lineno);
        r.r_l2 = detail::parse_double(cells[4], lineno);
        r.state.r.resize(n);
        r.state.phi.resize(n - 1);
        for (int j = 0; j < n; ++j) r.state.r(j) = detail::parse_double(cells[5 + j], lineno);
        for (int j = 0; j < n - 1; ++j) r.state.phi(j) = detail::parse_double(cells[5 + n + j], lineno);
        r.is_fold = detail::parse_double(cells[cols - 2], lineno) != 0.0;
        r.newton_iters = static_cast<int>(detail::parse_double(cells[cols - 1], lineno));
        if (!r.state.finite()) throw ParseError("branch csv line " + std::to_string(lineno) + ": non-finite value");
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ParseError("branch csv has no data rows");
    return rows;
}

inline json state_json(const PolarState& s) {
    const auto c = canonicalize(s);
    json j;
    j["mu"] = c.mu;
    j["rho"] = c.rho;
    j["r"] = std::vector<double>(c.r.data(), c.r.data() + c.r.size());
    j["phi"] = std::vector<double>(c.phi.data(), c.phi.data() + c.phi.size());
    return j;
}

inline json summary_json(const RunConfig& cfg, const Branch& br) {
    json j;
    j["run_id"] = cfg.run_id;
    j["config"] = cfg.echo;
    j["config_hash"] = config_hash(cfg.echo);
    j["provenance"] = br.provenance;
    j["closure"] = to_string(br.closure);
    j["start_end"] = to_string(br.start_end);
    j["n_points"] = br.points.size();
    json folds = json::array();
    for (const auto& f : br.folds) {
        folds.push_back({{"mu", f.mu}, {"arclength", f.arclength}, {"refined", f.refined}});
    }
    j["fold_count"] = br.folds.size();
    j["folds"] = folds;
    if (!br.points.empty()) {
        j["endpoints"] = {{"first", state_json(br.points.front().state)},
                          {"last", state_json(br.points.back().state)}};
    }
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

} // namespace locsync
