#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "ssn/dataset.hpp"
#include "ssn/diagnostics.hpp"
#include "ssn/losses.hpp"
#include "ssn/solvers.hpp"

namespace ssn {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct DatasetConfig {
    enum class Kind { synthetic, libsvm };
    Kind kind = Kind::synthetic;
    // synthetic
    int n = 1000;
    int d = 20;
    double margin = 0.1;
    std::uint64_t seed = 0;
    // libsvm
    std::string path;
    std::optional<double> rbf_bandwidth;
};

struct SplitConfig {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SolverConfig {
    enum class Kind { rssn_const, rssn_grow, newton, sc_rssn, slbfgs, sgd, sgd_polyak, svrg, adam, adagrad };

    Kind kind = Kind::rssn_const;
    double tau = 0.0;
    bool tau_decay = false;  // gradient-proportional decay from tau (Corollary-style)
    bool line_search = true;
    std::optional<double> step_size;
    double cg_tol = 1e-6;
    int cg_max_iter = 0;  // 0 selects min(d, 100)
    bool independent_batches = false;
    double growth_factor = 1.01;
    int max_batch = 8192;
    double tau_floor = 1e-10;  // newton
    // sc_rssn constants (estimated from the data when not given)
    std::optional<double> sc_c, sc_eta, mu_tilde, L_tilde, L, D, rho;
    // slbfgs
    int memory = 10;
    double gamma0 = 1.0;
    double eps_curv = 1e-8;
    double lambda_reg = 1e-4;
    std::vector<double> step_grid;
    // first order
    double momentum = 0.9;
    std::vector<double> momentum_grid;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long svrg_inner = 0;

    LineSearchConfig line_search_config;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::optional<SplitConfig> split;
    LossModel loss;
    SolverConfig solver;
    int batch_size = 100;
    int epochs = 200;
    std::vector<std::uint64_t> seeds;
    std::string output;  // CSV path; empty disables writing

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    }
};

namespace detail {

inline void check_keys(const Json& object, const std::vector<std::string>& allowed,
                       const std::string& context) {
    for (const auto& item : object.items()) {
        bool known = false;
        for (const auto& key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + context);
    }
}

inline LineSearchConfig parse_line_search_config(const Json& j) {
    check_keys(j, {"armijo_c", "backtrack_factor", "eta_init", "eta_min", "max_backtracks"},
               "line_search_config");
    LineSearchConfig cfg;
    cfg.armijo_c = j.value("armijo_c", cfg.armijo_c);
    cfg.backtrack_factor = j.value("backtrack_factor", cfg.backtrack_factor);
    cfg.eta_init = j.value("eta_init", cfg.eta_init);
    cfg.eta_min = j.value("eta_min", cfg.eta_min);
    cfg.max_backtracks = j.value("max_backtracks", cfg.max_backtracks);
    cfg.validate();
    return cfg;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const Json& j) {
    detail::check_keys(j, {"dataset", "split", "loss", "solver", "batch_size", "epochs", "seeds", "output"},
                       "top level");
    ExperimentConfig cfg;

    if (!j.contains("dataset")) throw std::invalid_argument("config: missing 'dataset'");
    const Json& jd = j.at("dataset");
    const std::string dataset_kind = jd.value("kind", std::string());
    if (dataset_kind == "synthetic") {
        detail::check_keys(jd, {"kind", "n", "d", "margin", "seed"}, "dataset");
        cfg.dataset.kind = DatasetConfig::Kind::synthetic;
        cfg.dataset.n = jd.value("n", cfg.dataset.n);
        cfg.dataset.d = jd.value("d", cfg.dataset.d);
        cfg.dataset.margin = jd.value("margin", cfg.dataset.margin);
        cfg.dataset.seed = jd.value("seed", cfg.dataset.seed);
    } else if (dataset_kind == "libsvm") {
        detail::check_keys(jd, {"kind", "path", "rbf_bandwidth"}, "dataset");
        cfg.dataset.kind = DatasetConfig::Kind::libsvm;
        cfg.dataset.path = jd.value("path", std::string());
        if (cfg.dataset.path.empty()) throw std::invalid_argument("config: dataset.path required");
        if (jd.contains("rbf_bandwidth")) cfg.dataset.rbf_bandwidth = jd.at("rbf_bandwidth").get<double>();
    } else {
        throw std::invalid_argument("config: dataset.kind must be 'synthetic' or 'libsvm'");
    }

    if (j.contains("split")) {
        const Json& js = j.at("split");
        detail::check_keys(js, {"train_fraction", "seed"}, "split");
        SplitConfig split;
        split.train_fraction = js.value("train_fraction", split.train_fraction);
        split.seed = js.value("seed", split.seed);
        cfg.split = split;
    }

    const std::string loss = j.value("loss", std::string("logistic"));
    if (loss == "logistic")
        cfg.loss.kind = LossKind::logistic;
    else if (loss == "squared_hinge")
        cfg.loss.kind = LossKind::squared_hinge;
    else
        throw std::invalid_argument("config: loss must be 'logistic' or 'squared_hinge'");

    if (!j.contains("solver")) throw std::invalid_argument("config: missing 'solver'");
    const Json& jsolver = j.at("solver");
    const std::string solver_kind = jsolver.value("kind", std::string());
    SolverConfig& s = cfg.solver;
    auto parse_common_ls = [&](const Json& obj) {
        if (obj.contains("line_search_config"))
            s.line_search_config = detail::parse_line_search_config(obj.at("line_search_config"));
    };
    if (solver_kind == "rssn_const" || solver_kind == "rssn_grow") {
        detail::check_keys(jsolver,
                           {"kind", "tau", "tau_decay", "line_search", "step_size", "cg_tol", "cg_max_iter",
                            "independent_batches", "growth_factor", "max_batch", "line_search_config"},
                           "solver");
        s.kind = solver_kind == "rssn_const" ? SolverConfig::Kind::rssn_const : SolverConfig::Kind::rssn_grow;
        s.tau = jsolver.value("tau", s.tau);
        s.tau_decay = jsolver.value("tau_decay", s.kind == SolverConfig::Kind::rssn_grow);
        s.line_search = jsolver.value("line_search", true);
        if (jsolver.contains("step_size")) s.step_size = jsolver.at("step_size").get<double>();
        s.cg_tol = jsolver.value("cg_tol", s.cg_tol);
        s.cg_max_iter = jsolver.value("cg_max_iter", s.cg_max_iter);
        s.independent_batches = jsolver.value("independent_batches", false);
        s.growth_factor = jsolver.value("growth_factor", s.growth_factor);
        s.max_batch = jsolver.value("max_batch", s.max_batch);
        parse_common_ls(jsolver);
    } else if (solver_kind == "newton") {
        detail::check_keys(jsolver, {"kind", "tau_floor", "cg_tol", "line_search_config"}, "solver");
        s.kind = SolverConfig::Kind::newton;
        s.tau_floor = jsolver.value("tau_floor", s.tau_floor);
        s.cg_tol = jsolver.value("cg_tol", 1e-12);
        parse_common_ls(jsolver);
    } else if (solver_kind == "sc_rssn") {
        detail::check_keys(jsolver, {"kind", "tau", "c", "eta", "mu_tilde", "L_tilde", "L", "D", "rho",
                                     "cg_tol", "cg_max_iter"},
                           "solver");
        s.kind = SolverConfig::Kind::sc_rssn;
        s.tau = jsolver.value("tau", s.tau);
        if (jsolver.contains("c")) s.sc_c = jsolver.at("c").get<double>();
        if (jsolver.contains("eta")) s.sc_eta = jsolver.at("eta").get<double>();
        if (jsolver.contains("mu_tilde")) s.mu_tilde = jsolver.at("mu_tilde").get<double>();
        if (jsolver.contains("L_tilde")) s.L_tilde = jsolver.at("L_tilde").get<double>();
        if (jsolver.contains("L")) s.L = jsolver.at("L").get<double>();
        if (jsolver.contains("D")) s.D = jsolver.at("D").get<double>();
        if (jsolver.contains("rho")) s.rho = jsolver.at("rho").get<double>();
        s.cg_tol = jsolver.value("cg_tol", s.cg_tol);
        s.cg_max_iter = jsolver.value("cg_max_iter", s.cg_max_iter);
    } else if (solver_kind == "slbfgs") {
        detail::check_keys(jsolver,
                           {"kind", "memory", "line_search", "step_size", "step_grid", "gamma0", "eps_curv",
                            "lambda_reg", "line_search_config"},
                           "solver");
        s.kind = SolverConfig::Kind::slbfgs;
        s.memory = jsolver.value("memory", s.memory);
        s.line_search = jsolver.value("line_search", false);
        if (jsolver.contains("step_size")) s.step_size = jsolver.at("step_size").get<double>();
        if (jsolver.contains("step_grid")) s.step_grid = jsolver.at("step_grid").get<std::vector<double>>();
        s.gamma0 = jsolver.value("gamma0", s.gamma0);
        s.eps_curv = jsolver.value("eps_curv", s.eps_curv);
        s.lambda_reg = jsolver.value("lambda_reg", s.lambda_reg);
        parse_common_ls(jsolver);
    } else if (solver_kind == "sgd" || solver_kind == "sgd_polyak") {
        detail::check_keys(jsolver,
                           {"kind", "line_search", "step_size", "momentum", "momentum_grid",
                            "line_search_config"},
                           "solver");
        s.kind = solver_kind == "sgd" ? SolverConfig::Kind::sgd : SolverConfig::Kind::sgd_polyak;
        s.line_search = jsolver.value("line_search", true);
        if (jsolver.contains("step_size")) s.step_size = jsolver.at("step_size").get<double>();
        s.momentum = jsolver.value("momentum", s.momentum);
        if (jsolver.contains("momentum_grid"))
            s.momentum_grid = jsolver.at("momentum_grid").get<std::vector<double>>();
        else if (solver_kind == "sgd_polyak" && !jsolver.contains("momentum"))
            s.momentum_grid = {0.1, 0.5, 0.9};
        parse_common_ls(jsolver);
    } else if (solver_kind == "svrg") {
        detail::check_keys(jsolver, {"kind", "step_size", "inner_iterations"}, "solver");
        s.kind = SolverConfig::Kind::svrg;
        s.step_size = jsolver.value("step_size", 0.1);
        s.svrg_inner = jsolver.value("inner_iterations", 0L);
    } else if (solver_kind == "adam") {
        detail::check_keys(jsolver, {"kind", "step_size", "beta1", "beta2", "eps"}, "solver");
        s.kind = SolverConfig::Kind::adam;
        s.step_size = jsolver.value("step_size", 1e-3);
        s.beta1 = jsolver.value("beta1", s.beta1);
        s.beta2 = jsolver.value("beta2", s.beta2);
        s.eps = jsolver.value("eps", s.eps);
    } else if (solver_kind == "adagrad") {
        detail::check_keys(jsolver, {"kind", "step_size", "eps"}, "solver");
        s.kind = SolverConfig::Kind::adagrad;
        s.step_size = jsolver.value("step_size", 1e-2);
        s.eps = jsolver.value("eps", s.eps);
    } else {
        throw std::invalid_argument("config: unknown solver kind '" + solver_kind + "'");
    }

    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output = j.value("output", std::string());

    if (const char* env_seed = std::getenv("SSN_OPT_SEED"))
        cfg.seeds = {std::stoull(env_seed)};

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open file '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config: failed to parse '" + path + "': " + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct TraceRow {
    std::uint64_t seed = 0;
    double epoch = 0.0;
    long iteration = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double grad_norm = 0.0;
    int batch_size = 0;
    double tau = 0.0;
    double step_size = 0.0;
    int cg_iters = 0;
    int ls_evals = 0;
    double wall_clock_seconds = 0.0;
};

inline const char* trace_csv_header() {
    return "seed,epoch,iteration,train_loss,test_accuracy,grad_norm,batch_size,tau,step_size,"
           "cg_iters,ls_evals,wall_clock_seconds";
}

namespace detail {

inline std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

}  // namespace detail

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<TraceRow> rows;
    bool failed = false;
    std::string error;
};

struct ExperimentResult {
    std::vector<SeedRun> runs;
    // Per-epoch mean/std of train_loss, test_accuracy, grad_norm over the
    // successful seeds (indexed by epoch row position).
    std::vector<TraceRow> mean_rows;
    std::vector<TraceRow> std_rows;

    bool any_failed() const {
        for (const auto& run : runs)
            if (run.failed) return true;
        return false;
    }
};

inline void write_trace_csv(const ExperimentResult& result, std::ostream& out) {
    out << trace_csv_header() << '\n';
    auto write_row = [&](const std::string& seed_label, const TraceRow& row) {
        out << seed_label << ',' << detail::format_double(row.epoch) << ',' << row.iteration << ','
            << detail::format_double(row.train_loss) << ',' << detail::format_double(row.test_accuracy)
            << ',' << detail::format_double(row.grad_norm) << ',' << row.batch_size << ','
            << detail::format_double(row.tau) << ',' << detail::format_double(row.step_size) << ','
            << row.cg_iters << ',' << row.ls_evals << ','
            << detail::format_double(row.wall_clock_seconds) << '\n';
    };
    for (const auto& run : result.runs)
        for (const auto& row : run.rows) write_row(std::to_string(run.seed), row);
    for (const auto& row : result.mean_rows) write_row("mean", row);
    for (const auto& row : result.std_rows) write_row("std", row);
    for (const auto& run : result.runs)
        if (run.failed) out << "# seed " << run.seed << " failed: " << run.error << '\n';
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

struct PreparedData {
    Dataset train;
    std::optional<Dataset> test;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    Dataset raw;
    if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
        raw = generate_margin_dataset({cfg.dataset.margin, cfg.dataset.n, cfg.dataset.d, cfg.dataset.seed})
                  .data;
    } else {
        std::ifstream in(cfg.dataset.path);
        if (!in) throw std::runtime_error("dataset: cannot open file '" + cfg.dataset.path + "'");
        raw = parse_libsvm(in);
    }

    PreparedData prepared;
    if (cfg.split) {
        Split split = train_test_split(raw, cfg.split->train_fraction, cfg.split->seed);
        if (cfg.dataset.rbf_bandwidth) {
            prepared.test = rbf_kernel_map(split.train, split.test, *cfg.dataset.rbf_bandwidth);
            prepared.train = rbf_kernel_map(split.train, split.train, *cfg.dataset.rbf_bandwidth);
        } else {
            prepared.train = std::move(split.train);
            prepared.test = std::move(split.test);
        }
    } else {
        prepared.train = cfg.dataset.rbf_bandwidth ? rbf_kernel_map(raw, raw, *cfg.dataset.rbf_bandwidth)
                                                   : std::move(raw);
    }
    if (cfg.batch_size > prepared.train.n())
        throw std::invalid_argument("config: batch_size exceeds training set size");
    return prepared;
}

namespace detail {

/// Per-iteration stepper assembled from the solver config; owns whatever
/// auxiliary state the method needs.
struct Stepper {
    std::function<void(SolverState&)> step;
};

inline Stepper make_stepper(const ExperimentConfig& cfg, const SolverConfig& solver,
                            const Dataset& train, std::optional<double> step_override,
                            std::optional<double> momentum_override) {
    const int n = train.n();
    const int b = std::min(cfg.batch_size, n);
    const LossModel model = cfg.loss;
    using Kind = SolverConfig::Kind;

    switch (solver.kind) {
        case Kind::rssn_const:
        case Kind::rssn_grow:
        case Kind::newton: {
            RssnConfig rssn;
            if (solver.kind == Kind::rssn_grow) {
                rssn.grad_batches = BatchSchedule::geometric(b, solver.growth_factor,
                                                             std::min(solver.max_batch, n), n);
            } else if (solver.kind == Kind::newton) {
                rssn.grad_batches = BatchSchedule::constant(n, n);
            } else {
                rssn.grad_batches = BatchSchedule::constant(b, n);
            }
            rssn.hess_batches = rssn.grad_batches;
            rssn.shared_batch = !solver.independent_batches;
            const double tau0 = solver.kind == Kind::newton ? solver.tau_floor : solver.tau;
            rssn.tau_schedule = solver.tau_decay && solver.kind != Kind::newton
                                    ? RegularizationSchedule::gradient_proportional(tau0)
                                    : RegularizationSchedule::constant(tau0);
            rssn.cg.tol = solver.cg_tol;
            rssn.cg.max_iter = solver.cg_max_iter;
            if (step_override)
                rssn.fixed_eta = *step_override;
            else if (solver.kind == Kind::newton || solver.line_search)
                rssn.line_search = solver.line_search_config;
            else if (solver.step_size)
                rssn.fixed_eta = *solver.step_size;
            else
                throw std::invalid_argument("config: rssn without line search needs step_size");
            return {[rssn, model, &train](SolverState& state) { rssn_step(state, model, train, rssn); }};
        }
        case Kind::sc_rssn: {
            SelfConcordantConstants sc;
            if (solver.sc_c && solver.sc_eta) {
                sc.c = *solver.sc_c;
                sc.eta = *solver.sc_eta;
                sc.tau = solver.tau;
            } else {
                // Estimate the missing constants from the data at a few
                // deterministic probe points.
                Rng probe_rng(0x5cc0115ULL);
                std::vector<Vector> probes;
                probes.push_back(Vector::Zero(train.d()));
                for (int p = 0; p < 3; ++p) {
                    Vector w(train.d());
                    for (int j = 0; j < train.d(); ++j) w[j] = 0.5 * probe_rng.next_normal();
                    probes.push_back(std::move(w));
                }
                EstimatedConstants est = estimate_constants(model, train, b, probes, 4, probe_rng);
                const double mu_tilde = solver.mu_tilde.value_or(est.mu_s);
                const double L_tilde = solver.L_tilde.value_or(est.L_s);
                const double L = solver.L.value_or(est.L);
                const double D = solver.D.value_or(10.0);
                const double rho = solver.rho.value_or(std::max(1.0, est.rho));
                sc = SelfConcordantConstants::derive(mu_tilde, L_tilde, L, D, solver.tau, rho);
                if (solver.sc_c) sc.c = *solver.sc_c;
                if (solver.sc_eta) sc.eta = *solver.sc_eta;
            }
            ScRssnConfig sc_cfg;
            sc_cfg.sc = sc;
            sc_cfg.grad_batches = BatchSchedule::constant(b, n);
            sc_cfg.hess_batches = sc_cfg.grad_batches;
            sc_cfg.cg.tol = solver.cg_tol;
            sc_cfg.cg.max_iter = solver.cg_max_iter;
            return {[sc_cfg, model, &train](SolverState& state) { sc_rssn_step(state, model, train, sc_cfg); }};
        }
        case Kind::slbfgs: {
            SlbfgsConfig sl;
            sl.batch_size = b;
            sl.gamma0 = solver.gamma0;
            sl.eps_curv = solver.eps_curv;
            sl.lambda_reg = solver.lambda_reg;
            if (step_override)
                sl.fixed_eta = *step_override;
            else if (solver.line_search)
                sl.line_search = solver.line_search_config;
            else if (solver.step_size)
                sl.fixed_eta = *solver.step_size;
            else
                throw std::invalid_argument("config: slbfgs without line search needs step_size or step_grid");
            auto memory = std::make_shared<LbfgsMemory>(solver.memory);
            return {[sl, model, &train, memory](SolverState& state) {
                slbfgs_step(state, *memory, model, train, sl);
            }};
        }
        case Kind::sgd:
        case Kind::sgd_polyak:
        case Kind::svrg:
        case Kind::adam:
        case Kind::adagrad: {
            FirstOrderConfig fo;
            fo.batch_size = b;
            switch (solver.kind) {
                case Kind::sgd: fo.kind = FirstOrderConfig::Kind::sgd; break;
                case Kind::sgd_polyak: fo.kind = FirstOrderConfig::Kind::sgd_polyak; break;
                case Kind::svrg: fo.kind = FirstOrderConfig::Kind::svrg; break;
                case Kind::adam: fo.kind = FirstOrderConfig::Kind::adam; break;
                case Kind::adagrad: fo.kind = FirstOrderConfig::Kind::adagrad; break;
                default: break;
            }
            fo.momentum = momentum_override.value_or(solver.momentum);
            fo.beta1 = solver.beta1;
            fo.beta2 = solver.beta2;
            fo.eps = solver.eps;
            fo.svrg_inner = solver.svrg_inner;
            const bool wants_ls = (fo.kind == FirstOrderConfig::Kind::sgd ||
                                   fo.kind == FirstOrderConfig::Kind::sgd_polyak) &&
                                  solver.line_search && !step_override;
            if (wants_ls)
                fo.line_search = solver.line_search_config;
            else if (step_override)
                fo.step_size = *step_override;
            else if (solver.step_size)
                fo.step_size = *solver.step_size;
            else
                throw std::invalid_argument("config: first-order solver needs step_size");
            auto buffers = std::make_shared<FirstOrderBuffers>();
            return {[fo, model, &train, buffers](SolverState& state) {
                first_order_step(state, *buffers, model, train, fo);
            }};
        }
    }
    throw std::logic_error("make_stepper: unhandled solver kind");
}

inline SeedRun run_single_seed(const ExperimentConfig& cfg, const PreparedData& data,
                               std::uint64_t seed, std::optional<double> step_override,
                               std::optional<double> momentum_override) {
    const Dataset& train = data.train;
    const int n = train.n();
    const Batch everything = full_batch(n);
    const LossModel model = cfg.loss;

    SeedRun run;
    run.seed = seed;
    SolverState state = make_state(train.d(), seed);
    Stepper stepper = make_stepper(cfg, cfg.solver, train, step_override, momentum_override);

    const auto start = std::chrono::steady_clock::now();
    auto record = [&](double epoch_hint) {
        TraceRow row;
        row.seed = seed;
        row.epoch = epoch_hint;
        row.iteration = state.k;
        row.train_loss = loss_value(model, train, everything, state.w);
        if (!std::isfinite(row.train_loss))
            throw std::runtime_error("run_experiment: non-finite training loss");
        row.test_accuracy = classification_accuracy(data.test ? *data.test : train, state.w);
        row.grad_norm = loss_gradient(model, train, everything, state.w).norm();
        row.batch_size = state.b_g;
        row.tau = state.tau;
        row.step_size = state.last_step;
        row.cg_iters = state.last_cg_iters;
        row.ls_evals = state.last_ls_evals;
        row.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.rows.push_back(row);
    };

    try {
        record(0.0);
        int next_epoch = 1;
        while (next_epoch <= cfg.epochs) {
            stepper.step(state);
            while (next_epoch <= cfg.epochs &&
                   state.samples_seen >= static_cast<double>(next_epoch) * n) {
                record(static_cast<double>(next_epoch));
                ++next_epoch;
            }
        }
    } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
    }
    return run;
}

inline double final_loss_of(const SeedRun& run) {
    if (run.failed || run.rows.empty()) return std::numeric_limits<double>::infinity();
    return run.rows.back().train_loss;
}

}  // namespace detail

/// Runs every seed (optionally in parallel) and assembles per-epoch summary
/// rows. Grid-valued hyperparameters (sLBFGS constant step, Polyak momentum)
/// are searched per seed and the best run by final training loss is kept.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1,
                                       std::ostream* progress = nullptr) {
    cfg.validate();
    const PreparedData data = prepare_data(cfg);

    std::vector<double> step_grid;
    std::vector<double> momentum_grid;
    if (cfg.solver.kind == SolverConfig::Kind::slbfgs && !cfg.solver.line_search &&
        !cfg.solver.step_size) {
        step_grid = cfg.solver.step_grid.empty()
                        ? std::vector<double>{1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0}
                        : cfg.solver.step_grid;
    }
    if (cfg.solver.kind == SolverConfig::Kind::sgd_polyak && !cfg.solver.momentum_grid.empty())
        momentum_grid = cfg.solver.momentum_grid;

    auto run_seed = [&](std::uint64_t seed) -> SeedRun {
        if (!step_grid.empty()) {
            SeedRun best;
            best.failed = true;
            for (double step : step_grid) {
                SeedRun candidate = detail::run_single_seed(cfg, data, seed, step, std::nullopt);
                if (detail::final_loss_of(candidate) < detail::final_loss_of(best) || best.rows.empty())
                    best = std::move(candidate);
            }
            return best;
        }
        if (!momentum_grid.empty()) {
            SeedRun best;
            best.failed = true;
            for (double momentum : momentum_grid) {
                SeedRun candidate = detail::run_single_seed(cfg, data, seed, std::nullopt, momentum);
                if (detail::final_loss_of(candidate) < detail::final_loss_of(best) || best.rows.empty())
                    best = std::move(candidate);
            }
            return best;
        }
        return detail::run_single_seed(cfg, data, seed, std::nullopt, std::nullopt);
    };

    ExperimentResult result;
    result.runs.resize(cfg.seeds.size());
    const int worker_count = std::max(1, std::min<int>(threads, static_cast<int>(cfg.seeds.size())));
    if (worker_count == 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            result.runs[i] = run_seed(cfg.seeds[i]);
            if (progress)
                (*progress) << "seed " << cfg.seeds[i] << (result.runs[i].failed ? " failed" : " done")
                            << '\n';
        }
    } else {
        std::mutex progress_mutex;
        std::vector<std::thread> workers;
        std::size_t next_index = 0;
        std::mutex index_mutex;
        for (int t = 0; t < worker_count; ++t) {
            workers.emplace_back([&]() {
                for (;;) {
                    std::size_t index;
                    {
                        std::lock_guard<std::mutex> lock(index_mutex);
                        if (next_index >= cfg.seeds.size()) return;
                        index = next_index++;
                    }
                    result.runs[index] = run_seed(cfg.seeds[index]);
                    if (progress) {
                        std::lock_guard<std::mutex> lock(progress_mutex);
                        (*progress) << "seed " << cfg.seeds[index]
                                    << (result.runs[index].failed ? " failed" : " done") << '\n';
                    }
                }
            });
        }
        for (auto& worker : workers) worker.join();
    }

    // Per-epoch summaries over successful seeds.
    std::size_t max_rows = 0;
    for (const auto& run : result.runs)
        if (!run.failed) max_rows = std::max(max_rows, run.rows.size());
    for (std::size_t r = 0; r < max_rows; ++r) {
        TraceRow mean{}, stddev{};
        int count = 0;
        for (const auto& run : result.runs) {
            if (run.failed || r >= run.rows.size()) continue;
            const TraceRow& row = run.rows[r];
            mean.epoch = row.epoch;
            mean.iteration = row.iteration;
            mean.train_loss += row.train_loss;
            mean.test_accuracy += row.test_accuracy;
            mean.grad_norm += row.grad_norm;
            mean.wall_clock_seconds += row.wall_clock_seconds;
            ++count;
        }
        if (count == 0) continue;
        mean.train_loss /= count;
        mean.test_accuracy /= count;
        mean.grad_norm /= count;
        mean.wall_clock_seconds /= count;
        stddev.epoch = mean.epoch;
        stddev.iteration = mean.iteration;
        for (const auto& run : result.runs) {
            if (run.failed || r >= run.rows.size()) continue;
            const TraceRow& row = run.rows[r];
            stddev.train_loss += (row.train_loss - mean.train_loss) * (row.train_loss - mean.train_loss);
            stddev.test_accuracy +=
                (row.test_accuracy - mean.test_accuracy) * (row.test_accuracy - mean.test_accuracy);
            stddev.grad_norm += (row.grad_norm - mean.grad_norm) * (row.grad_norm - mean.grad_norm);
        }
        stddev.train_loss = std::sqrt(stddev.train_loss / count);
        stddev.test_accuracy = std::sqrt(stddev.test_accuracy / count);
        stddev.grad_norm = std::sqrt(stddev.grad_norm / count);
        result.mean_rows.push_back(mean);
        result.std_rows.push_back(stddev);
    }

    if (!cfg.output.empty()) {
        std::ofstream out(cfg.output);
        if (!out) throw std::runtime_error("run_experiment: cannot open output file '" + cfg.output + "'");
        write_trace_csv(result, out);
    }
    return result;
}

}  // namespace ssn
