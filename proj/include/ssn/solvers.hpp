#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "ssn/cg.hpp"
#include "ssn/dataset.hpp"
#include "ssn/lbfgs.hpp"
#include "ssn/linesearch.hpp"
#include "ssn/losses.hpp"
#include "ssn/rng.hpp"
#include "ssn/sampling.hpp"

namespace ssn {

/// Mutable per-run state shared by all stochastic solvers. Epochs are
/// fractional: samples_seen / n, counting only sampled training examples
/// (line-search and CG evaluations are excluded on purpose).
struct SolverState {
    Vector w;
    long k = 0;
    double samples_seen = 0.0;
    Rng rng;
    double tau = 0.0;
    int b_g = 0;
    int b_s = 0;
    double last_step = 0.0;
    double last_grad_norm = std::numeric_limits<double>::infinity();
    int last_cg_iters = 0;
    int last_ls_evals = 0;

    double epoch(int n) const { return samples_seen / static_cast<double>(n); }
};

inline SolverState make_state(int dimension, std::uint64_t seed) {
    SolverState state;
    state.w = Vector::Zero(dimension);
    state.rng = Rng(seed);
    return state;
}

// ---------------------------------------------------------------------------
// Adaptive step size for R-SSN with constant batches
// ---------------------------------------------------------------------------

struct Theorem1Constants {
    double mu_s = 1.0;    // strong convexity of the subsampled objective
    double L_s = 1.0;     // smoothness of the subsampled objective
    double mu_bar = 1.0;  // average strong convexity over components
    double L_tilde = 1.0; // worst-case subsampled smoothness
    double L = 1.0;       // smoothness of the full objective
    double rho = 1.0;     // SGC constant
    double tau = 0.0;

    void validate() const {
        if (mu_s > L_s) throw std::invalid_argument("Theorem1Constants: mu_s must not exceed L_s");
        if (L < mu_bar) throw std::invalid_argument("Theorem1Constants: L must be >= mu_bar");
        if (rho < 1.0) throw std::invalid_argument("Theorem1Constants: rho must be >= 1");
        if (tau < 0.0) throw std::invalid_argument("Theorem1Constants: tau must be >= 0");
    }
};

/// Gradient-noise factor c_g = (rho-1)(n-b_g) / ((n-1) b_g); zero at full
/// batch or with deterministic gradients.
inline double gradient_noise_factor(double rho, int n, int b_g) {
    if (b_g >= n || rho <= 1.0) return 0.0;
    return (rho - 1.0) * static_cast<double>(n - b_g) /
           (static_cast<double>(n - 1) * static_cast<double>(b_g));
}

/// eta = (mu_s+tau)^2 / (L ((mu_s+tau) + (L_s+tau) c_g)); always within the
/// contraction-safe range eta <= (mu_s+tau)/L.
inline double theorem1_step_size(const Theorem1Constants& c, int n, int b_g) {
    c.validate();
    if (b_g < 1 || b_g > n) throw std::invalid_argument("theorem1_step_size: b_g must lie in [1, n]");
    const double cg = gradient_noise_factor(c.rho, n, b_g);
    const double ms = c.mu_s + c.tau;
    const double ls = c.L_s + c.tau;
    return ms * ms / (c.L * (ms + ls * cg));
}

// ---------------------------------------------------------------------------
// R-SSN
// ---------------------------------------------------------------------------

struct RssnConfig {
    BatchSchedule grad_batches;
    BatchSchedule hess_batches;
    bool shared_batch = true;  // use one batch for gradient and Hessian (experiment default)
    RegularizationSchedule tau_schedule = RegularizationSchedule::constant(0.0);
    CgConfig cg;
    std::optional<LineSearchConfig> line_search;
    std::optional<double> fixed_eta;

    void validate() const {
        if (line_search.has_value() == fixed_eta.has_value())
            throw std::invalid_argument("RssnConfig: provide exactly one of line_search / fixed_eta");
    }
};

/// One iteration of regularized subsampled Newton:
///   w <- w - eta [hess f_S(w) + tau I]^{-1} grad f_G(w)
/// with the direction obtained Hessian-free by truncated CG and eta from
/// the stochastic Armijo search on the gradient batch (or a fixed step).
inline void rssn_step(SolverState& state, const LossModel& model, const Dataset& data,
                      const RssnConfig& cfg) {
    cfg.validate();
    const int n = data.n();

    state.b_g = next_batch_size(cfg.grad_batches, state.k, state.last_grad_norm);
    const Batch grad_batch = draw_batch(n, state.b_g, state.rng);
    Batch hess_storage;
    if (cfg.shared_batch) {
        state.b_s = state.b_g;
    } else {
        state.b_s = next_batch_size(cfg.hess_batches, state.k, state.last_grad_norm);
        hess_storage = draw_batch(n, state.b_s, state.rng);
    }
    const Batch& hess_batch = cfg.shared_batch ? grad_batch : hess_storage;

    const Vector g = loss_gradient(model, data, grad_batch, state.w);
    const double grad_norm = g.norm();
    if (!std::isfinite(grad_norm)) throw std::runtime_error("rssn_step: non-finite gradient");
    state.last_grad_norm = grad_norm;
    state.tau = next_tau(cfg.tau_schedule, grad_norm);

    state.last_cg_iters = 0;
    state.last_ls_evals = 0;
    state.last_step = 0.0;
    if (grad_norm > 0.0) {
        const HessianOperator op(model, data, hess_batch, state.w, state.tau);
        const CgResult cg = truncated_cg(op, g, cfg.cg);
        state.last_cg_iters = cg.iterations;
        const Vector& direction = cg.direction;

        double eta;
        if (cfg.fixed_eta) {
            eta = *cfg.fixed_eta;
        } else {
            const double f0 = loss_value(model, data, grad_batch, state.w);
            const double g_dot_dir = g.dot(direction);
            const auto ls = stochastic_armijo(
                [&](double trial) { return loss_value(model, data, grad_batch, state.w - trial * direction); },
                f0, g_dot_dir, *cfg.line_search);
            eta = ls.step;
            state.last_ls_evals = ls.evals;
        }
        state.w -= eta * direction;
        if (!state.w.allFinite()) throw std::runtime_error("rssn_step: non-finite iterate");
        state.last_step = eta;
    }

    state.samples_seen += cfg.shared_batch ? state.b_g : state.b_g + state.b_s;
    ++state.k;
}

// ---------------------------------------------------------------------------
// Self-concordant R-SSN
// ---------------------------------------------------------------------------

struct SelfConcordantConstants {
    double c = 1.0;    // damping scale in (0, 1]
    double eta = 1.0;  // step scale in (0, 1]
    double mu_tilde = 0.0;
    double L_tilde = 1.0;
    double L = 1.0;
    double D = 1.0;  // iterate diameter bound
    double tau = 0.0;

    /// Derives c = sqrt((mu_tilde+tau)/L) and the largest admissible eta
    ///   eta = c / (rho_nd (1 + L_tilde D / (mu_tilde+tau)))
    /// with rho_nd = rho L / (mu_tilde+tau), both clamped into (0, 1].
    static SelfConcordantConstants derive(double mu_tilde, double L_tilde, double L, double D,
                                          double tau, double rho) {
        if (!(mu_tilde + tau > 0.0))
            throw std::invalid_argument("SelfConcordantConstants: mu_tilde + tau must be positive");
        if (!(L > 0.0) || !(D > 0.0) || rho < 1.0)
            throw std::invalid_argument("SelfConcordantConstants: invalid inputs");
        SelfConcordantConstants sc;
        sc.mu_tilde = mu_tilde;
        sc.L_tilde = L_tilde;
        sc.L = L;
        sc.D = D;
        sc.tau = tau;
        sc.c = std::min(1.0, std::sqrt((mu_tilde + tau) / L));
        const double rho_nd = rho * L / (mu_tilde + tau);
        sc.eta = std::min(1.0, sc.c / (rho_nd * (1.0 + L_tilde * D / (mu_tilde + tau))));
        return sc;
    }

    void validate() const {
        if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("SelfConcordantConstants: c must lie in (0, 1]");
        if (!(eta > 0.0 && eta <= 1.0))
            throw std::invalid_argument("SelfConcordantConstants: eta must lie in (0, 1]");
        if (tau < 0.0) throw std::invalid_argument("SelfConcordantConstants: tau must be >= 0");
    }
};

struct ScRssnConfig {
    SelfConcordantConstants sc;
    BatchSchedule grad_batches;
    BatchSchedule hess_batches;
    bool shared_batch = true;
    CgConfig cg;
};

/// Damped Newton update for self-concordant losses:
///   w <- w - (c eta / (1 + eta lambda_k)) [hess f_S + tau I]^{-1} grad f_G
/// where lambda_k = sqrt(grad f_G . direction) is the regularized stochastic
/// Newton decrement (the direction already carries the inverse Hessian).
inline void sc_rssn_step(SolverState& state, const LossModel& model, const Dataset& data,
                         const ScRssnConfig& cfg) {
    cfg.sc.validate();
    const int n = data.n();

    state.b_g = next_batch_size(cfg.grad_batches, state.k, state.last_grad_norm);
    const Batch grad_batch = draw_batch(n, state.b_g, state.rng);
    Batch hess_storage;
    if (cfg.shared_batch) {
        state.b_s = state.b_g;
    } else {
        state.b_s = next_batch_size(cfg.hess_batches, state.k, state.last_grad_norm);
        hess_storage = draw_batch(n, state.b_s, state.rng);
    }
    const Batch& hess_batch = cfg.shared_batch ? grad_batch : hess_storage;

    const Vector g = loss_gradient(model, data, grad_batch, state.w);
    const double grad_norm = g.norm();
    if (!std::isfinite(grad_norm)) throw std::runtime_error("sc_rssn_step: non-finite gradient");
    state.last_grad_norm = grad_norm;
    state.tau = cfg.sc.tau;

    state.last_cg_iters = 0;
    state.last_ls_evals = 0;
    state.last_step = 0.0;
    if (grad_norm > 0.0) {
        const HessianOperator op(model, data, hess_batch, state.w, cfg.sc.tau);
        const CgResult cg = truncated_cg(op, g, cfg.cg);
        state.last_cg_iters = cg.iterations;
        const double decrement = std::sqrt(std::max(0.0, g.dot(cg.direction)));
        const double factor = cfg.sc.c * cfg.sc.eta / (1.0 + cfg.sc.eta * decrement);
        state.w -= factor * cg.direction;
        if (!state.w.allFinite()) throw std::runtime_error("sc_rssn_step: non-finite iterate");
        state.last_step = factor;
    }

    state.samples_seen += cfg.shared_batch ? state.b_g : state.b_g + state.b_s;
    ++state.k;
}

// ---------------------------------------------------------------------------
// Stochastic L-BFGS
// ---------------------------------------------------------------------------

struct SlbfgsConfig {
    int batch_size = 100;
    double gamma0 = 1.0;      // initial inverse-Hessian scale while memory is empty
    double eps_curv = 1e-8;   // curvature skip threshold
    double lambda_reg = 1e-4; // shift y <- y + lambda_reg s before the curvature test
    std::optional<LineSearchConfig> line_search;
    std::optional<double> fixed_eta;

    void validate() const {
        if (line_search.has_value() == fixed_eta.has_value())
            throw std::invalid_argument("SlbfgsConfig: provide exactly one of line_search / fixed_eta");
        if (batch_size < 1) throw std::invalid_argument("SlbfgsConfig: batch_size must be >= 1");
    }
};

/// One stochastic L-BFGS iteration in the full-overlap setting: the same
/// minibatch supplies the gradient, the step, and both gradients of the
/// curvature pair (s, y) = (w' - w, grad_B(w') - grad_B(w)).
inline void slbfgs_step(SolverState& state, LbfgsMemory& memory, const LossModel& model,
                        const Dataset& data, const SlbfgsConfig& cfg) {
    cfg.validate();
    const int n = data.n();
    state.b_g = std::min(cfg.batch_size, n);
    state.b_s = 0;
    const Batch batch = draw_batch(n, state.b_g, state.rng);

    const Vector g = loss_gradient(model, data, batch, state.w);
    const double grad_norm = g.norm();
    if (!std::isfinite(grad_norm)) throw std::runtime_error("slbfgs_step: non-finite gradient");
    state.last_grad_norm = grad_norm;
    state.last_cg_iters = 0;
    state.last_ls_evals = 0;
    state.last_step = 0.0;

    if (grad_norm > 0.0) {
        Vector direction = lbfgs_direction(memory, g, cfg.gamma0);
        double g_dot_dir = g.dot(direction);
        if (!(g_dot_dir > 0.0)) {
            // Curvature-positive pairs make B_k positive definite, so this
            // only triggers on numerical degeneracy; fall back to scaled
            // steepest descent.
            direction = cfg.gamma0 * g;
            g_dot_dir = cfg.gamma0 * grad_norm * grad_norm;
        }

        double eta;
        if (cfg.fixed_eta) {
            eta = *cfg.fixed_eta;
        } else {
            const double f0 = loss_value(model, data, batch, state.w);
            const auto ls = stochastic_armijo(
                [&](double trial) { return loss_value(model, data, batch, state.w - trial * direction); },
                f0, g_dot_dir, *cfg.line_search);
            eta = ls.step;
            state.last_ls_evals = ls.evals;
        }

        const Vector w_next = state.w - eta * direction;
        if (!w_next.allFinite()) throw std::runtime_error("slbfgs_step: non-finite iterate");
        const Vector y = loss_gradient(model, data, batch, w_next) - g;
        lbfgs_update_memory(memory, w_next - state.w, y, cfg.eps_curv, cfg.lambda_reg);
        state.w = w_next;
        state.last_step = eta;
    }

    state.samples_seen += state.b_g;
    ++state.k;
}

// ---------------------------------------------------------------------------
// First-order baselines
// ---------------------------------------------------------------------------

struct FirstOrderConfig {
    enum class Kind { sgd, sgd_polyak, svrg, adam, adagrad };

    Kind kind = Kind::sgd;
    int batch_size = 100;
    double step_size = 1e-3;  // fixed step (svrg/adam/adagrad, or sgd without line search)
    std::optional<LineSearchConfig> line_search;  // sgd and sgd_polyak only
    double momentum = 0.9;    // Polyak coefficient
    double beta1 = 0.9;       // Adam first-moment decay
    double beta2 = 0.999;     // Adam second-moment decay
    double eps = 1e-8;
    long svrg_inner = 0;      // inner steps per snapshot; 0 selects n / batch_size

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("FirstOrderConfig: batch_size must be >= 1");
        if (line_search && kind != Kind::sgd && kind != Kind::sgd_polyak)
            throw std::invalid_argument("FirstOrderConfig: line search applies to SGD variants only");
        if (!line_search && !(step_size > 0.0))
            throw std::invalid_argument("FirstOrderConfig: step_size must be positive");
    }
};

/// Buffers owned by the first-order methods across iterations.
struct FirstOrderBuffers {
    Vector previous_w;    // Polyak momentum
    bool have_previous = false;
    Vector adam_m, adam_v;
    long adam_t = 0;
    Vector adagrad_acc;
    Vector svrg_snapshot, svrg_full_gradient;
    long svrg_counter = 0;
    double previous_step = 0.0;  // SGD warm-start for the line-search trial step
};

inline void first_order_step(SolverState& state, FirstOrderBuffers& buffers, const LossModel& model,
                             const Dataset& data, const FirstOrderConfig& cfg) {
    cfg.validate();
    const int n = data.n();
    const int b = std::min(cfg.batch_size, n);
    state.b_g = b;
    state.b_s = 0;
    state.last_cg_iters = 0;
    state.last_ls_evals = 0;

    using Kind = FirstOrderConfig::Kind;

    if (cfg.kind == Kind::svrg) {
        const long period = cfg.svrg_inner > 0 ? cfg.svrg_inner : std::max<long>(1, n / b);
        if (buffers.svrg_counter % period == 0) {
            buffers.svrg_snapshot = state.w;
            buffers.svrg_full_gradient = loss_gradient(model, data, full_batch(n), state.w);
            state.samples_seen += n;  // snapshot pass counts toward the epoch budget
        }
        ++buffers.svrg_counter;
    }

    const Batch batch = draw_batch(n, b, state.rng);
    const Vector g = loss_gradient(model, data, batch, state.w);
    state.last_grad_norm = g.norm();

    Vector update;
    double eta = cfg.step_size;
    switch (cfg.kind) {
        case Kind::sgd:
        case Kind::sgd_polyak: {
            update = g;
            if (cfg.line_search) {
                const double g_sq = g.squaredNorm();
                if (g_sq > 0.0) {
                    LineSearchConfig ls_cfg = *cfg.line_search;
                    if (buffers.previous_step > 0.0)
                        ls_cfg.eta_init = std::max(ls_cfg.eta_min, std::min(buffers.previous_step * 2.0, 10.0));
                    const double f0 = loss_value(model, data, batch, state.w);
                    const auto ls = stochastic_armijo(
                        [&](double trial) { return loss_value(model, data, batch, state.w - trial * g); },
                        f0, g_sq, ls_cfg);
                    eta = ls.step;
                    state.last_ls_evals = ls.evals;
                    buffers.previous_step = eta;
                } else {
                    eta = 0.0;
                }
            }
            break;
        }
        case Kind::svrg: {
            const Vector snapshot_grad = loss_gradient(model, data, batch, buffers.svrg_snapshot);
            update = g - snapshot_grad + buffers.svrg_full_gradient;
            break;
        }
        case Kind::adam: {
            if (buffers.adam_t == 0) {
                buffers.adam_m = Vector::Zero(data.d());
                buffers.adam_v = Vector::Zero(data.d());
            }
            ++buffers.adam_t;
            buffers.adam_m = cfg.beta1 * buffers.adam_m + (1.0 - cfg.beta1) * g;
            buffers.adam_v = cfg.beta2 * buffers.adam_v.array().matrix() +
                             (1.0 - cfg.beta2) * g.array().square().matrix();
            const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(buffers.adam_t));
            const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(buffers.adam_t));
            update = ((buffers.adam_m / m_corr).array() /
                      ((buffers.adam_v / v_corr).array().sqrt() + cfg.eps))
                         .matrix();
            break;
        }
        case Kind::adagrad: {
            if (buffers.adagrad_acc.size() == 0) buffers.adagrad_acc = Vector::Zero(data.d());
            buffers.adagrad_acc += g.array().square().matrix();
            update = (g.array() / (buffers.adagrad_acc.array().sqrt() + cfg.eps)).matrix();
            break;
        }
    }

    Vector w_next = state.w - eta * update;
    if (cfg.kind == Kind::sgd_polyak) {
        if (buffers.have_previous) w_next += cfg.momentum * (state.w - buffers.previous_w);
        buffers.previous_w = state.w;
        buffers.have_previous = true;
    }
    if (!w_next.allFinite()) throw std::runtime_error("first_order_step: non-finite iterate");
    state.w = std::move(w_next);
    state.last_step = eta;
    state.samples_seen += b;
    ++state.k;
}

// ---------------------------------------------------------------------------
// Deterministic full-batch Newton (baseline and w* reference)
// ---------------------------------------------------------------------------

struct FullNewtonOptions {
    int max_iter = 500;
    LineSearchConfig line_search{.armijo_c = 1e-4, .backtrack_factor = 0.5, .eta_init = 1.0,
                                 .eta_min = 1e-12, .max_backtracks = 60};
};

/// Damped Newton with a dense factorization, run until ||grad f(w)|| <= tol.
/// tau_floor is added to the Hessian for factorization safety only; it does
/// not change the objective. Fully deterministic, so repeated calls with the
/// same data give bitwise-identical minimizers.
inline Vector full_newton_solve(const LossModel& model, const Dataset& data, double tau_floor,
                                double tol, Vector w0 = Vector(),
                                const FullNewtonOptions& options = {}) {
    if (w0.size() == 0) w0 = Vector::Zero(data.d());
    if (w0.size() != data.d()) throw std::invalid_argument("full_newton_solve: w0 dimension mismatch");
    const Batch everything = full_batch(data.n());

    Vector w = std::move(w0);
    for (int iter = 0; iter < options.max_iter; ++iter) {
        const Vector g = loss_gradient(model, data, everything, w);
        if (g.norm() <= tol) return w;

        Vector direction;
        double damping = std::max(tau_floor, 0.0);
        for (;;) {
            Matrix h = dense_hessian(model, data, everything, w, damping, data.d());
            const Eigen::LDLT<Matrix> ldlt(h);
            if (ldlt.info() == Eigen::Success) {
                direction = ldlt.solve(g);
                if (direction.allFinite() && g.dot(direction) > 0.0) break;
            }
            damping = damping > 0.0 ? damping * 10.0 : 1e-12;
            if (damping > 1e12) throw std::runtime_error("full_newton_solve: cannot stabilize Hessian");
        }

        const double f0 = loss_value(model, data, everything, w);
        const auto ls = stochastic_armijo(
            [&](double trial) { return loss_value(model, data, everything, w - trial * direction); },
            f0, g.dot(direction), options.line_search);
        w -= ls.step * direction;
        if (!w.allFinite()) throw std::runtime_error("full_newton_solve: non-finite iterate");
    }
    const Vector g = loss_gradient(model, data, everything, w);
    if (g.norm() <= tol) return w;
    throw std::runtime_error("full_newton_solve: did not converge within the iteration cap");
}

}  // namespace ssn
