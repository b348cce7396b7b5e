#pragma once

#include <stdexcept>

namespace ssn {

/// Backtracking Armijo search on the current minibatch loss.
struct LineSearchConfig {
    double armijo_c = 0.1;        // sufficient-decrease constant in (0, 1)
    double backtrack_factor = 0.8;  // step shrink factor in (0, 1)
    double eta_init = 1.0;
    double eta_min = 1e-8;
    int max_backtracks = 50;

    void validate() const {
        if (!(armijo_c > 0.0 && armijo_c < 1.0))
            throw std::invalid_argument("LineSearchConfig: armijo_c must lie in (0, 1)");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
            throw std::invalid_argument("LineSearchConfig: backtrack_factor must lie in (0, 1)");
        if (!(eta_init > 0.0) || !(eta_min > 0.0) || eta_min > eta_init)
            throw std::invalid_argument("LineSearchConfig: need 0 < eta_min <= eta_init");
        if (max_backtracks < 1)
            throw std::invalid_argument("LineSearchConfig: max_backtracks must be >= 1");
    }
};

struct LineSearchResult {
    double step = 0.0;
    int evals = 0;
    bool satisfied = false;  // false means eta_min was returned on exhaustion
};

/// Returns the first eta in {eta_init * beta^j} satisfying
///   f_B(w - eta dir) <= f_B(w) - c eta (grad_B . dir),
/// or eta_min after max_backtracks trials. batch_loss maps a step size to
/// the minibatch loss at the stepped point; g_dot_dir must be positive
/// (descent is the caller's responsibility, guaranteed by PD curvature).
template <typename BatchLoss>
LineSearchResult stochastic_armijo(BatchLoss&& batch_loss, double f0, double g_dot_dir,
                                   const LineSearchConfig& cfg) {
    cfg.validate();
    if (!(g_dot_dir > 0.0))
        throw std::invalid_argument("stochastic_armijo: direction is not a descent direction");

    LineSearchResult result;
    double eta = cfg.eta_init;
    for (int trial = 0; trial < cfg.max_backtracks; ++trial) {
        const double f_trial = batch_loss(eta);
        ++result.evals;
        if (f_trial <= f0 - cfg.armijo_c * eta * g_dot_dir) {
            result.step = eta;
            result.satisfied = true;
            return result;
        }
        eta *= cfg.backtrack_factor;
        if (eta < cfg.eta_min) break;
    }
    result.step = cfg.eta_min;
    result.satisfied = false;
    return result;
}

}  // namespace ssn
