#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssn/losses.hpp"
#include "ssn/sampling.hpp"

namespace ssn {

// ---------------------------------------------------------------------------
// Strong growth condition
// ---------------------------------------------------------------------------

/// Empirical SGC constant: max over probe points of
///   (E_i ||grad f_i(w)||^2) / ||grad f(w)||^2,
/// with the inner expectation taken exactly over all n samples. Probes at
/// (numerically) stationary points are skipped; at least one probe must
/// survive. Any interpolating instance yields a finite estimate >= 1.
inline double estimate_sgc_rho(const LossModel& model, const Dataset& data,
                               const std::vector<Vector>& probe_points, int* skipped = nullptr) {
    if (probe_points.empty()) throw std::invalid_argument("estimate_sgc_rho: no probe points");
    const Batch everything = full_batch(data.n());
    double rho = 0.0;
    int used = 0;
    for (const Vector& w : probe_points) {
        const Vector g = loss_gradient(model, data, everything, w);
        const double g_sq = g.squaredNorm();
        if (g.norm() <= 1e-12) continue;
        double mean_sample_sq = 0.0;
        for (int i = 0; i < data.n(); ++i)
            mean_sample_sq += sample_gradient(model, data, i, w).squaredNorm();
        mean_sample_sq /= static_cast<double>(data.n());
        rho = std::max(rho, mean_sample_sq / g_sq);
        ++used;
    }
    if (skipped != nullptr) *skipped = static_cast<int>(probe_points.size()) - used;
    if (used == 0) throw std::runtime_error("estimate_sgc_rho: all probe points were stationary");
    return rho;
}

// ---------------------------------------------------------------------------
// Minibatch variance identity (exhaustive enumeration)
// ---------------------------------------------------------------------------

/// Calls fn(indices) for every size-b subset of {0,...,n-1} in
/// lexicographic order.
inline void for_each_combination(int n, int b, const std::function<void(const std::vector<int>&)>& fn) {
    if (b < 1 || b > n) throw std::invalid_argument("for_each_combination: need 1 <= b <= n");
    std::vector<int> comb(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) comb[static_cast<std::size_t>(i)] = i;
    for (;;) {
        fn(comb);
        int pos = b - 1;
        while (pos >= 0 && comb[static_cast<std::size_t>(pos)] == n - b + pos) --pos;
        if (pos < 0) return;
        ++comb[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < b; ++j)
            comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
}

struct VarianceCheck {
    double lhs;  // E ||y_B - ybar||^2 by exhaustive enumeration
    double rhs;  // closed form (n-b) / (n b (n-1)) sum_i ||y_i - ybar||^2
};

/// The without-replacement variance identity, both sides computed
/// independently: the enumeration is the oracle, the closed form is the
/// claim. The two agree exactly (up to roundoff); the Lemma bound forms are
/// provided separately below.
inline VarianceCheck variance_identity_check(const std::vector<Vector>& ys, int b) {
    const int n = static_cast<int>(ys.size());
    if (n < 1) throw std::invalid_argument("variance_identity_check: empty input");
    if (n > 12) throw std::invalid_argument("variance_identity_check: enumeration limited to n <= 12");
    if (b < 1 || b > n) throw std::invalid_argument("variance_identity_check: need 1 <= b <= n");

    Vector mean = Vector::Zero(ys.front().size());
    for (const Vector& y : ys) mean += y;
    mean /= static_cast<double>(n);

    double lhs = 0.0;
    long count = 0;
    for_each_combination(n, b, [&](const std::vector<int>& comb) {
        Vector batch_mean = Vector::Zero(mean.size());
        for (int i : comb) batch_mean += ys[static_cast<std::size_t>(i)];
        batch_mean /= static_cast<double>(b);
        lhs += (batch_mean - mean).squaredNorm();
        ++count;
    });
    lhs /= static_cast<double>(count);

    double rhs = 0.0;
    if (b < n) {
        double scatter = 0.0;
        for (const Vector& y : ys) scatter += (y - mean).squaredNorm();
        rhs = static_cast<double>(n - b) /
              (static_cast<double>(n) * static_cast<double>(b) * static_cast<double>(n - 1)) * scatter;
    }
    return {lhs, rhs};
}

/// Bound form under the growth condition E_i ||y_i||^2 <= c ||ybar||^2:
///   E ||y_B - ybar||^2 <= (n-b)(c-1) / ((n-1) b) ||ybar||^2.
inline double growth_variance_bound(int n, int b, double c, double ybar_squared_norm) {
    if (b >= n) return 0.0;
    return static_cast<double>(n - b) * (c - 1.0) /
           (static_cast<double>(n - 1) * static_cast<double>(b)) * ybar_squared_norm;
}

/// Bound form under the stronger growth condition E_i ||y_i||^2 <= c ||ybar||^4:
///   E ||y_B - ybar||^2 <= (n-b) c / ((n-1) b) ||ybar||^4.
inline double strong_growth_variance_bound(int n, int b, double c, double ybar_squared_norm) {
    if (b >= n) return 0.0;
    return static_cast<double>(n - b) * c /
           (static_cast<double>(n - 1) * static_cast<double>(b)) *
           ybar_squared_norm * ybar_squared_norm;
}

// ---------------------------------------------------------------------------
// Newton-decrement growth condition
// ---------------------------------------------------------------------------

struct NewtonDecrementCheck {
    double lhs;         // exact E_i lambda_i^2 over single-sample gradients
    double rhs_bound;   // rho_nd * lambda^2 with rho_nd from spectral bounds
    double decrement_squared;  // lambda^2(w) for the full gradient
    double rho_hat;     // SGC ratio at w
};

/// Both sides of the Newton-decrement growth condition at w, computed by
/// dense linear algebra (small d only): the left side averages
/// grad f_i . [H + tau I]^{-1} grad f_i over all samples; the right side is
/// rho_hat (lmax(H)+tau)/(lmin(H)+tau) times the full decrement squared.
inline NewtonDecrementCheck newton_decrement_sgc_check(const LossModel& model, const Dataset& data,
                                                       const Vector& w, double tau,
                                                       int dimension_cap = 2000) {
    const Batch everything = full_batch(data.n());
    const Vector g = loss_gradient(model, data, everything, w);
    if (g.norm() <= 1e-12)
        throw std::invalid_argument("newton_decrement_sgc_check: w is stationary");

    const Matrix h_reg = dense_hessian(model, data, everything, w, tau, dimension_cap);
    const Eigen::LDLT<Matrix> ldlt(h_reg);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("newton_decrement_sgc_check: factorization failed");

    double lhs = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        const Vector gi = sample_gradient(model, data, i, w);
        lhs += gi.dot(ldlt.solve(gi));
    }
    lhs /= static_cast<double>(data.n());

    const double lambda_sq = g.dot(ldlt.solve(g));

    Matrix h_plain = h_reg;
    h_plain.diagonal().array() -= tau;
    const Eigen::SelfAdjointEigenSolver<Matrix> eigen(h_plain, Eigen::EigenvaluesOnly);
    const double lmin = eigen.eigenvalues().minCoeff();
    const double lmax = eigen.eigenvalues().maxCoeff();
    if (!(lmin + tau > 0.0))
        throw std::runtime_error("newton_decrement_sgc_check: regularized Hessian is singular");

    const double rho_hat = estimate_sgc_rho(model, data, {w});
    const double rho_nd = rho_hat * (lmax + tau) / (lmin + tau);
    return {lhs, rho_nd * lambda_sq, lambda_sq, rho_hat};
}

// ---------------------------------------------------------------------------
// Convergence-rate estimation
// ---------------------------------------------------------------------------

enum class RateKind { q_linear_factor, order_q };

struct RateEstimate {
    RateKind kind;
    double value;
    std::pair<int, int> window;  // [begin, end) indices into the error sequence
};

/// Fits a rate to a positive error sequence over [window.first, window.second):
/// the Q-linear factor is the geometric mean of successive ratios, and the
/// order q averages log e_{k+1} / log e_k (only meaningful below 1, which is
/// enforced). Multiplying the sequence by a positive constant leaves the
/// Q-linear factor unchanged.
inline RateEstimate convergence_order(const std::vector<double>& errors, std::pair<int, int> window,
                                      RateKind kind) {
    const int begin = window.first;
    const int end = window.second;
    if (begin < 0 || end > static_cast<int>(errors.size()) || end - begin < 3)
        throw std::invalid_argument("convergence_order: window must cover at least 3 entries");
    for (int k = begin; k < end; ++k) {
        const double e = errors[static_cast<std::size_t>(k)];
        if (!(e > 0.0)) throw std::invalid_argument("convergence_order: errors must be positive");
        if (kind == RateKind::order_q && e >= 1.0)
            throw std::invalid_argument("convergence_order: order fit requires errors below 1");
    }

    double acc = 0.0;
    const int ratios = end - begin - 1;
    for (int k = begin; k + 1 < end; ++k) {
        const double e0 = errors[static_cast<std::size_t>(k)];
        const double e1 = errors[static_cast<std::size_t>(k + 1)];
        if (kind == RateKind::q_linear_factor)
            acc += std::log(e1 / e0);
        else
            acc += std::log(e1) / std::log(e0);
    }
    const double value = kind == RateKind::q_linear_factor
                             ? std::exp(acc / static_cast<double>(ratios))
                             : acc / static_cast<double>(ratios);
    return {kind, value, window};
}

/// Picks the fit window for a superlinear run: the last `count` entries of
/// the strictly decreasing prefix that stay above `floor` (10x machine
/// epsilon by default keeps log-of-noise out of the fit).
inline std::pair<int, int> last_decreasing_window(const std::vector<double>& errors, int count,
                                                  double floor = 2.2e-15) {
    int end = 0;
    while (end < static_cast<int>(errors.size()) && errors[static_cast<std::size_t>(end)] > floor &&
           (end == 0 || errors[static_cast<std::size_t>(end)] < errors[static_cast<std::size_t>(end - 1)]))
        ++end;
    const int begin = std::max(0, end - count);
    return {begin, end};
}

// ---------------------------------------------------------------------------
// Constant estimation for the theorem-mode solvers
// ---------------------------------------------------------------------------

struct EigenvalueBounds {
    double min_eigenvalue;
    double max_eigenvalue;
};

/// Spectral range of the (regularized) subsampled Hessian, via dense
/// assembly; small d only.
inline EigenvalueBounds hessian_eigenvalue_bounds(const LossModel& model, const Dataset& data,
                                                  const Batch& batch, const Vector& w, double tau = 0.0,
                                                  int dimension_cap = 2000) {
    const Matrix h = dense_hessian(model, data, batch, w, tau, dimension_cap);
    const Eigen::SelfAdjointEigenSolver<Matrix> eigen(h, Eigen::EigenvaluesOnly);
    return {eigen.eigenvalues().minCoeff(), eigen.eigenvalues().maxCoeff()};
}

struct EstimatedConstants {
    double mu_s = 0.0;     // min eigenvalue seen over sampled batch Hessians
    double L_s = 0.0;      // max eigenvalue seen over sampled batch Hessians
    double L = 0.0;        // max eigenvalue of the full Hessian over probes
    double rho = 1.0;      // SGC estimate over the same probes
};

/// Estimates the problem constants the theorem-mode step sizes need, by
/// probing random batches at the supplied points. These are empirical
/// stand-ins for quantities the theory treats as known.
inline EstimatedConstants estimate_constants(const LossModel& model, const Dataset& data,
                                             int batch_size, const std::vector<Vector>& probes,
                                             int batch_trials, Rng& rng, int dimension_cap = 2000) {
    if (probes.empty()) throw std::invalid_argument("estimate_constants: no probe points");
    if (batch_trials < 1) throw std::invalid_argument("estimate_constants: batch_trials must be >= 1");
    EstimatedConstants out;
    out.mu_s = std::numeric_limits<double>::infinity();
    const Batch everything = full_batch(data.n());
    for (const Vector& w : probes) {
        const auto full_bounds = hessian_eigenvalue_bounds(model, data, everything, w, 0.0, dimension_cap);
        out.L = std::max(out.L, full_bounds.max_eigenvalue);
        for (int trial = 0; trial < batch_trials; ++trial) {
            const Batch batch = draw_batch(data.n(), std::min(batch_size, data.n()), rng);
            const auto bounds = hessian_eigenvalue_bounds(model, data, batch, w, 0.0, dimension_cap);
            out.mu_s = std::min(out.mu_s, std::max(0.0, bounds.min_eigenvalue));
            out.L_s = std::max(out.L_s, bounds.max_eigenvalue);
        }
    }
    out.rho = estimate_sgc_rho(model, data, probes);
    return out;
}

/// omega(t) = t - ln(1 + t), the self-concordant descent potential.
inline double omega(double t) { return t - std::log1p(t); }

}  // namespace ssn
