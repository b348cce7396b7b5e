#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ssn/rng.hpp"

namespace ssn {

/// Minibatch: unique sorted sample indices in [0, n).
struct Batch {
    std::vector<int> indices;

    int size() const { return static_cast<int>(indices.size()); }
};

inline Batch full_batch(int n) {
    Batch b;
    b.indices.resize(static_cast<std::size_t>(n));
    std::iota(b.indices.begin(), b.indices.end(), 0);
    return b;
}

/// Uniform without-replacement sample of b indices from {0,...,n-1} via a
/// partial Fisher-Yates shuffle over an index buffer.
inline Batch draw_batch(int n, int b, Rng& rng) {
    if (b < 1) throw std::invalid_argument("draw_batch: batch size must be >= 1");
    if (b > n) throw std::invalid_argument("draw_batch: batch size exceeds population");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    Batch batch;
    batch.indices.reserve(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const auto j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        batch.indices.push_back(pool[static_cast<std::size_t>(i)]);
    }
    std::sort(batch.indices.begin(), batch.indices.end());
    return batch;
}

/// Batch-size rule evaluated once per iteration. `constant` and `geometric`
/// are the practical modes; the gradient-adaptive modes implement the
/// theoretical growth bounds
///   b_g >= n / ((n-1)/(rho-1) ||grad||^2 + 1)
///   b_s >= n / ((n/sigma^2)  ||grad||   + 1)
/// with the result clamped to [1, min(cap, n)].
struct BatchSchedule {
    enum class Kind { constant, geometric, gradient_adaptive_grad, gradient_adaptive_hess };

    Kind kind = Kind::constant;
    int n = 1;
    int b0 = 1;          // constant size, or geometric start
    double factor = 1.01;  // geometric growth factor (> 1)
    int cap = std::numeric_limits<int>::max();
    double rho = 1.0;    // SGC constant (adaptive gradient mode)
    double sigma = 1.0;  // Hessian variance bound (adaptive Hessian mode)

    static BatchSchedule constant(int b, int n) {
        BatchSchedule s;
        s.kind = Kind::constant;
        s.b0 = b;
        s.n = n;
        s.validate();
        return s;
    }

    static BatchSchedule geometric(int b0, double factor, int cap, int n) {
        BatchSchedule s;
        s.kind = Kind::geometric;
        s.b0 = b0;
        s.factor = factor;
        s.cap = cap;
        s.n = n;
        s.validate();
        return s;
    }

    static BatchSchedule gradient_adaptive_grad(double rho, int n) {
        BatchSchedule s;
        s.kind = Kind::gradient_adaptive_grad;
        s.rho = rho;
        s.n = n;
        s.validate();
        return s;
    }

    static BatchSchedule gradient_adaptive_hess(double sigma, int n) {
        BatchSchedule s;
        s.kind = Kind::gradient_adaptive_hess;
        s.sigma = sigma;
        s.n = n;
        s.validate();
        return s;
    }

    void validate() const {
        if (n < 1) throw std::invalid_argument("BatchSchedule: n must be >= 1");
        switch (kind) {
            case Kind::constant:
            case Kind::geometric:
                if (b0 < 1 || b0 > n) throw std::invalid_argument("BatchSchedule: b0 must lie in [1, n]");
                if (cap < 1) throw std::invalid_argument("BatchSchedule: cap must be >= 1");
                if (kind == Kind::geometric && !(factor > 1.0))
                    throw std::invalid_argument("BatchSchedule: growth factor must exceed 1");
                break;
            case Kind::gradient_adaptive_grad:
                if (rho < 1.0) throw std::invalid_argument("BatchSchedule: rho must be >= 1");
                break;
            case Kind::gradient_adaptive_hess:
                if (!(sigma > 0.0)) throw std::invalid_argument("BatchSchedule: sigma must be positive");
                break;
        }
    }
};

/// Batch size for iteration k. Degenerate inputs clamp instead of erroring;
/// grad_norm_estimate is only consulted by the adaptive kinds.
inline int next_batch_size(const BatchSchedule& schedule, long k, double grad_norm_estimate) {
    const int limit = std::min(schedule.cap, schedule.n);
    auto clamp = [&](double value) {
        if (!(value >= 1.0)) return 1;  // also catches NaN
        if (value >= static_cast<double>(limit)) return limit;
        return static_cast<int>(std::ceil(value));
    };
    switch (schedule.kind) {
        case BatchSchedule::Kind::constant:
            return std::min(schedule.b0, limit);
        case BatchSchedule::Kind::geometric:
            return clamp(static_cast<double>(schedule.b0) * std::pow(schedule.factor, static_cast<double>(k)));
        case BatchSchedule::Kind::gradient_adaptive_grad: {
            const double n = schedule.n;
            if (schedule.rho <= 1.0) return 1;  // deterministic gradients need no batch growth
            const double denom = (n - 1.0) / (schedule.rho - 1.0) * grad_norm_estimate * grad_norm_estimate + 1.0;
            return clamp(n / denom);
        }
        case BatchSchedule::Kind::gradient_adaptive_hess: {
            const double n = schedule.n;
            const double denom = n / (schedule.sigma * schedule.sigma) * grad_norm_estimate + 1.0;
            return clamp(n / denom);
        }
    }
    return 1;
}

/// LM regularization rule: constant tau0, or the decay tau_k = min(tau0,
/// ||grad f(w_k)||) that tracks the gradient norm.
struct RegularizationSchedule {
    enum class Kind { constant, gradient_proportional };

    Kind kind = Kind::constant;
    double tau0 = 0.0;

    static RegularizationSchedule constant(double tau0) {
        if (tau0 < 0.0) throw std::invalid_argument("RegularizationSchedule: tau0 must be >= 0");
        return {Kind::constant, tau0};
    }

    static RegularizationSchedule gradient_proportional(double tau0) {
        if (tau0 < 0.0) throw std::invalid_argument("RegularizationSchedule: tau0 must be >= 0");
        return {Kind::gradient_proportional, tau0};
    }
};

inline double next_tau(const RegularizationSchedule& schedule, double grad_norm) {
    if (schedule.kind == RegularizationSchedule::Kind::constant) return schedule.tau0;
    return std::min(schedule.tau0, grad_norm);
}

}  // namespace ssn
