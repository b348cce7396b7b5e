#pragma once

#include <cmath>
#include <stdexcept>

#include "ssn/dataset.hpp"

namespace ssn {

struct CgResult {
    Vector direction;
    int iterations = 0;
    double relative_residual = 0.0;  // ||b - A x|| / ||b||, recomputed explicitly
};

struct CgConfig {
    double tol = 1e-6;  // relative residual target
    int max_iter = 0;   // 0 selects min(dim, 100)
};

/// Conjugate gradient on an implicit SPD operator, started from zero and
/// stopped at the residual tolerance or the iteration cap. Starting from
/// zero keeps every truncation point a descent direction for Newton use:
/// direction . rhs > 0 whenever the operator is positive definite.
template <typename Operator>
CgResult truncated_cg(const Operator& op, const Vector& rhs, double tol, int max_iter) {
    if (!(tol >= 0.0)) throw std::invalid_argument("truncated_cg: tolerance must be nonnegative");
    if (max_iter < 1) throw std::invalid_argument("truncated_cg: max_iter must be >= 1");

    const double rhs_norm = rhs.norm();
    CgResult result;
    result.direction = Vector::Zero(rhs.size());
    if (rhs_norm == 0.0) return result;
    if (!std::isfinite(rhs_norm)) throw std::runtime_error("truncated_cg: non-finite right-hand side");

    Vector residual = rhs;  // b - A*0
    Vector search = residual;
    double rho = residual.squaredNorm();

    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(rho) <= tol * rhs_norm) break;
        const Vector applied = op(search);
        const double curvature = search.dot(applied);
        if (!std::isfinite(curvature))
            throw std::runtime_error("truncated_cg: non-finite operator output");
        if (curvature <= 0.0)
            throw std::runtime_error("truncated_cg: operator is not positive definite");
        const double alpha = rho / curvature;
        result.direction += alpha * search;
        residual -= alpha * applied;
        ++result.iterations;
        const double rho_next = residual.squaredNorm();
        if (!std::isfinite(rho_next)) throw std::runtime_error("truncated_cg: non-finite residual");
        search = residual + (rho_next / rho) * search;
        rho = rho_next;
    }

    result.relative_residual = (rhs - op(result.direction)).norm() / rhs_norm;
    return result;
}

template <typename Operator>
CgResult truncated_cg(const Operator& op, const Vector& rhs, const CgConfig& cfg) {
    const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : std::min<int>(static_cast<int>(rhs.size()), 100);
    return truncated_cg(op, rhs, cfg.tol, max_iter);
}

}  // namespace ssn
