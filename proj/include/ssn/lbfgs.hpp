#pragma once

#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssn/dataset.hpp"

namespace ssn {

/// Limited-memory inverse-Hessian approximation: the m most recent
/// curvature pairs (s, y) with y.s > 0, oldest evicted first.
class LbfgsMemory {
public:
    struct Pair {
        Vector s;
        Vector y;
        double inv_curv;  // 1 / (y . s)
    };

    explicit LbfgsMemory(int capacity = 10) : capacity_(capacity) {
        if (capacity < 0) throw std::invalid_argument("LbfgsMemory: capacity must be >= 0");
    }

    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(pairs_.size()); }
    bool empty() const { return pairs_.empty(); }
    const Pair& pair(int i) const { return pairs_[static_cast<std::size_t>(i)]; }  // 0 = oldest
    const Pair& newest() const { return pairs_.back(); }
    void clear() { pairs_.clear(); }

    void push(Vector s, Vector y) {
        const double curv = y.dot(s);
        pairs_.push_back({std::move(s), std::move(y), 1.0 / curv});
        if (capacity_ >= 0 && static_cast<int>(pairs_.size()) > capacity_) pairs_.pop_front();
    }

private:
    int capacity_;
    std::deque<Pair> pairs_;
};

/// Appends (s, y) after the optional regularizing shift y <- y + lambda_reg s,
/// provided the shifted pair passes the curvature test
/// y.s > eps_curv ||s|| ||y||; returns whether the pair was stored.
inline bool lbfgs_update_memory(LbfgsMemory& memory, Vector s, Vector y, double eps_curv,
                                double lambda_reg = 0.0) {
    if (s.size() != y.size()) throw std::invalid_argument("lbfgs_update_memory: dimension mismatch");
    if (lambda_reg != 0.0) y += lambda_reg * s;
    const double curv = y.dot(s);
    if (!(curv > eps_curv * s.norm() * y.norm())) return false;
    if (memory.capacity() == 0) return false;
    memory.push(std::move(s), std::move(y));
    return true;
}

/// Two-loop recursion: B_k g for the L-BFGS inverse-Hessian approximation.
/// The initial scaling is (s.y)/(y.y) of the newest pair, or gamma0 when the
/// memory is empty. With curvature-positive pairs the result satisfies
/// g . direction > 0.
inline Vector lbfgs_direction(const LbfgsMemory& memory, const Vector& g, double gamma0) {
    if (!(gamma0 > 0.0)) throw std::invalid_argument("lbfgs_direction: gamma0 must be positive");
    if (memory.empty()) return gamma0 * g;

    const int m = memory.size();
    Vector q = g;
    std::vector<double> alpha(static_cast<std::size_t>(m));
    for (int i = m - 1; i >= 0; --i) {
        const auto& p = memory.pair(i);
        alpha[static_cast<std::size_t>(i)] = p.inv_curv * p.s.dot(q);
        q -= alpha[static_cast<std::size_t>(i)] * p.y;
    }
    const auto& newest = memory.newest();
    const double scale = newest.s.dot(newest.y) / newest.y.squaredNorm();
    Vector r = scale * q;
    for (int i = 0; i < m; ++i) {
        const auto& p = memory.pair(i);
        const double beta = p.inv_curv * p.y.dot(r);
        r += (alpha[static_cast<std::size_t>(i)] - beta) * p.s;
    }
    return r;
}

}  // namespace ssn
