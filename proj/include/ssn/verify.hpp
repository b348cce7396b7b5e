#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "ssn/diagnostics.hpp"
#include "ssn/losses.hpp"

namespace ssn {

/// Oracle suite backing the `verify` CLI subcommand. Each check recomputes
/// a closed-form claim against exhaustive enumeration or dense linear
/// algebra and reports one pass/fail line.

/// Without-replacement variance identity, swept exhaustively over
/// n <= 8, 1 <= b <= n, d <= 4 on seeded random vectors; the enumeration
/// and the closed form must agree to 1e-12.
inline bool verify_variance_identity(std::ostream& out) {
    Rng rng(2024);
    double worst = 0.0;
    for (int n = 2; n <= 8; ++n)
        for (int d = 1; d <= 4; ++d) {
            std::vector<Vector> ys;
            ys.reserve(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                Vector y(d);
                for (int j = 0; j < d; ++j) y[j] = rng.next_normal();
                ys.push_back(std::move(y));
            }
            for (int b = 1; b <= n; ++b) {
                const VarianceCheck check = variance_identity_check(ys, b);
                worst = std::max(worst, std::abs(check.lhs - check.rhs));
            }
        }
    const bool pass = worst <= 1e-12;
    out << (pass ? "PASS" : "FAIL") << " variance identity (max |lhs-rhs| = " << worst << ")\n";
    return pass;
}

/// Lemma-style bounds: whenever the per-element growth condition holds on
/// the instance, the enumerated variance stays below the bound form.
inline bool verify_growth_bounds(std::ostream& out) {
    Rng rng(7);
    bool pass = true;
    int checked_weak = 0, checked_strong = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(7));  // 2..8
        const int d = 1 + static_cast<int>(rng.next_below(4));
        std::vector<Vector> ys;
        Vector mean = Vector::Zero(d);
        for (int i = 0; i < n; ++i) {
            Vector y(d);
            for (int j = 0; j < d; ++j) y[j] = rng.next_normal();
            mean += y;
            ys.push_back(std::move(y));
        }
        mean /= static_cast<double>(n);
        const double mean_sq = mean.squaredNorm();
        if (mean_sq <= 1e-12) continue;
        double second_moment = 0.0;
        for (const Vector& y : ys) second_moment += y.squaredNorm();
        second_moment /= static_cast<double>(n);

        const double c_weak = second_moment / mean_sq;          // tightest valid c
        const double c_strong = second_moment / (mean_sq * mean_sq);
        for (int b = 1; b <= n; ++b) {
            const VarianceCheck check = variance_identity_check(ys, b);
            if (check.lhs > growth_variance_bound(n, b, c_weak, mean_sq) + 1e-12) pass = false;
            ++checked_weak;
            if (check.lhs > strong_growth_variance_bound(n, b, c_strong, mean_sq) + 1e-12) pass = false;
            ++checked_strong;
        }
    }
    out << (pass ? "PASS" : "FAIL") << " growth-condition variance bounds (" << checked_weak
        << " weak + " << checked_strong << " strong cases)\n";
    return pass;
}

/// Subsampled-gradient unbiasedness by exhaustive enumeration on n <= 8,
/// for plain batch gradients and for the SVRG-corrected gradient.
inline bool verify_unbiasedness(std::ostream& out) {
    Rng rng(11);
    double worst = 0.0;
    for (const LossKind kind : {LossKind::logistic, LossKind::squared_hinge}) {
        const LossModel model{kind};
        for (int n = 2; n <= 8; n += 2) {
            const int d = 3;
            const auto generated = generate_margin_dataset({0.2, n, d, 77 + static_cast<unsigned>(n)});
            const Dataset& data = generated.data;
            Vector w(d), snapshot(d);
            for (int j = 0; j < d; ++j) {
                w[j] = rng.next_normal();
                snapshot[j] = rng.next_normal();
            }
            const Batch everything = full_batch(n);
            const Vector full_gradient = loss_gradient(model, data, everything, w);
            const Vector snapshot_gradient = loss_gradient(model, data, everything, snapshot);
            for (int b = 1; b <= n; ++b) {
                Vector batch_mean = Vector::Zero(d);
                Vector svrg_mean = Vector::Zero(d);
                long count = 0;
                for_each_combination(n, b, [&](const std::vector<int>& comb) {
                    Batch batch;
                    batch.indices = comb;
                    const Vector g = loss_gradient(model, data, batch, w);
                    batch_mean += g;
                    svrg_mean += g - loss_gradient(model, data, batch, snapshot) + snapshot_gradient;
                    ++count;
                });
                batch_mean /= static_cast<double>(count);
                svrg_mean /= static_cast<double>(count);
                worst = std::max(worst, (batch_mean - full_gradient).norm());
                worst = std::max(worst, (svrg_mean - full_gradient).norm());
            }
        }
    }
    const bool pass = worst <= 1e-12;
    out << (pass ? "PASS" : "FAIL") << " gradient / SVRG unbiasedness by enumeration (max error = "
        << worst << ")\n";
    return pass;
}

/// Newton-decrement growth condition on random small instances.
inline bool verify_newton_decrement_bound(std::ostream& out, int instances = 20) {
    Rng rng(23);
    bool pass = true;
    for (int trial = 0; trial < instances; ++trial) {
        const int n = 5 + static_cast<int>(rng.next_below(26));  // 5..30
        const int d = 2 + static_cast<int>(rng.next_below(4));   // 2..5
        const LossModel model{trial % 2 == 0 ? LossKind::logistic : LossKind::squared_hinge};
        const auto generated = generate_margin_dataset({0.1, n, d, 900 + static_cast<unsigned>(trial)});
        Vector w(d);
        for (int j = 0; j < d; ++j) w[j] = rng.next_normal();
        const double tau = 0.01 + rng.next_double();
        const auto check = newton_decrement_sgc_check(model, generated.data, w, tau);
        if (!(check.lhs <= check.rhs_bound * (1.0 + 1e-12))) pass = false;
    }
    out << (pass ? "PASS" : "FAIL") << " Newton-decrement growth bound (" << instances
        << " random instances)\n";
    return pass;
}

/// SGC estimate sanity on an interpolating instance.
inline bool verify_sgc_estimate(std::ostream& out) {
    const auto generated = generate_margin_dataset({0.2, 50, 5, 4242});
    const LossModel model{LossKind::squared_hinge};
    Rng rng(31);
    std::vector<Vector> probes;
    for (int p = 0; p < 20; ++p) {
        Vector w(5);
        for (int j = 0; j < 5; ++j) w[j] = rng.next_normal();
        probes.push_back(std::move(w));
    }
    double rho = 0.0;
    bool pass = true;
    try {
        rho = estimate_sgc_rho(model, generated.data, probes);
        pass = std::isfinite(rho) && rho >= 1.0;
    } catch (const std::exception&) {
        pass = false;
    }
    out << (pass ? "PASS" : "FAIL") << " SGC estimate finite and >= 1 (rho = " << rho << ")\n";
    return pass;
}

inline bool run_verification_suite(std::ostream& out) {
    bool pass = true;
    pass &= verify_variance_identity(out);
    pass &= verify_growth_bounds(out);
    pass &= verify_unbiasedness(out);
    pass &= verify_newton_decrement_bound(out);
    pass &= verify_sgc_estimate(out);
    return pass;
}

}  // namespace ssn
