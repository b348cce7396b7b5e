#pragma once

#include <cmath>
#include <stdexcept>

#include "ssn/dataset.hpp"
#include "ssn/sampling.hpp"

namespace ssn {

enum class LossKind { logistic, squared_hinge };

/// Per-sample loss family for linear models. Each sample contributes
/// f_i(w) = loss(z_i) with margin z_i = y_i (x_i . w), so
///   grad f_i = loss'(z_i) y_i x_i,   hess f_i = loss''(z_i) x_i x_i^T.
struct LossModel {
    LossKind kind = LossKind::logistic;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// loss(z): logistic ln(1 + exp(-z)); squared hinge max(0, 1-z)^2.
inline double loss_scalar_value(LossKind kind, double z) {
    if (kind == LossKind::logistic)
        return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    const double gap = 1.0 - z;
    return gap > 0.0 ? gap * gap : 0.0;
}

/// loss'(z): logistic -(1 - sigmoid(z)); squared hinge -2 max(0, 1-z).
inline double loss_scalar_derivative(LossKind kind, double z) {
    if (kind == LossKind::logistic) return -sigmoid(-z);
    const double gap = 1.0 - z;
    return gap > 0.0 ? -2.0 * gap : 0.0;
}

/// loss''(z), the per-sample curvature d_i in [0, 2]. At the squared-hinge
/// kink z = 1 the curvature is taken from the inactive side (zero).
inline double loss_scalar_curvature(LossKind kind, double z) {
    if (kind == LossKind::logistic) {
        const double s = sigmoid(z);
        return s * (1.0 - s);
    }
    return z < 1.0 ? 2.0 : 0.0;
}

namespace detail {

inline void check_loss_inputs(const Dataset& data, const Batch& batch, const Vector& w) {
    if (batch.indices.empty()) throw std::invalid_argument("loss: empty batch");
    if (w.size() != data.d()) throw std::invalid_argument("loss: weight dimension mismatch");
    if (!w.allFinite()) throw std::invalid_argument("loss: non-finite weights");
    if (batch.indices.front() < 0 || batch.indices.back() >= data.n())
        throw std::invalid_argument("loss: batch index out of range");
}

}  // namespace detail

/// f_B(w) = (1/|B|) sum_{i in B} loss(y_i x_i . w)
inline double loss_value(const LossModel& model, const Dataset& data, const Batch& batch,
                         const Vector& w) {
    detail::check_loss_inputs(data, batch, w);
    double acc = 0.0;
    for (int i : batch.indices)
        acc += loss_scalar_value(model.kind, data.label(i) * data.dot_row(i, w));
    return acc / static_cast<double>(batch.indices.size());
}

/// (1/|B|) sum_{i in B} loss'(z_i) y_i x_i
inline Vector loss_gradient(const LossModel& model, const Dataset& data, const Batch& batch,
                            const Vector& w) {
    detail::check_loss_inputs(data, batch, w);
    Vector g = Vector::Zero(data.d());
    for (int i : batch.indices) {
        const double y = data.label(i);
        const double coeff = loss_scalar_derivative(model.kind, y * data.dot_row(i, w)) * y;
        if (coeff != 0.0) data.add_scaled_row(i, coeff, g);
    }
    g /= static_cast<double>(batch.indices.size());
    return g;
}

/// Gradient of the single sample i at w; used by the diagnostics that need
/// exact expectations over components.
inline Vector sample_gradient(const LossModel& model, const Dataset& data, int i, const Vector& w) {
    Vector g = Vector::Zero(data.d());
    const double y = data.label(i);
    const double coeff = loss_scalar_derivative(model.kind, y * data.dot_row(i, w)) * y;
    if (coeff != 0.0) data.add_scaled_row(i, coeff, g);
    return g;
}

/// Implicit regularized subsampled Hessian v -> [hess f_S(w) + tau I] v.
/// Curvatures are computed once at construction so repeated applications
/// (as in CG) cost one pass over the batch each.
class HessianOperator {
public:
    HessianOperator(const LossModel& model, const Dataset& data, Batch batch, const Vector& w,
                    double tau)
        : data_(&data), batch_(std::move(batch)), tau_(tau), dim_(data.d()) {
        detail::check_loss_inputs(data, batch_, w);
        if (tau < 0.0) throw std::invalid_argument("HessianOperator: tau must be nonnegative");
        curvatures_.reserve(batch_.indices.size());
        for (int i : batch_.indices)
            curvatures_.push_back(loss_scalar_curvature(model.kind, data.label(i) * data.dot_row(i, w)));
    }

    int dim() const { return dim_; }
    double tau() const { return tau_; }

    Vector operator()(const Vector& v) const {
        if (v.size() != dim_) throw std::invalid_argument("HessianOperator: dimension mismatch");
        Vector out = tau_ * v;
        const double scale = 1.0 / static_cast<double>(batch_.indices.size());
        for (std::size_t s = 0; s < batch_.indices.size(); ++s) {
            const double di = curvatures_[s];
            if (di == 0.0) continue;
            const int i = batch_.indices[s];
            data_->add_scaled_row(i, scale * di * data_->dot_row(i, v), out);
        }
        return out;
    }

private:
    const Dataset* data_;
    Batch batch_;
    double tau_;
    int dim_;
    std::vector<double> curvatures_;
};

/// [hess f_S(w) + tau I] v = (1/|S|) sum d_i (x_i . v) x_i + tau v
inline Vector hessian_vector_product(const LossModel& model, const Dataset& data, const Batch& batch,
                                     const Vector& w, double tau, const Vector& v) {
    return HessianOperator(model, data, batch, w, tau)(v);
}

/// Explicit d x d regularized subsampled Hessian; oracle for tests and the
/// dense Newton baseline, so only permitted at small dimension.
inline Matrix dense_hessian(const LossModel& model, const Dataset& data, const Batch& batch,
                            const Vector& w, double tau, int dimension_cap = 2000) {
    detail::check_loss_inputs(data, batch, w);
    if (data.d() > dimension_cap)
        throw std::invalid_argument("dense_hessian: dimension exceeds cap");
    Matrix h = Matrix::Zero(data.d(), data.d());
    const double scale = 1.0 / static_cast<double>(batch.indices.size());
    for (int i : batch.indices) {
        const double di = loss_scalar_curvature(model.kind, data.label(i) * data.dot_row(i, w));
        if (di != 0.0) data.add_scaled_outer(i, scale * di, h);
    }
    Matrix full = h.selfadjointView<Eigen::Lower>();
    full.diagonal().array() += tau;
    return full;
}

/// Fraction of samples whose sign(x . w) matches the label.
inline double classification_accuracy(const Dataset& data, const Vector& w) {
    int correct = 0;
    for (int i = 0; i < data.n(); ++i)
        if (data.label(i) * data.dot_row(i, w) > 0.0) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.n());
}

}  // namespace ssn
