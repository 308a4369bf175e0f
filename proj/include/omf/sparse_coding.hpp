#pragma once

// l1 sparse coding: LARS-Lasso homotopy (penalized, l1-budget and residual-constrained
// forms, elastic net, non-negativity, per-index weights), cyclic coordinate descent,
// group (l1,2) block coordinate descent and the Lasso optimality residual.

#include "omf/core.hpp"
#include "omf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace omf {

struct PenaltyConfig {
    double l1_weight = 0.0;  ///< lambda (lambda1 for the elastic net)
    double l2_weight = 0.0;  ///< lambda2: adds (lambda2/2)||alpha||_2^2
    bool nonneg = false;
    /// Optional w_i of the weighted Lasso sum_i w_i |alpha_i|. Zero weights leave the
    /// coefficient unpenalized.
    std::optional<VectorXd> per_index_weights;

    void validate(Index k) const {
        if (!(l1_weight >= 0.0) || !std::isfinite(l1_weight))
            throw InvalidArgument("l1 weight must be finite and non-negative");
        if (!(l2_weight >= 0.0) || !std::isfinite(l2_weight))
            throw InvalidArgument("l2 weight must be finite and non-negative");
        if (per_index_weights) {
            if (per_index_weights->size() != k)
                throw InvalidArgument("per-index weights must have one entry per atom");
            if (!per_index_weights->allFinite() || (per_index_weights->array() < 0.0).any())
                throw InvalidArgument("per-index weights must be finite and non-negative");
            if (nonneg && (per_index_weights->array() == 0.0).any())
                throw InvalidArgument("zero per-index weights are not supported with nonneg");
        }
    }

    friend bool operator==(const PenaltyConfig& a, const PenaltyConfig& b) {
        if (a.l1_weight != b.l1_weight || a.l2_weight != b.l2_weight || a.nonneg != b.nonneg) return false;
        if (a.per_index_weights.has_value() != b.per_index_weights.has_value()) return false;
        return !a.per_index_weights || *a.per_index_weights == *b.per_index_weights;
    }
};

/// Sparse coefficient vector. `active_set` lists the support in the order the solver
/// produced it; `values[i]` is the coefficient of atom `active_set[i]`.
template <typename Scalar>
struct SparseCode {
    Index size = 0;
    std::vector<Index> active_set;
    std::vector<Scalar> values;

    Index nnz() const { return static_cast<Index>(active_set.size()); }

    Vector<Scalar> dense() const {
        Vector<Scalar> out = Vector<Scalar>::Zero(size);
        for (std::size_t i = 0; i < active_set.size(); ++i) out[active_set[i]] = values[i];
        return out;
    }

    std::vector<int> signs() const {
        std::vector<int> s(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) s[i] = values[i] > 0 ? 1 : -1;
        return s;
    }

    Scalar l1_norm() const {
        Scalar acc(0);
        for (Scalar v : values) acc += std::abs(v);
        return acc;
    }

    template <typename Derived>
    static SparseCode from_dense(const Eigen::MatrixBase<Derived>& v) {
        SparseCode code;
        code.size = v.size();
        for (Index j = 0; j < v.size(); ++j)
            if (v[j] != Scalar(0)) {
                code.active_set.push_back(j);
                code.values.push_back(v[j]);
            }
        return code;
    }
};

enum class StopReason { lambda_reached, l1_budget_reached, residual_reached, path_exhausted };

/// Where a homotopy stops: at a penalty level (penalized Lasso), at an l1 budget
/// ||alpha||_1 <= T, or at a residual level ||x - D alpha||_2^2 <= epsilon.
struct StopRule {
    enum class Kind { lambda, l1_budget, residual };
    Kind kind = Kind::lambda;
    double value = 0.0;

    static StopRule at_lambda(double lambda) { return {Kind::lambda, lambda}; }
    static StopRule l1_budget(double budget) { return {Kind::l1_budget, budget}; }
    static StopRule residual(double epsilon) { return {Kind::residual, epsilon}; }
};

template <typename Scalar>
struct PathSegment {
    Scalar lambda;                  ///< breakpoint where this segment starts
    std::vector<Index> active_set;  ///< active set on the segment, in entry order
    Vector<Scalar> solution;        ///< solution at `lambda`
    Vector<Scalar> direction;       ///< d alpha / d(-lambda) on the segment
};

/// Piecewise-linear Lasso regularization path from lambda_max down to the stopping point.
template <typename Scalar>
struct RegPath {
    std::vector<Scalar> breakpoints;
    std::vector<PathSegment<Scalar>> segments;
    Scalar end_lambda = 0;
    SparseCode<Scalar> endpoint;
    StopReason stop_reason = StopReason::path_exhausted;

    /// Solution at penalty level `lambda`, which must not be below `end_lambda`.
    Vector<Scalar> solution_at(Scalar lambda) const {
        if (lambda < end_lambda) throw InvalidArgument("lambda below the end of the computed path");
        if (segments.empty() || lambda >= breakpoints.front()) {
            if (segments.empty()) return endpoint.dense();
            return Vector<Scalar>::Zero(endpoint.size);
        }
        std::size_t i = 0;
        while (i + 1 < segments.size() && breakpoints[i + 1] >= lambda) ++i;
        const auto& seg = segments[i];
        return seg.solution + (seg.lambda - lambda) * seg.direction;
    }
};

namespace detail {

template <typename Scalar>
Vector<Scalar> penalty_weights(const PenaltyConfig& penalty, Index k) {
    if (penalty.per_index_weights) return penalty.per_index_weights->template cast<Scalar>();
    return Vector<Scalar>::Ones(k);
}

template <typename Scalar>
Scalar lasso_objective_gram(const Matrix<Scalar>& gram, const Vector<Scalar>& correlation, Scalar signal_norm2,
                            const Vector<Scalar>& alpha, const PenaltyConfig& penalty) {
    const Vector<Scalar> w = penalty_weights<Scalar>(penalty, alpha.size());
    const Scalar quad = alpha.dot(gram * alpha);
    return Scalar(0.5) * (signal_norm2 - 2 * alpha.dot(correlation) + quad) +
           Scalar(penalty.l1_weight) * (w.array() * alpha.array().abs()).sum() +
           Scalar(0.5 * penalty.l2_weight) * alpha.squaredNorm();
}

/// Optimality residual given the plain gradient g = D^T(x - D alpha).
template <typename Scalar>
Scalar kkt_from_gradient(const Vector<Scalar>& gradient, const Vector<Scalar>& alpha, const PenaltyConfig& penalty) {
    const Index k = alpha.size();
    const Vector<Scalar> w = penalty_weights<Scalar>(penalty, k);
    const Scalar lambda(penalty.l1_weight);
    Scalar worst(0);
    for (Index j = 0; j < k; ++j) {
        const Scalar g = gradient[j] - Scalar(penalty.l2_weight) * alpha[j];
        const Scalar bound = lambda * w[j];
        Scalar v;
        if (alpha[j] != Scalar(0))
            v = std::abs(g - bound * sign(alpha[j]));
        else if (penalty.nonneg)
            v = std::max(Scalar(0), g - bound);
        else
            v = std::max(Scalar(0), std::abs(g) - bound);
        worst = std::max(worst, v);
    }
    return worst;
}

}  // namespace detail

/// LARS-Lasso homotopy over a precomputed Gram matrix G = D^T D.
///
/// One solver owns the Cholesky workspace for the active Gram matrix and may be reused
/// for many signals coded against the same dictionary. The Gram matrix is held by
/// reference and must outlive the solver.
template <typename Scalar>
class LarsSolver {
public:
    static constexpr Scalar kPivotTolerance = Scalar(1e-12);

    explicit LarsSolver(const Matrix<Scalar>& gram) : gram_(&gram) {}

    /// `correlation` is D^T x and `signal_norm2` is ||x||_2^2. Records the path when
    /// `path` is non-null.
    SparseCode<Scalar> solve(const Vector<Scalar>& correlation, Scalar signal_norm2, const PenaltyConfig& penalty,
                             const StopRule& stop, RegPath<Scalar>* path = nullptr);

private:
    void reset(Index k);
    void add_to_active(Index j);
    void remove_from_active(Index position);
    void solve_active(const Vector<Scalar>& rhs, Vector<Scalar>& out) const;
    Scalar augmented(Index i, Index j) const {
        return (*gram_)(i, j) + (i == j ? lambda2_ : Scalar(0));
    }

    const Matrix<Scalar>* gram_;
    Scalar lambda2_ = 0;
    Matrix<Scalar> chol_;  // upper factor R of the active Gram matrix, G_AA = R^T R
    std::vector<Index> active_;
    std::vector<char> is_active_;
};

template <typename Scalar>
void LarsSolver<Scalar>::reset(Index k) {
    const Index cap = std::max<Index>(1, std::min<Index>(k, 16));
    if (chol_.rows() < cap) chol_.resize(cap, cap);
    active_.clear();
    is_active_.assign(static_cast<std::size_t>(k), 0);
}

template <typename Scalar>
void LarsSolver<Scalar>::add_to_active(Index j) {
    const Index n = static_cast<Index>(active_.size());
    if (n + 1 > chol_.rows()) {
        const Index cap = std::min<Index>(gram_->rows(), std::max<Index>(2 * chol_.rows(), n + 1));
        chol_.conservativeResize(cap, cap);
    }
    Vector<Scalar> col(n);
    for (Index i = 0; i < n; ++i) col[i] = augmented(active_[i], j);
    if (n > 0)
        chol_.topLeftCorner(n, n).template triangularView<Eigen::Upper>().transpose().solveInPlace(col);
    const Scalar diag = augmented(j, j);
    const Scalar d2 = diag - col.squaredNorm();
    // Relative squared pivot: the Schur complement of atom j against the active set.
    const Scalar pivot = diag > Scalar(0) ? d2 / diag : Scalar(0);
    if (!(pivot > kPivotTolerance)) throw DegeneratePathError(j, static_cast<double>(pivot));
    chol_.col(n).head(n) = col;
    chol_.row(n).head(n).setZero();
    chol_(n, n) = std::sqrt(d2);
    active_.push_back(j);
    is_active_[static_cast<std::size_t>(j)] = 1;
}

template <typename Scalar>
void LarsSolver<Scalar>::remove_from_active(Index position) {
    const Index n = static_cast<Index>(active_.size());
    for (Index c = position; c + 1 < n; ++c) chol_.col(c).head(n) = chol_.col(c + 1).head(n);
    // Restore triangularity of the Hessenberg block with Givens rotations.
    for (Index i = position; i + 1 < n; ++i) {
        const Scalar a = chol_(i, i), b = chol_(i + 1, i);
        const Scalar r = std::hypot(a, b);
        const Scalar c = a / r, s = b / r;
        for (Index col = i; col + 1 < n; ++col) {
            const Scalar t1 = chol_(i, col), t2 = chol_(i + 1, col);
            chol_(i, col) = c * t1 + s * t2;
            chol_(i + 1, col) = -s * t1 + c * t2;
        }
        chol_(i + 1, i) = Scalar(0);
    }
    is_active_[static_cast<std::size_t>(active_[static_cast<std::size_t>(position)])] = 0;
    active_.erase(active_.begin() + position);
}

template <typename Scalar>
void LarsSolver<Scalar>::solve_active(const Vector<Scalar>& rhs, Vector<Scalar>& out) const {
    const Index n = static_cast<Index>(active_.size());
    out = rhs;
    const auto R = chol_.topLeftCorner(n, n).template triangularView<Eigen::Upper>();
    R.transpose().solveInPlace(out);
    R.solveInPlace(out);
}

template <typename Scalar>
SparseCode<Scalar> LarsSolver<Scalar>::solve(const Vector<Scalar>& c0, Scalar signal_norm2,
                                             const PenaltyConfig& penalty, const StopRule& stop,
                                             RegPath<Scalar>* path) {
    const Matrix<Scalar>& G = *gram_;
    const Index k = G.rows();
    if (c0.size() != k) throw DataError("correlation vector does not match the Gram matrix");
    penalty.validate(k);
    if (!c0.allFinite() || !std::isfinite(static_cast<double>(signal_norm2)))
        throw DataError("signal contains non-finite values");
    if (!std::isfinite(stop.value) || stop.value < 0) throw InvalidArgument("stop threshold must be finite and >= 0");

    reset(k);
    lambda2_ = Scalar(penalty.l2_weight);
    const Vector<Scalar> w = detail::penalty_weights<Scalar>(penalty, k);
    const bool nonneg = penalty.nonneg;

    Vector<Scalar> alpha = Vector<Scalar>::Zero(k);
    Vector<Scalar> signs = Vector<Scalar>::Zero(k);
    Vector<Scalar> corr(k);  // D^T(x - D alpha) - lambda2 alpha
    Vector<Scalar> rhs, dir_active, dir_corr(k);

    auto refresh_correlation = [&] {
        corr = c0;
        for (Index a : active_) corr.noalias() -= G.col(a) * alpha[a];
        corr -= lambda2_ * alpha;
    };
    auto residual_norm2 = [&] {
        // ||x - D alpha||^2 = ||x||^2 - alpha^T c0 - alpha^T (c0 - D^T D alpha)
        const Vector<Scalar> plain = corr + lambda2_ * alpha;
        return signal_norm2 - alpha.dot(c0) - alpha.dot(plain);
    };
    auto l1_norm = [&] { return alpha.template lpNorm<1>(); };

    // Unpenalized coefficients are active from the start at their least-squares values.
    for (Index j = 0; j < k; ++j)
        if (w[j] == Scalar(0)) add_to_active(j);
    if (!active_.empty()) {
        rhs.resize(static_cast<Index>(active_.size()));
        for (std::size_t i = 0; i < active_.size(); ++i) rhs[static_cast<Index>(i)] = c0[active_[i]];
        solve_active(rhs, dir_active);
        for (std::size_t i = 0; i < active_.size(); ++i) alpha[active_[i]] = dir_active[static_cast<Index>(i)];
    }
    refresh_correlation();

    auto finish = [&](Scalar lambda_end, StopReason reason) {
        SparseCode<Scalar> code;
        code.size = k;
        for (Index a : active_)
            if (alpha[a] != Scalar(0)) {
                code.active_set.push_back(a);
                code.values.push_back(alpha[a]);
            }
        if (path) {
            path->end_lambda = lambda_end;
            path->endpoint = code;
            path->stop_reason = reason;
        }
        return code;
    };
    if (path) *path = RegPath<Scalar>{};

    // lambda_max and the first entering atom (lowest index on ties).
    Scalar lambda(0);
    Index entering = -1;
    Scalar entering_sign(0);
    for (Index j = 0; j < k; ++j) {
        if (is_active_[static_cast<std::size_t>(j)]) continue;
        const Scalar score = (nonneg ? std::max(corr[j], Scalar(0)) : std::abs(corr[j])) / w[j];
        if (score > lambda) {
            lambda = score;
            entering = j;
            entering_sign = corr[j] >= 0 ? Scalar(1) : Scalar(-1);
        }
    }

    const Scalar target(stop.value);
    switch (stop.kind) {
        case StopRule::Kind::lambda:
            if (target >= lambda) return finish(target, StopReason::lambda_reached);
            break;
        case StopRule::Kind::l1_budget:
            if (l1_norm() >= target) return finish(lambda, StopReason::l1_budget_reached);
            break;
        case StopRule::Kind::residual:
            if (residual_norm2() <= target) return finish(lambda, StopReason::residual_reached);
            break;
    }
    if (entering < 0) return finish(Scalar(0), StopReason::path_exhausted);

    // An atom that just left may not re-enter with its old sign on the next segment.
    Index just_removed = -1;
    Scalar removed_sign(0);
    const Index max_steps = 10 * (k + 1) + 100;
    for (Index step = 0;; ++step) {
        if (step > max_steps) throw NumericalError("LARS exceeded its step limit (cycling path)");
        if (entering >= 0) {
            add_to_active(entering);
            signs[entering] = entering_sign;
            just_removed = -1;
        }

        const Index n = static_cast<Index>(active_.size());
        rhs.resize(n);
        for (Index i = 0; i < n; ++i) rhs[i] = w[active_[i]] * signs[active_[i]];
        solve_active(rhs, dir_active);
        dir_corr.setZero();
        for (Index i = 0; i < n; ++i) {
            dir_corr.noalias() += G.col(active_[i]) * dir_active[i];
            dir_corr[active_[i]] += lambda2_ * dir_active[i];
        }

        if (path) {
            PathSegment<Scalar> seg{lambda, active_, alpha, Vector<Scalar>::Zero(k)};
            for (Index i = 0; i < n; ++i) seg.direction[active_[i]] = dir_active[i];
            if (!path->breakpoints.empty() && path->breakpoints.back() == lambda) {
                path->segments.back() = std::move(seg);
            } else {
                path->breakpoints.push_back(lambda);
                path->segments.push_back(std::move(seg));
            }
        }

        // Next event along the segment, as a decrease `delta` of lambda.
        Scalar delta = lambda;
        enum class Event { exhausted, stop, entry, removal } event = Event::exhausted;
        Index event_index = -1;
        Scalar event_sign(0);

        Scalar delta_stop = std::numeric_limits<Scalar>::infinity();
        switch (stop.kind) {
            case StopRule::Kind::lambda:
                delta_stop = lambda - target;
                break;
            case StopRule::Kind::l1_budget: {
                Scalar slope(0);
                for (Index i = 0; i < n; ++i) slope += signs[active_[i]] * dir_active[i];
                if (slope > 0) delta_stop = std::max(Scalar(0), (target - l1_norm()) / slope);
                break;
            }
            case StopRule::Kind::residual: {
                // r(delta) = r0 + 2 p delta + q delta^2 with p < 0 along the path.
                Vector<Scalar> u = Vector<Scalar>::Zero(k);
                for (Index i = 0; i < n; ++i) u[active_[i]] = dir_active[i];
                const Vector<Scalar> plain = corr + lambda2_ * alpha;
                const Scalar p = -u.dot(plain);
                const Scalar q = u.dot(dir_corr) - lambda2_ * u.squaredNorm();
                const Scalar excess = residual_norm2() - target;
                const Scalar disc = p * p - q * excess;
                if (excess <= 0)
                    delta_stop = 0;
                else if (disc >= 0 && p < 0)
                    delta_stop = excess / (-p + std::sqrt(disc));
                break;
            }
        }
        if (delta_stop <= delta) {
            delta = delta_stop;
            event = Event::stop;
        }

        for (Index j = 0; j < k; ++j) {
            if (is_active_[static_cast<std::size_t>(j)]) continue;
            const bool block_pos = j == just_removed && removed_sign > 0;
            const bool block_neg = j == just_removed && removed_sign < 0;
            const Scalar wj = w[j];
            const Scalar den_pos = wj - dir_corr[j];
            if (!block_pos && den_pos > Scalar(1e-12) * wj) {
                const Scalar d = std::max(Scalar(0), lambda * wj - corr[j]) / den_pos;
                if (d < delta) {
                    delta = d;
                    event = Event::entry;
                    event_index = j;
                    event_sign = Scalar(1);
                }
            }
            if (!nonneg) {
                const Scalar den_neg = wj + dir_corr[j];
                if (!block_neg && den_neg > Scalar(1e-12) * wj) {
                    const Scalar d = std::max(Scalar(0), lambda * wj + corr[j]) / den_neg;
                    if (d < delta) {
                        delta = d;
                        event = Event::entry;
                        event_index = j;
                        event_sign = Scalar(-1);
                    }
                }
            }
        }
        Index removal_position = -1;
        for (Index i = 0; i < n; ++i) {
            const Index a = active_[i];
            if (w[a] == Scalar(0) || alpha[a] == Scalar(0) || alpha[a] * dir_active[i] >= 0) continue;
            const Scalar d = -alpha[a] / dir_active[i];
            if (d < delta) {
                delta = d;
                event = Event::removal;
                removal_position = i;
            }
        }

        for (Index i = 0; i < n; ++i) alpha[active_[i]] += delta * dir_active[i];
        lambda = event == Event::stop && stop.kind == StopRule::Kind::lambda ? target : lambda - delta;

        entering = -1;
        switch (event) {
            case Event::stop:
                refresh_correlation();
                return finish(lambda, stop.kind == StopRule::Kind::lambda      ? StopReason::lambda_reached
                                      : stop.kind == StopRule::Kind::l1_budget ? StopReason::l1_budget_reached
                                                                               : StopReason::residual_reached);
            case Event::exhausted:
                lambda = 0;
                refresh_correlation();
                return finish(Scalar(0), StopReason::path_exhausted);
            case Event::removal: {
                const Index a = active_[static_cast<std::size_t>(removal_position)];
                alpha[a] = 0;
                removed_sign = signs[a];
                signs[a] = 0;
                remove_from_active(removal_position);
                just_removed = a;
                break;
            }
            case Event::entry:
                entering = event_index;
                entering_sign = event_sign;
                break;
        }
        refresh_correlation();
    }
}

/// Full regularization path of the Lasso for signal `x` over dictionary `D`.
template <typename DerivedX, typename DerivedD>
RegPath<typename DerivedD::Scalar> lars_lasso_path(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedD>& D, const PenaltyConfig& penalty,
                                                   const StopRule& stop) {
    using Scalar = typename DerivedD::Scalar;
    if (x.size() != D.rows()) throw DataError("signal length does not match the dictionary row count");
    require_finite(x, "signal");
    require_finite(D, "dictionary");
    const Matrix<Scalar> gram = D.transpose() * D;
    const Vector<Scalar> corr = D.transpose() * x;
    RegPath<Scalar> path;
    LarsSolver<Scalar>(gram).solve(corr, x.squaredNorm(), penalty, stop, &path);
    return path;
}

/// Coefficients minimizing the (elastic-net, optionally non-negative or weighted) Lasso
/// at lambda = penalty.l1_weight.
template <typename DerivedX, typename DerivedD>
SparseCode<typename DerivedD::Scalar> lasso_solve(const Eigen::MatrixBase<DerivedX>& x,
                                                  const Eigen::MatrixBase<DerivedD>& D, const PenaltyConfig& penalty) {
    using Scalar = typename DerivedD::Scalar;
    if (x.size() != D.rows()) throw DataError("signal length does not match the dictionary row count");
    require_finite(x, "signal");
    require_finite(D, "dictionary");
    const Matrix<Scalar> gram = D.transpose() * D;
    const Vector<Scalar> corr = D.transpose() * x;
    return LarsSolver<Scalar>(gram).solve(corr, x.squaredNorm(), penalty, StopRule::at_lambda(penalty.l1_weight));
}

/// Homotopy solution under an arbitrary stopping rule: the l1-budget rule solves
/// min ||x - D a||^2 s.t. ||a||_1 <= T and the residual rule solves
/// min ||a||_1 s.t. ||x - D a||^2 <= epsilon.
template <typename DerivedX, typename DerivedD>
SparseCode<typename DerivedD::Scalar> lasso_solve(const Eigen::MatrixBase<DerivedX>& x,
                                                  const Eigen::MatrixBase<DerivedD>& D, const PenaltyConfig& penalty,
                                                  const StopRule& stop) {
    using Scalar = typename DerivedD::Scalar;
    if (x.size() != D.rows()) throw DataError("signal length does not match the dictionary row count");
    require_finite(x, "signal");
    require_finite(D, "dictionary");
    const Matrix<Scalar> gram = D.transpose() * D;
    const Vector<Scalar> corr = D.transpose() * x;
    return LarsSolver<Scalar>(gram).solve(corr, x.squaredNorm(), penalty, stop);
}

/// Codes every column of X against one dictionary, sharing the Gram matrix across the
/// batch. Returns the dense k x n code matrix.
template <typename DerivedX, typename DerivedD>
Matrix<typename DerivedD::Scalar> lasso_solve_batch(const Eigen::MatrixBase<DerivedX>& X,
                                                    const Eigen::MatrixBase<DerivedD>& D, const PenaltyConfig& penalty,
                                                    const StopRule& stop, int threads = 1) {
    using Scalar = typename DerivedD::Scalar;
    if (X.rows() != D.rows()) throw DataError("signal length does not match the dictionary row count");
    require_finite(X, "signals");
    require_finite(D, "dictionary");
    const Matrix<Scalar> gram = D.transpose() * D;
    Matrix<Scalar> codes = Matrix<Scalar>::Zero(D.cols(), X.cols());
    parallel_for(X.cols(), threads, [&](long begin, long end, int) {
        LarsSolver<Scalar> solver(gram);
        for (long i = begin; i < end; ++i) {
            // Per-column products keep each code bitwise equal to the single-signal solve.
            const Vector<Scalar> x = X.col(i);
            const Vector<Scalar> corr = D.transpose() * x;
            const auto code = solver.solve(corr, x.squaredNorm(), penalty, stop);
            for (std::size_t a = 0; a < code.active_set.size(); ++a) codes(code.active_set[a], i) = code.values[a];
        }
    });
    return codes;
}

template <typename DerivedX, typename DerivedD>
Matrix<typename DerivedD::Scalar> lasso_solve_batch(const Eigen::MatrixBase<DerivedX>& X,
                                                    const Eigen::MatrixBase<DerivedD>& D, const PenaltyConfig& penalty,
                                                    int threads = 1) {
    return lasso_solve_batch(X, D, penalty, StopRule::at_lambda(penalty.l1_weight), threads);
}

/// Maximal violation of the Lasso optimality conditions: for active j,
/// |d_j^T(x - D a) - lambda sign(a_j)|; for inactive j, (|d_j^T(x - D a)| - lambda)^+.
/// Elastic-net, non-negative and weighted penalties use their own conditions.
template <typename DerivedX, typename DerivedD, typename DerivedA>
typename DerivedD::Scalar kkt_residual(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedD>& D,
                                       const Eigen::MatrixBase<DerivedA>& alpha, const PenaltyConfig& penalty) {
    using Scalar = typename DerivedD::Scalar;
    if (x.size() != D.rows() || alpha.size() != D.cols()) throw DataError("kkt_residual: dimension mismatch");
    const Vector<Scalar> a = alpha;
    const Vector<Scalar> gradient = D.transpose() * (x - D * a);
    return detail::kkt_from_gradient<Scalar>(gradient, a, penalty);
}

template <typename DerivedX, typename DerivedD>
typename DerivedD::Scalar kkt_residual(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedD>& D,
                                       const SparseCode<typename DerivedD::Scalar>& alpha, double l1_weight) {
    if (alpha.size != D.cols()) throw DataError("kkt_residual: dimension mismatch");
    PenaltyConfig penalty;
    penalty.l1_weight = l1_weight;
    return kkt_residual(x, D, alpha.dense(), penalty);
}

/// 1/2 ||x - D a||^2 + penalty(a).
template <typename DerivedX, typename DerivedD, typename DerivedA>
typename DerivedD::Scalar lasso_objective(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedD>& D,
                                          const Eigen::MatrixBase<DerivedA>& alpha, const PenaltyConfig& penalty) {
    using Scalar = typename DerivedD::Scalar;
    const Vector<Scalar> w = detail::penalty_weights<Scalar>(penalty, D.cols());
    return Scalar(0.5) * (x - D * alpha).squaredNorm() +
           Scalar(penalty.l1_weight) * (w.array() * alpha.array().abs()).sum() +
           Scalar(0.5 * penalty.l2_weight) * alpha.squaredNorm();
}

/// Cyclic coordinate descent with soft thresholding, swept in index order until the
/// optimality residual drops below `tol`.
template <typename DerivedX, typename DerivedD>
SparseCode<typename DerivedD::Scalar> coordinate_descent_solve(const Eigen::MatrixBase<DerivedX>& x,
                                                               const Eigen::MatrixBase<DerivedD>& D,
                                                               const PenaltyConfig& penalty, double tol,
                                                               long max_sweeps = 200000) {
    using Scalar = typename DerivedD::Scalar;
    if (!(tol > 0)) throw InvalidArgument("coordinate descent tolerance must be positive");
    if (x.size() != D.rows()) throw DataError("signal length does not match the dictionary row count");
    require_finite(x, "signal");
    require_finite(D, "dictionary");
    const Index k = D.cols();
    penalty.validate(k);
    const Matrix<Scalar> G = D.transpose() * D;
    const Vector<Scalar> c0 = D.transpose() * x;
    const Vector<Scalar> w = detail::penalty_weights<Scalar>(penalty, k);
    const Scalar lambda(penalty.l1_weight), lambda2(penalty.l2_weight);

    Vector<Scalar> alpha = Vector<Scalar>::Zero(k);
    Vector<Scalar> grad = c0;  // D^T(x - D alpha)
    Scalar residual = detail::kkt_from_gradient<Scalar>(grad, alpha, penalty);
    for (long sweep = 0; sweep < max_sweeps && residual >= Scalar(tol); ++sweep) {
        for (Index j = 0; j < k; ++j) {
            const Scalar denom = G(j, j) + lambda2;
            if (denom <= Scalar(0)) continue;
            const Scalar z = grad[j] + G(j, j) * alpha[j];
            Scalar next = penalty.nonneg ? std::max(Scalar(0), z - lambda * w[j]) : soft_threshold(z, lambda * w[j]);
            next /= denom;
            const Scalar change = next - alpha[j];
            if (change != Scalar(0)) {
                alpha[j] = next;
                grad.noalias() -= G.col(j) * change;
            }
        }
        grad = c0 - G * alpha;
        residual = detail::kkt_from_gradient<Scalar>(grad, alpha, penalty);
    }
    if (residual >= Scalar(tol)) throw NonConvergenceError("coordinate descent", static_cast<double>(residual));
    return SparseCode<Scalar>::from_dense(alpha);
}

/// Row-wise optimality residual of the l1,2 problem 1/2||X - D A||_F^2 + lambda sum_j ||A^j||_2.
template <typename Scalar>
Scalar group_kkt_residual(const Matrix<Scalar>& gradient, const Matrix<Scalar>& alpha, Scalar lambda) {
    Scalar worst(0);
    for (Index j = 0; j < alpha.rows(); ++j) {
        const Scalar nrm = alpha.row(j).norm();
        const Scalar v = nrm > Scalar(0) ? (gradient.row(j) - lambda * alpha.row(j) / nrm).norm()
                                         : std::max(Scalar(0), gradient.row(j).norm() - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

namespace detail {

/// Newton steps on the stationarity system of the rows left nonzero by block coordinate
/// descent, so the support's coefficients reach working precision. The polished point
/// is kept only if the support is unchanged and the residual does not grow.
template <typename Scalar>
void group_newton_polish(const Matrix<Scalar>& G, const Matrix<Scalar>& C, Scalar lambda, Matrix<Scalar>& alpha,
                         Scalar residual) {
    const Index q = alpha.cols();
    std::vector<Index> support;
    for (Index j = 0; j < alpha.rows(); ++j)
        if (alpha.row(j).squaredNorm() > Scalar(0)) support.push_back(j);
    const Index s = static_cast<Index>(support.size());
    if (s == 0) return;
    Matrix<Scalar> trial = alpha;
    Matrix<Scalar> J(s * q, s * q);
    Vector<Scalar> F(s * q);
    for (int iter = 0; iter < 8; ++iter) {
        for (Index a = 0; a < s; ++a) {
            const Index j = support[a];
            const Vector<Scalar> aj = trial.row(j).transpose();
            const Scalar nrm = aj.norm();
            if (!(nrm > Scalar(0))) return;
            Vector<Scalar> fj = -C.row(j).transpose() + lambda * aj / nrm;
            for (Index b = 0; b < s; ++b) {
                const Index l = support[b];
                fj.noalias() += G(j, l) * trial.row(l).transpose();
                J.block(a * q, b * q, q, q) = G(j, l) * Matrix<Scalar>::Identity(q, q);
            }
            J.block(a * q, a * q, q, q) += lambda / nrm * (Matrix<Scalar>::Identity(q, q) - aj * aj.transpose() / (nrm * nrm));
            F.segment(a * q, q) = fj;
        }
        const Vector<Scalar> step = J.ldlt().solve(-F);
        if (!step.allFinite()) return;
        for (Index a = 0; a < s; ++a) trial.row(support[a]) += step.segment(a * q, q).transpose();
        if (step.norm() <= Scalar(1e-15) * (Scalar(1) + trial.norm())) break;
    }
    for (Index j : support)
        if (!(trial.row(j).squaredNorm() > Scalar(0))) return;
    const Matrix<Scalar> grad = C - G * trial;
    if (group_kkt_residual<Scalar>(grad, trial, lambda) <= residual) alpha = trial;
}

}  // namespace detail

/// Simultaneous sparse coding of the columns of X (m x q) with shared row support:
/// block coordinate descent over the rows of the k x q code matrix with group
/// soft-thresholding.
template <typename DerivedX, typename DerivedD>
Matrix<typename DerivedD::Scalar> group_lasso_solve(const Eigen::MatrixBase<DerivedX>& X,
                                                    const Eigen::MatrixBase<DerivedD>& D, double l1_weight, double tol,
                                                    long max_sweeps = 200000) {
    using Scalar = typename DerivedD::Scalar;
    if (!(tol > 0)) throw InvalidArgument("group lasso tolerance must be positive");
    if (!(l1_weight >= 0)) throw InvalidArgument("group lasso weight must be non-negative");
    if (X.rows() != D.rows()) throw DataError("group signals do not match the dictionary row count");
    if (X.cols() < 1) throw DataError("group must contain at least one signal");
    require_finite(X, "group signals");
    require_finite(D, "dictionary");
    const Index k = D.cols();
    const Matrix<Scalar> G = D.transpose() * D;
    const Matrix<Scalar> C = D.transpose() * X;
    const Scalar lambda(l1_weight);

    Matrix<Scalar> alpha = Matrix<Scalar>::Zero(k, X.cols());
    Matrix<Scalar> grad = C;
    Scalar residual = group_kkt_residual<Scalar>(grad, alpha, lambda);
    Vector<Scalar> z(X.cols()), change(X.cols());
    for (long sweep = 0; sweep < max_sweeps && residual >= Scalar(tol); ++sweep) {
        for (Index j = 0; j < k; ++j) {
            const Scalar gjj = G(j, j);
            if (gjj <= Scalar(0)) continue;
            z = grad.row(j).transpose() + gjj * alpha.row(j).transpose();
            const Scalar nrm = z.norm();
            const Scalar shrink = nrm > lambda ? (Scalar(1) - lambda / nrm) / gjj : Scalar(0);
            change = shrink * z - alpha.row(j).transpose();
            if (change.squaredNorm() > Scalar(0)) {
                alpha.row(j) += change.transpose();
                grad.noalias() -= G.col(j) * change.transpose();
            }
        }
        grad = C - G * alpha;
        residual = group_kkt_residual<Scalar>(grad, alpha, lambda);
    }
    if (residual >= Scalar(tol)) throw NonConvergenceError("group lasso", static_cast<double>(residual));
    detail::group_newton_polish<Scalar>(G, C, lambda, alpha, residual);
    return alpha;
}

}  // namespace omf
