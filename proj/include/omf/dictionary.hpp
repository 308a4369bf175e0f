#pragma once

#include "omf/core.hpp"
#include "omf/fused_lasso.hpp"
#include "omf/projections.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace omf {

/// Per-column convex constraint of the dictionary. Every set has the form
/// value(d) <= radius with
///   l2_ball:          ||d||_2^2
///   nonneg_l2_ball:   ||d||_2^2 and d >= 0
///   elastic_net_ball: ||d||_2^2 + gamma ||d||_1            (d >= 0 when nonneg)
///   fused_lasso_ball: ||d||_2^2 + gamma1 ||d||_1 + gamma2 FL(d)
struct ConstraintSet {
    enum class Kind { l2_ball, nonneg_l2_ball, elastic_net_ball, fused_lasso_ball };
    Kind kind = Kind::l2_ball;
    double gamma = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double radius = 1.0;
    bool nonneg = false;

    static ConstraintSet l2_ball() { return {}; }
    static ConstraintSet nonneg_l2_ball() { return {Kind::nonneg_l2_ball}; }
    static ConstraintSet elastic_net(double gamma, bool nonneg = false) {
        ConstraintSet c{Kind::elastic_net_ball};
        c.gamma = gamma;
        c.nonneg = nonneg;
        return c;
    }
    static ConstraintSet fused_lasso(double gamma1, double gamma2) {
        ConstraintSet c{Kind::fused_lasso_ball};
        c.gamma1 = gamma1;
        c.gamma2 = gamma2;
        return c;
    }

    void validate() const {
        if (!(radius > 0) || !std::isfinite(radius)) throw InvalidArgument("constraint radius must be positive");
        if (!(gamma >= 0) || !(gamma1 >= 0) || !(gamma2 >= 0) || !std::isfinite(gamma) || !std::isfinite(gamma1) ||
            !std::isfinite(gamma2))
            throw InvalidArgument("constraint weights must be finite and non-negative");
    }

    bool requires_nonneg() const {
        return kind == Kind::nonneg_l2_ball || (kind == Kind::elastic_net_ball && nonneg);
    }

    friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;
};

std::string to_string(ConstraintSet::Kind kind);
ConstraintSet::Kind parse_constraint_kind(const std::string& name);

template <typename Derived>
typename Derived::Scalar constraint_value(const ConstraintSet& set, const Eigen::MatrixBase<Derived>& d) {
    using Scalar = typename Derived::Scalar;
    switch (set.kind) {
        case ConstraintSet::Kind::l2_ball:
        case ConstraintSet::Kind::nonneg_l2_ball:
            return d.squaredNorm();
        case ConstraintSet::Kind::elastic_net_ball:
            return d.squaredNorm() + Scalar(set.gamma) * d.template lpNorm<1>();
        case ConstraintSet::Kind::fused_lasso_ball:
            return fused_ball_value(d, Scalar(set.gamma1), Scalar(set.gamma2));
    }
    return Scalar(0);
}

template <typename Derived>
bool is_feasible(const ConstraintSet& set, const Eigen::MatrixBase<Derived>& d, double tol = 1e-10) {
    if (set.requires_nonneg() && (d.array() < 0).any()) return false;
    return constraint_value(set, d) <= set.radius + tol;
}

/// Euclidean projection of one column onto `set`.
template <typename Derived>
Vector<typename Derived::Scalar> project_onto(const ConstraintSet& set, const Eigen::MatrixBase<Derived>& u) {
    using Scalar = typename Derived::Scalar;
    const Scalar radius(set.radius);
    switch (set.kind) {
        case ConstraintSet::Kind::l2_ball:
            return project_l2_ball(u, std::sqrt(radius));
        case ConstraintSet::Kind::nonneg_l2_ball:
            return project_nonneg_l2_ball(u, std::sqrt(radius));
        case ConstraintSet::Kind::elastic_net_ball: {
            const Scalar gamma(set.gamma);
            if (gamma == Scalar(0)) {
                return set.nonneg ? project_nonneg_l2_ball(u, std::sqrt(radius)) : project_l2_ball(u, std::sqrt(radius));
            }
            // ||d||^2 + g||d||_1 <= r  <=>  ||d||_1 + (2/g)/2 ||d||^2 <= r/g
            return project_elastic_net(u, Scalar(2) / gamma, radius / gamma, set.nonneg);
        }
        case ConstraintSet::Kind::fused_lasso_ball:
            return project_fused_lasso_set(u, Scalar(set.gamma1), Scalar(set.gamma2), radius);
    }
    return u;
}

template <typename Scalar>
struct BasicDictionary {
    Matrix<Scalar> atoms;  ///< m x k, column j is atom d_j
    ConstraintSet constraint;

    Index rows() const { return atoms.rows(); }
    Index cols() const { return atoms.cols(); }

    bool is_feasible(double tol = 1e-10) const {
        for (Index j = 0; j < atoms.cols(); ++j)
            if (!omf::is_feasible(constraint, atoms.col(j), tol)) return false;
        return true;
    }
};

using Dictionary = BasicDictionary<double>;

/// Sufficient statistics A = sum a a^T (k x k) and B = sum x a^T (m x k).
template <typename Scalar>
struct BasicSurrogateStats {
    Matrix<Scalar> A;
    Matrix<Scalar> B;

    static BasicSurrogateStats zeros(Index m, Index k) { return {Matrix<Scalar>::Zero(k, k), Matrix<Scalar>::Zero(m, k)}; }

    /// Symmetric and positive semi-definite up to `tol` (relative to the largest diagonal).
    bool is_psd(Scalar tol = Scalar(1e-10)) const {
        const Scalar scale = Scalar(1) + (A.size() ? A.diagonal().cwiseAbs().maxCoeff() : Scalar(0));
        if (A.size() && (A - A.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
        const Matrix<Scalar> shifted = A + tol * scale * Matrix<Scalar>::Identity(A.rows(), A.cols());
        return Eigen::LLT<Matrix<Scalar>>(shifted).info() == Eigen::Success;
    }
};

using SurrogateStats = BasicSurrogateStats<double>;

/// 1/2 Tr(D^T D A) - Tr(D^T B).
template <typename DerivedD, typename Scalar>
Scalar quadratic_objective(const Eigen::MatrixBase<DerivedD>& D, const BasicSurrogateStats<Scalar>& S) {
    return Scalar(0.5) * (D.transpose() * D).cwiseProduct(S.A).sum() - D.cwiseProduct(S.B).sum();
}

template <typename Scalar>
Scalar quadratic_objective(const BasicDictionary<Scalar>& D, const BasicSurrogateStats<Scalar>& S) {
    return quadratic_objective(D.atoms, S);
}

struct UpdateOptions {
    int max_sweeps = 1;
    double tol = 1e-8;  ///< Frobenius change of a full sweep below which iteration stops
    static constexpr double kUnusedDiagonal = 1e-10;
};

struct UpdateReport {
    int sweeps = 0;
    double last_change = 0.0;
    std::vector<Index> skipped;  ///< columns with A[j, j] below the usage threshold
};

/// Exact minimization of the surrogate over column j with the others fixed:
/// d_j <- proj(d_j + (b_j - D a_j) / A[j, j]). Returns false (column untouched) when
/// A[j, j] is below the usage threshold.
template <typename Scalar>
bool update_column(BasicDictionary<Scalar>& D, const BasicSurrogateStats<Scalar>& S, Index j) {
    const Scalar ajj = S.A(j, j);
    if (!(ajj >= Scalar(UpdateOptions::kUnusedDiagonal))) return false;
    const Vector<Scalar> u = D.atoms.col(j) + (S.B.col(j) - D.atoms * S.A.col(j)) / ajj;
    D.atoms.col(j) = project_onto(D.constraint, u);
    return true;
}

/// Block-coordinate descent on the surrogate, warm-started from D. Columns are swept in
/// ascending order.
template <typename Scalar>
UpdateReport update_dictionary(BasicDictionary<Scalar>& D, const BasicSurrogateStats<Scalar>& S,
                               const UpdateOptions& options = {}) {
    if (options.max_sweeps < 1) throw InvalidArgument("update_dictionary needs at least one sweep");
    const Index k = D.cols();
    if (S.A.rows() != k || S.A.cols() != k || S.B.rows() != D.rows() || S.B.cols() != k)
        throw DataError("surrogate statistics do not match the dictionary shape");
    UpdateReport report;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        const Matrix<Scalar> before = D.atoms;
        report.skipped.clear();
        for (Index j = 0; j < k; ++j)
            if (!update_column(D, S, j)) report.skipped.push_back(j);
        ++report.sweeps;
        report.last_change = static_cast<double>((D.atoms - before).norm());
        if (report.last_change < options.tol) break;
    }
    return report;
}

/// Replaces every atom whose consecutive-unused counter reached `threshold` by a random
/// non-zero column of `samples`, scaled to unit l2 norm and projected onto the
/// constraint. Counters of replaced atoms are reset. Returns the replaced indices; the
/// caller zeroes the matching rows/columns of its statistics.
template <typename Scalar>
std::vector<Index> replace_unused_atoms(BasicDictionary<Scalar>& D, std::vector<long>& unused_for, long threshold,
                                        const Matrix<Scalar>& samples, Rng& rng) {
    if (static_cast<Index>(unused_for.size()) != D.cols()) throw InvalidArgument("one usage counter per atom required");
    std::vector<Index> replaced;
    for (Index j = 0; j < D.cols(); ++j) {
        if (unused_for[static_cast<std::size_t>(j)] < threshold) continue;
        if (samples.cols() == 0 || samples.rows() != D.rows()) throw DataError("no training samples to draw atoms from");
        std::uniform_int_distribution<Index> pick(0, samples.cols() - 1);
        Vector<Scalar> atom;
        for (int attempt = 0; attempt < 64; ++attempt) {
            atom = samples.col(pick(rng));
            if (atom.norm() > Scalar(0)) break;
        }
        const Scalar nrm = atom.norm();
        if (!(nrm > Scalar(0))) throw DataError("training samples are all zero; cannot replace unused atoms");
        D.atoms.col(j) = project_onto(D.constraint, atom / nrm);
        unused_for[static_cast<std::size_t>(j)] = 0;
        replaced.push_back(j);
    }
    return replaced;
}

template <typename Scalar>
std::vector<Index> replace_unused_atoms(BasicDictionary<Scalar>& D, std::vector<long>& unused_for, long threshold,
                                        const Matrix<Scalar>& samples, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    return replace_unused_atoms(D, unused_for, threshold, samples, rng);
}

}  // namespace omf
