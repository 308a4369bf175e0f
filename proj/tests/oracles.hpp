#pragma once

// Reference solvers used only by the tests. Each one is deliberately simple and shares
// no code path with the library routine it checks.

#include "omf/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using omf::Index;
using omf::MatrixXd;
using omf::VectorXd;

inline MatrixXd random_unit_columns(Index m, Index k, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixXd D(m, k);
    for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i < m; ++i) D(i, j) = n(rng);
        D.col(j).normalize();
    }
    return D;
}

inline VectorXd random_vector(Index m, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    VectorXd v(m);
    for (Index i = 0; i < m; ++i) v[i] = n(rng);
    return v;
}

inline double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

/// Lasso objective evaluated entry by entry.
inline double lasso_objective(const VectorXd& x, const MatrixXd& D, const VectorXd& a, double lambda,
                              double lambda2 = 0.0) {
    double r2 = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        double ri = x[i];
        for (Index j = 0; j < a.size(); ++j) ri -= D(i, j) * a[j];
        r2 += ri * ri;
    }
    double l1 = 0.0, l2 = 0.0;
    for (Index j = 0; j < a.size(); ++j) {
        l1 += std::abs(a[j]);
        l2 += a[j] * a[j];
    }
    return 0.5 * r2 + lambda * l1 + 0.5 * lambda2 * l2;
}

/// Plain cyclic coordinate descent for the (elastic-net, optionally non-negative)
/// Lasso, run for a fixed large number of sweeps.
inline VectorXd lasso_cd(const VectorXd& x, const MatrixXd& D, double lambda, double lambda2, bool nonneg,
                         int sweeps = 1000000) {
    const Index k = D.cols();
    VectorXd a = VectorXd::Zero(k);
    VectorXd r = x;
    for (int s = 0; s < sweeps; ++s) {
        double biggest = 0.0;
        for (Index j = 0; j < k; ++j) {
            const double djj = D.col(j).squaredNorm();
            const double z = D.col(j).dot(r) + djj * a[j];
            double next = nonneg ? std::max(0.0, z - lambda) : soft(z, lambda);
            next /= djj + lambda2;
            const double delta = next - a[j];
            if (delta != 0.0) {
                r -= delta * D.col(j);
                a[j] = next;
                biggest = std::max(biggest, std::abs(delta));
            }
        }
        if (biggest < 1e-16) break;
    }
    return a;
}

/// Relative primal-dual gap of a Lasso point. The dual point is the residual scaled
/// into the feasible set, so the gap bounds the distance to the optimal objective.
inline double lasso_relative_gap(const VectorXd& x, const MatrixXd& D, const VectorXd& a, double lambda) {
    const VectorXd r = x - D * a;
    const double corr = (D.transpose() * r).cwiseAbs().maxCoeff();
    const VectorXd nu = corr > lambda ? VectorXd(r * (lambda / corr)) : r;
    const double primal = 0.5 * r.squaredNorm() + lambda * a.lpNorm<1>();
    const double dual = 0.5 * x.squaredNorm() - 0.5 * (x - nu).squaredNorm();
    return (primal - dual) / std::max(primal, 1e-300);
}

struct CertifiedCode {
    VectorXd a;
    double gap;  // relative duality gap on exit
};

/// Cyclic coordinate descent that stops once its own duality gap drops below
/// gap_tol or after max_sweeps.
inline CertifiedCode lasso_cd_certified(const VectorXd& x, const MatrixXd& D, double lambda, double gap_tol,
                                        long max_sweeps) {
    const Index k = D.cols();
    VectorXd a = VectorXd::Zero(k), r = x;
    double gap = lasso_relative_gap(x, D, a, lambda);
    for (long s = 0; s < max_sweeps && gap > gap_tol; ++s) {
        for (Index j = 0; j < k; ++j) {
            const double djj = D.col(j).squaredNorm();
            const double next = soft(D.col(j).dot(r) + djj * a[j], lambda) / djj;
            const double delta = next - a[j];
            if (delta != 0.0) {
                r -= delta * D.col(j);
                a[j] = next;
            }
        }
        if (s % 25 == 24) {
            r = x - D * a;
            gap = lasso_relative_gap(x, D, a, lambda);
        }
    }
    return {a, lasso_relative_gap(x, D, a, lambda)};
}

/// Euclidean projection onto the l1 ball of radius tau by sorting magnitudes.
inline VectorXd project_l1_sort(const VectorXd& b, double tau) {
    if (b.lpNorm<1>() <= tau) return b;
    std::vector<double> mu(b.data(), b.data() + b.size());
    for (double& v : mu) v = std::abs(v);
    std::sort(mu.begin(), mu.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        cum += mu[j];
        const double t = (cum - tau) / static_cast<double>(j + 1);
        if (mu[j] - t > 0) theta = t;
    }
    VectorXd u(b.size());
    for (Index j = 0; j < b.size(); ++j) u[j] = soft(b[j], theta);
    return u;
}

/// Projection onto ||u||_1 + gamma/2 ||u||^2 <= tau by bisection on the threshold.
inline VectorXd project_elastic_bisect(const VectorXd& b, double gamma, double tau, bool nonneg) {
    auto shrink = [&](double lambda) {
        VectorXd u(b.size());
        for (Index j = 0; j < b.size(); ++j) {
            const double mag = nonneg ? std::max(b[j], 0.0) : std::abs(b[j]);
            const double s = std::max(mag - lambda, 0.0) / (1.0 + lambda * gamma);
            u[j] = nonneg ? s : (b[j] < 0 ? -s : s);
        }
        return u;
    };
    auto value = [&](const VectorXd& u) { return u.lpNorm<1>() + gamma / 2 * u.squaredNorm(); };
    if (value(shrink(0.0)) <= tau) return shrink(0.0);
    double lo = 0.0, hi = b.cwiseAbs().maxCoeff();
    for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        (value(shrink(mid)) > tau ? lo : hi) = mid;
    }
    return shrink(hi);
}

/// (m-1) x m forward-difference matrix.
inline MatrixXd difference_matrix(Index m) {
    MatrixXd F = MatrixXd::Zero(std::max<Index>(m - 1, 0), m);
    for (Index i = 0; i + 1 < m; ++i) {
        F(i, i) = -1.0;
        F(i, i + 1) = 1.0;
    }
    return F;
}

inline double fused_objective(const VectorXd& b, const VectorXd& u, double g1, double g2, double g3) {
    double fl = 0.0;
    for (Index i = 1; i < u.size(); ++i) fl += std::abs(u[i] - u[i - 1]);
    return 0.5 * (b - u).squaredNorm() + g1 * u.lpNorm<1>() + g2 * fl + 0.5 * g3 * u.squaredNorm();
}

/// min 1/2||b-u||^2 + g2 FL(u) through projected gradient on the box-constrained dual
/// min_{|z| <= g2} 1/2||b - F^T z||^2, whose Hessian F F^T is positive definite.
inline VectorXd flsa_dual(const VectorXd& b, double g2, int iterations = 200000) {
    const Index m = b.size();
    if (m < 2 || g2 == 0.0) return b;
    const MatrixXd F = difference_matrix(m);
    VectorXd z = VectorXd::Zero(m - 1);
    const double step = 0.25;  // 1 / ||F F^T|| with ||F F^T|| < 4
    for (int it = 0; it < iterations; ++it) {
        const VectorXd grad = -F * (b - F.transpose() * z);
        const VectorXd next = (z - step * grad).cwiseMax(-g2).cwiseMin(g2);
        const double change = (next - z).lpNorm<Eigen::Infinity>();
        z = next;
        if (change < 1e-17) break;
    }
    return b - F.transpose() * z;
}

/// Full fused prox minimizer through accelerated projected gradient on the dual of
/// 1/2||b-u||^2 + g1||u||_1 + g2 FL(u) + g3/2 ||u||^2 with K = [I; F].
inline VectorXd fused_prox_dual(const VectorXd& b, double g1, double g2, double g3, int iterations = 400000) {
    const Index m = b.size();
    MatrixXd K(2 * m - 1, m);
    K.topRows(m).setIdentity();
    K.bottomRows(m - 1) = difference_matrix(m);
    VectorXd bound(2 * m - 1);
    bound.head(m).setConstant(g1);
    bound.tail(m - 1).setConstant(g2);
    const double c = 1.0 + g3;
    const double L = 5.0 / c;  // ||K K^T|| <= 1 + 4
    VectorXd z = VectorXd::Zero(2 * m - 1), y = z;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const VectorXd u = (b - K.transpose() * y) / c;
        const VectorXd next = (y + K * u / L).cwiseMax(-bound).cwiseMin(bound);
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / tn) * (next - z);
        z = next;
        t = tn;
    }
    return (b - K.transpose() * z) / c;
}

/// Projection onto ||u||^2 + g1||u||_1 + g2 FL(u) <= radius through the multiplier mu:
/// u(mu) = argmin 1/2||b-u||^2 + mu (||u||^2 + g1||u||_1 + g2 FL(u)), located by a
/// coarse grid followed by bisection on the constraint value. The inner problem uses the
/// dual FL solver, soft thresholding and scaling.
inline VectorXd fused_ball_multiplier(const VectorXd& b, double g1, double g2, double radius) {
    auto value = [&](const VectorXd& u) {
        double fl = 0.0;
        for (Index i = 1; i < u.size(); ++i) fl += std::abs(u[i] - u[i - 1]);
        return u.squaredNorm() + g1 * u.lpNorm<1>() + g2 * fl;
    };
    if (value(b) <= radius) return b;
    auto solve = [&](double mu) {
        VectorXd u = flsa_dual(b, mu * g2);
        for (Index i = 0; i < u.size(); ++i) u[i] = soft(u[i], mu * g1) / (1.0 + 2.0 * mu);
        return u;
    };
    double lo = 0.0, hi = 1.0;
    while (value(solve(hi)) > radius) hi *= 2.0;
    for (int g = 1; g <= 64; ++g) {  // grid pass
        const double mu = hi * g / 64.0;
        if (value(solve(mu)) <= radius) {
            lo = hi * (g - 1) / 64.0;
            hi = mu;
            break;
        }
    }
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (value(solve(mid)) > radius ? lo : hi) = mid;
    }
    return solve(hi);
}

/// FISTA on 1/2||X - D A||_F^2 + lambda sum_j ||A_j.||_2.
inline MatrixXd group_lasso_fista(const MatrixXd& X, const MatrixXd& D, double lambda, int iterations = 50000) {
    const MatrixXd G = D.transpose() * D;
    const MatrixXd C = D.transpose() * X;
    const double L = Eigen::SelfAdjointEigenSolver<MatrixXd>(G).eigenvalues().maxCoeff();
    MatrixXd A = MatrixXd::Zero(D.cols(), X.cols()), Y = A;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        MatrixXd Z = Y - (G * Y - C) / L;
        for (Index j = 0; j < Z.rows(); ++j) {
            const double n = Z.row(j).norm();
            Z.row(j) *= n > lambda / L ? 1.0 - lambda / (L * n) : 0.0;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        Y = Z + ((t - 1.0) / tn) * (Z - A);
        A = Z;
        t = tn;
    }
    return A;
}

inline double group_objective(const MatrixXd& X, const MatrixXd& D, const MatrixXd& A, double lambda) {
    return 0.5 * (X - D * A).squaredNorm() + lambda * A.rowwise().norm().sum();
}

/// 1/2 Tr(D^T D A) - Tr(D^T B) by explicit loops.
inline double quadratic_naive(const MatrixXd& D, const MatrixXd& A, const MatrixXd& B) {
    double q = 0.0;
    for (Index i = 0; i < D.cols(); ++i)
        for (Index j = 0; j < D.cols(); ++j) {
            double dij = 0.0;
            for (Index r = 0; r < D.rows(); ++r) dij += D(r, i) * D(r, j);
            q += 0.5 * dij * A(j, i);
        }
    for (Index r = 0; r < D.rows(); ++r)
        for (Index c = 0; c < D.cols(); ++c) q -= D(r, c) * B(r, c);
    return q;
}

/// Accelerated projected gradient on 1/2 Tr(D^T D A) - Tr(D^T B) over per-column
/// constraints given by `project`.
inline MatrixXd dictionary_pgd(const MatrixXd& A, const MatrixXd& B, MatrixXd D,
                               const std::function<VectorXd(const VectorXd&)>& project, int iterations = 20000) {
    const double L = std::max(1e-12, Eigen::SelfAdjointEigenSolver<MatrixXd>(A).eigenvalues().maxCoeff());
    MatrixXd Y = D;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        MatrixXd Z = Y - (Y * A - B) / L;
        for (Index j = 0; j < Z.cols(); ++j) Z.col(j) = project(Z.col(j));
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        Y = Z + ((t - 1.0) / tn) * (Z - D);
        D = Z;
        t = tn;
    }
    return D;
}

}  // namespace oracle
