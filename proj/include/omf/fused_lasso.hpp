#pragma once

// Fused lasso signal approximation
//     min_u 1/2||b - u||^2 + g1 ||u||_1 + g2 FL(u) + (g3/2)||u||^2
// and the projection onto the fused-lasso ball ||u||^2 + g1||u||_1 + g2 FL(u) <= r.
//
// The g1 = g3 = 0 problem is solved as a weighted Lasso on consecutive differences
// v[0] = u[0], v[i] = u[i] - u[i-1] (design: lower-triangular all-ones matrix, v[0]
// unpenalized) by a homotopy that only needs O(m) cumulative sums per kink and the
// tridiagonal closed form of the active Gram inverse. The full problem follows by
// soft-thresholding and scaling.

#include "omf/core.hpp"
#include "omf/projections.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace omf {

struct ProxWeights {
    double l1 = 0.0;     ///< g1
    double fuse = 0.0;   ///< g2
    double ridge = 0.0;  ///< g3
};

/// e = L w with L[i, j] = 1 for i >= j: prefix sums.
template <typename Derived>
Vector<typename Derived::Scalar> cumsum_apply(const Eigen::MatrixBase<Derived>& w) {
    Vector<typename Derived::Scalar> e(w.size());
    typename Derived::Scalar acc(0);
    for (Index i = 0; i < w.size(); ++i) e[i] = acc += w[i];
    return e;
}

/// e = L^T w: suffix sums.
template <typename Derived>
Vector<typename Derived::Scalar> cumsum_adjoint(const Eigen::MatrixBase<Derived>& w) {
    Vector<typename Derived::Scalar> e(w.size());
    typename Derived::Scalar acc(0);
    for (Index i = w.size() - 1; i >= 0; --i) e[i] = acc += w[i];
    return e;
}

/// Tridiagonal (L_G^T L_G)^{-1} for a sorted active set G of column indices of the
/// m x m lower-triangular all-ones design.
template <typename Scalar>
struct FusedGramInverse {
    Vector<Scalar> diag;
    Vector<Scalar> offdiag;  ///< offdiag[i] couples entries i and i+1

    FusedGramInverse(const std::vector<Index>& active, Index m) {
        const Index p = static_cast<Index>(active.size());
        Vector<Scalar> c(p);
        for (Index i = 0; i + 1 < p; ++i) c[i] = Scalar(1) / Scalar(active[i + 1] - active[i]);
        if (p > 0) c[p - 1] = Scalar(1) / Scalar(m - active[p - 1]);
        diag.resize(p);
        offdiag.resize(std::max<Index>(p - 1, 0));
        for (Index i = 0; i < p; ++i) diag[i] = i == 0 ? c[0] : c[i - 1] + c[i];
        for (Index i = 0; i + 1 < p; ++i) offdiag[i] = -c[i];
    }

    Vector<Scalar> apply(const Vector<Scalar>& r) const {
        const Index p = diag.size();
        Vector<Scalar> z(p);
        for (Index i = 0; i < p; ++i) {
            Scalar v = diag[i] * r[i];
            if (i > 0) v += offdiag[i - 1] * r[i - 1];
            if (i + 1 < p) v += offdiag[i] * r[i + 1];
            z[i] = v;
        }
        return z;
    }

    Matrix<Scalar> dense() const {
        const Index p = diag.size();
        Matrix<Scalar> out = Matrix<Scalar>::Zero(p, p);
        for (Index i = 0; i < p; ++i) out(i, i) = diag[i];
        for (Index i = 0; i + 1 < p; ++i) out(i, i + 1) = out(i + 1, i) = offdiag[i];
        return out;
    }
};

/// Breakpoints of the fused signal approximation path u*(lambda) of
/// min 1/2||b - u||^2 + lambda FL(u), from lambda_max (constant solution) down to the
/// stopping level. `solutions[i]` is u* at `breakpoints[i]`; u* is linear in between.
template <typename Scalar>
struct FusedPath {
    std::vector<Scalar> breakpoints;
    std::vector<Vector<Scalar>> solutions;

    Vector<Scalar> solution_at(Scalar lambda) const {
        if (breakpoints.empty()) throw InvalidArgument("empty fused path");
        if (lambda >= breakpoints.front()) return solutions.front();
        for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
            if (lambda >= breakpoints[i + 1]) {
                const Scalar t = (breakpoints[i] - lambda) / (breakpoints[i] - breakpoints[i + 1]);
                return (Scalar(1) - t) * solutions[i] + t * solutions[i + 1];
            }
        }
        if (lambda < breakpoints.back()) throw InvalidArgument("lambda below the end of the computed fused path");
        return solutions.back();
    }
};

namespace detail {

/// Homotopy in lambda for the FL-only problem. Calls `on_breakpoint(lambda, u)` at
/// lambda_max, at every kink, and at the stopping level; a `false` return stops the path
/// there. Returns u* at the level where the path stopped.
template <typename Scalar, typename Callback>
Vector<Scalar> fused_homotopy(const Vector<Scalar>& b, Scalar stop_lambda, Callback&& on_breakpoint) {
    constexpr Scalar kKinkTolerance = Scalar(1e-12);
    const Index m = b.size();
    if (m == 0) return b;
    Vector<Scalar> v = Vector<Scalar>::Zero(m);
    v[0] = b.mean();
    Vector<Scalar> signs = Vector<Scalar>::Zero(m);
    std::vector<Index> active{0};
    std::vector<char> is_active(static_cast<std::size_t>(m), 0);
    is_active[0] = 1;

    Vector<Scalar> u = cumsum_apply(v);
    Vector<Scalar> corr = cumsum_adjoint(b - u);

    Scalar lambda(0);
    Index entering = -1;
    Scalar entering_sign(0);
    for (Index i = 1; i < m; ++i) {
        if (std::abs(corr[i]) > lambda + kKinkTolerance) {
            lambda = std::abs(corr[i]);
            entering = i;
            entering_sign = corr[i] >= 0 ? Scalar(1) : Scalar(-1);
        }
    }
    if (entering < 0 || stop_lambda >= lambda) {
        on_breakpoint(std::max(stop_lambda, lambda), u);
        return u;
    }
    if (!on_breakpoint(lambda, u)) return u;

    Index just_removed = -1;
    const Index max_steps = 10 * m + 100;
    for (Index step = 0;; ++step) {
        if (step > max_steps) throw NumericalError("fused-lasso homotopy exceeded its step limit");
        if (entering >= 0) {
            active.insert(std::upper_bound(active.begin(), active.end(), entering), entering);
            is_active[static_cast<std::size_t>(entering)] = 1;
            signs[entering] = entering_sign;
            just_removed = -1;
        }
        const Index p = static_cast<Index>(active.size());
        Vector<Scalar> rhs(p);
        for (Index i = 0; i < p; ++i) rhs[i] = active[i] == 0 ? Scalar(0) : signs[active[i]];
        const Vector<Scalar> z = FusedGramInverse<Scalar>(active, m).apply(rhs);
        Vector<Scalar> dv = Vector<Scalar>::Zero(m);
        for (Index i = 0; i < p; ++i) dv[active[i]] = z[i];
        const Vector<Scalar> dcorr = cumsum_adjoint(cumsum_apply(dv));

        Scalar delta = lambda - stop_lambda;
        bool is_stop = true;
        Index event_i = -1;
        Scalar event_s(0);
        // Near-ties within the kink tolerance go to the lowest difference index.
        auto offer = [&](Scalar d, Index i, Scalar s) {
            if (d < delta - kKinkTolerance) {
                delta = d;
                event_i = i;
                event_s = s;
                is_stop = false;
            }
        };
        for (Index i = 1; i < m; ++i) {
            if (is_active[static_cast<std::size_t>(i)] || i == just_removed) continue;
            const Scalar den_pos = Scalar(1) - dcorr[i];
            if (den_pos > Scalar(1e-12)) offer(std::max(Scalar(0), lambda - corr[i]) / den_pos, i, Scalar(1));
            const Scalar den_neg = Scalar(1) + dcorr[i];
            if (den_neg > Scalar(1e-12)) offer(std::max(Scalar(0), lambda + corr[i]) / den_neg, i, Scalar(-1));
        }
        Index removal = -1;
        for (Index i = 0; i < p; ++i) {
            const Index a = active[i];
            if (a == 0 || v[a] == Scalar(0) || v[a] * z[i] >= 0) continue;
            const Scalar d = -v[a] / z[i];
            if (d < delta) {
                delta = d;
                removal = i;
                is_stop = false;
            }
        }

        v += delta * dv;
        lambda = is_stop ? stop_lambda : lambda - delta;
        entering = -1;
        if (removal >= 0) {
            const Index a = active[static_cast<std::size_t>(removal)];
            v[a] = 0;
            signs[a] = 0;
            is_active[static_cast<std::size_t>(a)] = 0;
            active.erase(active.begin() + removal);
            just_removed = a;
        } else if (!is_stop) {
            entering = event_i;
            entering_sign = event_s;
        }
        u = cumsum_apply(v);
        corr = cumsum_adjoint(b - u);
        if (!on_breakpoint(lambda, u) || is_stop) return u;
    }
}

}  // namespace detail

/// Full path of the FL-only signal approximation, down to `stop_lambda` (default 0).
template <typename Derived>
FusedPath<typename Derived::Scalar> fused_lasso_path(const Eigen::MatrixBase<Derived>& b,
                                                     typename Derived::Scalar stop_lambda = 0) {
    using Scalar = typename Derived::Scalar;
    require_finite(b, "fused-lasso input");
    FusedPath<Scalar> path;
    detail::fused_homotopy<Scalar>(Vector<Scalar>(b), stop_lambda, [&](Scalar lambda, const Vector<Scalar>& u) {
        if (!path.breakpoints.empty() && path.breakpoints.back() == lambda) {
            path.solutions.back() = u;
        } else {
            path.breakpoints.push_back(lambda);
            path.solutions.push_back(u);
        }
        return true;
    });
    return path;
}

/// Solution of the fused lasso signal approximation with weights (g1, g2, g3).
template <typename Derived>
Vector<typename Derived::Scalar> fused_lasso_prox(const Eigen::MatrixBase<Derived>& b, const ProxWeights& w) {
    using Scalar = typename Derived::Scalar;
    if (!(w.l1 >= 0) || !(w.fuse >= 0) || !(w.ridge >= 0))
        throw InvalidArgument("fused-lasso weights must be non-negative");
    require_finite(b, "fused-lasso input");
    Vector<Scalar> u = b;
    if (w.fuse > 0) u = detail::fused_homotopy<Scalar>(u, Scalar(w.fuse), [](Scalar, const Vector<Scalar>&) { return true; });
    const Scalar t(w.l1);
    for (Index i = 0; i < u.size(); ++i) u[i] = soft_threshold(u[i], t);
    return u / (Scalar(1) + Scalar(w.ridge));
}

/// ||u||_2^2 + g1 ||u||_1 + g2 FL(u).
template <typename Derived>
typename Derived::Scalar fused_ball_value(const Eigen::MatrixBase<Derived>& u, typename Derived::Scalar gamma1,
                                          typename Derived::Scalar gamma2) {
    return u.squaredNorm() + gamma1 * u.template lpNorm<1>() + gamma2 * fl_value(u);
}

/// Projection of b onto {u : ||u||^2 + g1||u||_1 + g2 FL(u) <= radius}.
///
/// The Lagrangian solution for multiplier mu is the prox with weights
/// (mu g1, mu g2, 2 mu), i.e. u(mu) = ST_{mu g1}(u_FL(mu g2)) / (1 + 2 mu). The FL path is
/// followed from an infinite multiplier downwards until the constraint value crosses the
/// radius; within the crossing piece u(mu) (1 + 2 mu) is affine, so the boundary
/// multiplier is the root of a quadratic.
template <typename Derived>
Vector<typename Derived::Scalar> project_fused_lasso_set(const Eigen::MatrixBase<Derived>& b,
                                                         typename Derived::Scalar gamma1,
                                                         typename Derived::Scalar gamma2,
                                                         typename Derived::Scalar radius = 1) {
    using Scalar = typename Derived::Scalar;
    if (!(gamma1 >= 0) || !(gamma2 >= 0)) throw InvalidArgument("fused-lasso ball weights must be non-negative");
    if (!(radius > 0)) throw InvalidArgument("fused-lasso ball radius must be positive");
    require_finite(b, "projection input");
    const Vector<Scalar> bb = b;
    if (fused_ball_value(bb, gamma1, gamma2) <= radius) return bb;
    if (gamma1 == 0 && gamma2 == 0) return project_l2_ball(bb, std::sqrt(radius));
    const Index m = bb.size();
    constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();

    auto at = [&](const Vector<Scalar>& u0, Scalar mu) {
        Vector<Scalar> u(m);
        for (Index i = 0; i < m; ++i) u[i] = soft_threshold(u0[i], mu * gamma1);
        return Vector<Scalar>(u / (Scalar(1) + 2 * mu));
    };
    auto value = [&](const Vector<Scalar>& u0, Scalar mu) { return fused_ball_value(at(u0, mu), gamma1, gamma2); };

    // Find the FL-path piece [mu_lo, mu_hi] where the constraint crosses the radius, with
    // u_FL(mu g2) = e + mu f on it.
    Vector<Scalar> e, f = Vector<Scalar>::Zero(m);
    Scalar mu_lo = 0, mu_hi = inf;
    if (gamma2 == 0) {
        e = bb;
    } else {
        Scalar prev_mu = inf;
        Vector<Scalar> prev_u;
        bool found = false;
        detail::fused_homotopy<Scalar>(bb, Scalar(0), [&](Scalar lambda, const Vector<Scalar>& u0) {
            const Scalar mu = lambda / gamma2;
            if (value(u0, mu) >= radius) {
                mu_lo = mu;
                mu_hi = prev_mu;
                if (!(prev_mu > mu)) {  // repeated breakpoint: b sits on the boundary up to rounding
                    e = u0;
                    mu_hi = mu;
                } else if (prev_mu == inf) {
                    e = u0;
                } else {
                    f = (prev_u - u0) / (prev_mu - mu);
                    e = u0 - mu * f;
                }
                found = true;
                return false;
            }
            prev_mu = mu;
            prev_u = u0;
            return true;
        });
        if (!found) {  // path end reached numerically just short of b itself
            mu_lo = 0;
            mu_hi = prev_mu;
            e = bb;
            if (prev_mu > 0) f = (prev_u - bb) / prev_mu;
        }
    }

    // Split the piece where soft-thresholding switches a coordinate on or off.
    std::vector<Scalar> cuts{mu_lo};
    if (gamma1 > 0) {
        for (Index i = 0; i < m; ++i) {
            for (Scalar s : {Scalar(1), Scalar(-1)}) {
                const Scalar den = gamma1 - s * f[i];
                if (den == 0) continue;
                const Scalar mu = s * e[i] / den;
                if (mu > mu_lo && mu < mu_hi) cuts.push_back(mu);
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.push_back(mu_hi);

    auto u0_at = [&](Scalar mu) { return Vector<Scalar>(e + mu * f); };
    std::size_t piece = cuts.size() - 2;
    while (piece > 0 && value(u0_at(cuts[piece]), cuts[piece]) < radius) --piece;
    const Scalar lo = cuts[piece], hi = cuts[piece + 1];
    const Scalar mid = std::isinf(hi) ? 2 * lo + 1 : (lo + hi) / 2;

    // w(mu) = P + mu Q on the piece; solve radius (1+2mu)^2 = ||w||^2 + (1+2mu) lin(w).
    Vector<Scalar> P = Vector<Scalar>::Zero(m), Q = Vector<Scalar>::Zero(m);
    for (Index i = 0; i < m; ++i) {
        const Scalar val = e[i] + mid * f[i];
        if (std::abs(val) > mid * gamma1) {
            const Scalar s = val > 0 ? Scalar(1) : Scalar(-1);
            P[i] = e[i];
            Q[i] = f[i] - s * gamma1;
        }
    }
    Scalar l0 = 0, l1 = 0;
    for (Index i = 0; i < m; ++i) {
        const Scalar s = sign(P[i] + mid * Q[i]);
        l0 += gamma1 * s * P[i];
        l1 += gamma1 * s * Q[i];
        if (i > 0) {
            const Scalar t = sign((P[i] - P[i - 1]) + mid * (Q[i] - Q[i - 1]));
            l0 += gamma2 * t * (P[i] - P[i - 1]);
            l1 += gamma2 * t * (Q[i] - Q[i - 1]);
        }
    }
    const Scalar qa = 4 * radius - Q.squaredNorm() - 2 * l1;
    const Scalar qb = 4 * radius - 2 * P.dot(Q) - l1 - 2 * l0;
    const Scalar qc = radius - P.squaredNorm() - l0;
    auto h = [&](Scalar mu) { return (qa * mu + qb) * mu + qc; };

    Scalar root = std::numeric_limits<Scalar>::quiet_NaN();
    const Scalar disc = qb * qb - 4 * qa * qc;
    if (disc >= 0) {
        const Scalar sq = std::sqrt(disc);
        const Scalar r1 = qb >= 0 ? (-qb - sq) / (2 * qa) : 2 * qc / (-qb + sq);
        const Scalar r2 = qb >= 0 ? 2 * qc / (-qb - sq) : (-qb + sq) / (2 * qa);
        const Scalar slack = Scalar(1e-9) * (Scalar(1) + std::abs(lo) + (std::isinf(hi) ? 0 : std::abs(hi)));
        for (Scalar r : {r1, r2})
            if (std::isfinite(r) && r >= lo - slack && r <= hi + slack) root = std::clamp(r, lo, hi);
    }
    if (!std::isfinite(root)) {
        // Fallback: bisection on the piecewise quadratic, which is monotone on the piece.
        Scalar a = lo, c = std::isinf(hi) ? std::max<Scalar>(1, 2 * lo) : hi;
        while (std::isinf(hi) && h(c) < 0) c *= 2;
        for (int it = 0; it < 200; ++it) {
            const Scalar md = (a + c) / 2;
            (h(md) < 0 ? a : c) = md;
        }
        root = (a + c) / 2;
    }
    return (P + root * Q) / (Scalar(1) + 2 * root);
}

}  // namespace omf
