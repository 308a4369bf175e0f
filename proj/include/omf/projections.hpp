#pragma once

#include "omf/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace omf {

/// Euclidean projection onto {u : ||u||_2 <= radius}.
template <typename Derived>
Vector<typename Derived::Scalar> project_l2_ball(const Eigen::MatrixBase<Derived>& u,
                                                 typename Derived::Scalar radius = 1) {
    using Scalar = typename Derived::Scalar;
    const Scalar nrm = u.norm();
    if (nrm <= radius) return u;
    return u * (radius / nrm);
}

/// Projection onto {u >= 0, ||u||_2 <= radius}: clip, then rescale.
template <typename Derived>
Vector<typename Derived::Scalar> project_nonneg_l2_ball(const Eigen::MatrixBase<Derived>& u,
                                                        typename Derived::Scalar radius = 1) {
    using Scalar = typename Derived::Scalar;
    const Vector<Scalar> clipped = u.cwiseMax(Scalar(0));
    return project_l2_ball(clipped, radius);
}

/// Sum of absolute consecutive differences.
template <typename Derived>
typename Derived::Scalar fl_value(const Eigen::MatrixBase<Derived>& u) {
    using Scalar = typename Derived::Scalar;
    if (u.size() < 2) return Scalar(0);
    return (u.tail(u.size() - 1) - u.head(u.size() - 1)).cwiseAbs().sum();
}

/// ||u||_1 + (gamma/2) ||u||_2^2.
template <typename Derived>
typename Derived::Scalar elastic_net_value(const Eigen::MatrixBase<Derived>& u, typename Derived::Scalar gamma) {
    return u.template lpNorm<1>() + gamma / 2 * u.squaredNorm();
}

/// Projection of b onto {u : ||u||_1 + (gamma/2)||u||_2^2 <= tau} (and u >= 0 when
/// `nonneg`), in expected linear time.
///
/// The threshold lambda* of the closed-form solution
///     u[j] = sign(b[j]) (|b[j]| - lambda*)^+ / (1 + lambda* gamma)
/// is located by a randomized-pivot partition of the magnitudes, which identifies the
/// support S(lambda*) = {j : |b[j]| >= lambda*}, followed by the root of a quadratic.
template <typename Derived>
Vector<typename Derived::Scalar> project_elastic_net(const Eigen::MatrixBase<Derived>& b,
                                                     typename Derived::Scalar gamma, typename Derived::Scalar tau,
                                                     bool nonneg, Rng& rng) {
    using Scalar = typename Derived::Scalar;
    if (!(tau > 0)) throw InvalidArgument("elastic-net radius tau must be positive");
    if (!(gamma >= 0)) throw InvalidArgument("elastic-net gamma must be non-negative");
    require_finite(b, "projection input");
    const Index m = b.size();

    Vector<Scalar> mag(m);
    for (Index j = 0; j < m; ++j) mag[j] = nonneg ? std::max(b[j], Scalar(0)) : std::abs(b[j]);
    if (mag.sum() + gamma / 2 * mag.squaredNorm() <= tau) {
        if (nonneg) return b.cwiseMax(Scalar(0));
        return b;
    }

    std::vector<Index> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), Index(0));
    std::size_t lo = 0, hi = idx.size();
    Scalar s(0), rho(0);
    while (lo < hi) {
        std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
        std::swap(idx[lo], idx[pick(rng)]);
        const Scalar pivot = mag[idx[lo]];
        // G = [lo, mid) holds magnitudes >= pivot (the pivot itself at lo), L = [mid, hi).
        const auto mid_it = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo + 1),
                                           idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                           [&](Index j) { return mag[j] >= pivot; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - idx.begin());
        Scalar ds(0);
        for (std::size_t i = lo; i < mid; ++i) ds += mag[idx[i]] + gamma / 2 * mag[idx[i]] * mag[idx[i]];
        const Scalar drho = static_cast<Scalar>(mid - lo);
        const Scalar scale = Scalar(1) + gamma * pivot;
        if (s + ds - (rho + drho) * (Scalar(1) + gamma / 2 * pivot) * pivot < tau * scale * scale) {
            s += ds;
            rho += drho;
            lo = mid;
        } else {
            lo = lo + 1;
            hi = mid;
        }
    }

    // Root of (gamma^2 tau + gamma rho / 2) l^2 + (2 gamma tau + rho) l + (tau - s) = 0.
    const Scalar qa = gamma * gamma * tau + gamma / 2 * rho;
    const Scalar qb = 2 * gamma * tau + rho;
    const Scalar qc = tau - s;
    Scalar lambda;
    if (qa == Scalar(0))
        lambda = -qc / qb;  // gamma == 0: plain l1-ball threshold
    else
        lambda = -2 * qc / (qb + std::sqrt(qb * qb - 4 * qa * qc));

    Vector<Scalar> u(m);
    const Scalar denom = Scalar(1) + lambda * gamma;
    for (Index j = 0; j < m; ++j) {
        const Scalar shrunk = std::max(mag[j] - lambda, Scalar(0)) / denom;
        u[j] = nonneg ? shrunk : (b[j] < 0 ? -shrunk : shrunk);
    }
    return u;
}

/// Same as above with a fixed internal pivot seed; the result does not depend on the
/// pivot sequence beyond floating-point summation order.
template <typename Derived>
Vector<typename Derived::Scalar> project_elastic_net(const Eigen::MatrixBase<Derived>& b,
                                                     typename Derived::Scalar gamma, typename Derived::Scalar tau,
                                                     bool nonneg = false) {
    Rng rng(0x5eed);
    return project_elastic_net(b, gamma, tau, nonneg, rng);
}

}  // namespace omf
