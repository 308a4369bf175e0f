#include "oracles.hpp"

#include "omf/projections.hpp"

#include <doctest.h>

#include <random>

using namespace omf;

namespace {

/// Random point of {u : ||u||_1 + gamma/2 ||u||^2 <= tau} (sign-restricted when nonneg).
VectorXd random_elastic_feasible(Index m, double gamma, double tau, bool nonneg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd v = oracle::random_vector(m, rng);
    if (nonneg) v = v.cwiseAbs();
    const double a = gamma / 2 * v.squaredNorm(), b = v.lpNorm<1>();
    const double tmax = a > 0 ? (-b + std::sqrt(b * b + 4 * a * tau)) / (2 * a) : tau / b;
    return std::pow(u(rng), 1.0 / static_cast<double>(m)) * tmax * v;
}

}  // namespace

TEST_CASE("l2 ball examples") {
    CHECK(project_l2_ball((VectorXd(2) << 0.3, 0.4).finished()) == (VectorXd(2) << 0.3, 0.4).finished());
    const VectorXd p = project_l2_ball((VectorXd(2) << 3.0, 4.0).finished());
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(project_l2_ball(VectorXd::Zero(3)) == VectorXd::Zero(3));
    const VectorXd q = project_nonneg_l2_ball((VectorXd(3) << -1.0, 3.0, 4.0).finished());
    CHECK(q[0] == 0.0);
    CHECK(q[1] == doctest::Approx(0.6));
}

TEST_CASE("fused value") {
    CHECK(fl_value((VectorXd(3) << 1.0, 1.0, 1.0).finished()) == 0.0);
    CHECK(fl_value((VectorXd(3) << 0.0, 1.0, 0.0).finished()) == 2.0);
    CHECK(fl_value((VectorXd(1) << 5.0).finished()) == 0.0);
}

TEST_CASE("elastic-net projection: fixed examples") {
    const VectorXd b = (VectorXd(3) << 0.1, -0.2, 0.05).finished();
    CHECK(project_elastic_net(b, 1.0, 1.0) == b);
    const VectorXd sym = project_elastic_net((VectorXd(2) << 0.8, 0.8).finished(), 0.0, 0.8);
    CHECK(sym[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(sym[1] == doctest::Approx(0.4).epsilon(1e-15));

    const VectorXd c = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
    const VectorXd u = project_elastic_net(c, 1.0, 1.0);
    CHECK((u - oracle::project_elastic_bisect(c, 1.0, 1.0, false)).norm() < 1e-10);
    CHECK(elastic_net_value(u, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(project_elastic_net(c, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(project_elastic_net(c, -1.0, 1.0), InvalidArgument);
}

TEST_CASE("elastic-net projection agrees with bisection and the sort-based l1 projection") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> g(0.0, 4.0), t(0.05, 3.0), s(0.1, 3.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int trial = 0; trial < 300; ++trial) {
        const Index m = len(rng);
        const VectorXd b = oracle::random_vector(m, rng, s(rng));
        const double gamma = trial % 5 == 0 ? 0.0 : g(rng), tau = t(rng);
        const bool nonneg = trial % 3 == 0;
        const VectorXd u = project_elastic_net(b, gamma, tau, nonneg);
        CHECK((u - oracle::project_elastic_bisect(b, gamma, tau, nonneg)).norm() < 1e-8);
        if (gamma == 0.0 && !nonneg) CHECK((u - oracle::project_l1_sort(b, tau)).cwiseAbs().maxCoeff() < 1e-14);
        if (nonneg) CHECK((u.array() >= 0.0).all());
    }
}

TEST_CASE("elastic-net projection: feasibility, idempotence, nearest point") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> g(0.0, 2.0), t(0.1, 2.0);
    for (int trial = 0; trial < 40; ++trial) {
        const Index m = 3 + trial % 12;
        const VectorXd b = oracle::random_vector(m, rng, 2.0);
        const double gamma = g(rng), tau = t(rng);
        const bool nonneg = trial % 2 == 1;
        const VectorXd u = project_elastic_net(b, gamma, tau, nonneg);
        CHECK(elastic_net_value(u, gamma) <= tau + 1e-10);
        CHECK((project_elastic_net(u, gamma, tau, nonneg) - u).norm() < 1e-12);
        const double best = (b - u).norm();
        double worst_violation = 0.0;
        for (int p = 0; p < 1000; ++p) {
            const VectorXd y = random_elastic_feasible(m, gamma, tau, nonneg, rng);
            worst_violation = std::max(worst_violation, best - (b - y).norm());
        }
        CHECK(worst_violation <= 1e-12);
    }
}

TEST_CASE("elastic-net projection does not depend on the pivot sequence") {
    std::mt19937_64 rng(107);
    const VectorXd b = oracle::random_vector(200, rng, 1.0);
    Rng r1(1), r2(99);
    const VectorXd a = project_elastic_net(b, 0.7, 2.0, false, r1);
    const VectorXd c = project_elastic_net(b, 0.7, 2.0, false, r2);
    CHECK((a - c).norm() < 1e-13);
}

TEST_CASE("elastic-net projection handles ties and zeros") {
    const VectorXd b = (VectorXd(6) << 1.0, 1.0, -1.0, 0.0, 1.0, -1.0).finished();
    const VectorXd u = project_elastic_net(b, 0.5, 1.0);
    CHECK((u - oracle::project_elastic_bisect(b, 0.5, 1.0, false)).norm() < 1e-12);
    CHECK(u[3] == 0.0);
    CHECK(std::abs(u[0]) == doctest::Approx(std::abs(u[5])).epsilon(1e-15));
}

TEST_CASE("projections reject non-finite input") {
    VectorXd b = VectorXd::Ones(3);
    b[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(project_elastic_net(b, 1.0, 1.0), DataError);
}
