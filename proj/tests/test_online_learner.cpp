#include "oracles.hpp"

#include "omf/online_learner.hpp"

#include <doctest.h>

#include <random>

using namespace omf;

namespace {

LearnerConfig small_config(Index k, Index eta) {
    LearnerConfig c;
    c.k = k;
    c.batch_size = eta;
    c.penalty.l1_weight = 0.15;
    c.replace_unused = false;
    c.keep_history = true;
    c.evaluate_train = true;
    return c;
}

struct Expected {
    MatrixXd A, B;
    double W = 0.0, C = 0.0;
};

/// Statistics rebuilt from the stored history by explicit discount products. With
/// `keep_from_epoch` >= 0 only entries drawn in that epoch or later count and the
/// warm-up prior is gone.
Expected replay(const std::vector<HistoryEntry>& history, const MatrixXd& D0, double t0, double lambda,
                long keep_from_epoch = -1) {
    const Index m = D0.rows(), k = D0.cols();
    Expected e{MatrixXd::Zero(k, k), MatrixXd::Zero(m, k)};
    auto discount_after = [&](std::size_t i) {
        double p = 1.0;
        for (std::size_t j = i + 1; j < history.size(); ++j) p *= history[j].beta;
        return p;
    };
    if (keep_from_epoch < 0) {
        double p = 1.0;
        for (const auto& h : history) p *= h.beta;
        e.A += p * t0 * MatrixXd::Identity(k, k);
        e.B += p * t0 * D0;
        e.C += p * 0.5 * t0 * D0.squaredNorm();
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        if (h.epoch < keep_from_epoch) continue;
        const double f = discount_after(i) * h.weight;
        for (Index c = 0; c < h.X.cols(); ++c) {
            const VectorXd a = h.codes.col(c);
            e.A += f * a * a.transpose();
            e.B += f * h.X.col(c) * a.transpose();
            e.C += f * (0.5 * h.X.col(c).squaredNorm() + lambda * a.lpNorm<1>());
        }
        e.W += discount_after(i);
    }
    return e;
}

MatrixXd next_batch(SampleStream& stream, const MatrixXd& X, Index eta, long& epoch) {
    MatrixXd batch(X.rows(), eta);
    for (Index i = 0; i < eta; ++i) {
        const auto d = stream.next();
        if (i == 0) epoch = d.epoch;
        batch.col(i) = X.col(d.index);
    }
    return batch;
}

}  // namespace

TEST_CASE("mode names and config validation") {
    CHECK(parse_learner_mode(to_string(LearnerMode::batch)) == LearnerMode::batch);
    CHECK_THROWS_AS(parse_learner_mode("stochastic"), InvalidArgument);
    LearnerConfig c;
    CHECK_NOTHROW(c.validate());
    for (auto mutate : std::vector<std::function<void(LearnerConfig&)>>{
             [](LearnerConfig& x) { x.k = 0; }, [](LearnerConfig& x) { x.batch_size = 0; },
             [](LearnerConfig& x) { x.forget_exponent = -1; }, [](LearnerConfig& x) { x.warmup = -2; },
             [](LearnerConfig& x) { x.penalty.l1_weight = -0.1; }, [](LearnerConfig& x) { x.epochs = 0; },
             [](LearnerConfig& x) { x.threads = 0; }, [](LearnerConfig& x) { x.checkpoint_growth = 0.5; }}) {
        LearnerConfig bad;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    }
}

TEST_CASE("warm-up initializes the statistics from D0") {
    const auto data = synth_planted(6, 4, 20, 2, 0.0, 1);
    auto config = small_config(4, 2);
    config.warmup = 3.0;
    const Dictionary D0 = initial_dictionary(data.X, 4, config.constraint, 7);
    OnlineLearner learner(config, D0);
    CHECK(learner.state().stats.A == 3.0 * MatrixXd::Identity(4, 4));
    CHECK(learner.state().stats.B == 3.0 * D0.atoms);
    CHECK(learner.state().t == 0);
    CHECK(learner.state().stats.is_psd());
    CHECK_THROWS_AS(learner.surrogate_objective(), InvalidArgument);

    Dictionary bad = D0;
    bad.atoms.col(0) *= 2.0;
    CHECK_THROWS_AS(OnlineLearner(config, bad), InvalidArgument);
    CHECK_THROWS_AS(learner.step(MatrixXd::Zero(5, 2)), DataError);
}

TEST_CASE("statistics equal the discounted replay of every past code") {
    const auto data = synth_planted(8, 6, 30, 2, 0.01, 3);
    for (double rho : {0.0, 1.0, 4.0}) {
        auto config = small_config(5, 3);
        config.forget_exponent = rho;
        config.warmup = rho == 1.0 ? 2.0 : 0.0;
        const Dictionary D0 = initial_dictionary(data.X, 5, config.constraint, 11);
        OnlineLearner learner(config, D0);
        SampleStream stream(data.X, 5);
        for (int t = 1; t <= 40; ++t) {
            long epoch = 0;
            const MatrixXd batch = next_batch(stream, data.X, 3, epoch);
            const auto report = learner.step(batch, epoch);
            const bool active = epoch >= 1;
            const double beta = rho > 0 && active ? std::pow(1.0 - 1.0 / t, rho) : 1.0;
            CHECK(report.beta == doctest::Approx(beta).epsilon(1e-15));
        }
        const auto& s = learner.state();
        const Expected e = replay(s.history, D0.atoms, config.warmup, 0.15);
        const double scale = 1.0 + e.A.norm();
        CHECK((s.stats.A - e.A).norm() < 1e-12 * scale);
        CHECK((s.stats.B - e.B).norm() < 1e-12 * scale);
        CHECK(s.weight == doctest::Approx(e.W).epsilon(1e-12));
        CHECK(s.constant == doctest::Approx(e.C).epsilon(1e-12));
        if (rho == 0.0) CHECK(s.weight == 40.0);
        CHECK(s.stats.is_psd());
    }
}

TEST_CASE("forgetting can start at a fixed iteration") {
    const auto data = synth_planted(6, 4, 50, 2, 0.01, 5);
    auto config = small_config(4, 1);
    config.forget_exponent = 2.0;
    config.forget_activation = 5;
    OnlineLearner learner(config, initial_dictionary(data.X, 4, config.constraint, 1));
    for (int t = 1; t <= 8; ++t) {
        const auto r = learner.step(data.X.col(t));
        CHECK(r.beta == doctest::Approx(t >= 5 ? std::pow(1.0 - 1.0 / t, 2.0) : 1.0).epsilon(1e-15));
    }
}

TEST_CASE("purge keeps only the last two epochs") {
    const auto data = synth_planted(6, 4, 9, 2, 0.01, 13);
    auto config = small_config(4, 2);
    config.purge_fixed_dataset = true;
    config.warmup = 1.5;
    config.forget_exponent = 0.5;
    const Dictionary D0 = initial_dictionary(data.X, 4, config.constraint, 17);
    OnlineLearner learner(config, D0);
    SampleStream stream(data.X, 19);
    int swaps = 0;
    for (int t = 1; t <= 30; ++t) {
        long epoch = 0;
        const MatrixXd batch = next_batch(stream, data.X, 2, epoch);
        const auto report = learner.step(batch, epoch);
        swaps += report.swapped_purge;
        const auto& s = learner.state();
        const Expected e = s.epoch == 0 ? replay(s.history, D0.atoms, 1.5, 0.15)
                                        : replay(s.history, D0.atoms, 1.5, 0.15, s.epoch - 1);
        CHECK((s.stats.A - e.A).norm() < 1e-12 * (1.0 + e.A.norm()));
        CHECK((s.stats.B - e.B).norm() < 1e-12 * (1.0 + e.A.norm()));
        CHECK(s.weight == doctest::Approx(e.W).epsilon(1e-12));
        CHECK(s.constant == doctest::Approx(e.C).epsilon(1e-12));
        const Expected current = replay(s.history, D0.atoms, 0.0, 0.15, s.epoch);
        CHECK((s.purge_stats.A - current.A).norm() < 1e-12 * (1.0 + current.A.norm()));
    }
    CHECK(swaps == static_cast<int>(learner.state().epoch));
    CHECK(swaps >= 5);
}

TEST_CASE("surrogate upper-bounds the empirical cost and decreases with each update") {
    const auto data = synth_planted(8, 5, 60, 2, 0.02, 23);
    auto config = small_config(5, 2);
    OnlineLearner learner(config, initial_dictionary(data.X, 5, config.constraint, 29));
    SampleStream stream(data.X, 31);
    PenaltyConfig p;
    p.l1_weight = 0.15;
    for (int t = 1; t <= 50; ++t) {
        long epoch = 0;
        const MatrixXd before = learner.dictionary().atoms;
        learner.step(next_batch(stream, data.X, 2, epoch), epoch);
        const auto& s = learner.state();
        CHECK(learner.surrogate_objective() <= learner.surrogate_objective(before) + 1e-12);
        double f = 0.0;
        for (const auto& h : s.history)
            for (Index c = 0; c < h.X.cols(); ++c) {
                const VectorXd x = h.X.col(c);
                const VectorXd a = lasso_solve(x, s.D.atoms, p).dense();
                f += h.weight * oracle::lasso_objective(x, s.D.atoms, a, 0.15);
            }
        f /= s.weight;
        CHECK(learner.surrogate_objective() >= f - 1e-12);
    }
}

TEST_CASE("ridge adds kappa W to the diagonal of the update") {
    const auto data = synth_planted(6, 4, 10, 2, 0.01, 37);
    auto config = small_config(4, 3);
    config.ridge = 0.7;
    const Dictionary D0 = initial_dictionary(data.X, 4, config.constraint, 41);
    OnlineLearner learner(config, D0);
    const MatrixXd batch = data.X.leftCols(3);
    const auto report = learner.step(batch);
    SurrogateStats S{report.codes * report.codes.transpose() / 3.0, batch * report.codes.transpose() / 3.0};
    S.A.diagonal().array() += 0.7;
    Dictionary expected = D0;
    update_dictionary(expected, S);
    CHECK((learner.dictionary().atoms - expected.atoms).norm() < 1e-13);
    const double plain = (quadratic_objective(learner.dictionary(), learner.state().stats) + learner.state().constant);
    CHECK(learner.surrogate_objective() ==
          doctest::Approx(plain + 0.35 * learner.dictionary().atoms.squaredNorm()).epsilon(1e-13));
}

TEST_CASE("unused atoms are replaced and their statistics cleared") {
    const Index m = 5;
    const auto planted = synth_planted(m - 1, 3, 30, 1, 0.0, 43);
    MatrixXd X = MatrixXd::Zero(m, 30);
    X.topRows(m - 1) = planted.X;
    Dictionary D0{MatrixXd::Zero(m, 4), ConstraintSet::l2_ball()};
    D0.atoms.topLeftCorner(m - 1, 3) = planted.atoms;
    D0.atoms(m - 1, 3) = 1.0;  // orthogonal to every sample: never used
    auto config = small_config(4, 2);
    config.replace_unused = true;
    OnlineLearner learner(config, D0);
    learner.set_replacement_source(&X, 3);
    std::vector<Index> replaced;
    for (int t = 0; t < 3; ++t) replaced = learner.step(X.middleCols(2 * t, 2)).replaced;
    REQUIRE(replaced == std::vector<Index>{3});
    const auto& s = learner.state();
    CHECK(s.unused_for[3] == 0);
    CHECK(s.stats.A.row(3).norm() == 0.0);
    CHECK(s.stats.A.col(3).norm() == 0.0);
    CHECK(s.stats.B.col(3).norm() == 0.0);
    CHECK(learner.dictionary().atoms(m - 1, 3) == 0.0);
    CHECK(learner.dictionary().atoms.col(3).norm() == doctest::Approx(1.0));
}

TEST_CASE("group steps share supports and scale by the number of groups") {
    const auto data = synth_planted(8, 6, 12, 2, 0.01, 47);
    auto config = small_config(6, 2);
    const Dictionary D0 = initial_dictionary(data.X, 6, config.constraint, 53);
    OnlineLearner learner(config, D0);
    const std::vector<MatrixXd> groups{data.X.leftCols(3), data.X.middleCols(3, 4)};
    const auto report = learner.step_groups(groups);
    REQUIRE(report.codes.cols() == 7);
    for (Index j = 0; j < 6; ++j) {
        const bool a = report.codes.row(j).head(3).norm() > 0, b = report.codes.row(j).tail(4).norm() > 0;
        for (Index c = 0; c < 3; ++c) CHECK((report.codes(j, c) != 0.0) == a);
        for (Index c = 3; c < 7; ++c) CHECK((report.codes(j, c) != 0.0) == b);
    }
    MatrixXd X(8, 7);
    X << groups[0], groups[1];
    CHECK((learner.state().stats.A - 0.5 * report.codes * report.codes.transpose()).norm() < 1e-14);
    CHECK((learner.state().stats.B - 0.5 * X * report.codes.transpose()).norm() < 1e-14);
    CHECK(learner.state().weight == 1.0);
}

TEST_CASE("checkpoint schedule and planned iterations") {
    CheckpointSchedule s(1.5, 20);
    std::vector<long> due;
    for (long t = 1; t <= 20; ++t)
        if (s.due(t)) due.push_back(t);
    CHECK(due == std::vector<long>{1, 2, 3, 4, 6, 9, 13, 19, 20});
    LearnerConfig c;
    c.batch_size = 512;
    CHECK(planned_iterations(c, 1000) == 2);
    c.epochs = 3.5;
    CHECK(planned_iterations(c, 1024) == 7);
    c.iterations = 11;
    CHECK(planned_iterations(c, 1024) == 11);
    c.iterations = 0;
    c.mode = LearnerMode::batch;
    CHECK(planned_iterations(c, 1024) == 4);
}

TEST_CASE("initial dictionary is feasible and built from distinct samples") {
    const auto data = synth_planted(7, 5, 12, 2, 0.01, 59);
    const Dictionary D = initial_dictionary(data.X, 5, ConstraintSet::l2_ball(), 61);
    CHECK(D.is_feasible());
    for (Index j = 0; j < 5; ++j) {
        CHECK(D.atoms.col(j).norm() == doctest::Approx(1.0).epsilon(1e-14));
        bool found = false;
        for (Index i = 0; i < data.X.cols(); ++i) found |= (D.atoms.col(j) - data.X.col(i).normalized()).norm() < 1e-14;
        CHECK(found);
    }
    const Dictionary N = initial_dictionary(data.X, 5, ConstraintSet::nonneg_l2_ball(), 61);
    CHECK((N.atoms.array() >= 0).all());
    const Dictionary Z = initial_dictionary(MatrixXd::Zero(7, 2), 3, ConstraintSet::l2_ball(), 1);
    CHECK(Z.is_feasible());
    CHECK(Z.atoms.colwise().norm().minCoeff() > 0.99);
}

TEST_CASE("online training is deterministic and reduces the objective") {
    const auto data = synth_planted(10, 8, 300, 2, 0.01, 67);
    LearnerConfig c = small_config(8, 16);
    c.keep_history = false;
    c.replace_unused = true;
    c.epochs = 4;
    c.rng_seed = 5;
    const MatrixXd test = data.X.rightCols(50);
    const auto a = train(data.X, c, &test);
    const auto b = train(data.X, c, &test);
    CHECK(a.D.atoms == b.D.atoms);
    REQUIRE(a.trace.records.size() == b.trace.records.size());
    for (std::size_t i = 0; i < a.trace.records.size(); ++i) {
        const auto &x = a.trace.records[i], &y = b.trace.records[i];
        CHECK(x.iteration == y.iteration);
        CHECK(x.train_obj == y.train_obj);
        CHECK(x.test_obj == y.test_obj);
        if (i > 0) {
            CHECK(x.surrogate_obj == y.surrogate_obj);
            CHECK(x.iteration > a.trace.records[i - 1].iteration);
            CHECK(x.wall_clock_s >= a.trace.records[i - 1].wall_clock_s);
        }
    }
    CHECK(a.iterations == 75);
    CHECK(a.trace.records.front().iteration == 0);
    CHECK(std::isnan(a.trace.records.front().surrogate_obj));
    CHECK(a.trace.records.back().iteration == 75);
    CHECK(a.trace.records.back().test_obj < 0.9 * a.trace.records.front().test_obj);

    c.rng_seed = 6;
    CHECK(train(data.X, c, &test).D.atoms != a.D.atoms);
}

TEST_CASE("batch training rebuilds statistics and never increases the objective") {
    const auto data = synth_planted(8, 6, 120, 2, 0.01, 71);
    LearnerConfig c = small_config(6, 16);
    c.mode = LearnerMode::batch;
    c.iterations = 8;
    c.ridge = 1e-6;
    const auto r = train(data.X, c);
    REQUIRE(r.trace.records.size() == 9);
    for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
        CHECK(r.trace.records[i].iteration == static_cast<long>(i));
        CHECK(r.trace.records[i].train_obj <= r.trace.records[i - 1].train_obj + 1e-7);
        CHECK(r.trace.records[i].train_obj <= r.trace.records[i].surrogate_obj + 1e-12);
    }
    CHECK(r.D.is_feasible());
}

TEST_CASE("training rejects unusable inputs") {
    LearnerConfig c = small_config(3, 2);
    CHECK_THROWS_AS(train(MatrixXd(4, 0), c), DataError);
    MatrixXd X = MatrixXd::Ones(4, 5);
    X(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train(X, c), DataError);
    const MatrixXd ok = MatrixXd::Random(4, 5);
    const MatrixXd wrong_test = MatrixXd::Random(3, 2);
    CHECK_THROWS_AS(train(ok, c, &wrong_test), DataError);
}
