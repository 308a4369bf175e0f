#include "omf/online_learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace omf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double penalty_value(const VectorXd& alpha, const PenaltyConfig& penalty) {
    double l1 = 0.0;
    if (penalty.per_index_weights)
        l1 = (penalty.per_index_weights->array() * alpha.array().abs()).sum();
    else
        l1 = alpha.lpNorm<1>();
    return penalty.l1_weight * l1 + 0.5 * penalty.l2_weight * alpha.squaredNorm();
}

bool same_stop(const std::optional<StopRule>& a, const std::optional<StopRule>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->kind == b->kind && a->value == b->value);
}

}  // namespace

std::string to_string(LearnerMode mode) { return mode == LearnerMode::online ? "online" : "batch"; }

LearnerMode parse_learner_mode(const std::string& name) {
    if (name == "online") return LearnerMode::online;
    if (name == "batch") return LearnerMode::batch;
    throw InvalidArgument("unknown mode '" + name + "' (expected online or batch)");
}

void LearnerConfig::validate() const {
    if (k < 1) throw InvalidArgument("k must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
    if (!(forget_exponent >= 0) || !std::isfinite(forget_exponent))
        throw InvalidArgument("forgetting exponent must be finite and non-negative");
    if (!(warmup >= 0) || !std::isfinite(warmup)) throw InvalidArgument("warm-up t0 must be finite and non-negative");
    if (iterations < 0) throw InvalidArgument("iteration budget must be non-negative");
    if (iterations == 0 && (!(epochs > 0) || !std::isfinite(epochs)))
        throw InvalidArgument("epochs must be positive when no iteration budget is given");
    if (update_sweeps < 1 || batch_update_sweeps < 1) throw InvalidArgument("dictionary update needs at least one sweep");
    if (!(batch_update_tol > 0)) throw InvalidArgument("batch update tolerance must be positive");
    if (!(ridge >= 0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be finite and non-negative");
    if (!(group_tol > 0)) throw InvalidArgument("group coding tolerance must be positive");
    if (threads < 1) throw InvalidArgument("threads must be at least 1");
    if (!(checkpoint_growth >= 1) || !std::isfinite(checkpoint_growth))
        throw InvalidArgument("checkpoint growth must be at least 1");
    if (coding_stop && (!(coding_stop->value >= 0) || !std::isfinite(coding_stop->value)))
        throw InvalidArgument("coding stop value must be finite and non-negative");
    penalty.validate(k);
    constraint.validate();
}

bool operator==(const LearnerConfig& a, const LearnerConfig& b) {
    return a.k == b.k && a.penalty == b.penalty && same_stop(a.coding_stop, b.coding_stop) &&
           a.batch_size == b.batch_size && a.forget_exponent == b.forget_exponent &&
           a.forget_activation == b.forget_activation && a.warmup == b.warmup && a.iterations == b.iterations &&
           a.epochs == b.epochs && a.purge_fixed_dataset == b.purge_fixed_dataset && a.constraint == b.constraint &&
           a.mode == b.mode && a.rng_seed == b.rng_seed && a.update_sweeps == b.update_sweeps &&
           a.batch_update_sweeps == b.batch_update_sweeps && a.batch_update_tol == b.batch_update_tol &&
           a.replace_unused == b.replace_unused && a.unused_threshold == b.unused_threshold && a.ridge == b.ridge &&
           a.group_tol == b.group_tol && a.threads == b.threads && a.checkpoint_growth == b.checkpoint_growth &&
           a.evaluate_train == b.evaluate_train && a.keep_history == b.keep_history;
}

double empirical_objective(const MatrixXd& D, const MatrixXd& X, const PenaltyConfig& penalty, int threads) {
    if (X.cols() < 1) throw DataError("empirical objective needs at least one sample");
    const MatrixXd codes = lasso_solve_batch(X, D, penalty, threads);
    double total = 0.0;
    for (Index i = 0; i < X.cols(); ++i) {
        const VectorXd a = codes.col(i);
        total += 0.5 * (X.col(i) - D * a).squaredNorm() + penalty_value(a, penalty);
    }
    return total / static_cast<double>(X.cols());
}

// --- learner ---------------------------------------------------------------

OnlineLearner::OnlineLearner(LearnerConfig config, Dictionary D0) : config_(std::move(config)) {
    config_.validate();
    if (D0.cols() != config_.k) throw InvalidArgument("initial dictionary must have k columns");
    if (D0.rows() < 1) throw InvalidArgument("initial dictionary must have at least one row");
    require_finite(D0.atoms, "initial dictionary");
    D0.constraint = config_.constraint;
    if (!D0.is_feasible()) throw InvalidArgument("initial dictionary violates the constraint set");
    const Index m = D0.rows(), k = D0.cols();
    state_.stats.A = config_.warmup * MatrixXd::Identity(k, k);
    state_.stats.B = config_.warmup * D0.atoms;
    state_.constant = 0.5 * config_.warmup * D0.atoms.squaredNorm();
    state_.purge_stats = SurrogateStats::zeros(m, k);
    state_.unused_for.assign(static_cast<std::size_t>(k), 0);
    state_.rng.seed(config_.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    state_.D = std::move(D0);
}

void OnlineLearner::set_replacement_source(const MatrixXd* samples, long threshold) {
    replacement_source_ = samples;
    unused_threshold_ = threshold;
}

double OnlineLearner::begin_step(long epoch, bool& swapped) {
    ++state_.t;
    swapped = false;
    if (config_.purge_fixed_dataset && epoch > state_.epoch) {
        std::swap(state_.stats, state_.purge_stats);
        state_.purge_stats.A.setZero();
        state_.purge_stats.B.setZero();
        state_.weight = state_.purge_weight;
        state_.constant = state_.purge_constant;
        state_.purge_weight = 0.0;
        state_.purge_constant = 0.0;
        swapped = true;
    }
    state_.epoch = std::max(state_.epoch, epoch);
    const bool active = config_.forget_activation < 0 ? state_.epoch >= 1 : state_.t >= config_.forget_activation;
    if (config_.forget_exponent > 0 && active)
        return std::pow(1.0 - 1.0 / static_cast<double>(state_.t), config_.forget_exponent);
    return 1.0;
}

void OnlineLearner::accumulate(const MatrixXd& X, const MatrixXd& codes, double scale, double constant, double beta) {
    auto add = [&](SurrogateStats& S, double& W, double& C) {
        S.A *= beta;
        S.B *= beta;
        S.A.noalias() += scale * codes * codes.transpose();
        S.B.noalias() += scale * X * codes.transpose();
        W = beta * W + 1.0;
        C = beta * C + constant;
    };
    add(state_.stats, state_.weight, state_.constant);
    if (config_.purge_fixed_dataset) add(state_.purge_stats, state_.purge_weight, state_.purge_constant);
}

StepReport OnlineLearner::finish_step(MatrixXd codes, double beta, bool swapped, const MatrixXd* X_for_history,
                                      double scale) {
    StepReport report;
    report.beta = beta;
    report.swapped_purge = swapped;
    const Index k = state_.D.cols();
    Index nnz = 0;
    for (Index j = 0; j < k; ++j) {
        const Index used = (codes.row(j).array() != 0.0).count();
        nnz += used;
        auto& counter = state_.unused_for[static_cast<std::size_t>(j)];
        counter = used ? 0 : counter + 1;
    }
    report.mean_nnz = codes.cols() ? static_cast<double>(nnz) / static_cast<double>(codes.cols()) : 0.0;

    const MatrixXd before = state_.D.atoms;
    UpdateOptions options;
    options.max_sweeps = config_.update_sweeps;
    if (config_.ridge > 0) {
        SurrogateStats ridged = state_.stats;
        ridged.A.diagonal().array() += config_.ridge * state_.weight;
        update_dictionary(state_.D, ridged, options);
    } else {
        update_dictionary(state_.D, state_.stats, options);
    }

    if (config_.replace_unused && replacement_source_ && unused_threshold_ > 0) {
        report.replaced =
            replace_unused_atoms(state_.D, state_.unused_for, unused_threshold_, *replacement_source_, state_.rng);
        for (Index j : report.replaced) {
            for (SurrogateStats* S : {&state_.stats, &state_.purge_stats}) {
                S->A.row(j).setZero();
                S->A.col(j).setZero();
                S->B.col(j).setZero();
            }
        }
    }
    report.dict_delta = (state_.D.atoms - before).norm();

    if (config_.keep_history) {
        HistoryEntry entry;
        entry.t = state_.t;
        entry.epoch = state_.epoch;
        entry.beta = beta;
        entry.X = X_for_history ? *X_for_history : MatrixXd();
        entry.codes = codes;
        entry.weight = scale;
        state_.history.push_back(std::move(entry));
    }
    report.codes = std::move(codes);
    return report;
}

StepReport OnlineLearner::step(const MatrixXd& batch, long epoch) {
    if (batch.rows() != state_.D.rows()) throw DataError("batch signals do not match the dictionary row count");
    if (batch.cols() < 1) throw DataError("empty mini-batch");
    require_finite(batch, "mini-batch");
    MatrixXd codes;
    {
        const StopRule stop = config_.coding_stop.value_or(StopRule::at_lambda(config_.penalty.l1_weight));
        codes = lasso_solve_batch(batch, state_.D.atoms, config_.penalty, stop, config_.threads);
    }
    bool swapped = false;
    const double beta = begin_step(epoch, swapped);
    const double scale = 1.0 / static_cast<double>(batch.cols());
    double constant = 0.0;
    for (Index i = 0; i < batch.cols(); ++i)
        constant += 0.5 * batch.col(i).squaredNorm() + penalty_value(codes.col(i), config_.penalty);
    accumulate(batch, codes, scale, scale * constant, beta);
    return finish_step(std::move(codes), beta, swapped, &batch, scale);
}

StepReport OnlineLearner::step_groups(const std::vector<MatrixXd>& groups, long epoch) {
    if (groups.empty()) throw DataError("empty group batch");
    Index total = 0;
    for (const auto& g : groups) {
        if (g.rows() != state_.D.rows()) throw DataError("group signals do not match the dictionary row count");
        if (g.cols() < 1) throw DataError("empty group");
        total += g.cols();
    }
    MatrixXd X(state_.D.rows(), total), codes(state_.D.cols(), total);
    double constant = 0.0;
    Index at = 0;
    for (const auto& g : groups) {
        const MatrixXd a = group_lasso_solve(g, state_.D.atoms, config_.penalty.l1_weight, config_.group_tol);
        X.middleCols(at, g.cols()) = g;
        codes.middleCols(at, g.cols()) = a;
        constant += 0.5 * g.squaredNorm() + config_.penalty.l1_weight * a.rowwise().norm().sum();
        at += g.cols();
    }
    bool swapped = false;
    const double beta = begin_step(epoch, swapped);
    const double scale = 1.0 / static_cast<double>(groups.size());
    accumulate(X, codes, scale, scale * constant, beta);
    return finish_step(std::move(codes), beta, swapped, &X, scale);
}

double OnlineLearner::surrogate_objective(const MatrixXd& D) const {
    if (state_.t < 1) throw InvalidArgument("surrogate objective is undefined before the first step");
    if (D.rows() != state_.D.rows() || D.cols() != state_.D.cols())
        throw DataError("surrogate objective: dictionary shape mismatch");
    const double value = (quadratic_objective(D, state_.stats) + state_.constant) / state_.weight;
    return value + 0.5 * config_.ridge * D.squaredNorm();
}

// --- training loops ----------------------------------------------------------

Dictionary initial_dictionary(const MatrixXd& X, Index k, const ConstraintSet& constraint, std::uint64_t rng_seed) {
    if (X.cols() < 1 || X.rows() < 1) throw DataError("cannot initialize a dictionary from an empty data set");
    Rng rng(rng_seed);
    const Index n = X.cols(), m = X.rows();
    std::vector<Index> pick(static_cast<std::size_t>(n));
    std::iota(pick.begin(), pick.end(), Index(0));
    std::normal_distribution<double> normal(0.0, 1.0);
    Dictionary D{MatrixXd(m, k), constraint};
    for (Index j = 0; j < k; ++j) {
        Index source;
        if (j < n) {
            std::uniform_int_distribution<Index> u(j, n - 1);
            std::swap(pick[static_cast<std::size_t>(j)], pick[static_cast<std::size_t>(u(rng))]);
            source = pick[static_cast<std::size_t>(j)];
        } else {
            source = std::uniform_int_distribution<Index>(0, n - 1)(rng);
        }
        VectorXd atom = X.col(source);
        if (constraint.requires_nonneg()) atom = atom.cwiseAbs();
        if (!(atom.norm() > 0))
            for (Index i = 0; i < m; ++i) atom[i] = constraint.requires_nonneg() ? std::abs(normal(rng)) : normal(rng);
        atom.normalize();
        D.atoms.col(j) = project_onto(constraint, atom);
    }
    return D;
}

long planned_iterations(const LearnerConfig& config, Index n) {
    if (config.iterations > 0) return config.iterations;
    if (config.mode == LearnerMode::batch) return std::max<long>(1, std::lround(config.epochs));
    const double steps = std::ceil(config.epochs * static_cast<double>(n) / static_cast<double>(config.batch_size));
    return std::max<long>(1, static_cast<long>(steps));
}

bool CheckpointSchedule::due(long t) {
    if (t < next_ && t != last_) return false;
    next_ = std::max(t + 1, static_cast<long>(std::floor(static_cast<double>(t) * growth_)));
    return true;
}

namespace {

using Clock = std::chrono::steady_clock;

MetricsRecord evaluate(long t, double wall, const MatrixXd& D, const MatrixXd& X, const MatrixXd* test,
                       const LearnerConfig& config) {
    MetricsRecord r;
    r.iteration = t;
    r.wall_clock_s = wall;
    r.train_obj = config.evaluate_train ? empirical_objective(D, X, config.penalty, config.threads) : kNaN;
    r.test_obj = test ? empirical_objective(D, *test, config.penalty, config.threads) : kNaN;
    r.surrogate_obj = kNaN;
    r.mean_nnz = kNaN;
    r.dict_delta_fro = 0.0;
    return r;
}

TrainResult train_online(const MatrixXd& X, const LearnerConfig& config, const MatrixXd* test, Dictionary D0,
                         const StepHook& on_step) {
    OnlineLearner learner(config, std::move(D0));
    const Index n = X.cols();
    const long per_epoch = (n + config.batch_size - 1) / config.batch_size;
    learner.set_replacement_source(&X, config.unused_threshold >= 0 ? config.unused_threshold : 2 * per_epoch);
    SampleStream stream(X, config.rng_seed);
    const long T = planned_iterations(config, n);
    CheckpointSchedule schedule(config.checkpoint_growth, T);

    TrainResult result;
    result.trace.records.push_back(evaluate(0, 0.0, learner.dictionary().atoms, X, test, config));
    double wall = 0.0, nnz_sum = 0.0, delta = 0.0;
    long steps_since = 0;
    MatrixXd batch(X.rows(), config.batch_size);
    for (long t = 1; t <= T; ++t) {
        const auto start = Clock::now();
        long epoch = 0;
        for (Index i = 0; i < config.batch_size; ++i) {
            const auto draw = stream.next();
            if (i == 0) epoch = draw.epoch;
            batch.col(i) = X.col(draw.index);
        }
        const StepReport report = learner.step(batch, epoch);
        wall += std::chrono::duration<double>(Clock::now() - start).count();
        nnz_sum += report.mean_nnz;
        delta = report.dict_delta;
        ++steps_since;
        if (on_step) on_step(learner, report);
        if (schedule.due(t)) {
            MetricsRecord r = evaluate(t, wall, learner.dictionary().atoms, X, test, config);
            r.surrogate_obj = learner.surrogate_objective();
            r.mean_nnz = nnz_sum / static_cast<double>(steps_since);
            r.dict_delta_fro = delta;
            result.trace.records.push_back(r);
            nnz_sum = 0.0;
            steps_since = 0;
        }
    }
    result.D = learner.dictionary();
    result.iterations = T;
    return result;
}

TrainResult train_batch(const MatrixXd& X, const LearnerConfig& config, const MatrixXd* test, Dictionary D) {
    config.validate();
    D.constraint = config.constraint;
    if (D.cols() != config.k) throw InvalidArgument("initial dictionary must have k columns");
    if (!D.is_feasible()) throw InvalidArgument("initial dictionary violates the constraint set");
    const long T = planned_iterations(config, X.cols());
    const double inv_n = 1.0 / static_cast<double>(X.cols());
    const StopRule stop = config.coding_stop.value_or(StopRule::at_lambda(config.penalty.l1_weight));
    UpdateOptions options;
    options.max_sweeps = config.batch_update_sweeps;
    options.tol = config.batch_update_tol;

    TrainResult result;
    result.trace.records.push_back(evaluate(0, 0.0, D.atoms, X, test, config));
    double wall = 0.0;
    for (long t = 1; t <= T; ++t) {
        const auto start = Clock::now();
        const MatrixXd codes = lasso_solve_batch(X, D.atoms, config.penalty, stop, config.threads);
        SurrogateStats S{inv_n * codes * codes.transpose(), inv_n * X * codes.transpose()};
        S.A.diagonal().array() += config.ridge;
        double constant = 0.0;
        for (Index i = 0; i < X.cols(); ++i)
            constant += 0.5 * X.col(i).squaredNorm() + penalty_value(codes.col(i), config.penalty);
        const MatrixXd before = D.atoms;
        update_dictionary(D, S, options);
        wall += std::chrono::duration<double>(Clock::now() - start).count();

        MetricsRecord r = evaluate(t, wall, D.atoms, X, test, config);
        r.surrogate_obj = quadratic_objective(D, S) + inv_n * constant;
        r.mean_nnz = static_cast<double>((codes.array() != 0.0).count()) * inv_n;
        r.dict_delta_fro = (D.atoms - before).norm();
        result.trace.records.push_back(r);
    }
    result.D = std::move(D);
    result.iterations = T;
    return result;
}

}  // namespace

TrainResult train(const MatrixXd& X, const LearnerConfig& config, const MatrixXd* test_set, const Dictionary* D0,
                  const StepHook& on_step) {
    config.validate();
    if (X.cols() < 1 || X.rows() < 1) throw DataError("training set is empty");
    require_finite(X, "training set");
    if (test_set) {
        if (test_set->rows() != X.rows()) throw DataError("test set dimension does not match the training set");
        require_finite(*test_set, "test set");
        if (test_set->cols() < 1) test_set = nullptr;
    }
    Dictionary init = D0 ? *D0 : initial_dictionary(X, config.k, config.constraint, config.rng_seed + 1);
    if (init.rows() != X.rows()) throw DataError("initial dictionary dimension does not match the training set");
    if (config.mode == LearnerMode::batch) return train_batch(X, config, test_set, std::move(init));
    return train_online(X, config, test_set, std::move(init), on_step);
}

}  // namespace omf
