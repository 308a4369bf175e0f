#include "omf/presets.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace omf {

std::string to_string(PresetKind kind) {
    switch (kind) {
        case PresetKind::dict_learn:
            return "dict_learn";
        case PresetKind::nmf:
            return "nmf";
        case PresetKind::nnsc:
            return "nnsc";
        case PresetKind::spca:
            return "spca";
        case PresetKind::group_dict_learn:
            return "group_dict_learn";
    }
    return "dict_learn";
}

PresetKind parse_preset_kind(const std::string& name) {
    if (name == "dict_learn") return PresetKind::dict_learn;
    if (name == "nmf") return PresetKind::nmf;
    if (name == "nnsc") return PresetKind::nnsc;
    if (name == "spca") return PresetKind::spca;
    if (name == "group_dict_learn") return PresetKind::group_dict_learn;
    throw InvalidArgument("unknown preset '" + name + "' (expected dict_learn, nmf, nnsc, spca or group_dict_learn)");
}

LearnerConfig make_preset(const Preset& preset, Index m, Index k) {
    if (m < 1 || k < 1) throw InvalidArgument("preset dimensions must be positive");
    if (preset.lambda && (!(*preset.lambda >= 0) || !std::isfinite(*preset.lambda)))
        throw InvalidArgument("preset lambda must be finite and non-negative");
    if (!(preset.gamma >= 0) || !std::isfinite(preset.gamma))
        throw InvalidArgument("preset gamma must be finite and non-negative");
    const double default_lambda = 1.2 / std::sqrt(static_cast<double>(m));

    LearnerConfig c;
    c.k = k;
    switch (preset.kind) {
        case PresetKind::dict_learn:
        case PresetKind::group_dict_learn:
            if (preset.gamma != 0) throw InvalidArgument("gamma applies to the spca preset only");
            c.penalty.l1_weight = preset.lambda.value_or(default_lambda);
            break;
        case PresetKind::spca:
            c.penalty.l1_weight = preset.lambda.value_or(default_lambda);
            if (preset.gamma > 0) c.constraint = ConstraintSet::elastic_net(preset.gamma);
            break;
        case PresetKind::nmf:
            if (preset.lambda.value_or(0.0) != 0.0) throw InvalidArgument("nmf requires lambda = 0 (use nnsc)");
            if (preset.gamma != 0) throw InvalidArgument("gamma applies to the spca preset only");
            c.penalty.nonneg = true;
            c.constraint = ConstraintSet::nonneg_l2_ball();
            break;
        case PresetKind::nnsc:
            if (preset.gamma != 0) throw InvalidArgument("gamma applies to the spca preset only");
            c.penalty.l1_weight = preset.lambda.value_or(default_lambda);
            c.penalty.nonneg = true;
            c.constraint = ConstraintSet::nonneg_l2_ball();
            break;
    }
    return c;
}

void check_preset(PresetKind kind, const LearnerConfig& config) {
    const bool nonneg_codes = config.penalty.nonneg;
    const bool nonneg_atoms = config.constraint.requires_nonneg();
    switch (kind) {
        case PresetKind::nmf:
            if (config.penalty.l1_weight != 0.0) throw InvalidArgument("nmf requires lambda = 0");
            if (!nonneg_codes || !nonneg_atoms) throw InvalidArgument("nmf requires non-negative codes and atoms");
            break;
        case PresetKind::nnsc:
            if (!(config.penalty.l1_weight > 0.0)) throw InvalidArgument("nnsc requires lambda > 0");
            if (!nonneg_codes || !nonneg_atoms) throw InvalidArgument("nnsc requires non-negative codes and atoms");
            break;
        case PresetKind::spca:
            if (config.constraint.kind != ConstraintSet::Kind::elastic_net_ball &&
                config.constraint.kind != ConstraintSet::Kind::l2_ball)
                throw InvalidArgument("spca requires the elastic-net dictionary constraint");
            break;
        case PresetKind::dict_learn:
        case PresetKind::group_dict_learn:
            break;
    }
}

Preprocessing default_preprocessing(PresetKind kind) {
    Preprocessing p;
    p.center = kind == PresetKind::dict_learn || kind == PresetKind::spca || kind == PresetKind::group_dict_learn;
    p.normalize = true;
    return p;
}

double dictionary_density(const MatrixXd& D) {
    if (D.size() == 0) return 0.0;
    return static_cast<double>((D.array() != 0.0).count()) / static_cast<double>(D.size());
}

FactorizeResult factorize(const MatrixXd& X, PresetKind kind, const LearnerConfig& config, const Preprocessing& prep,
                          const MatrixXd* test_set) {
    if (kind == PresetKind::group_dict_learn) throw InvalidArgument("group_dict_learn factorizes groups");
    check_preset(kind, config);
    require_finite(X, "input matrix");
    FactorizeResult out;
    out.data = preprocess(X, prep.center, prep.normalize);
    MatrixXd test;
    if (test_set) test = preprocess(*test_set, prep.center, prep.normalize);
    TrainResult trained = train(out.data, config, test_set ? &test : nullptr);
    out.D = std::move(trained.D);
    out.trace = std::move(trained.trace);
    const StopRule stop = config.coding_stop.value_or(StopRule::at_lambda(config.penalty.l1_weight));
    out.codes = lasso_solve_batch(out.data, out.D.atoms, config.penalty, stop, config.threads);
    out.dictionary_density = dictionary_density(out.D.atoms);
    return out;
}

double group_empirical_objective(const MatrixXd& D, const std::vector<MatrixXd>& groups, double lambda, double tol) {
    if (groups.empty()) throw DataError("group objective needs at least one group");
    double total = 0.0;
    for (const auto& g : groups) {
        const MatrixXd a = group_lasso_solve(g, D, lambda, tol);
        total += 0.5 * (g - D * a).squaredNorm() + lambda * a.rowwise().norm().sum();
    }
    return total / static_cast<double>(groups.size());
}

GroupFactorizeResult group_factorize(const std::vector<MatrixXd>& groups, const LearnerConfig& config,
                                     const Dictionary* D0) {
    config.validate();
    if (groups.empty()) throw DataError("no groups to factorize");
    const Index m = groups.front().rows();
    Index total = 0;
    for (const auto& g : groups) {
        if (g.rows() != m) throw DataError("all groups must share the signal dimension");
        if (g.cols() < 1) throw DataError("empty group");
        require_finite(g, "group");
        total += g.cols();
    }
    MatrixXd flat(m, total);
    Index at = 0;
    for (const auto& g : groups) {
        flat.middleCols(at, g.cols()) = g;
        at += g.cols();
    }

    Dictionary init = D0 ? *D0 : initial_dictionary(flat, config.k, config.constraint, config.rng_seed + 1);
    OnlineLearner learner(config, std::move(init));
    const Index n = static_cast<Index>(groups.size());
    const long per_epoch = (n + config.batch_size - 1) / config.batch_size;
    learner.set_replacement_source(&flat, config.unused_threshold >= 0 ? config.unused_threshold : 2 * per_epoch);
    SampleStream stream(n, config.rng_seed);
    LearnerConfig plan = config;
    plan.mode = LearnerMode::online;
    const long T = planned_iterations(plan, n);
    CheckpointSchedule schedule(config.checkpoint_growth, T);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto record = [&](long t, double wall) {
        MetricsRecord r;
        r.iteration = t;
        r.wall_clock_s = wall;
        r.train_obj = config.evaluate_train ? group_empirical_objective(learner.dictionary().atoms, groups,
                                                                        config.penalty.l1_weight, config.group_tol)
                                            : nan;
        r.test_obj = nan;
        r.surrogate_obj = t > 0 ? learner.surrogate_objective() : nan;
        r.mean_nnz = nan;
        return r;
    };

    GroupFactorizeResult out;
    out.trace.records.push_back(record(0, 0.0));
    double wall = 0.0, nnz_sum = 0.0, delta = 0.0;
    long since = 0;
    std::vector<MatrixXd> batch(static_cast<std::size_t>(config.batch_size));
    for (long t = 1; t <= T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        long epoch = 0;
        for (Index i = 0; i < config.batch_size; ++i) {
            const auto draw = stream.next();
            if (i == 0) epoch = draw.epoch;
            batch[static_cast<std::size_t>(i)] = groups[static_cast<std::size_t>(draw.index)];
        }
        const StepReport report = learner.step_groups(batch, epoch);
        wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        nnz_sum += report.mean_nnz;
        delta = report.dict_delta;
        ++since;
        if (schedule.due(t)) {
            MetricsRecord r = record(t, wall);
            r.mean_nnz = nnz_sum / static_cast<double>(since);
            r.dict_delta_fro = delta;
            out.trace.records.push_back(r);
            nnz_sum = 0.0;
            since = 0;
        }
    }
    out.D = learner.dictionary();
    for (const auto& g : groups)
        out.codes.push_back(group_lasso_solve(g, out.D.atoms, config.penalty.l1_weight, config.group_tol));
    return out;
}

}  // namespace omf
