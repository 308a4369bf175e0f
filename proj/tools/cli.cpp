#include "cli.hpp"

#include "omf/data_io.hpp"
#include "omf/projections.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

namespace omf::cli {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
        throw InvalidArgument("'" + key + "' expects a number, got '" + v + "'");
    return d;
}

long long to_integer(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long long i = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) throw InvalidArgument("'" + key + "' expects an integer, got '" + v + "'");
    return i;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
    char* end = nullptr;
    if (v.empty() || v[0] == '-') throw InvalidArgument("'" + key + "' expects a non-negative integer");
    const unsigned long long i = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size()) throw InvalidArgument("'" + key + "' expects a non-negative integer, got '" + v + "'");
    return i;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidArgument("'" + key + "' expects true or false, got '" + v + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
    const char* key;
    std::function<std::optional<std::string>(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define OMF_STRING(name)                                                          \
    Field{#name, [](const ExperimentConfig& c) -> std::optional<std::string> { return c.name; }, \
          [](ExperimentConfig& c, const std::string& v) { c.name = v; }}
#define OMF_INT(name)                                                                            \
    Field{#name, [](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.name); }, \
          [](ExperimentConfig& c, const std::string& v) {                                       \
              c.name = static_cast<decltype(c.name)>(to_integer(#name, v));                      \
          }}
#define OMF_DOUBLE(name)                                                                  \
    Field{#name, [](const ExperimentConfig& c) -> std::optional<std::string> { return fmt(c.name); }, \
          [](ExperimentConfig& c, const std::string& v) { c.name = to_double(#name, v); }}
#define OMF_BOOL(name)                                                                        \
    Field{#name, [](const ExperimentConfig& c) -> std::optional<std::string> { return bool_str(c.name); }, \
          [](ExperimentConfig& c, const std::string& v) { c.name = to_bool(#name, v); }}
#define OMF_OPT_BOOL(name)                                                          \
    Field{#name,                                                                    \
          [](const ExperimentConfig& c) -> std::optional<std::string> {             \
              if (!c.name) return std::nullopt;                                     \
              return bool_str(*c.name);                                             \
          },                                                                        \
          [](ExperimentConfig& c, const std::string& v) { c.name = to_bool(#name, v); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        OMF_STRING(source),
        OMF_STRING(data),
        OMF_INT(synth_m),
        OMF_INT(synth_n),
        OMF_INT(synth_atoms),
        OMF_INT(synth_sparsity),
        OMF_DOUBLE(synth_noise),
        OMF_INT(patch_edge),
        OMF_INT(patch_stride),
        OMF_INT(patch_channels),
        OMF_INT(patches_per_image),
        OMF_OPT_BOOL(center),
        OMF_OPT_BOOL(normalize),
        OMF_DOUBLE(test_fraction),
        Field{"preset", [](const ExperimentConfig& c) -> std::optional<std::string> { return to_string(c.preset); },
              [](ExperimentConfig& c, const std::string& v) { c.preset = parse_preset_kind(v); }},
        Field{"lambda",
              [](const ExperimentConfig& c) -> std::optional<std::string> {
                  if (!c.lambda) return std::nullopt;
                  return fmt(*c.lambda);
              },
              [](ExperimentConfig& c, const std::string& v) { c.lambda = to_double("lambda", v); }},
        OMF_DOUBLE(lambda2),
        OMF_STRING(penalty),
        OMF_INT(group_size),
        OMF_OPT_BOOL(nonneg),
        Field{"constraint",
              [](const ExperimentConfig& c) -> std::optional<std::string> {
                  if (!c.constraint) return std::nullopt;
                  return to_string(*c.constraint);
              },
              [](ExperimentConfig& c, const std::string& v) { c.constraint = parse_constraint_kind(v); }},
        OMF_DOUBLE(gamma),
        OMF_DOUBLE(gamma1),
        OMF_DOUBLE(gamma2),
        OMF_DOUBLE(radius),
        OMF_INT(k),
        OMF_INT(eta),
        OMF_DOUBLE(rho),
        OMF_INT(forget_activation),
        OMF_DOUBLE(t0),
        OMF_INT(iterations),
        OMF_DOUBLE(epochs),
        OMF_BOOL(purge),
        Field{"mode", [](const ExperimentConfig& c) -> std::optional<std::string> { return to_string(c.mode); },
              [](ExperimentConfig& c, const std::string& v) { c.mode = parse_learner_mode(v); }},
        Field{"seed",
              [](const ExperimentConfig& c) -> std::optional<std::string> {
                  if (!c.seed) return std::nullopt;
                  return std::to_string(*c.seed);
              },
              [](ExperimentConfig& c, const std::string& v) { c.seed = to_unsigned("seed", v); }},
        OMF_INT(threads),
        OMF_INT(update_sweeps),
        OMF_INT(batch_update_sweeps),
        OMF_DOUBLE(batch_update_tol),
        OMF_BOOL(replace_unused),
        OMF_INT(unused_threshold),
        OMF_DOUBLE(ridge),
        OMF_DOUBLE(checkpoint_growth),
        OMF_BOOL(evaluate_train),
        OMF_STRING(output),
    };
    return table;
}

#undef OMF_STRING
#undef OMF_INT
#undef OMF_DOUBLE
#undef OMF_BOOL
#undef OMF_OPT_BOOL

}  // namespace

void apply_config_line(ExperimentConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (key == f.key) {
            f.set(config, value);
            return;
        }
    throw InvalidArgument("unknown config key '" + key + "'");
}

std::string serialize_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& f : fields())
        if (const auto v = f.get(config)) out += std::string(f.key) + " = " + *v + "\n";
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(number) + ": expected key = value");
        apply_config_line(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

void ExperimentConfig::validate() const {
    if (source != "synthetic" && source != "matrix" && source != "images")
        throw InvalidArgument("source must be synthetic, matrix or images");
    if (source != "synthetic" && data.empty()) throw InvalidArgument("source '" + source + "' needs a data path");
    if (!(test_fraction > 0 && test_fraction < 1)) throw InvalidArgument("test fraction must lie in (0, 1)");
    if (penalty != "l1" && penalty != "elastic" && penalty != "group")
        throw InvalidArgument("penalty must be l1, elastic or group");
    if (group_size < 1) throw InvalidArgument("group size must be at least 1");
    if (synth_m < 1 || synth_n < 2 || synth_atoms < 1 || synth_sparsity < 0 || synth_sparsity > synth_atoms)
        throw InvalidArgument("invalid synthetic data shape");
    if (output.empty()) throw InvalidArgument("output directory must not be empty");
}

std::uint64_t ExperimentConfig::effective_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("OMF_SEED"); env && *env) return to_unsigned("OMF_SEED", env);
    return 0;
}

LearnerConfig ExperimentConfig::learner_config(Index m) const {
    validate();
    Preset p;
    p.kind = preset;
    p.lambda = lambda;
    p.gamma = preset == PresetKind::spca && !constraint ? gamma : 0.0;
    LearnerConfig c = make_preset(p, m, k);
    if (penalty == "elastic")
        c.penalty.l2_weight = lambda2;
    else if (lambda2 != 0)
        throw InvalidArgument("lambda2 requires the elastic penalty");
    if (nonneg) c.penalty.nonneg = *nonneg;
    if (constraint) {
        ConstraintSet cs;
        cs.kind = *constraint;
        if (cs.kind == ConstraintSet::Kind::elastic_net_ball) {
            cs.gamma = gamma;
            cs.nonneg = preset == PresetKind::nmf || preset == PresetKind::nnsc;
        }
        if (cs.kind == ConstraintSet::Kind::fused_lasso_ball) {
            cs.gamma1 = gamma1;
            cs.gamma2 = gamma2;
        }
        c.constraint = cs;
    }
    c.constraint.radius = radius;
    c.batch_size = eta;
    c.forget_exponent = rho;
    c.forget_activation = forget_activation;
    c.warmup = t0;
    c.iterations = iterations;
    c.epochs = epochs;
    c.purge_fixed_dataset = purge;
    c.mode = mode;
    c.rng_seed = effective_seed();
    c.threads = threads;
    c.update_sweeps = update_sweeps;
    c.batch_update_sweeps = batch_update_sweeps;
    c.batch_update_tol = batch_update_tol;
    c.replace_unused = replace_unused;
    c.unused_threshold = unused_threshold;
    c.ridge = ridge;
    c.checkpoint_growth = checkpoint_growth;
    c.evaluate_train = evaluate_train;
    c.validate();
    check_preset(preset, c);
    return c;
}

Preprocessing ExperimentConfig::preprocessing() const {
    Preprocessing p = default_preprocessing(preset);
    if (center) p.center = *center;
    if (normalize) p.normalize = *normalize;
    return p;
}

// --- metrics CSV ---------------------------------------------------------------

namespace {

constexpr const char* kMetricsHeader = "iter,wall_clock_s,train_obj,test_obj,surrogate_obj,mean_nnz,dict_delta_fro";
constexpr const char* kCompareHeader = "run,wall_clock_s,test_obj";

std::string fmt_metric(double v) { return std::isnan(v) ? "nan" : fmt(v); }

std::string fmt_seconds(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double csv_number(const std::string& field, int line) {
    if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size())
        throw DataError("metrics CSV line " + std::to_string(line) + ": malformed number '" + field + "'");
    return v;
}

}  // namespace

std::string metrics_csv(const MetricsTrace& trace) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.iteration) + "," + fmt_seconds(r.wall_clock_s) + "," + fmt_metric(r.train_obj) + "," +
               fmt_metric(r.test_obj) + "," + fmt_metric(r.surrogate_obj) + "," + fmt_metric(r.mean_nnz) + "," +
               fmt_metric(r.dict_delta_fro) + "\n";
    }
    return out;
}

MetricsTrace parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kMetricsHeader) throw DataError("metrics CSV: missing or wrong header");
    MetricsTrace trace;
    int number = 1;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 7) throw DataError("metrics CSV line " + std::to_string(number) + ": expected 7 fields");
        MetricsRecord r;
        char* end = nullptr;
        r.iteration = std::strtol(f[0].c_str(), &end, 10);
        if (f[0].empty() || end != f[0].c_str() + f[0].size())
            throw DataError("metrics CSV line " + std::to_string(number) + ": malformed iteration");
        r.wall_clock_s = csv_number(f[1], number);
        r.train_obj = csv_number(f[2], number);
        r.test_obj = csv_number(f[3], number);
        r.surrogate_obj = csv_number(f[4], number);
        r.mean_nnz = csv_number(f[5], number);
        r.dict_delta_fro = csv_number(f[6], number);
        if (!trace.records.empty() && r.iteration <= trace.records.back().iteration)
            throw DataError("metrics CSV line " + std::to_string(number) + ": iterations must increase");
        trace.records.push_back(r);
    }
    return trace;
}

std::string compare_csv(const std::vector<std::string>& labels, const std::vector<MetricsTrace>& traces) {
    if (labels.size() != traces.size()) throw InvalidArgument("one label per trace required");
    std::string out = std::string(kCompareHeader) + "\n";
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (labels[i].find_first_of(",\n\"") != std::string::npos)
            throw InvalidArgument("run label '" + labels[i] + "' contains a CSV delimiter");
        for (const auto& r : traces[i].records)
            out += labels[i] + "," + fmt_seconds(r.wall_clock_s) + "," + fmt_metric(r.test_obj) + "\n";
    }
    return out;
}

// --- data ------------------------------------------------------------------------

namespace {

MatrixXd load_raw(const ExperimentConfig& config) {
    const std::uint64_t seed = config.effective_seed();
    if (config.source == "synthetic")
        return synth_planted(config.synth_m, config.synth_atoms, config.synth_n, config.synth_sparsity,
                             config.synth_noise, seed)
            .X;
    if (config.source == "matrix") return load_matrix(config.data);
    PatchSpec spec;
    spec.edge = config.patch_edge;
    spec.stride = config.patch_stride;
    spec.channels = config.patch_channels;
    return extract_patches_from_directory(config.data, spec, config.patches_per_image, seed);
}

}  // namespace

MatrixXd load_experiment_data(const ExperimentConfig& config) {
    const Preprocessing p = config.preprocessing();
    return preprocess(load_raw(config), p.center, p.normalize);
}

void split_columns(const MatrixXd& X, double test_fraction, std::uint64_t seed, MatrixXd& train, MatrixXd& test) {
    const Index n = X.cols();
    if (n < 2) throw DataError("need at least two samples to split into train and test sets");
    Index n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<Index>(n_test, 1, n - 1);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    Rng rng(seed ^ 0x5851f42d4c957f2dULL);
    std::shuffle(order.begin(), order.end(), rng);
    train.resize(X.rows(), n - n_test);
    test.resize(X.rows(), n_test);
    for (Index i = 0; i < n - n_test; ++i) train.col(i) = X.col(order[static_cast<std::size_t>(i)]);
    for (Index i = 0; i < n_test; ++i) test.col(i) = X.col(order[static_cast<std::size_t>(n - n_test + i)]);
}

// --- subcommands -------------------------------------------------------------------

namespace {

struct Overrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::optional<std::string>>> values;
    std::vector<std::string> sets;
    bool purge = false;
};

void add_experiment_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "key = value experiment file");
    static const std::vector<std::pair<const char*, const char*>> flags = {
        {"--k", "k"},
        {"--lambda", "lambda"},
        {"--lambda2", "lambda2"},
        {"--eta", "eta"},
        {"--rho", "rho"},
        {"--t0", "t0"},
        {"--epochs", "epochs"},
        {"--iterations", "iterations"},
        {"--constraint", "constraint"},
        {"--gamma", "gamma"},
        {"--gamma1", "gamma1"},
        {"--gamma2", "gamma2"},
        {"--radius", "radius"},
        {"--penalty", "penalty"},
        {"--group-size", "group_size"},
        {"--mode", "mode"},
        {"--seed", "seed"},
        {"--threads", "threads"},
        {"--preset", "preset"},
        {"--source", "source"},
        {"--data", "data"},
        {"--output", "output"},
        {"--test-fraction", "test_fraction"},
        {"--forget-activation", "forget_activation"},
        {"--checkpoint-growth", "checkpoint_growth"},
        {"--center", "center"},
        {"--normalize", "normalize"},
        {"--nonneg", "nonneg"},
    };
    o.values.reserve(flags.size());
    for (const auto& [flag, key] : flags) {
        o.values.emplace_back(key, std::nullopt);
        cmd->add_option(flag, o.values.back().second, std::string("sets '") + key + "'");
    }
    cmd->add_flag("--purge", o.purge, "purge statistics older than two epochs");
    cmd->add_option("--set", o.sets, "arbitrary key=value override (repeatable)");
}

ExperimentConfig resolve_config(const Overrides& o) {
    ExperimentConfig config = o.config_path.empty() ? ExperimentConfig{} : parse_config(read_file(o.config_path));
    for (const auto& [key, value] : o.values)
        if (value) apply_config_line(config, key, *value);
    if (o.purge) config.purge = true;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--set expects key=value");
        apply_config_line(config, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (!config.seed && std::getenv("OMF_SEED")) config.seed = config.effective_seed();
    config.validate();
    return config;
}

std::vector<MatrixXd> make_groups(const MatrixXd& X, Index q) {
    std::vector<MatrixXd> groups;
    for (Index at = 0; at < X.cols(); at += q) groups.push_back(X.middleCols(at, std::min(q, X.cols() - at)));
    return groups;
}

std::filesystem::path prepare_output(const ExperimentConfig& config) {
    const std::filesystem::path dir(config.output);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
    write_file(dir / "config.txt", serialize_config(config));
    return dir;
}

double last_finite(const MetricsTrace& trace, double MetricsRecord::*field) {
    for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it)
        if (!std::isnan((*it).*field)) return (*it).*field;
    return std::numeric_limits<double>::quiet_NaN();
}

int cmd_train(const Overrides& o, std::ostream& out) {
    const ExperimentConfig config = resolve_config(o);
    const MatrixXd X = load_experiment_data(config);
    MatrixXd train_set, test_set;
    split_columns(X, config.test_fraction, config.effective_seed(), train_set, test_set);
    const LearnerConfig lc = config.learner_config(X.rows());
    Dictionary D;
    MetricsTrace trace;
    if (config.penalty == "group" || config.preset == PresetKind::group_dict_learn) {
        auto r = group_factorize(make_groups(train_set, config.group_size), lc);
        D = std::move(r.D);
        trace = std::move(r.trace);
    } else {
        auto r = train(train_set, lc, &test_set);
        D = std::move(r.D);
        trace = std::move(r.trace);
    }
    const auto dir = prepare_output(config);
    save_matrix(D.atoms, dir / "dictionary.bin");
    write_file(dir / "metrics.csv", metrics_csv(trace));
    out << "iterations=" << trace.records.back().iteration << " test_obj=" << fmt(last_finite(trace, &MetricsRecord::test_obj))
        << " mean_nnz=" << fmt(last_finite(trace, &MetricsRecord::mean_nnz)) << " output=" << dir.string() << "\n";
    return kOk;
}

int cmd_factorize(const Overrides& o, std::ostream& out) {
    const ExperimentConfig config = resolve_config(o);
    if (config.preset == PresetKind::group_dict_learn || config.penalty == "group")
        throw InvalidArgument("factorize does not take group presets; use train");
    const MatrixXd X = load_raw(config);
    MatrixXd train_set, test_set;
    split_columns(X, config.test_fraction, config.effective_seed(), train_set, test_set);
    const LearnerConfig lc = config.learner_config(X.rows());
    const FactorizeResult r = factorize(train_set, config.preset, lc, config.preprocessing(), &test_set);
    const auto dir = prepare_output(config);
    save_matrix(r.D.atoms, dir / "dictionary.bin");
    save_matrix(r.codes, dir / "codes.bin");
    write_file(dir / "metrics.csv", metrics_csv(r.trace));
    const double residual = (r.data - r.D.atoms * r.codes).squaredNorm() / static_cast<double>(r.data.cols());
    out << "preset=" << to_string(config.preset) << " density=" << fmt(r.dictionary_density)
        << " mean_residual=" << fmt(residual) << " test_obj=" << fmt(last_finite(r.trace, &MetricsRecord::test_obj))
        << " output=" << dir.string() << "\n";
    return kOk;
}

struct LassoArgs {
    std::string signal, dict, output;
    std::optional<double> lambda, budget, epsilon;
    double lambda2 = 0.0;
    bool nonneg = false, text = false;
};

int cmd_lasso(const LassoArgs& a, std::ostream& out) {
    const int rules = (a.lambda ? 1 : 0) + (a.budget ? 1 : 0) + (a.epsilon ? 1 : 0);
    if (rules != 1) throw InvalidArgument("give exactly one of --lambda, --budget, --epsilon");
    const MatrixXd X = load_matrix(a.signal);
    const MatrixXd D = load_matrix(a.dict);
    if (X.rows() != D.rows())
        throw DataError("signal dimension " + std::to_string(X.rows()) + " does not match dictionary rows " +
                        std::to_string(D.rows()));
    PenaltyConfig penalty;
    penalty.l1_weight = a.lambda.value_or(0.0);
    penalty.l2_weight = a.lambda2;
    penalty.nonneg = a.nonneg;
    penalty.validate(D.cols());
    StopRule stop = StopRule::at_lambda(penalty.l1_weight);
    if (a.budget) stop = StopRule::l1_budget(*a.budget);
    if (a.epsilon) stop = StopRule::residual(*a.epsilon);
    if (!(stop.value >= 0)) throw InvalidArgument("stopping value must be non-negative");

    MatrixXd codes = MatrixXd::Zero(D.cols(), X.cols());
    double worst = 0.0;
    Index nnz = 0;
    for (Index i = 0; i < X.cols(); ++i) {
        const auto path = lars_lasso_path(X.col(i), D, penalty, stop);
        codes.col(i) = path.endpoint.dense();
        PenaltyConfig at_end = penalty;
        at_end.l1_weight = path.end_lambda;
        const double residual = kkt_residual(X.col(i), D, codes.col(i), at_end);
        worst = std::max(worst, residual);
        nnz += path.endpoint.nnz();
        out << "column=" << i << " nnz=" << path.endpoint.nnz() << " lambda=" << fmt(path.end_lambda)
            << " kkt_residual=" << fmt(residual) << "\n";
    }
    if (!a.output.empty())
        save_matrix(codes, a.output, a.text ? MatrixEncoding::text : MatrixEncoding::binary);
    out << "nnz=" << nnz << " max_kkt_residual=" << fmt(worst) << "\n";
    return kOk;
}

struct ProjectArgs {
    std::string input, output, constraint = "l2";
    double gamma = 0, gamma1 = 0, gamma2 = 0, tau = 1;
    bool nonneg = false, text = false;
    std::optional<std::uint64_t> seed;
};

int cmd_project(const ProjectArgs& a, std::ostream& out) {
    const auto kind = parse_constraint_kind(a.constraint);
    if (!(a.tau > 0) || !std::isfinite(a.tau)) throw InvalidArgument("--tau must be positive");
    if (!(a.gamma >= 0) || !(a.gamma1 >= 0) || !(a.gamma2 >= 0)) throw InvalidArgument("weights must be non-negative");
    const bool uses_gamma = kind == ConstraintSet::Kind::elastic_net_ball;
    const bool uses_fused = kind == ConstraintSet::Kind::fused_lasso_ball;
    if ((!uses_gamma && a.gamma != 0) || (!uses_fused && (a.gamma1 != 0 || a.gamma2 != 0)))
        throw InvalidArgument("weight flags do not apply to constraint '" + a.constraint + "'");
    if (a.nonneg && kind != ConstraintSet::Kind::elastic_net_ball)
        throw InvalidArgument("--nonneg applies to the elastic constraint (use --constraint nonneg otherwise)");

    MatrixXd M = load_matrix(a.input);
    const bool row_vector = M.rows() == 1 && M.cols() > 1;
    if (row_vector) M.transposeInPlace();
    std::uint64_t seed = 0;
    if (a.seed)
        seed = *a.seed;
    else if (const char* env = std::getenv("OMF_SEED"); env && *env)
        seed = to_unsigned("OMF_SEED", env);
    Rng rng(seed);
    MatrixXd P(M.rows(), M.cols());
    for (Index j = 0; j < M.cols(); ++j) {
        const VectorXd b = M.col(j);
        VectorXd u;
        double value = 0.0;
        switch (kind) {
            case ConstraintSet::Kind::l2_ball:
                u = project_l2_ball(b, a.tau);
                value = u.norm();
                break;
            case ConstraintSet::Kind::nonneg_l2_ball:
                u = project_nonneg_l2_ball(b, a.tau);
                value = u.norm();
                break;
            case ConstraintSet::Kind::elastic_net_ball:
                u = project_elastic_net(b, a.gamma, a.tau, a.nonneg, rng);
                value = elastic_net_value(u, a.gamma);
                break;
            case ConstraintSet::Kind::fused_lasso_ball:
                u = project_fused_lasso_set(b, a.gamma1, a.gamma2, a.tau);
                value = fused_ball_value(u, a.gamma1, a.gamma2);
                break;
        }
        P.col(j) = u;
        out << "column=" << j << " constraint_value=" << fmt(value) << "\n";
    }
    if (row_vector) P.transposeInPlace();
    if (!a.output.empty()) save_matrix(P, a.output, a.text ? MatrixEncoding::text : MatrixEncoding::binary);
    return kOk;
}

struct CompareArgs {
    std::vector<std::string> inputs, labels;
    std::string output;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    if (a.inputs.empty()) throw InvalidArgument("compare needs at least one metrics file");
    if (!a.labels.empty() && a.labels.size() != a.inputs.size())
        throw InvalidArgument("give one --label per input or none");
    std::vector<MetricsTrace> traces;
    for (const auto& path : a.inputs) {
        try {
            traces.push_back(parse_metrics_csv(read_file(path)));
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
    }
    const std::string merged = compare_csv(a.labels.empty() ? a.inputs : a.labels, traces);
    if (a.output.empty())
        out << merged;
    else
        write_file(a.output, merged);
    return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Online dictionary learning and sparse matrix factorization", "omf"};
    app.require_subcommand(1);

    Overrides train_o, factorize_o;
    auto* train_cmd = app.add_subcommand("train", "learn a dictionary; writes dictionary.bin and metrics.csv");
    add_experiment_options(train_cmd, train_o);
    auto* factorize_cmd = app.add_subcommand("factorize", "run a factorization preset and a final coding pass");
    add_experiment_options(factorize_cmd, factorize_o);

    LassoArgs lasso_a;
    auto* lasso_cmd = app.add_subcommand("lasso", "sparse-code signals against a dictionary");
    lasso_cmd->add_option("--signal,-x", lasso_a.signal, "signal matrix file (one signal per column)")->required();
    lasso_cmd->add_option("--dict,-D", lasso_a.dict, "dictionary matrix file")->required();
    lasso_cmd->add_option("--lambda", lasso_a.lambda, "penalty level");
    lasso_cmd->add_option("--budget", lasso_a.budget, "l1 budget T");
    lasso_cmd->add_option("--epsilon", lasso_a.epsilon, "squared residual level");
    lasso_cmd->add_option("--lambda2", lasso_a.lambda2, "elastic-net ridge weight");
    lasso_cmd->add_flag("--nonneg", lasso_a.nonneg, "non-negative coefficients");
    lasso_cmd->add_option("--output,-o", lasso_a.output, "code matrix file");
    lasso_cmd->add_flag("--text", lasso_a.text, "write the text encoding");

    ProjectArgs project_a;
    auto* project_cmd = app.add_subcommand("project", "project vectors onto a constraint set");
    project_cmd->add_option("--input,-i", project_a.input, "vector or matrix file")->required();
    project_cmd->add_option("--constraint", project_a.constraint, "l2, nonneg, elastic or fused");
    project_cmd->add_option("--gamma", project_a.gamma, "elastic: ||u||_1 + gamma/2 ||u||^2 <= tau");
    project_cmd->add_option("--gamma1", project_a.gamma1, "fused: l1 weight");
    project_cmd->add_option("--gamma2", project_a.gamma2, "fused: total-variation weight");
    project_cmd->add_option("--tau", project_a.tau, "radius");
    project_cmd->add_flag("--nonneg", project_a.nonneg, "elastic: non-negative output");
    project_cmd->add_option("--seed", project_a.seed, "pivot seed");
    project_cmd->add_option("--output,-o", project_a.output, "output file");
    project_cmd->add_flag("--text", project_a.text, "write the text encoding");

    CompareArgs compare_a;
    auto* compare_cmd = app.add_subcommand("compare", "merge metrics.csv files into long format");
    compare_cmd->add_option("inputs", compare_a.inputs, "metrics.csv files")->required();
    compare_cmd->add_option("--label", compare_a.labels, "run label per input (repeatable)");
    compare_cmd->add_option("--output,-o", compare_a.output, "merged CSV (stdout when absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "omf: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_o, out);
        if (*factorize_cmd) return cmd_factorize(factorize_o, out);
        if (*lasso_cmd) return cmd_lasso(lasso_a, out);
        if (*project_cmd) return cmd_project(project_a, out);
        if (*compare_cmd) return cmd_compare(compare_a, out);
    } catch (const InvalidArgument& e) {
        err << "omf: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericalError& e) {
        err << "omf: numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const DataError& e) {
        err << "omf: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        err << "omf: " << e.what() << "\n";
        return kData;
    }
    err << "omf: no subcommand\n";
    return kUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("omf");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace omf::cli
