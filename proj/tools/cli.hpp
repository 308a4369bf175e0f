#pragma once

#include "omf/presets.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace omf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Everything a train/factorize run depends on. Serialized as flat `key = value` lines;
/// unset optionals are omitted.
struct ExperimentConfig {
    // data source
    std::string source = "synthetic";  ///< synthetic | matrix | images
    std::string data;                  ///< matrix file or image directory
    Index synth_m = 64;
    Index synth_n = 10000;
    Index synth_atoms = 64;
    Index synth_sparsity = 5;
    double synth_noise = 0.01;
    Index patch_edge = 8;
    Index patch_stride = 1;
    Index patch_channels = 1;
    Index patches_per_image = 2000;
    std::optional<bool> center;
    std::optional<bool> normalize;
    double test_fraction = 0.1;

    // model
    PresetKind preset = PresetKind::dict_learn;
    std::optional<double> lambda;
    double lambda2 = 0.0;
    std::string penalty = "l1";  ///< l1 | elastic | group
    Index group_size = 1;
    std::optional<bool> nonneg;
    std::optional<ConstraintSet::Kind> constraint;
    double gamma = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double radius = 1.0;

    // learner
    Index k = 64;
    Index eta = 512;
    double rho = 0.0;
    long forget_activation = -1;
    double t0 = 0.0;
    long iterations = 0;
    double epochs = 1.0;
    bool purge = false;
    LearnerMode mode = LearnerMode::online;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    int update_sweeps = 1;
    int batch_update_sweeps = 1000;
    double batch_update_tol = 1e-8;
    bool replace_unused = true;
    long unused_threshold = -1;
    double ridge = 0.0;
    double checkpoint_growth = 1.5;
    bool evaluate_train = true;

    std::string output = "out";

    void validate() const;
    /// Seed, falling back to the OMF_SEED environment variable, then 0.
    std::uint64_t effective_seed() const;
    /// Learner configuration for m-dimensional data.
    LearnerConfig learner_config(Index m) const;
    Preprocessing preprocessing() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text);
void apply_config_line(ExperimentConfig& config, const std::string& key, const std::string& value);

std::string metrics_csv(const MetricsTrace& trace);
MetricsTrace parse_metrics_csv(const std::string& text);

/// Long-format merge of several traces: header "run,wall_clock_s,test_obj".
std::string compare_csv(const std::vector<std::string>& labels, const std::vector<MetricsTrace>& traces);

/// Loads (or synthesizes) the data matrix described by the config, already preprocessed.
MatrixXd load_experiment_data(const ExperimentConfig& config);

/// Deterministic train/test column split.
void split_columns(const MatrixXd& X, double test_fraction, std::uint64_t seed, MatrixXd& train, MatrixXd& test);

/// Entry point of the `omf` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace omf::cli
