#pragma once

#include "omf/data_io.hpp"
#include "omf/dictionary.hpp"
#include "omf/sparse_coding.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace omf {

enum class LearnerMode { online, batch };

std::string to_string(LearnerMode mode);
LearnerMode parse_learner_mode(const std::string& name);

struct LearnerConfig {
    Index k = 64;
    PenaltyConfig penalty;               ///< penalty.l1_weight is lambda
    std::optional<StopRule> coding_stop;  ///< budget/residual coding instead of lambda
    Index batch_size = 512;               ///< eta
    double forget_exponent = 0.0;         ///< rho in beta_t = (1 - 1/t)^rho
    long forget_activation = -1;          ///< first t using beta_t; -1 = once the second epoch starts
    double warmup = 0.0;                  ///< t0: A_0 = t0 I, B_0 = t0 D_0
    long iterations = 0;                  ///< T; 0 derives it from `epochs`
    double epochs = 1.0;
    bool purge_fixed_dataset = false;
    ConstraintSet constraint;
    LearnerMode mode = LearnerMode::online;
    std::uint64_t rng_seed = 0;
    int update_sweeps = 1;  ///< online dictionary update sweeps per step
    int batch_update_sweeps = 1000;
    double batch_update_tol = 1e-8;
    bool replace_unused = true;
    long unused_threshold = -1;  ///< consecutive unused steps; -1 = two epochs
    double ridge = 0.0;          ///< kappa: adds (kappa/2)||D||_F^2 to the surrogate
    double group_tol = 1e-10;
    int threads = 1;
    double checkpoint_growth = 1.5;
    bool evaluate_train = true;
    bool keep_history = false;

    void validate() const;
    friend bool operator==(const LearnerConfig&, const LearnerConfig&);
};

struct MetricsRecord {
    long iteration = 0;
    double wall_clock_s = 0.0;
    double train_obj = 0.0;
    double test_obj = 0.0;
    double surrogate_obj = 0.0;
    double mean_nnz = 0.0;
    double dict_delta_fro = 0.0;
};

struct MetricsTrace {
    std::vector<MetricsRecord> records;
};

/// Codes and signals of one step, kept when `keep_history` is set.
struct HistoryEntry {
    long t = 0;
    long epoch = 0;
    double beta = 1.0;
    MatrixXd X;
    MatrixXd codes;
    double weight = 1.0;  ///< multiplier of this step's contribution (1/eta)
};

struct LearnerState {
    Dictionary D;
    SurrogateStats stats;
    SurrogateStats purge_stats;
    double weight = 0.0;  ///< W_t, sum of beta-scaled step weights (t when rho = 0)
    double purge_weight = 0.0;
    double constant = 0.0;  ///< accumulated 1/2||x||^2 + penalty(alpha)
    double purge_constant = 0.0;
    long t = 0;
    long epoch = 0;
    std::vector<long> unused_for;
    Rng rng;
    std::vector<HistoryEntry> history;
};

struct StepReport {
    MatrixXd codes;  ///< k x eta (k x total columns for group steps)
    double beta = 1.0;
    double mean_nnz = 0.0;
    double dict_delta = 0.0;  ///< ||D_t - D_{t-1}||_F
    std::vector<Index> replaced;
    bool swapped_purge = false;
};

/// Mean over columns of min_a 1/2||x - D a||^2 + penalty(a).
double empirical_objective(const MatrixXd& D, const MatrixXd& X, const PenaltyConfig& penalty, int threads = 1);
inline double empirical_objective(const Dictionary& D, const MatrixXd& X, const PenaltyConfig& penalty,
                                  int threads = 1) {
    return empirical_objective(D.atoms, X, penalty, threads);
}

class OnlineLearner {
   public:
    /// Validates the config, checks feasibility of D0 and sets A_0 = t0 I, B_0 = t0 D_0.
    OnlineLearner(LearnerConfig config, Dictionary D0);

    const LearnerConfig& config() const { return config_; }
    const LearnerState& state() const { return state_; }
    const Dictionary& dictionary() const { return state_.D; }

    /// Source of replacement atoms and the resolved unused threshold.
    void set_replacement_source(const MatrixXd* samples, long threshold);

    /// One iteration of the online loop on a mini-batch (columns of `batch`) drawn in
    /// `epoch`.
    StepReport step(const MatrixXd& batch, long epoch = 0);

    /// Same with simultaneous sparse coding: each matrix is one group.
    StepReport step_groups(const std::vector<MatrixXd>& groups, long epoch = 0);

    /// f_hat_t(D) = (1/2 Tr(D^T D A_t) - Tr(D^T B_t) + C_t) / W_t (+ ridge term).
    double surrogate_objective(const MatrixXd& D) const;
    double surrogate_objective() const { return surrogate_objective(state_.D.atoms); }

   private:
    double begin_step(long epoch, bool& swapped);
    void accumulate(const MatrixXd& X, const MatrixXd& codes, double scale, double constant, double beta);
    StepReport finish_step(MatrixXd codes, double beta, bool swapped, const MatrixXd* X_for_history, double scale);

    LearnerConfig config_;
    LearnerState state_;
    const MatrixXd* replacement_source_ = nullptr;
    long unused_threshold_ = -1;
};

/// Dictionary initialized from k distinct random columns of X (scaled to unit norm and
/// projected onto the constraint); random Gaussian atoms stand in for zero columns.
Dictionary initial_dictionary(const MatrixXd& X, Index k, const ConstraintSet& constraint, std::uint64_t rng_seed);

struct TrainResult {
    Dictionary D;
    MetricsTrace trace;
    long iterations = 0;
};

using StepHook = std::function<void(const OnlineLearner&, const StepReport&)>;

/// Online mode cycles a permuted stream of the columns of X; batch mode recodes all
/// of X each iteration and rebuilds the statistics before a converged dictionary
/// update. Checkpoints follow a geometric schedule.
TrainResult train(const MatrixXd& X, const LearnerConfig& config, const MatrixXd* test_set = nullptr,
                  const Dictionary* D0 = nullptr, const StepHook& on_step = {});

/// Iterations the online loop runs for X under `config`.
long planned_iterations(const LearnerConfig& config, Index n);

/// True when iteration t is a checkpoint of a T-iteration run.
class CheckpointSchedule {
   public:
    CheckpointSchedule(double growth, long last) : growth_(growth), last_(last) {}
    bool due(long t);

   private:
    double growth_;
    long last_;
    long next_ = 1;
};

}  // namespace omf
