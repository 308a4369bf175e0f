#pragma once

#include "omf/online_learner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace omf {

enum class PresetKind { dict_learn, nmf, nnsc, spca, group_dict_learn };

std::string to_string(PresetKind kind);
PresetKind parse_preset_kind(const std::string& name);

struct Preset {
    PresetKind kind = PresetKind::dict_learn;
    std::optional<double> lambda{};  ///< unset: 1.2/sqrt(m), or 0 for nmf
    double gamma = 0.0;            ///< elastic-net weight of the spca dictionary ball
};

/// Learner configuration of a preset:
///   dict_learn, group_dict_learn: l1 codes, l2-ball atoms
///   nmf:  lambda = 0, non-negative codes and atoms
///   nnsc: lambda > 0, non-negative codes and atoms (lambda = 0 gives nmf)
///   spca: l1 codes, atoms in {||d||^2 + gamma ||d||_1 <= 1} (gamma = 0 gives dict_learn)
LearnerConfig make_preset(const Preset& preset, Index m, Index k);

/// Rejects configurations that break the preset's invariants.
void check_preset(PresetKind kind, const LearnerConfig& config);

struct Preprocessing {
    bool center = false;
    bool normalize = true;
};

/// Unit-norm inputs for every preset; centering only where sign is free.
Preprocessing default_preprocessing(PresetKind kind);

struct FactorizeResult {
    Dictionary D;
    MatrixXd codes;  ///< k x n, one coding pass at the learned dictionary
    MetricsTrace trace;
    MatrixXd data;                    ///< the preprocessed input that was factorized
    double dictionary_density = 1.0;  ///< fraction of nonzero dictionary entries
};

FactorizeResult factorize(const MatrixXd& X, PresetKind kind, const LearnerConfig& config,
                          const Preprocessing& prep, const MatrixXd* test_set = nullptr);

struct GroupFactorizeResult {
    Dictionary D;
    MetricsTrace trace;
    std::vector<MatrixXd> codes;  ///< final k x q codes of every group
};

/// Online learning where each draw is a group coded jointly with the l1,2 penalty; the
/// mini-batch holds `config.batch_size` groups.
GroupFactorizeResult group_factorize(const std::vector<MatrixXd>& groups, const LearnerConfig& config,
                                     const Dictionary* D0 = nullptr);

/// Mean over groups of min_A 1/2||X - D A||_F^2 + lambda ||A||_{1,2}.
double group_empirical_objective(const MatrixXd& D, const std::vector<MatrixXd>& groups, double lambda,
                                 double tol = 1e-10);

double dictionary_density(const MatrixXd& D);

}  // namespace omf
