#pragma once

#include "failcal/calibration.hpp"
#include "failcal/latent.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace failcal {

/// How a latent draw along the theta slice is turned into an admissibility decision.
struct AdmissibilityConfig {
    SliceMode mode = SliceMode::C2;
    Design xtilde;            ///< K x Dx points over the variable-input space (C2 only)
    Eigen::VectorXd weights;  ///< nonnegative, sums to 1
    double p_tol = 0.0;

    /// Uniform weights over `xtilde` (or the single C1 point).
    static AdmissibilityConfig uniform(SliceMode mode, Design xtilde, double p_tol = 0.0);
    /// Slice length: rows of xtilde under C2, 1 under C1.
    Eigen::Index slice_size() const { return mode == SliceMode::C2 ? xtilde.rows() : 1; }
    void validate(Eigen::Index dx) const;
};

/// True when the weight on non-positive entries of `draw` is at most p_tol.
bool admissible(const Eigen::VectorXd &draw, const AdmissibilityConfig &cfg);

/// Rows [X~, 1 theta'] (C2) or the single point (0, theta) (C1), full (x, t) width.
Design slice_design(const AdmissibilityConfig &cfg, const Eigen::VectorXd &theta_unit, Eigen::Index dx);

/// One stochastic admissibility check: a fresh predictive draw on the slice,
/// then `admissible`. Consumes no randomness when p_tol >= 1.
bool gate_check(const Eigen::VectorXd &theta_unit, const LatentState &state, const LatentPosterior &posterior,
                const LatentModel &model, const AdmissibilityConfig &cfg, Rng &rng);

// ---------------------------------------------------------------------------

/// Raw adaptive-proposal state, enough to resume adaptation exactly.
struct ProposalSnapshot {
    Eigen::MatrixXd initial;
    long count = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd scatter;
    bool frozen = false;

    static ProposalSnapshot of(const AdaptiveProposal &p);
    AdaptiveProposal rebuild(AdaptationSettings settings) const;
};

/// Everything needed to continue a coupled chain after iteration `iteration`.
struct CoupledCheckpoint {
    long iteration = 0;
    CalibrationState calibration;
    LatentState latent;
    std::string rng_calibration;
    std::string rng_classifier;
    std::string rng_gate;
    std::string rng_loocv;
    ProposalSnapshot etadelta;
    ProposalSnapshot theta;
    ProposalSnapshot lambda;
};

struct CoupledRunConfig {
    RunSettings run;
    ProposalOptions proposals;  ///< calibration and lambda_zeta proposals
    long loocv_stride = 0;
    bool record_latent = false;
    /// Stop cleanly after this iteration and return a checkpoint (0 = run to the end).
    long stop_after = 0;

    // Warm starts from standalone fits.
    const CalibrationState *calibration_state = nullptr;
    const Eigen::MatrixXd *etadelta_cov = nullptr;
    const Eigen::MatrixXd *theta_cov = nullptr;
    const LatentState *latent_state = nullptr;
    const Eigen::MatrixXd *lambda_cov = nullptr;

    /// Continue from a checkpoint; supersedes the warm-start fields.
    const CoupledCheckpoint *resume = nullptr;
};

struct CoupledResult {
    /// Calibration columns, classifier columns, then "admissible".
    Chain chain;
    CalibrationState calibration_final;
    LatentState latent_final;
    Eigen::MatrixXd etadelta_cov;
    Eigen::MatrixXd theta_cov;
    Eigen::MatrixXd lambda_cov;
    /// Last completed iteration.
    long iterations_done = 0;
    bool completed = false;
    /// Set when the run stopped early (stop_after or a numerical failure).
    std::optional<CoupledCheckpoint> checkpoint;
    std::string failure;
};

/// Classifier update, emulator/discrepancy update, gated theta update, per
/// iteration. A NumericalError ends the run early with a checkpoint instead of
/// propagating.
CoupledResult run_coupled_mcmc(const CalibrationDataset &cal, const CalibrationModel &cal_model,
                               const FailureDataset &fail, const LatentModel &lat_model,
                               const AdmissibilityConfig &adm, const CoupledRunConfig &config, std::uint64_t seed,
                               std::uint64_t chain_index = 0);

// ---------------------------------------------------------------------------

/// Binary latent-draw x theta-draw admissibility matrix.
struct BMatrix {
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> entries;

    Eigen::Index rows() const { return entries.rows(); }
    Eigen::Index cols() const { return entries.cols(); }
    /// Per-latent-draw admissible fraction.
    Eigen::VectorXd row_means() const;
    /// Pointwise admissibility probability of each theta draw.
    Eigen::VectorXd col_means() const;
};

/// Entry (i, j) = gate decision for theta_j under latent draw i, each cell with
/// its own substream so thread count does not change the result.
BMatrix build_b_matrix(const std::vector<Eigen::VectorXd> &theta_units, const std::vector<LatentState> &latent_draws,
                       const FailureDataset &fail, const LatentModel &lat_model, const AdmissibilityConfig &adm,
                       std::uint64_t seed, unsigned threads = 1);

/// Fraction of draws satisfying `inside`.
double pi_hat(const std::vector<Eigen::VectorXd> &draws, const std::function<bool(const Eigen::VectorXd &)> &inside);
/// Fraction of draws inside the open box (lower, upper).
double pi_hat(const std::vector<Eigen::VectorXd> &draws, const Eigen::VectorXd &lower, const Eigen::VectorXd &upper);

struct AdmissibilitySummary {
    double low_cut = 0.1;
    double high_cut = 0.9;
    double always_fail = 0.0;     ///< fraction of columns with mean <= low_cut
    double always_succeed = 0.0;  ///< fraction of columns with mean >= high_cut
    double pi_min = 0.0;          ///< smallest row mean
    double pi_max = 0.0;          ///< largest row mean
    double pi_mean = 0.0;
    Eigen::VectorXd row_means;
    Eigen::VectorXd col_means;
};

AdmissibilitySummary admissibility_summary(const BMatrix &b, double low_cut = 0.1, double high_cut = 0.9);

}  // namespace failcal
