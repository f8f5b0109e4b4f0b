#pragma once

#include "failcal/kernels.hpp"
#include "failcal/mcmc.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace failcal {

/// Which inputs the latent kernel sees.
enum class SliceMode {
    C1,  ///< calibration inputs only; admissibility is a point check
    C2,  ///< variable and calibration inputs; admissibility needs a slice design
};

SliceMode parse_slice_mode(std::string_view name);

/// Success/failure outcomes over the augmented design [X*_0, T*_0].
struct FailureDataset {
    std::vector<int> z;  ///< 1 = success, 0 = failure
    Design design;       ///< M_tot x (Dx + Dt), columns x then t
    Eigen::Index dx = 0;
    Eigen::Index dt = 0;

    Eigen::Index size() const { return static_cast<Eigen::Index>(z.size()); }
    Eigen::Index successes() const;
    Eigen::Index failures() const { return size() - successes(); }
    /// Stable reorder so all successes precede all failures.
    void canonicalize();
    /// Checks shapes and labels; `require_both` demands at least one of each outcome.
    void validate(bool require_both = true) const;
};

struct LatentModel {
    CorrelationFamily family = CorrelationFamily::Matern32;
    SliceMode mode = SliceMode::C2;
    Eigen::Index dx = 0;
    Eigen::Index dt = 0;
    PriorSpec lambda_prior = PriorSpec::uniform(0.1, 5.0);

    /// Number of lengthscales: Dx + Dt under C2, Dt under C1.
    Eigen::Index kernel_dim() const { return mode == SliceMode::C2 ? dx + dt : dt; }
    /// Columns of a full (x, t) design that the kernel uses.
    Design project(const Design &full) const;
};

struct LatentState {
    Eigen::VectorXd zeta;
    double mu = 0.0;
    Eigen::VectorXd lambda;

    /// zeta_m > 0 exactly when z_m = 1.
    bool consistent_with(const std::vector<int> &z) const;
};

/// Sigma*, its factor and its inverse for one lengthscale vector.
class LatentPosterior {
public:
    LatentPosterior(const FailureDataset &data, const LatentModel &model, const Eigen::VectorXd &lambda,
                    bool with_precision = true);

    /// Forms Sigma*^{-1} from the factor if it was skipped at construction.
    void compute_precision();
    bool has_precision() const { return precision_.size() > 0; }

    const Eigen::MatrixXd &covariance() const { return cov_; }
    const JitteredCholesky &factor() const { return factor_; }
    const Eigen::MatrixXd &precision() const { return precision_; }
    const Design &projected() const { return projected_; }
    const Eigen::VectorXd &lambda() const { return lambda_; }
    CorrelationFamily family() const { return family_; }
    /// Log N(zeta | mu 1, Sigma*).
    double log_mvn(const Eigen::VectorXd &zeta, double mu) const;

private:
    Eigen::VectorXd lambda_;
    CorrelationFamily family_;
    Design projected_;
    Eigen::MatrixXd cov_;
    JitteredCholesky factor_;
    Eigen::MatrixXd precision_;
};

/// Log posterior of (zeta, mu, lambda) up to a constant; -inf on a sign
/// violation or lambda outside its prior support.
double latent_log_posterior(const LatentState &state, const FailureDataset &data, const LatentModel &model);
double latent_log_posterior(const LatentState &state, const FailureDataset &data, const LatentModel &model,
                            const LatentPosterior &posterior);

enum class TruncRegion {
    NonPositive,  ///< (-inf, 0], failure
    Positive,     ///< (0, inf), success
};

/// Exact draw from N(mean, var) restricted to a half line.
double trunc_normal_draw(double mean, double var, TruncRegion region, Rng &rng);

/// One sequential Gibbs sweep over zeta in index order using the precision matrix.
void gibbs_sweep_latent(LatentState &state, const std::vector<int> &z, const Eigen::MatrixXd &precision, Rng &rng);
/// Conjugate draw of mu under a flat prior.
double gibbs_mu_zeta(const LatentState &state, const Eigen::MatrixXd &precision, Rng &rng);

struct LambdaStep {
    bool accepted = false;
    double jitter = 0.0;
};
/// Metropolis update of lambda; `proposed` is on the natural scale. On
/// acceptance `state.lambda` and `posterior` are replaced.
LambdaStep metropolis_lambda_zeta(LatentState &state, const FailureDataset &data, const LatentModel &model,
                                  std::unique_ptr<LatentPosterior> &posterior, const Eigen::VectorXd &proposed,
                                  Rng &rng);

struct PredictiveMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};
/// Conditional mean and covariance of the latent field at new points (full (x, t) rows).
PredictiveMoments predictive_moments(const LatentState &state, const LatentPosterior &posterior,
                                     const LatentModel &model, const Design &new_points);
/// Draw of the latent field at new points. Binary labels are zeta > 0.
Eigen::VectorXd predictive_draw(const LatentState &state, const LatentPosterior &posterior, const LatentModel &model,
                                const Design &new_points, Rng &rng);

/// Fraction of held-out labels matched by an untruncated conditional draw
/// given the remaining latent values.
double loocv_rate(const LatentState &state, const std::vector<int> &z, const Eigen::MatrixXd &precision, Rng &rng);

// ---------------------------------------------------------------------------

/// One chain of the latent classifier (data-augmentation Gibbs + Metropolis for lambda).
class ClassifierSampler {
public:
    ClassifierSampler(const FailureDataset &data, const LatentModel &model, LatentState init,
                      AdaptiveProposal lambda_proposal);

    /// mu Gibbs step, lambda Metropolis step, zeta sweep. Returns the lambda acceptance.
    bool step(Rng &rng);
    void adapt();
    void freeze() { proposal_.freeze(); }
    double loocv(Rng &rng) const;

    const LatentState &state() const { return state_; }
    const LatentPosterior &posterior() const { return *posterior_; }
    AdaptiveProposal &proposal() { return proposal_; }
    const AdaptiveProposal &proposal() const { return proposal_; }
    long jitter_events() const { return jitter_events_; }
    void reset_state(LatentState state);

    std::vector<std::string> columns(bool with_latent) const;
    void append_row(std::vector<double> &row, bool with_latent) const;

private:
    Eigen::VectorXd lambda_real() const;

    const FailureDataset *data_;
    const LatentModel *model_;
    LatentState state_;
    AdaptiveProposal proposal_;
    std::unique_ptr<LatentPosterior> posterior_;
    long jitter_events_ = 0;
};

/// Starting point: zeta = +/-1 by label, mu = 0, lambda = 1.
LatentState default_latent_state(const FailureDataset &data, const LatentModel &model);

struct ClassifierRunConfig {
    RunSettings run;
    long loocv_stride = 200;  ///< 0 disables LOOCV
    bool record_latent = true;
    AdaptationSettings adaptation;
    double initial_sd = 0.1;
    const LatentState *initial_state = nullptr;
    const Eigen::MatrixXd *lambda_cov = nullptr;
};

struct ClassifierResult {
    Chain chain;  ///< columns mu_zeta, lambda_zeta*, [zeta*]; diagnostics["loocv"]
    LatentState final_state;
    Eigen::MatrixXd lambda_cov;
};

/// Algorithm: mu Gibbs, lambda Metropolis, zeta sweep, LOOCV every `loocv_stride`
/// iterations after burn-in. Randomness from the classifier substream of (seed, chain_index).
ClassifierResult run_classifier_mcmc(const FailureDataset &data, const LatentModel &model,
                                     const ClassifierRunConfig &config, std::uint64_t seed,
                                     std::uint64_t chain_index = 0);

/// Latent states recovered from a classifier chain recorded with zeta columns.
std::vector<LatentState> latent_states_from_chain(const Chain &chain);

}  // namespace failcal
