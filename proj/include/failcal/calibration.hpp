#pragma once

#include "failcal/kernels.hpp"
#include "failcal/mcmc.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace failcal {

/// Field observations plus successful simulator runs, inputs in [0, 1] and
/// outputs divided by `output_scale`.
struct CalibrationDataset {
    Eigen::VectorXd y;      ///< field observations, length N
    Design x;               ///< N x Dx
    Eigen::VectorXd eta;    ///< simulator outputs, length M
    Design xstar;           ///< M x Dx
    Design tstar;           ///< M x Dt
    double output_scale = 1.0;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index m() const { return eta.size(); }
    Eigen::Index dx() const { return x.cols(); }
    Eigen::Index dt() const { return tstar.cols(); }
    /// Stacked (y, eta).
    Eigen::VectorXd d() const;
    void validate() const;
};

/// Emulator/discrepancy hyperparameters. Variances are stored; the Metropolis
/// block works on the standard deviations.
struct EtaDeltaParams {
    double mu_eta = 0.0;
    double mu_delta = 0.0;
    double var_eta = 1.0;
    double var_delta = 0.04;
    double var_eps = 0.01;
    Eigen::VectorXd lambda_eta_x;
    Eigen::VectorXd lambda_eta_t;
    Eigen::VectorXd lambda_delta;

    static EtaDeltaParams defaults(Eigen::Index dx, Eigen::Index dt);
    /// Number of Metropolis-updated coordinates: 3 + 2 Dx + Dt.
    Eigen::Index block_size() const { return 3 + lambda_eta_x.size() + lambda_eta_t.size() + lambda_delta.size(); }
};

struct CalibrationPriors {
    PriorSpec sd_eta = PriorSpec::uniform(0.0, 3.0);
    PriorSpec sd_delta = PriorSpec::uniform(0.0, 2.0);
    PriorSpec sd_eps = PriorSpec::uniform(0.0, 1.0);
    PriorSpec lengthscale = PriorSpec::uniform(0.1, 5.0);
};

struct CalibrationModel {
    CorrelationFamily eta_family = CorrelationFamily::SquaredExponential;
    CorrelationFamily delta_family = CorrelationFamily::SquaredExponential;
    CalibrationPriors priors;
    /// Marginal priors of the calibration parameters in natural units. The
    /// prior bounds also define the [0, 1] scaling of the t inputs.
    std::vector<PriorSpec> theta_priors;
    std::vector<std::string> theta_names;

    Eigen::Index dt() const { return static_cast<Eigen::Index>(theta_priors.size()); }
    std::string theta_name(Eigen::Index i) const;
};

/// Calibration parameters, kept in natural units alongside their unit-cube image.
struct Theta {
    Eigen::VectorXd natural;
    Eigen::VectorXd unit;

    static Theta from_natural(const Eigen::VectorXd &natural, const std::vector<PriorSpec> &priors);
    static Theta from_unit(const Eigen::VectorXd &unit, const std::vector<PriorSpec> &priors);
    static Theta from_real(const Eigen::VectorXd &real, const std::vector<PriorSpec> &priors);
    Eigen::VectorXd real(const std::vector<PriorSpec> &priors) const;
    bool inside(const std::vector<PriorSpec> &priors) const;
};

/// Joint covariance of (y, eta) for given theta (unit scale) and hyperparameters.
Eigen::MatrixXd joint_cov(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit,
                          const EtaDeltaParams &p, const CalibrationModel &model);
/// (mu_eta + mu_delta) 1_N stacked on mu_eta 1_M.
Eigen::VectorXd joint_mean(const CalibrationDataset &data, const EtaDeltaParams &p);

struct LikelihoodEval {
    double value = 0.0;
    JitteredCholesky factor;
};

/// Gaussian log-likelihood of d through a Cholesky factorization. Throws
/// NumericalError naming the hyperparameters when factorization fails.
LikelihoodEval evaluate_log_lik(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit,
                                const EtaDeltaParams &p, const CalibrationModel &model);
double log_lik(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p,
               const CalibrationModel &model);
/// Log-likelihood reusing an existing factor of the joint covariance.
double log_lik_with_factor(const CalibrationDataset &data, const EtaDeltaParams &p, const JitteredCholesky &factor);

/// Exact conditional draw of (mu_eta, mu_delta) under a flat prior.
struct MeansDraw {
    double mu_eta = 0.0;
    double mu_delta = 0.0;
    Eigen::Vector2d gls_mean;
    Eigen::Matrix2d gls_cov;
};
MeansDraw gibbs_means(const CalibrationDataset &data, const JitteredCholesky &cov_factor, Rng &rng);
MeansDraw gibbs_means(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p,
                      const CalibrationModel &model, Rng &rng);

/// Metropolis block layout: (sd_eta, sd_delta, sd_eps, lambda_eta_x, lambda_eta_t, lambda_delta) on probit scale.
Eigen::VectorXd etadelta_to_real(const EtaDeltaParams &p, const CalibrationPriors &priors);
EtaDeltaParams etadelta_from_real(const Eigen::VectorXd &real, const EtaDeltaParams &base,
                                  const CalibrationPriors &priors);
/// Sum of log prior densities plus probit log-Jacobians; -inf outside the support.
double etadelta_log_prior(const EtaDeltaParams &p, const CalibrationPriors &priors);
/// Same for theta.
double theta_log_prior(const Theta &theta, const std::vector<PriorSpec> &priors);

/// Accept/reject helper: consumes exactly one uniform.
bool mh_accept(double log_ratio, Rng &rng);

struct EtaDeltaStep {
    EtaDeltaParams params;
    bool accepted = false;
    double loglik = 0.0;
};
EtaDeltaStep metropolis_etadelta(const CalibrationDataset &data, const Theta &theta, const EtaDeltaParams &current,
                                 const EtaDeltaParams &proposed, const CalibrationModel &model, Rng &rng,
                                 const double *current_loglik = nullptr);

using ThetaGate = std::function<bool(const Theta &)>;

struct ThetaStep {
    Theta theta;
    bool accepted = false;
    bool gate_passed = true;
    double loglik = 0.0;
};
/// Metropolis update of theta with a probit-scale random-walk proposal. When
/// `gate` is given, a proposal it rejects is refused before the likelihood
/// is evaluated.
ThetaStep metropolis_theta(const CalibrationDataset &data, const Theta &current, const EtaDeltaParams &params,
                           const CalibrationModel &model, const Theta &proposed, Rng &rng,
                           const double *current_loglik = nullptr, const ThetaGate *gate = nullptr);

// ---------------------------------------------------------------------------

struct CalibrationState {
    Theta theta;
    EtaDeltaParams params;
};

struct ProposalOptions {
    AdaptationSettings adaptation;
    double initial_sd = 0.1;  ///< per-coordinate sd on the probit scale
};

/// One Metropolis-within-Gibbs chain over (theta, alpha_eta_delta).
class CalibrationSampler {
public:
    CalibrationSampler(const CalibrationDataset &data, const CalibrationModel &model, CalibrationState init,
                       AdaptiveProposal etadelta_proposal, AdaptiveProposal theta_proposal);

    void step_means(Rng &rng);
    bool step_etadelta(Rng &rng);
    ThetaStep step_theta(Rng &rng, const ThetaGate *gate = nullptr);
    /// Feeds the current state to both adaptive proposals.
    void adapt();
    void freeze();

    const CalibrationState &state() const { return state_; }
    double loglik() const { return loglik_; }
    long jitter_events() const { return jitter_events_; }
    AdaptiveProposal &etadelta_proposal() { return etadelta_prop_; }
    AdaptiveProposal &theta_proposal() { return theta_prop_; }
    const AdaptiveProposal &etadelta_proposal() const { return etadelta_prop_; }
    const AdaptiveProposal &theta_proposal() const { return theta_prop_; }

    std::vector<std::string> columns() const;
    void append_row(std::vector<double> &row) const;
    /// Replaces the state (checkpoint restore) and refreshes the cached factor.
    void reset_state(CalibrationState state);

private:
    void refresh();

    const CalibrationDataset *data_;
    const CalibrationModel *model_;
    CalibrationState state_;
    AdaptiveProposal etadelta_prop_;
    AdaptiveProposal theta_prop_;
    JitteredCholesky factor_;
    double loglik_ = 0.0;
    long jitter_events_ = 0;
};

CalibrationState default_calibration_state(const CalibrationDataset &data, const CalibrationModel &model);

struct CalibrationRunConfig {
    RunSettings run;
    ProposalOptions proposals;
    /// Optional warm start (state and proposal covariances from a previous fit).
    const CalibrationState *initial_state = nullptr;
    const Eigen::MatrixXd *etadelta_cov = nullptr;
    const Eigen::MatrixXd *theta_cov = nullptr;
};

struct CalibrationResult {
    Chain chain;
    CalibrationState final_state;
    Eigen::MatrixXd etadelta_cov;
    Eigen::MatrixXd theta_cov;
};

/// Standalone calibration ignoring failures. Randomness comes from the
/// calibration substream of (seed, chain_index).
CalibrationResult run_calibration_mcmc(const CalibrationDataset &data, const CalibrationModel &model,
                                       const CalibrationRunConfig &config, std::uint64_t seed,
                                       std::uint64_t chain_index = 0);

}  // namespace failcal
