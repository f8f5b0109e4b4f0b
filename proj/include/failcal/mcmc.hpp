#pragma once

#include "failcal/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace failcal {

// ---------------------------------------------------------------------------
// Standard normal helpers

double norm_cdf(double x);
double norm_quantile(double p);
double norm_logpdf(double x);

// ---------------------------------------------------------------------------
// Priors

enum class PriorKind { Uniform, TruncNormal, ScaledBeta };

/// Bounded marginal prior in natural units. All three kinds are proper
/// densities on [lower, upper].
struct PriorSpec {
    PriorKind kind = PriorKind::Uniform;
    double lower = 0.0;
    double upper = 1.0;
    double mean = 0.0;      ///< TruncNormal location
    double variance = 1.0;  ///< TruncNormal scale^2
    double alpha = 1.0;     ///< ScaledBeta shape
    double beta = 1.0;      ///< ScaledBeta shape

    static PriorSpec uniform(double a, double b);
    static PriorSpec trunc_normal(double mean, double variance, double a, double b);
    static PriorSpec scaled_beta(double alpha, double beta, double a, double b);

    void validate() const;
    double range() const { return upper - lower; }
    /// Strict interior membership.
    bool contains(double x) const { return x > lower && x < upper; }
    /// Log density; -inf outside the open support.
    double log_density(double x) const;
    /// Draw from the prior (used for restarts and tests).
    double sample(Rng &rng) const;
};

// ---------------------------------------------------------------------------
// Probit reparameterization
//
// natural --(linear rescale of [a,b])--> unit --(Phi^{-1})--> real

double to_unit(double natural, const PriorSpec &prior);
double from_unit(double unit, const PriorSpec &prior);
/// Throws InvalidArgument for values on or outside the support boundary.
double to_real(double natural, const PriorSpec &prior);
double from_real(double real, const PriorSpec &prior);
/// log |d natural / d real| = log(b - a) + log phi(real).
double log_jacobian(double real, const PriorSpec &prior);

struct TransformedParam {
    double natural = 0.0;
    double unit = 0.5;
    double real = 0.0;
    PriorSpec prior;

    static TransformedParam from_natural(double natural, const PriorSpec &prior);
    static TransformedParam from_real_value(double real, const PriorSpec &prior);
    double log_jacobian() const { return failcal::log_jacobian(real, prior); }
};

// ---------------------------------------------------------------------------
// Adaptive random-walk proposal (Haario et al. style)

struct AdaptationSettings {
    double epsilon = 1e-6;
    long start = 1000;  ///< points seen before the empirical covariance is used
};

class AdaptiveProposal {
public:
    AdaptiveProposal() = default;
    AdaptiveProposal(Eigen::MatrixXd initial_covariance, AdaptationSettings settings = {});
    static AdaptiveProposal diagonal(Eigen::Index dim, double sd, AdaptationSettings settings = {});

    /// Folds a chain state into the running moments. No-op once frozen.
    void update(const Eigen::VectorXd &point);
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    Eigen::Index dimension() const { return initial_.rows(); }
    long count() const { return count_; }
    double scale() const { return 2.4 * 2.4 / static_cast<double>(dimension()); }
    const Eigen::VectorXd &running_mean() const { return mean_; }
    /// Unbiased sample covariance of the points seen so far.
    Eigen::MatrixXd running_covariance() const;
    /// Covariance currently used to propose.
    const Eigen::MatrixXd &covariance() const { return covariance_; }
    const Eigen::MatrixXd &initial_covariance() const { return initial_; }
    const AdaptationSettings &settings() const { return settings_; }

    Eigen::VectorXd propose(const Eigen::VectorXd &current, Rng &rng) const;

    // Raw state, for checkpoints.
    const Eigen::MatrixXd &scatter() const { return scatter_; }
    void restore(long count, Eigen::VectorXd mean, Eigen::MatrixXd scatter, bool frozen);

private:
    void refresh();

    AdaptationSettings settings_;
    Eigen::MatrixXd initial_;
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd factor_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd scatter_;
    long count_ = 0;
    bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Run settings and chain storage

struct RunSettings {
    long iterations = 0;
    long burnin = 0;
    long thin = 1;
    bool freeze_after_burnin = false;

    void validate() const;
    /// Number of records a full run stores: floor((iterations - burnin) / thin).
    long recorded_length() const;
    /// Whether 1-based iteration `t` is stored.
    bool records(long t) const { return t > burnin && (t - burnin) % thin == 0; }
};

struct AcceptanceCounter {
    long accepted = 0;
    long attempted = 0;

    void add(bool ok) {
        ++attempted;
        if (ok) ++accepted;
    }
    double rate() const { return attempted == 0 ? 0.0 : static_cast<double>(accepted) / attempted; }
};

/// Thinned draws, one row per recorded iteration, plus bookkeeping.
class Chain {
public:
    Chain() = default;
    explicit Chain(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    const std::vector<std::string> &columns() const { return columns_; }
    std::size_t size() const { return columns_.empty() ? 0 : data_.size() / columns_.size(); }
    bool empty() const { return size() == 0; }

    void record(std::span<const double> row);
    std::span<const double> row(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const { return data_[row * columns_.size() + col]; }
    /// Column index by name; throws InvalidArgument when absent.
    std::size_t index(const std::string &name) const;
    bool has(const std::string &name) const;
    std::vector<double> column(const std::string &name) const;
    /// Appends another chain with identical columns.
    void append(const Chain &other);

    std::map<std::string, AcceptanceCounter> acceptance;
    /// Named scalar diagnostics keyed by iteration (e.g. "loocv").
    std::map<std::string, std::vector<std::pair<long, double>>> diagnostics;
    long jitter_events = 0;

private:
    std::vector<std::string> columns_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Summaries

/// Linear interpolation between order statistics (h = (n - 1) p).
double quantile(std::vector<double> values, double p);

struct ColumnSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double median = 0.0;
    double q975 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

ColumnSummary summarize_values(const std::string &name, const std::vector<double> &values);
/// One summary per column; throws InvalidArgument on an empty chain.
std::vector<ColumnSummary> chain_summaries(const Chain &chain);

}  // namespace failcal
