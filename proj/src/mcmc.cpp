#include "failcal/mcmc.hpp"

#include "failcal/error.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace failcal {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640561763986139747363778;
}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw InvalidArgument("norm_quantile: probability outside [0, 1]");
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double norm_logpdf(double x) { return -kLogSqrt2Pi - 0.5 * x * x; }

// ---------------------------------------------------------------------------

PriorSpec PriorSpec::uniform(double a, double b) {
    PriorSpec p;
    p.kind = PriorKind::Uniform;
    p.lower = a;
    p.upper = b;
    p.validate();
    return p;
}

PriorSpec PriorSpec::trunc_normal(double mean, double variance, double a, double b) {
    PriorSpec p;
    p.kind = PriorKind::TruncNormal;
    p.mean = mean;
    p.variance = variance;
    p.lower = a;
    p.upper = b;
    p.validate();
    return p;
}

PriorSpec PriorSpec::scaled_beta(double alpha, double beta, double a, double b) {
    PriorSpec p;
    p.kind = PriorKind::ScaledBeta;
    p.alpha = alpha;
    p.beta = beta;
    p.lower = a;
    p.upper = b;
    p.validate();
    return p;
}

void PriorSpec::validate() const {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
        throw ValidationError("prior bounds must be finite with lower < upper");
    }
    if (kind == PriorKind::TruncNormal && !(variance > 0.0 && std::isfinite(mean))) {
        throw ValidationError("truncated normal prior needs a finite mean and positive variance");
    }
    if (kind == PriorKind::ScaledBeta && !(alpha > 0.0 && beta > 0.0)) {
        throw ValidationError("scaled beta prior needs positive shapes");
    }
}

double PriorSpec::log_density(double x) const {
    if (!contains(x)) return kNegInf;
    switch (kind) {
    case PriorKind::Uniform:
        return -std::log(range());
    case PriorKind::TruncNormal: {
        const double sd = std::sqrt(variance);
        const double mass = norm_cdf((upper - mean) / sd) - norm_cdf((lower - mean) / sd);
        return norm_logpdf((x - mean) / sd) - std::log(sd) - std::log(mass);
    }
    case PriorKind::ScaledBeta: {
        const double u = (x - lower) / range();
        const double lbeta = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
        return (alpha - 1.0) * std::log(u) + (beta - 1.0) * std::log1p(-u) - lbeta - std::log(range());
    }
    }
    return kNegInf;
}

double PriorSpec::sample(Rng &rng) const {
    const double u = rng.uniform();
    switch (kind) {
    case PriorKind::Uniform:
        return lower + range() * u;
    case PriorKind::TruncNormal: {
        const double sd = std::sqrt(variance);
        const double lo = norm_cdf((lower - mean) / sd);
        const double hi = norm_cdf((upper - mean) / sd);
        return std::clamp(mean + sd * norm_quantile(lo + u * (hi - lo)), lower, upper);
    }
    case PriorKind::ScaledBeta:
        return lower + range() * boost::math::ibeta_inv(alpha, beta, u);
    }
    return lower;
}

// ---------------------------------------------------------------------------

double to_unit(double natural, const PriorSpec &prior) { return (natural - prior.lower) / prior.range(); }

double from_unit(double unit, const PriorSpec &prior) { return prior.lower + prior.range() * unit; }

double to_real(double natural, const PriorSpec &prior) {
    const double u = to_unit(natural, prior);
    if (!(u > 0.0 && u < 1.0)) {
        throw InvalidArgument("to_real: value " + std::to_string(natural) + " is not inside the prior support");
    }
    return norm_quantile(u);
}

double from_real(double real, const PriorSpec &prior) { return from_unit(norm_cdf(real), prior); }

double log_jacobian(double real, const PriorSpec &prior) {
    if (!std::isfinite(real)) throw InvalidArgument("log_jacobian: non-finite transformed value");
    return std::log(prior.range()) + norm_logpdf(real);
}

TransformedParam TransformedParam::from_natural(double natural, const PriorSpec &prior) {
    TransformedParam p;
    p.prior = prior;
    p.natural = natural;
    p.unit = to_unit(natural, prior);
    p.real = to_real(natural, prior);
    return p;
}

TransformedParam TransformedParam::from_real_value(double real, const PriorSpec &prior) {
    TransformedParam p;
    p.prior = prior;
    p.real = real;
    p.unit = norm_cdf(real);
    p.natural = from_unit(p.unit, prior);
    return p;
}

// ---------------------------------------------------------------------------

AdaptiveProposal::AdaptiveProposal(Eigen::MatrixXd initial_covariance, AdaptationSettings settings)
    : settings_(settings), initial_(std::move(initial_covariance)) {
    if (initial_.rows() != initial_.cols() || initial_.rows() == 0) {
        throw InvalidArgument("AdaptiveProposal: initial covariance must be square and nonempty");
    }
    if (!(settings_.epsilon > 0.0)) throw InvalidArgument("AdaptiveProposal: epsilon must be positive");
    mean_ = Eigen::VectorXd::Zero(initial_.rows());
    scatter_ = Eigen::MatrixXd::Zero(initial_.rows(), initial_.rows());
    refresh();
}

AdaptiveProposal AdaptiveProposal::diagonal(Eigen::Index dim, double sd, AdaptationSettings settings) {
    return AdaptiveProposal(Eigen::MatrixXd::Identity(dim, dim) * (sd * sd), settings);
}

void AdaptiveProposal::update(const Eigen::VectorXd &point) {
    if (frozen_) return;
    if (point.size() != dimension()) throw InvalidArgument("AdaptiveProposal::update: dimension mismatch");
    ++count_;
    const Eigen::VectorXd delta = point - mean_;
    mean_ += delta / static_cast<double>(count_);
    scatter_.noalias() += delta * (point - mean_).transpose();
    if (count_ >= settings_.start) refresh();
}

Eigen::MatrixXd AdaptiveProposal::running_covariance() const {
    if (count_ < 2) return Eigen::MatrixXd::Zero(dimension(), dimension());
    return scatter_ / static_cast<double>(count_ - 1);
}

void AdaptiveProposal::restore(long count, Eigen::VectorXd mean, Eigen::MatrixXd scatter, bool frozen) {
    if (mean.size() != dimension() || scatter.rows() != dimension() || scatter.cols() != dimension()) {
        throw InvalidArgument("AdaptiveProposal::restore: dimension mismatch");
    }
    count_ = count;
    mean_ = std::move(mean);
    scatter_ = std::move(scatter);
    frozen_ = false;
    refresh();
    frozen_ = frozen;
}

void AdaptiveProposal::refresh() {
    if (count_ >= settings_.start && count_ >= 2) {
        Eigen::MatrixXd c = running_covariance();
        c = 0.5 * (c + c.transpose());
        c.diagonal().array() += settings_.epsilon;
        covariance_ = scale() * c;
    } else {
        covariance_ = initial_;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success) {
        // Only reachable through a non-PSD initial covariance.
        throw NumericalError("AdaptiveProposal: proposal covariance is not positive definite");
    }
    factor_ = llt.matrixL();
}

Eigen::VectorXd AdaptiveProposal::propose(const Eigen::VectorXd &current, Rng &rng) const {
    Eigen::VectorXd z(dimension());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return current + factor_ * z;
}

// ---------------------------------------------------------------------------

void RunSettings::validate() const {
    if (iterations < 0) throw ValidationError("iterations must be nonnegative");
    if (thin < 1) throw ValidationError("thin must be at least 1");
    if (burnin < 0) throw ValidationError("burnin must be nonnegative");
    if (iterations > 0 && burnin >= iterations) throw ValidationError("burnin must be smaller than iterations");
}

long RunSettings::recorded_length() const {
    if (iterations <= burnin) return 0;
    return (iterations - burnin) / thin;
}

void Chain::record(std::span<const double> row) {
    if (row.size() != columns_.size()) throw InvalidArgument("Chain::record: row width does not match columns");
    data_.insert(data_.end(), row.begin(), row.end());
}

std::span<const double> Chain::row(std::size_t i) const {
    return {data_.data() + i * columns_.size(), columns_.size()};
}

std::size_t Chain::index(const std::string &name) const {
    auto it = std::find(columns_.begin(), columns_.end(), name);
    if (it == columns_.end()) throw InvalidArgument("chain has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns_.begin());
}

bool Chain::has(const std::string &name) const {
    return std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

std::vector<double> Chain::column(const std::string &name) const {
    const std::size_t c = index(name);
    std::vector<double> out(size());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = at(r, c);
    return out;
}

void Chain::append(const Chain &other) {
    if (other.columns_ != columns_) throw InvalidArgument("Chain::append: column mismatch");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    for (const auto &[k, v] : other.acceptance) {
        acceptance[k].accepted += v.accepted;
        acceptance[k].attempted += v.attempted;
    }
    for (const auto &[k, v] : other.diagnostics) {
        auto &dst = diagnostics[k];
        dst.insert(dst.end(), v.begin(), v.end());
    }
    jitter_events += other.jitter_events;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw InvalidArgument("quantile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile: probability outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ColumnSummary summarize_values(const std::string &name, const std::vector<double> &values) {
    if (values.empty()) throw InvalidArgument("summarize: empty chain");
    ColumnSummary s;
    s.name = name;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.q025 = quantile(sorted, 0.025);
    s.median = quantile(sorted, 0.5);
    s.q975 = quantile(sorted, 0.975);
    return s;
}

std::vector<ColumnSummary> chain_summaries(const Chain &chain) {
    if (chain.empty()) throw InvalidArgument("chain_summaries: empty chain");
    std::vector<ColumnSummary> out;
    for (const auto &name : chain.columns()) out.push_back(summarize_values(name, chain.column(name)));
    return out;
}

}  // namespace failcal
