#include "failcal/latent.hpp"

#include "failcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace failcal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Below this untruncated mass the inverse-CDF route loses precision.
constexpr double kTailMass = 1e-10;

/// N(0,1) restricted to (a, inf).
double lower_truncated_std_normal(double a, Rng &rng) {
    const double mass = norm_cdf(-a);
    if (mass < kTailMass) {
        // Exponential rejection with the optimal rate for the tail.
        const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            const double z = a + rng.exponential(rate);
            const double d = z - rate;
            if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
        }
    }
    const double u = rng.uniform();
    double y;
    if (a >= 0.0) {
        y = -norm_quantile(u * mass);
    } else {
        const double lo = norm_cdf(a);
        y = norm_quantile(lo + u * (1.0 - lo));
    }
    return std::max(y, std::nextafter(a, std::numeric_limits<double>::infinity()));
}

}  // namespace

SliceMode parse_slice_mode(std::string_view name) {
    if (name == "c1" || name == "C1") return SliceMode::C1;
    if (name == "c2" || name == "C2") return SliceMode::C2;
    throw ValidationError("unknown slice mode '" + std::string(name) + "' (expected c1 or c2)");
}

Eigen::Index FailureDataset::successes() const {
    return static_cast<Eigen::Index>(std::count(z.begin(), z.end(), 1));
}

void FailureDataset::canonicalize() {
    std::vector<Eigen::Index> order(z.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    std::stable_partition(order.begin(), order.end(), [this](Eigen::Index i) { return z[std::size_t(i)] == 1; });
    std::vector<int> z2(z.size());
    Design d2(design.rows(), design.cols());
    for (std::size_t k = 0; k < order.size(); ++k) {
        z2[k] = z[std::size_t(order[k])];
        d2.row(Eigen::Index(k)) = design.row(order[k]);
    }
    z = std::move(z2);
    design = std::move(d2);
}

void FailureDataset::validate(bool require_both) const {
    if (design.rows() != size()) throw ValidationError("failure design rows do not match outcome count");
    if (design.cols() != dx + dt) throw ValidationError("failure design columns must be Dx + Dt");
    if (dt < 1) throw ValidationError("failure design needs at least one calibration input");
    for (int v : z) {
        if (v != 0 && v != 1) throw ValidationError("outcome column z must be 0 or 1");
    }
    if (size() > 0 && (design.minCoeff() < 0.0 || design.maxCoeff() > 1.0)) {
        throw ValidationError("failure design entries must lie in [0, 1]");
    }
    if (require_both && (successes() == 0 || failures() == 0)) {
        throw ValidationError("classification needs at least one success and one failure");
    }
    for (Eigen::Index i = 1; i < size(); ++i) {
        if (z[std::size_t(i)] == 1 && z[std::size_t(i - 1)] == 0) {
            throw ValidationError("failure data must be ordered successes first (call canonicalize)");
        }
    }
}

Design LatentModel::project(const Design &full) const {
    if (full.cols() != dx + dt) throw InvalidArgument("latent design must have Dx + Dt columns");
    if (mode == SliceMode::C2) return full;
    return full.rightCols(dt);
}

bool LatentState::consistent_with(const std::vector<int> &z) const {
    if (zeta.size() != static_cast<Eigen::Index>(z.size())) return false;
    for (Eigen::Index i = 0; i < zeta.size(); ++i) {
        const bool positive = zeta[i] > 0.0;
        if (positive != (z[std::size_t(i)] == 1)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

LatentPosterior::LatentPosterior(const FailureDataset &data, const LatentModel &model, const Eigen::VectorXd &lambda,
                                 bool with_precision)
    : lambda_(lambda), family_(model.family), projected_(model.project(data.design)) {
    if (lambda.size() != model.kernel_dim()) throw InvalidArgument("latent lengthscale count does not match model");
    cov_ = cov_matrix(ProductKernel(model.family, lambda, 1.0), projected_);
    factor_ = chol_jitter(cov_);
    if (with_precision) compute_precision();
}

void LatentPosterior::compute_precision() {
    if (has_precision()) return;
    const Eigen::Index n = cov_.rows();
    precision_ = factor_.llt.solve(Eigen::MatrixXd::Identity(n, n));
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double LatentPosterior::log_mvn(const Eigen::VectorXd &zeta, double mu) const {
    const Eigen::VectorXd r = zeta.array() - mu;
    const Eigen::VectorXd a = factor_.llt.matrixL().solve(r);
    const double n = static_cast<double>(r.size());
    return -0.5 * a.squaredNorm() - 0.5 * factor_.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double latent_log_posterior(const LatentState &state, const FailureDataset &data, const LatentModel &model,
                            const LatentPosterior &posterior) {
    if (!state.consistent_with(data.z)) return kNegInf;
    double lp = 0.0;
    for (Eigen::Index i = 0; i < state.lambda.size(); ++i) {
        if (!model.lambda_prior.contains(state.lambda[i])) return kNegInf;
        lp += model.lambda_prior.log_density(state.lambda[i]);
    }
    return posterior.log_mvn(state.zeta, state.mu) + lp;
}

double latent_log_posterior(const LatentState &state, const FailureDataset &data, const LatentModel &model) {
    if (!state.consistent_with(data.z)) return kNegInf;
    for (Eigen::Index i = 0; i < state.lambda.size(); ++i) {
        if (!model.lambda_prior.contains(state.lambda[i])) return kNegInf;
    }
    const LatentPosterior post(data, model, state.lambda, false);
    return latent_log_posterior(state, data, model, post);
}

double trunc_normal_draw(double mean, double var, TruncRegion region, Rng &rng) {
    if (!(var > 0.0) || !std::isfinite(var)) throw InvalidArgument("trunc_normal_draw: variance must be positive");
    if (!std::isfinite(mean)) throw InvalidArgument("trunc_normal_draw: non-finite mean");
    const double sd = std::sqrt(var);
    if (region == TruncRegion::Positive) {
        const double x = mean + sd * lower_truncated_std_normal(-mean / sd, rng);
        return x > 0.0 ? x : std::numeric_limits<double>::denorm_min();
    }
    // zeta <= 0  <=>  -zeta >= 0; the boundary point has probability zero.
    const double x = mean - sd * lower_truncated_std_normal(mean / sd, rng);
    return std::min(x, 0.0);
}

void gibbs_sweep_latent(LatentState &state, const std::vector<int> &z, const Eigen::MatrixXd &precision, Rng &rng) {
    const Eigen::Index n = state.zeta.size();
    if (precision.rows() != n || static_cast<Eigen::Index>(z.size()) != n) {
        throw InvalidArgument("gibbs_sweep_latent: size mismatch");
    }
    Eigen::VectorXd r = state.zeta.array() - state.mu;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double qii = precision(i, i);
        if (!(qii > 0.0)) throw FactorizationError("gibbs_sweep_latent: non-positive precision diagonal", {});
        const double s = precision.col(i).dot(r) - qii * r[i];
        const double cond_mean = state.mu - s / qii;
        const auto region = z[std::size_t(i)] == 1 ? TruncRegion::Positive : TruncRegion::NonPositive;
        state.zeta[i] = trunc_normal_draw(cond_mean, 1.0 / qii, region, rng);
        r[i] = state.zeta[i] - state.mu;
    }
}

double gibbs_mu_zeta(const LatentState &state, const Eigen::MatrixXd &precision, Rng &rng) {
    const double a = precision.sum();
    if (!(a > 0.0)) throw NumericalError("gibbs_mu_zeta: 1'Q1 is not positive");
    const double b = (precision * state.zeta).sum();
    return b / a + rng.normal() / std::sqrt(a);
}

LambdaStep metropolis_lambda_zeta(LatentState &state, const FailureDataset &data, const LatentModel &model,
                                  std::unique_ptr<LatentPosterior> &posterior, const Eigen::VectorXd &proposed,
                                  Rng &rng) {
    const double u = rng.uniform();
    LambdaStep out;
    if (proposed.size() != state.lambda.size()) throw InvalidArgument("metropolis_lambda_zeta: size mismatch");
    double lp_new = 0.0;
    double lp_old = 0.0;
    for (Eigen::Index i = 0; i < proposed.size(); ++i) {
        const PriorSpec &prior = model.lambda_prior;
        if (!prior.contains(proposed[i])) return out;
        lp_new += prior.log_density(proposed[i]) + log_jacobian(to_real(proposed[i], prior), prior);
        lp_old += prior.log_density(state.lambda[i]) + log_jacobian(to_real(state.lambda[i], prior), prior);
    }
    auto candidate = std::make_unique<LatentPosterior>(data, model, proposed, false);
    out.jitter = candidate->factor().jitter;
    const double log_ratio =
        candidate->log_mvn(state.zeta, state.mu) + lp_new - posterior->log_mvn(state.zeta, state.mu) - lp_old;
    if (std::log(u) < log_ratio) {
        candidate->compute_precision();
        posterior = std::move(candidate);
        state.lambda = proposed;
        out.accepted = true;
    }
    return out;
}

PredictiveMoments predictive_moments(const LatentState &state, const LatentPosterior &posterior,
                                     const LatentModel &model, const Design &new_points) {
    const Design p = model.project(new_points);
    const ProductKernel k(posterior.family(), posterior.lambda(), 1.0);
    const Eigen::MatrixXd cross = cov_matrix(k, posterior.projected(), p);
    const Eigen::VectorXd w = posterior.factor().llt.solve((state.zeta.array() - state.mu).matrix());
    PredictiveMoments out;
    out.mean = (cross.transpose() * w).array() + state.mu;
    const Eigen::MatrixXd v = posterior.factor().llt.matrixL().solve(cross);
    out.cov = cov_matrix(k, p);
    out.cov.noalias() -= v.transpose() * v;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

Eigen::VectorXd predictive_draw(const LatentState &state, const LatentPosterior &posterior, const LatentModel &model,
                                const Design &new_points, Rng &rng) {
    const PredictiveMoments m = predictive_moments(state, posterior, model, new_points);
    // Unit process variance sets the jitter scale, so near-zero conditional
    // variances at observed sites still factorize.
    const JitteredCholesky f = chol_jitter(m.cov, 1.0);
    Eigen::VectorXd z(m.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return m.mean + f.llt.matrixL() * z;
}

double loocv_rate(const LatentState &state, const std::vector<int> &z, const Eigen::MatrixXd &precision, Rng &rng) {
    const Eigen::Index n = state.zeta.size();
    if (n == 0) return 1.0;
    const Eigen::VectorXd r = state.zeta.array() - state.mu;
    long correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double qii = precision(i, i);
        const double s = precision.col(i).dot(r) - qii * r[i];
        const double draw = state.mu - s / qii + rng.normal() / std::sqrt(qii);
        const int predicted = draw > 0.0 ? 1 : 0;
        if (predicted == z[std::size_t(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

ClassifierSampler::ClassifierSampler(const FailureDataset &data, const LatentModel &model, LatentState init,
                                     AdaptiveProposal lambda_proposal)
    : data_(&data), model_(&model), state_(std::move(init)), proposal_(std::move(lambda_proposal)) {
    data.validate(true);
    if (model.dx != data.dx || model.dt != data.dt) throw ValidationError("latent model dimensions do not match data");
    if (proposal_.dimension() != model.kernel_dim()) throw InvalidArgument("ClassifierSampler: proposal dimension");
    reset_state(std::move(state_));
}

void ClassifierSampler::reset_state(LatentState state) {
    if (!state.consistent_with(data_->z)) throw ValidationError("initial latent state violates the sign constraint");
    if (state.lambda.size() != model_->kernel_dim()) throw ValidationError("initial latent lengthscale count");
    state_ = std::move(state);
    posterior_ = std::make_unique<LatentPosterior>(*data_, *model_, state_.lambda, true);
    if (posterior_->factor().jitter > 0.0) ++jitter_events_;
}

Eigen::VectorXd ClassifierSampler::lambda_real() const {
    Eigen::VectorXd r(state_.lambda.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = to_real(state_.lambda[i], model_->lambda_prior);
    return r;
}

bool ClassifierSampler::step(Rng &rng) {
    state_.mu = gibbs_mu_zeta(state_, posterior_->precision(), rng);

    const Eigen::VectorXd real = proposal_.propose(lambda_real(), rng);
    Eigen::VectorXd proposed(real.size());
    for (Eigen::Index i = 0; i < real.size(); ++i) proposed[i] = from_real(real[i], model_->lambda_prior);
    const LambdaStep ls = metropolis_lambda_zeta(state_, *data_, *model_, posterior_, proposed, rng);
    if (ls.jitter > 0.0) ++jitter_events_;

    gibbs_sweep_latent(state_, data_->z, posterior_->precision(), rng);
    return ls.accepted;
}

void ClassifierSampler::adapt() { proposal_.update(lambda_real()); }

double ClassifierSampler::loocv(Rng &rng) const { return loocv_rate(state_, data_->z, posterior_->precision(), rng); }

std::vector<std::string> ClassifierSampler::columns(bool with_latent) const {
    std::vector<std::string> cols{"mu_zeta"};
    if (model_->mode == SliceMode::C2) {
        for (Eigen::Index i = 0; i < model_->dx; ++i) cols.push_back("lambda_zeta_x" + std::to_string(i + 1));
    }
    for (Eigen::Index i = 0; i < model_->dt; ++i) cols.push_back("lambda_zeta_t" + std::to_string(i + 1));
    if (with_latent) {
        for (Eigen::Index i = 0; i < data_->size(); ++i) cols.push_back("zeta" + std::to_string(i + 1));
    }
    return cols;
}

void ClassifierSampler::append_row(std::vector<double> &row, bool with_latent) const {
    row.push_back(state_.mu);
    for (Eigen::Index i = 0; i < state_.lambda.size(); ++i) row.push_back(state_.lambda[i]);
    if (with_latent) {
        for (Eigen::Index i = 0; i < state_.zeta.size(); ++i) row.push_back(state_.zeta[i]);
    }
}

LatentState default_latent_state(const FailureDataset &data, const LatentModel &model) {
    LatentState s;
    s.zeta.resize(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) s.zeta[i] = data.z[std::size_t(i)] == 1 ? 1.0 : -1.0;
    s.mu = 0.0;
    s.lambda = Eigen::VectorXd::Ones(model.kernel_dim());
    return s;
}

ClassifierResult run_classifier_mcmc(const FailureDataset &data, const LatentModel &model,
                                     const ClassifierRunConfig &config, std::uint64_t seed,
                                     std::uint64_t chain_index) {
    config.run.validate();
    Rng rng(derive_seed(seed, {stream::classifier, chain_index}));
    // LOOCV draws come from their own stream so the stride never perturbs the chain.
    Rng loocv_rng(derive_seed(seed, {stream::classifier, chain_index, 0x6c6f6f}));

    LatentState init = config.initial_state ? *config.initial_state : default_latent_state(data, model);
    AdaptiveProposal prop = config.lambda_cov
                                ? AdaptiveProposal(*config.lambda_cov, config.adaptation)
                                : AdaptiveProposal::diagonal(model.kernel_dim(), config.initial_sd, config.adaptation);
    ClassifierSampler sampler(data, model, std::move(init), std::move(prop));

    ClassifierResult result;
    result.chain = Chain(sampler.columns(config.record_latent));
    auto &loocv = result.chain.diagnostics["loocv"];
    std::vector<double> row;
    for (long t = 1; t <= config.run.iterations; ++t) {
        result.chain.acceptance["lambda_zeta"].add(sampler.step(rng));
        sampler.adapt();
        if (config.run.freeze_after_burnin && t == config.run.burnin) sampler.freeze();
        if (config.loocv_stride > 0 && t > config.run.burnin && t % config.loocv_stride == 0) {
            loocv.emplace_back(t, sampler.loocv(loocv_rng));
        }
        if (config.run.records(t)) {
            row.clear();
            sampler.append_row(row, config.record_latent);
            result.chain.record(row);
        }
    }
    result.chain.jitter_events = sampler.jitter_events();
    result.final_state = sampler.state();
    result.lambda_cov = sampler.proposal().covariance();
    return result;
}

std::vector<LatentState> latent_states_from_chain(const Chain &chain) {
    const auto &cols = chain.columns();
    const std::size_t mu_col = chain.index("mu_zeta");
    std::vector<std::size_t> lam_cols;
    std::vector<std::size_t> zeta_cols;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].rfind("lambda_zeta", 0) == 0) lam_cols.push_back(c);
        if (cols[c].rfind("zeta", 0) == 0 && cols[c].size() > 4 && std::isdigit(static_cast<unsigned char>(cols[c][4]))) {
            zeta_cols.push_back(c);
        }
    }
    if (zeta_cols.empty()) throw ValidationError("classifier chain was recorded without latent values");
    std::vector<LatentState> out;
    out.reserve(chain.size());
    for (std::size_t r = 0; r < chain.size(); ++r) {
        LatentState s;
        s.mu = chain.at(r, mu_col);
        s.lambda.resize(Eigen::Index(lam_cols.size()));
        for (std::size_t k = 0; k < lam_cols.size(); ++k) s.lambda[Eigen::Index(k)] = chain.at(r, lam_cols[k]);
        s.zeta.resize(Eigen::Index(zeta_cols.size()));
        for (std::size_t k = 0; k < zeta_cols.size(); ++k) s.zeta[Eigen::Index(k)] = chain.at(r, zeta_cols[k]);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace failcal
