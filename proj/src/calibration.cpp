#include "failcal/calibration.hpp"

#include "failcal/error.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace failcal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd concat(const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

Design field_design(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit) {
    Design f(data.n(), data.dx() + data.dt());
    f.leftCols(data.dx()) = data.x;
    f.rightCols(data.dt()) = theta_unit.transpose().replicate(data.n(), 1);
    return f;
}

Design simulator_design(const CalibrationDataset &data) {
    Design s(data.m(), data.dx() + data.dt());
    s.leftCols(data.dx()) = data.xstar;
    s.rightCols(data.dt()) = data.tstar;
    return s;
}

std::string describe(const EtaDeltaParams &p) {
    std::ostringstream os;
    os << "var_eta=" << p.var_eta << " var_delta=" << p.var_delta << " var_eps=" << p.var_eps
       << " lambda_eta_x=[" << p.lambda_eta_x.transpose() << "] lambda_eta_t=[" << p.lambda_eta_t.transpose()
       << "] lambda_delta=[" << p.lambda_delta.transpose() << "]";
    return os.str();
}

void check_dims(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p) {
    if (theta_unit.size() != data.dt()) throw InvalidArgument("theta dimension does not match the dataset");
    if (p.lambda_eta_x.size() != data.dx() || p.lambda_delta.size() != data.dx() ||
        p.lambda_eta_t.size() != data.dt()) {
        throw InvalidArgument("lengthscale vectors do not match the dataset dimensions");
    }
}

}  // namespace

Eigen::VectorXd CalibrationDataset::d() const {
    Eigen::VectorXd out(n() + m());
    out << y, eta;
    return out;
}

void CalibrationDataset::validate() const {
    if (n() < 1 || m() < 1) throw ValidationError("calibration data needs at least one field and one simulator row");
    if (x.rows() != n()) throw ValidationError("field design rows do not match y");
    if (xstar.rows() != m() || tstar.rows() != m()) throw ValidationError("simulator design rows do not match eta");
    if (xstar.cols() != x.cols()) throw ValidationError("field and simulator x dimensions differ");
    if (dt() < 1) throw ValidationError("at least one calibration input is required");
    auto in_cube = [](const Design &a) { return a.size() == 0 || (a.minCoeff() >= 0.0 && a.maxCoeff() <= 1.0); };
    if (!in_cube(x) || !in_cube(xstar) || !in_cube(tstar)) throw ValidationError("design entries must lie in [0, 1]");
    if (!y.allFinite() || !eta.allFinite()) throw ValidationError("outputs must be finite");
    if (!(output_scale > 0.0)) throw ValidationError("output scale must be positive");
}

EtaDeltaParams EtaDeltaParams::defaults(Eigen::Index dx, Eigen::Index dt) {
    EtaDeltaParams p;
    p.lambda_eta_x = Eigen::VectorXd::Ones(dx);
    p.lambda_eta_t = Eigen::VectorXd::Ones(dt);
    p.lambda_delta = Eigen::VectorXd::Ones(dx);
    return p;
}

std::string CalibrationModel::theta_name(Eigen::Index i) const {
    if (i < static_cast<Eigen::Index>(theta_names.size())) return theta_names[static_cast<std::size_t>(i)];
    return "t" + std::to_string(i + 1);
}

// ---------------------------------------------------------------------------

Theta Theta::from_natural(const Eigen::VectorXd &natural, const std::vector<PriorSpec> &priors) {
    if (natural.size() != static_cast<Eigen::Index>(priors.size())) throw InvalidArgument("theta/prior size mismatch");
    Theta t;
    t.natural = natural;
    t.unit.resize(natural.size());
    for (Eigen::Index i = 0; i < natural.size(); ++i) t.unit[i] = to_unit(natural[i], priors[std::size_t(i)]);
    return t;
}

Theta Theta::from_unit(const Eigen::VectorXd &unit, const std::vector<PriorSpec> &priors) {
    if (unit.size() != static_cast<Eigen::Index>(priors.size())) throw InvalidArgument("theta/prior size mismatch");
    Theta t;
    t.unit = unit;
    t.natural.resize(unit.size());
    for (Eigen::Index i = 0; i < unit.size(); ++i) t.natural[i] = failcal::from_unit(unit[i], priors[std::size_t(i)]);
    return t;
}

Theta Theta::from_real(const Eigen::VectorXd &real, const std::vector<PriorSpec> &priors) {
    Eigen::VectorXd unit(real.size());
    for (Eigen::Index i = 0; i < real.size(); ++i) unit[i] = norm_cdf(real[i]);
    return from_unit(unit, priors);
}

Eigen::VectorXd Theta::real(const std::vector<PriorSpec> &priors) const {
    Eigen::VectorXd r(natural.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = to_real(natural[i], priors[std::size_t(i)]);
    return r;
}

bool Theta::inside(const std::vector<PriorSpec> &priors) const {
    for (Eigen::Index i = 0; i < natural.size(); ++i) {
        if (!priors[std::size_t(i)].contains(natural[i])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd joint_cov(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p,
                          const CalibrationModel &model) {
    check_dims(data, theta_unit, p);
    const ProductKernel k_eta(model.eta_family, concat(p.lambda_eta_x, p.lambda_eta_t), p.var_eta);
    const ProductKernel k_delta(model.delta_family, p.lambda_delta, p.var_delta);
    const Design f = field_design(data, theta_unit);
    const Design s = simulator_design(data);
    const Eigen::Index n = data.n();
    const Eigen::Index m = data.m();

    Eigen::MatrixXd c(n + m, n + m);
    c.topLeftCorner(n, n) = cov_matrix(k_eta, f) + cov_matrix(k_delta, data.x);
    c.topLeftCorner(n, n).diagonal().array() += p.var_eps;
    const Eigen::MatrixXd cross = cov_matrix(k_eta, f, s);
    c.topRightCorner(n, m) = cross;
    c.bottomLeftCorner(m, n) = cross.transpose();
    c.bottomRightCorner(m, m) = cov_matrix(k_eta, s);
    return c;
}

Eigen::VectorXd joint_mean(const CalibrationDataset &data, const EtaDeltaParams &p) {
    Eigen::VectorXd mean(data.n() + data.m());
    mean.head(data.n()).setConstant(p.mu_eta + p.mu_delta);
    mean.tail(data.m()).setConstant(p.mu_eta);
    return mean;
}

double log_lik_with_factor(const CalibrationDataset &data, const EtaDeltaParams &p, const JitteredCholesky &factor) {
    const Eigen::VectorXd r = data.d() - joint_mean(data, p);
    const Eigen::VectorXd a = factor.llt.matrixL().solve(r);
    const double n = static_cast<double>(r.size());
    return -0.5 * a.squaredNorm() - 0.5 * factor.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

LikelihoodEval evaluate_log_lik(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit,
                                const EtaDeltaParams &p, const CalibrationModel &model) {
    LikelihoodEval out;
    try {
        out.factor = chol_jitter(joint_cov(data, theta_unit, p, model));
    } catch (const FactorizationError &e) {
        throw FactorizationError(std::string(e.what()) + " at " + describe(p), e.attempted());
    }
    out.value = log_lik_with_factor(data, p, out.factor);
    if (!std::isfinite(out.value)) throw NumericalError("non-finite log-likelihood at " + describe(p));
    return out;
}

double log_lik(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p,
               const CalibrationModel &model) {
    return evaluate_log_lik(data, theta_unit, p, model).value;
}

MeansDraw gibbs_means(const CalibrationDataset &data, const JitteredCholesky &cov_factor, Rng &rng) {
    const Eigen::Index n = data.n();
    const Eigen::Index total = n + data.m();
    if (cov_factor.size() != total) throw InvalidArgument("gibbs_means: factor size does not match data");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(total, 2);
    h.col(0).setOnes();
    h.col(1).head(n).setOnes();

    const Eigen::MatrixXd cinv_h = cov_factor.llt.solve(h);
    const Eigen::Matrix2d precision = h.transpose() * cinv_h;
    const Eigen::Vector2d rhs = cinv_h.transpose() * data.d();
    Eigen::LLT<Eigen::Matrix2d> pl(precision);
    if (pl.info() != Eigen::Success || !(precision.determinant() > 0.0)) {
        throw NumericalError("gibbs_means: singular normal equations for (mu_eta, mu_delta)");
    }
    MeansDraw out;
    out.gls_mean = pl.solve(rhs);
    out.gls_cov = pl.solve(Eigen::Matrix2d::Identity());
    // Draw mean + U^{-1} z where precision = U^T U, so cov(U^{-1} z) = precision^{-1}.
    const Eigen::Vector2d z(rng.normal(), rng.normal());
    const Eigen::Vector2d draw = out.gls_mean + pl.matrixU().solve(z);
    out.mu_eta = draw[0];
    out.mu_delta = draw[1];
    return out;
}

MeansDraw gibbs_means(const CalibrationDataset &data, const Eigen::VectorXd &theta_unit, const EtaDeltaParams &p,
                      const CalibrationModel &model, Rng &rng) {
    return gibbs_means(data, chol_jitter(joint_cov(data, theta_unit, p, model)), rng);
}

// ---------------------------------------------------------------------------

Eigen::VectorXd etadelta_to_real(const EtaDeltaParams &p, const CalibrationPriors &priors) {
    Eigen::VectorXd r(p.block_size());
    Eigen::Index k = 0;
    r[k++] = to_real(std::sqrt(p.var_eta), priors.sd_eta);
    r[k++] = to_real(std::sqrt(p.var_delta), priors.sd_delta);
    r[k++] = to_real(std::sqrt(p.var_eps), priors.sd_eps);
    for (const Eigen::VectorXd *v : {&p.lambda_eta_x, &p.lambda_eta_t, &p.lambda_delta}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) r[k++] = to_real((*v)[i], priors.lengthscale);
    }
    return r;
}

EtaDeltaParams etadelta_from_real(const Eigen::VectorXd &real, const EtaDeltaParams &base,
                                  const CalibrationPriors &priors) {
    if (real.size() != base.block_size()) throw InvalidArgument("etadelta_from_real: size mismatch");
    EtaDeltaParams p = base;
    Eigen::Index k = 0;
    const double sd_eta = from_real(real[k++], priors.sd_eta);
    const double sd_delta = from_real(real[k++], priors.sd_delta);
    const double sd_eps = from_real(real[k++], priors.sd_eps);
    p.var_eta = sd_eta * sd_eta;
    p.var_delta = sd_delta * sd_delta;
    p.var_eps = sd_eps * sd_eps;
    for (Eigen::VectorXd *v : {&p.lambda_eta_x, &p.lambda_eta_t, &p.lambda_delta}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = from_real(real[k++], priors.lengthscale);
    }
    return p;
}

double etadelta_log_prior(const EtaDeltaParams &p, const CalibrationPriors &priors) {
    double lp = 0.0;
    auto add = [&lp](double natural, const PriorSpec &prior) {
        if (!(natural >= 0.0) || !prior.contains(natural)) {
            lp = kNegInf;
            return;
        }
        if (!std::isfinite(lp)) return;
        lp += prior.log_density(natural) + log_jacobian(to_real(natural, prior), prior);
    };
    add(std::sqrt(p.var_eta), priors.sd_eta);
    add(std::sqrt(p.var_delta), priors.sd_delta);
    add(std::sqrt(p.var_eps), priors.sd_eps);
    for (const Eigen::VectorXd *v : {&p.lambda_eta_x, &p.lambda_eta_t, &p.lambda_delta}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) add((*v)[i], priors.lengthscale);
    }
    return lp;
}

double theta_log_prior(const Theta &theta, const std::vector<PriorSpec> &priors) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < theta.natural.size(); ++i) {
        const PriorSpec &prior = priors[std::size_t(i)];
        if (!prior.contains(theta.natural[i])) return kNegInf;
        lp += prior.log_density(theta.natural[i]) + log_jacobian(to_real(theta.natural[i], prior), prior);
    }
    return lp;
}

bool mh_accept(double log_ratio, Rng &rng) {
    const double u = rng.uniform();
    return std::log(u) < log_ratio;
}

EtaDeltaStep metropolis_etadelta(const CalibrationDataset &data, const Theta &theta, const EtaDeltaParams &current,
                                 const EtaDeltaParams &proposed, const CalibrationModel &model, Rng &rng,
                                 const double *current_loglik) {
    const double u = rng.uniform();
    EtaDeltaStep out{current, false, 0.0};
    out.loglik = current_loglik ? *current_loglik : log_lik(data, theta.unit, current, model);

    const double lp_new = etadelta_log_prior(proposed, model.priors);
    if (!std::isfinite(lp_new)) return out;
    const double lp_old = etadelta_log_prior(current, model.priors);
    const LikelihoodEval ev = evaluate_log_lik(data, theta.unit, proposed, model);
    const double log_ratio = ev.value + lp_new - out.loglik - lp_old;
    if (std::log(u) < log_ratio) {
        out.params = proposed;
        out.accepted = true;
        out.loglik = ev.value;
    }
    return out;
}

ThetaStep metropolis_theta(const CalibrationDataset &data, const Theta &current, const EtaDeltaParams &params,
                           const CalibrationModel &model, const Theta &proposed, Rng &rng,
                           const double *current_loglik, const ThetaGate *gate) {
    const double u = rng.uniform();
    ThetaStep out;
    out.theta = current;
    out.loglik = current_loglik ? *current_loglik : log_lik(data, current.unit, params, model);

    if (!proposed.inside(model.theta_priors)) return out;
    if (gate && *gate && !(*gate)(proposed)) {
        out.gate_passed = false;
        return out;
    }
    const double lp_new = theta_log_prior(proposed, model.theta_priors);
    const double lp_old = theta_log_prior(current, model.theta_priors);
    const LikelihoodEval ev = evaluate_log_lik(data, proposed.unit, params, model);
    const double log_ratio = ev.value + lp_new - out.loglik - lp_old;
    if (std::log(u) < log_ratio) {
        out.theta = proposed;
        out.accepted = true;
        out.loglik = ev.value;
    }
    return out;
}

// ---------------------------------------------------------------------------

CalibrationSampler::CalibrationSampler(const CalibrationDataset &data, const CalibrationModel &model,
                                       CalibrationState init, AdaptiveProposal etadelta_proposal,
                                       AdaptiveProposal theta_proposal)
    : data_(&data),
      model_(&model),
      state_(std::move(init)),
      etadelta_prop_(std::move(etadelta_proposal)),
      theta_prop_(std::move(theta_proposal)) {
    data.validate();
    if (model.dt() != data.dt()) throw ValidationError("number of theta priors does not match the t columns");
    if (etadelta_prop_.dimension() != state_.params.block_size() || theta_prop_.dimension() != data.dt()) {
        throw InvalidArgument("CalibrationSampler: proposal dimension mismatch");
    }
    refresh();
}

void CalibrationSampler::refresh() {
    LikelihoodEval ev = evaluate_log_lik(*data_, state_.theta.unit, state_.params, *model_);
    if (ev.factor.jitter > 0.0) ++jitter_events_;
    factor_ = std::move(ev.factor);
    loglik_ = ev.value;
}

void CalibrationSampler::reset_state(CalibrationState state) {
    state_ = std::move(state);
    refresh();
}

void CalibrationSampler::step_means(Rng &rng) {
    const MeansDraw m = gibbs_means(*data_, factor_, rng);
    state_.params.mu_eta = m.mu_eta;
    state_.params.mu_delta = m.mu_delta;
    loglik_ = log_lik_with_factor(*data_, state_.params, factor_);
}

bool CalibrationSampler::step_etadelta(Rng &rng) {
    const Eigen::VectorXd real = etadelta_prop_.propose(etadelta_to_real(state_.params, model_->priors), rng);
    const EtaDeltaParams proposed = etadelta_from_real(real, state_.params, model_->priors);
    const EtaDeltaStep step = metropolis_etadelta(*data_, state_.theta, state_.params, proposed, *model_, rng, &loglik_);
    if (step.accepted) {
        state_.params = step.params;
        refresh();
    }
    return step.accepted;
}

ThetaStep CalibrationSampler::step_theta(Rng &rng, const ThetaGate *gate) {
    const Eigen::VectorXd real = theta_prop_.propose(state_.theta.real(model_->theta_priors), rng);
    const Theta proposed = Theta::from_real(real, model_->theta_priors);
    ThetaStep step = metropolis_theta(*data_, state_.theta, state_.params, *model_, proposed, rng, &loglik_, gate);
    if (step.accepted) {
        state_.theta = step.theta;
        refresh();
    }
    return step;
}

void CalibrationSampler::adapt() {
    etadelta_prop_.update(etadelta_to_real(state_.params, model_->priors));
    theta_prop_.update(state_.theta.real(model_->theta_priors));
}

void CalibrationSampler::freeze() {
    etadelta_prop_.freeze();
    theta_prop_.freeze();
}

std::vector<std::string> CalibrationSampler::columns() const {
    std::vector<std::string> cols;
    for (Eigen::Index i = 0; i < data_->dt(); ++i) cols.push_back(model_->theta_name(i));
    for (const char *c : {"mu_eta", "mu_delta", "var_eta", "var_delta", "var_eps"}) cols.emplace_back(c);
    for (Eigen::Index i = 0; i < data_->dx(); ++i) cols.push_back("lambda_eta_x" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < data_->dt(); ++i) cols.push_back("lambda_eta_t" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < data_->dx(); ++i) cols.push_back("lambda_delta" + std::to_string(i + 1));
    cols.emplace_back("loglik");
    return cols;
}

void CalibrationSampler::append_row(std::vector<double> &row) const {
    const auto &p = state_.params;
    for (Eigen::Index i = 0; i < state_.theta.natural.size(); ++i) row.push_back(state_.theta.natural[i]);
    row.insert(row.end(), {p.mu_eta, p.mu_delta, p.var_eta, p.var_delta, p.var_eps});
    for (const Eigen::VectorXd *v : {&p.lambda_eta_x, &p.lambda_eta_t, &p.lambda_delta}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) row.push_back((*v)[i]);
    }
    row.push_back(loglik_);
}

CalibrationState default_calibration_state(const CalibrationDataset &data, const CalibrationModel &model) {
    CalibrationState s;
    s.params = EtaDeltaParams::defaults(data.dx(), data.dt());
    s.theta = Theta::from_unit(Eigen::VectorXd::Constant(data.dt(), 0.5), model.theta_priors);
    return s;
}

CalibrationResult run_calibration_mcmc(const CalibrationDataset &data, const CalibrationModel &model,
                                       const CalibrationRunConfig &config, std::uint64_t seed,
                                       std::uint64_t chain_index) {
    config.run.validate();
    Rng rng(derive_seed(seed, {stream::calibration, chain_index}));
    CalibrationState init = config.initial_state ? *config.initial_state : default_calibration_state(data, model);
    const Eigen::Index block = init.params.block_size();
    const auto &opt = config.proposals;
    AdaptiveProposal ed = config.etadelta_cov ? AdaptiveProposal(*config.etadelta_cov, opt.adaptation)
                                              : AdaptiveProposal::diagonal(block, opt.initial_sd, opt.adaptation);
    AdaptiveProposal th = config.theta_cov ? AdaptiveProposal(*config.theta_cov, opt.adaptation)
                                           : AdaptiveProposal::diagonal(data.dt(), opt.initial_sd, opt.adaptation);
    CalibrationSampler sampler(data, model, std::move(init), std::move(ed), std::move(th));

    CalibrationResult result;
    result.chain = Chain(sampler.columns());
    std::vector<double> row;
    for (long t = 1; t <= config.run.iterations; ++t) {
        sampler.step_means(rng);
        result.chain.acceptance["etadelta"].add(sampler.step_etadelta(rng));
        result.chain.acceptance["theta"].add(sampler.step_theta(rng).accepted);
        sampler.adapt();
        if (config.run.freeze_after_burnin && t == config.run.burnin) sampler.freeze();
        if (config.run.records(t)) {
            row.clear();
            sampler.append_row(row);
            result.chain.record(row);
        }
    }
    result.chain.jitter_events = sampler.jitter_events();
    result.final_state = sampler.state();
    result.etadelta_cov = sampler.etadelta_proposal().covariance();
    result.theta_cov = sampler.theta_proposal().covariance();
    return result;
}

}  // namespace failcal
