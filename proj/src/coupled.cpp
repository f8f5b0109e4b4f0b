#include "failcal/coupled.hpp"

#include "failcal/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace failcal {

AdmissibilityConfig AdmissibilityConfig::uniform(SliceMode mode, Design xtilde, double p_tol) {
    AdmissibilityConfig c;
    c.mode = mode;
    c.xtilde = std::move(xtilde);
    c.p_tol = p_tol;
    const Eigen::Index k = c.slice_size();
    if (k > 0) c.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    return c;
}

void AdmissibilityConfig::validate(Eigen::Index dx) const {
    if (!(p_tol >= 0.0 && p_tol <= 1.0)) throw ValidationError("p_tol must lie in [0, 1]");
    if (mode == SliceMode::C2) {
        if (xtilde.rows() == 0) throw ValidationError("C2 admissibility needs a nonempty X~ design");
        if (xtilde.cols() != dx) throw ValidationError("X~ columns must equal Dx");
    }
    if (weights.size() != slice_size()) throw ValidationError("admissibility weights must match the slice size");
    if ((weights.array() < 0.0).any()) throw ValidationError("admissibility weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw ValidationError("admissibility weights must sum to 1");
}

bool admissible(const Eigen::VectorXd &draw, const AdmissibilityConfig &cfg) {
    if (draw.size() != cfg.weights.size()) throw InvalidArgument("admissible: draw length does not match weights");
    double failing = 0.0;
    for (Eigen::Index m = 0; m < draw.size(); ++m) {
        if (!(draw[m] > 0.0)) failing += cfg.weights[m];
    }
    return failing <= cfg.p_tol;
}

Design slice_design(const AdmissibilityConfig &cfg, const Eigen::VectorXd &theta_unit, Eigen::Index dx) {
    const Eigen::Index dt = theta_unit.size();
    if (cfg.mode == SliceMode::C1) {
        Design d = Design::Zero(1, dx + dt);
        d.block(0, dx, 1, dt) = theta_unit.transpose();
        return d;
    }
    const Eigen::Index k = cfg.xtilde.rows();
    Design d(k, dx + dt);
    d.leftCols(dx) = cfg.xtilde;
    d.rightCols(dt) = theta_unit.transpose().replicate(k, 1);
    return d;
}

bool gate_check(const Eigen::VectorXd &theta_unit, const LatentState &state, const LatentPosterior &posterior,
                const LatentModel &model, const AdmissibilityConfig &cfg, Rng &rng) {
    if (cfg.p_tol >= 1.0) return true;
    const Design slice = slice_design(cfg, theta_unit, model.dx);
    return admissible(predictive_draw(state, posterior, model, slice, rng), cfg);
}

// ---------------------------------------------------------------------------

ProposalSnapshot ProposalSnapshot::of(const AdaptiveProposal &p) {
    return {p.initial_covariance(), p.count(), p.running_mean(), p.scatter(), p.frozen()};
}

AdaptiveProposal ProposalSnapshot::rebuild(AdaptationSettings settings) const {
    AdaptiveProposal p(initial, settings);
    p.restore(count, mean, scatter, frozen);
    return p;
}

namespace {

AdaptiveProposal make_proposal(const Eigen::MatrixXd *cov, Eigen::Index dim, const ProposalOptions &opt) {
    return cov ? AdaptiveProposal(*cov, opt.adaptation) : AdaptiveProposal::diagonal(dim, opt.initial_sd, opt.adaptation);
}

constexpr int kStartSearchTries = 5000;

}  // namespace

CoupledResult run_coupled_mcmc(const CalibrationDataset &cal, const CalibrationModel &cal_model,
                               const FailureDataset &fail, const LatentModel &lat_model,
                               const AdmissibilityConfig &adm, const CoupledRunConfig &config, std::uint64_t seed,
                               std::uint64_t chain_index) {
    config.run.validate();
    adm.validate(lat_model.dx);
    if (cal.dx() != fail.dx || cal.dt() != fail.dt) {
        throw ValidationError("calibration and failure data disagree on Dx or Dt");
    }

    Rng rng_cal(derive_seed(seed, {stream::calibration, chain_index}));
    Rng rng_cls(derive_seed(seed, {stream::classifier, chain_index}));
    Rng rng_gate(derive_seed(seed, {stream::gate, chain_index}));
    Rng rng_loocv(derive_seed(seed, {stream::classifier, chain_index, 0x6c6f6f}));
    const auto &opt = config.proposals;
    const CoupledCheckpoint *cp = config.resume;

    CalibrationState cal_init;
    LatentState lat_init;
    AdaptiveProposal ed_prop, th_prop, lam_prop;
    if (cp) {
        cal_init = cp->calibration;
        lat_init = cp->latent;
        ed_prop = cp->etadelta.rebuild(opt.adaptation);
        th_prop = cp->theta.rebuild(opt.adaptation);
        lam_prop = cp->lambda.rebuild(opt.adaptation);
        rng_cal.restore(cp->rng_calibration);
        rng_cls.restore(cp->rng_classifier);
        rng_gate.restore(cp->rng_gate);
        rng_loocv.restore(cp->rng_loocv);
    } else {
        cal_init = config.calibration_state ? *config.calibration_state : default_calibration_state(cal, cal_model);
        lat_init = config.latent_state ? *config.latent_state : default_latent_state(fail, lat_model);
        ed_prop = make_proposal(config.etadelta_cov, cal_init.params.block_size(), opt);
        th_prop = make_proposal(config.theta_cov, cal.dt(), opt);
        lam_prop = make_proposal(config.lambda_cov, lat_model.kernel_dim(), opt);
    }

    CalibrationSampler cs(cal, cal_model, std::move(cal_init), std::move(ed_prop), std::move(th_prop));
    ClassifierSampler ls(fail, lat_model, std::move(lat_init), std::move(lam_prop));

    const ThetaGate gate = [&](const Theta &th) {
        return gate_check(th.unit, ls.state(), ls.posterior(), lat_model, adm, rng_gate);
    };

    if (!cp && !gate(cs.state().theta)) {
        bool found = false;
        for (int k = 0; k < kStartSearchTries && !found; ++k) {
            Eigen::VectorXd nat(cal.dt());
            for (Eigen::Index i = 0; i < nat.size(); ++i) nat[i] = cal_model.theta_priors[std::size_t(i)].sample(rng_gate);
            const Theta th = Theta::from_natural(nat, cal_model.theta_priors);
            if (th.inside(cal_model.theta_priors) && gate(th)) {
                CalibrationState s = cs.state();
                s.theta = th;
                cs.reset_state(std::move(s));
                found = true;
            }
        }
        if (!found) throw ValidationError("no admissible starting value of theta found under the prior");
    }

    std::vector<std::string> cols = cs.columns();
    for (auto &c : ls.columns(config.record_latent)) cols.push_back(std::move(c));
    cols.emplace_back("admissible");

    CoupledResult result;
    result.chain = Chain(std::move(cols));
    auto &loocv = result.chain.diagnostics["loocv"];
    const long first = cp ? cp->iteration + 1 : 1;
    const long last = config.stop_after > 0 ? std::min(config.stop_after, config.run.iterations) : config.run.iterations;
    result.iterations_done = first - 1;
    // The current theta was admitted by a passing gate draw (or the start search).
    const double admitted = 1.0;

    auto snapshot = [&](long iteration) {
        CoupledCheckpoint c;
        c.iteration = iteration;
        c.calibration = cs.state();
        c.latent = ls.state();
        c.rng_calibration = rng_cal.save();
        c.rng_classifier = rng_cls.save();
        c.rng_gate = rng_gate.save();
        c.rng_loocv = rng_loocv.save();
        c.etadelta = ProposalSnapshot::of(cs.etadelta_proposal());
        c.theta = ProposalSnapshot::of(cs.theta_proposal());
        c.lambda = ProposalSnapshot::of(ls.proposal());
        return c;
    };

    std::vector<double> row;
    try {
        for (long t = first; t <= last; ++t) {
            result.chain.acceptance["lambda_zeta"].add(ls.step(rng_cls));

            cs.step_means(rng_cal);
            result.chain.acceptance["etadelta"].add(cs.step_etadelta(rng_cal));
            const ThetaStep ts = cs.step_theta(rng_cal, &gate);
            result.chain.acceptance["theta"].add(ts.accepted);
            result.chain.acceptance["gate"].add(ts.gate_passed);

            ls.adapt();
            cs.adapt();
            if (config.run.freeze_after_burnin && t == config.run.burnin) {
                ls.freeze();
                cs.freeze();
            }
            if (config.loocv_stride > 0 && t > config.run.burnin && t % config.loocv_stride == 0) {
                loocv.emplace_back(t, ls.loocv(rng_loocv));
            }
            if (config.run.records(t)) {
                row.clear();
                cs.append_row(row);
                ls.append_row(row, config.record_latent);
                row.push_back(admitted);
                result.chain.record(row);
            }
            result.iterations_done = t;
        }
    } catch (const NumericalError &e) {
        result.failure = e.what();
    }

    result.completed = result.failure.empty() && result.iterations_done == config.run.iterations;
    if (!result.completed) result.checkpoint = snapshot(result.iterations_done);
    result.chain.jitter_events = cs.jitter_events() + ls.jitter_events();
    result.calibration_final = cs.state();
    result.latent_final = ls.state();
    result.etadelta_cov = cs.etadelta_proposal().covariance();
    result.theta_cov = cs.theta_proposal().covariance();
    result.lambda_cov = ls.proposal().covariance();
    return result;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd BMatrix::row_means() const { return entries.cast<double>().rowwise().mean(); }

Eigen::VectorXd BMatrix::col_means() const { return entries.cast<double>().colwise().mean().transpose(); }

BMatrix build_b_matrix(const std::vector<Eigen::VectorXd> &theta_units, const std::vector<LatentState> &latent_draws,
                       const FailureDataset &fail, const LatentModel &lat_model, const AdmissibilityConfig &adm,
                       std::uint64_t seed, unsigned threads) {
    adm.validate(lat_model.dx);
    const auto nr = static_cast<Eigen::Index>(latent_draws.size());
    const auto nc = static_cast<Eigen::Index>(theta_units.size());
    BMatrix b;
    b.entries.resize(nr, nc);
    if (nr == 0 || nc == 0) return b;

    std::atomic<Eigen::Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const Eigen::Index i = next.fetch_add(1);
            if (i >= nr) return;
            try {
                const LatentState &st = latent_draws[std::size_t(i)];
                const LatentPosterior post(fail, lat_model, st.lambda, false);
                for (Eigen::Index j = 0; j < nc; ++j) {
                    Rng rng(derive_seed(seed, {stream::bmatrix, std::uint64_t(i), std::uint64_t(j)}));
                    b.entries(i, j) = gate_check(theta_units[std::size_t(j)], st, post, lat_model, adm, rng) ? 1 : 0;
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = nr;
                return;
            }
        }
    };

    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto &th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return b;
}

double pi_hat(const std::vector<Eigen::VectorXd> &draws, const std::function<bool(const Eigen::VectorXd &)> &inside) {
    if (draws.empty()) throw InvalidArgument("pi_hat: no draws");
    std::size_t n = 0;
    for (const auto &d : draws) n += inside(d) ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(draws.size());
}

double pi_hat(const std::vector<Eigen::VectorXd> &draws, const Eigen::VectorXd &lower, const Eigen::VectorXd &upper) {
    return pi_hat(draws, [&](const Eigen::VectorXd &d) {
        if (d.size() != lower.size() || d.size() != upper.size()) throw InvalidArgument("pi_hat: dimension mismatch");
        return (d.array() > lower.array()).all() && (d.array() < upper.array()).all();
    });
}

AdmissibilitySummary admissibility_summary(const BMatrix &b, double low_cut, double high_cut) {
    if (b.rows() == 0 || b.cols() == 0) throw InvalidArgument("admissibility_summary: empty B-matrix");
    AdmissibilitySummary s;
    s.low_cut = low_cut;
    s.high_cut = high_cut;
    s.row_means = b.row_means();
    s.col_means = b.col_means();
    const double nc = static_cast<double>(b.cols());
    s.always_fail = static_cast<double>((s.col_means.array() <= low_cut).count()) / nc;
    s.always_succeed = static_cast<double>((s.col_means.array() >= high_cut).count()) / nc;
    s.pi_min = s.row_means.minCoeff();
    s.pi_max = s.row_means.maxCoeff();
    s.pi_mean = s.row_means.mean();
    return s;
}

}  // namespace failcal
