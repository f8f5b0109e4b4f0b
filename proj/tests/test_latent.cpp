#include "oracles.hpp"

#include "failcal/error.hpp"
#include "failcal/latent.hpp"

#include <doctest.h>

#include <numbers>

using namespace failcal;
using doctest::Approx;

namespace {

FailureDataset single_point(int z) {
    FailureDataset d;
    d.dx = 1;
    d.dt = 1;
    d.z = {z};
    d.design = Design::Constant(1, 2, 0.5);
    return d;
}

LatentModel model_1x1(SliceMode mode = SliceMode::C2) {
    LatentModel m;
    m.dx = 1;
    m.dt = 1;
    m.mode = mode;
    return m;
}

/// 4 x 3 grid with failures in the low-t corner.
FailureDataset small_grid() {
    FailureDataset d;
    d.dx = 1;
    d.dt = 1;
    d.design.resize(12, 2);
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 4; ++i) {
            d.design(j * 4 + i, 0) = i / 3.0;
            d.design(j * 4 + i, 1) = j / 2.0;
            d.z.push_back(j == 0 && i < 2 ? 0 : 1);
        }
    }
    d.canonicalize();
    return d;
}

}  // namespace

TEST_SUITE("latent") {

TEST_CASE("log posterior examples") {
    auto data = single_point(1);
    auto model = model_1x1();
    LatentState s;
    s.zeta = Eigen::VectorXd::Constant(1, 0.5);
    s.mu = 0.0;
    s.lambda = Eigen::Vector2d(1.0, 1.0);
    const double expected = -0.5 * std::log(2.0 * std::numbers::pi) - 0.125 - 2.0 * std::log(4.9);
    CHECK(latent_log_posterior(s, data, model) == Approx(expected).epsilon(1e-13));
    s.zeta[0] = -0.5;
    CHECK(latent_log_posterior(s, data, model) == -INFINITY);
    s.zeta[0] = 0.5;
    s.lambda[1] = 5.5;
    CHECK(latent_log_posterior(s, data, model) == -INFINITY);
    auto fail = single_point(0);
    s.lambda[1] = 1.0;
    s.zeta[0] = 0.0;
    CHECK(std::isfinite(latent_log_posterior(s, fail, model)));
}

TEST_CASE("truncated normal draws") {
    Rng rng(3);
    const int n = 40000;
    std::vector<double> pos, neg;
    for (int i = 0; i < n; ++i) {
        pos.push_back(trunc_normal_draw(0.0, 1.0, TruncRegion::Positive, rng));
        neg.push_back(trunc_normal_draw(1.0, 4.0, TruncRegion::NonPositive, rng));
    }
    CHECK(*std::min_element(pos.begin(), pos.end()) > 0.0);
    CHECK(*std::max_element(neg.begin(), neg.end()) <= 0.0);
    CHECK(oracle::ks_one_sample(pos, [](double x) { return 2.0 * oracle::phi_cdf(x) - 1.0; }) < 0.02);
    // N(1, 4) below zero: F(x) = Phi((x - 1) / 2) / Phi(-1 / 2).
    const double z0 = oracle::phi_cdf(-0.5);
    CHECK(oracle::ks_one_sample(neg, [&](double x) { return oracle::phi_cdf((x - 1.0) / 2.0) / z0; }) < 0.02);
    CHECK(oracle::mean(pos) == Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(0.02));
}

TEST_CASE("truncated normal far tail and errors") {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double v = trunc_normal_draw(-40.0, 1.0, TruncRegion::Positive, rng);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        const double w = trunc_normal_draw(30.0, 0.25, TruncRegion::NonPositive, rng);
        CHECK(w <= 0.0);
        CHECK(w > -0.5);
    }
    CHECK_THROWS_AS(trunc_normal_draw(0.0, 0.0, TruncRegion::Positive, rng), InvalidArgument);
    CHECK_THROWS_AS(trunc_normal_draw(NAN, 1.0, TruncRegion::Positive, rng), InvalidArgument);
}

TEST_CASE("Gibbs sweep with identity covariance gives independent half normals") {
    LatentState s;
    s.zeta = Eigen::Vector2d(1.0, -1.0);
    s.mu = 0.0;
    const std::vector<int> z{1, 0};
    const Eigen::Matrix2d q = Eigen::Matrix2d::Identity();
    Rng rng(5);
    std::vector<double> a, b;
    for (int i = 0; i < 30000; ++i) {
        gibbs_sweep_latent(s, z, q, rng);
        a.push_back(s.zeta[0]);
        b.push_back(-s.zeta[1]);
    }
    auto half = [](double x) { return 2.0 * oracle::phi_cdf(x) - 1.0; };
    CHECK(oracle::ks_one_sample(a, half) < 0.02);
    CHECK(oracle::ks_one_sample(b, half) < 0.02);
}

TEST_CASE("Gibbs sweep on a correlated pair matches rejection sampling") {
    Eigen::Matrix2d sigma;
    sigma << 1.0, 0.5, 0.5, 1.0;
    const Eigen::Matrix2d q = sigma.inverse();
    const std::vector<int> z{1, 0};
    LatentState s;
    s.zeta = Eigen::Vector2d(0.5, -0.5);
    s.mu = 0.3;
    Rng rng(6);
    std::vector<double> g0, g1;
    for (int i = 0; i < 200; ++i) gibbs_sweep_latent(s, z, q, rng);
    for (int i = 0; i < 40000; ++i) {
        gibbs_sweep_latent(s, z, q, rng);
        if (i % 2 == 0) {
            g0.push_back(s.zeta[0]);
            g1.push_back(s.zeta[1]);
        }
    }
    const Eigen::Matrix2d l = sigma.llt().matrixL();
    Rng ref(7);
    std::vector<double> r0, r1;
    while (r0.size() < 20000) {
        const Eigen::Vector2d v = Eigen::Vector2d::Constant(0.3) + l * Eigen::Vector2d(ref.normal(), ref.normal());
        if (v[0] > 0.0 && v[1] <= 0.0) {
            r0.push_back(v[0]);
            r1.push_back(v[1]);
        }
    }
    CHECK(oracle::ks_two_sample(g0, r0) < 0.02);
    CHECK(oracle::ks_two_sample(g1, r1) < 0.02);
}

TEST_CASE("Gibbs sweep keeps every sign") {
    auto data = small_grid();
    const LatentPosterior post(data, model_1x1(), Eigen::Vector2d(0.5, 0.5));
    LatentState s = default_latent_state(data, model_1x1());
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        gibbs_sweep_latent(s, data.z, post.precision(), rng);
        REQUIRE(s.consistent_with(data.z));
    }
}

TEST_CASE("conjugate draw of the latent mean") {
    Eigen::Matrix3d sigma;
    sigma << 1.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.0;
    const Eigen::Matrix3d q = sigma.inverse();
    LatentState s;
    s.zeta = Eigen::Vector3d(0.4, -1.2, 2.0);
    const double a = q.sum();
    const double m = (q * s.zeta).sum() / a;
    Rng rng(9);
    std::vector<double> v;
    for (int i = 0; i < 40000; ++i) v.push_back(gibbs_mu_zeta(s, q, rng));
    CHECK(std::abs(oracle::mean(v) - m) < 4.0 * std::sqrt(1.0 / a / v.size()));
    CHECK(oracle::variance(v) == Approx(1.0 / a).epsilon(0.03));
}

TEST_CASE("lambda Metropolis step") {
    auto data = small_grid();
    auto model = model_1x1();
    LatentState s = default_latent_state(data, model);
    auto post = std::make_unique<LatentPosterior>(data, model, s.lambda);
    Rng rng(10);
    const Eigen::VectorXd same = s.lambda;
    CHECK(metropolis_lambda_zeta(s, data, model, post, same, rng).accepted);
    const Eigen::VectorXd before = s.lambda;
    const LatentPosterior *ptr = post.get();
    const auto st = metropolis_lambda_zeta(s, data, model, post, Eigen::Vector2d(6.0, 1.0), rng);
    CHECK_FALSE(st.accepted);
    CHECK(s.lambda == before);
    CHECK(post.get() == ptr);
    CHECK_THROWS_AS(metropolis_lambda_zeta(s, data, model, post, Eigen::VectorXd::Constant(3, 1.0), rng),
                    InvalidArgument);
}

TEST_CASE("predictive interpolates observed sites") {
    auto data = small_grid();
    auto model = model_1x1();
    LatentState s = default_latent_state(data, model);
    Rng rng(11);
    for (Eigen::Index i = 0; i < s.zeta.size(); ++i) s.zeta[i] = data.z[std::size_t(i)] ? 0.5 + rng.uniform() : -0.5 - rng.uniform();
    const LatentPosterior post(data, model, s.lambda);
    const auto pm = predictive_moments(s, post, model, data.design);
    CHECK((pm.mean - s.zeta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(pm.cov.diagonal().cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("predictive reverts to the mean far away") {
    FailureDataset data;
    data.dx = 1;
    data.dt = 1;
    data.design.resize(2, 2);
    data.design << 0.0, 0.0, 0.0, 0.02;
    data.z = {1, 0};
    LatentModel model = model_1x1();
    model.family = CorrelationFamily::SquaredExponential;
    LatentState s;
    s.zeta = Eigen::Vector2d(0.3, -0.1);
    s.mu = 0.7;
    s.lambda = Eigen::Vector2d(0.1, 0.1);
    const LatentPosterior post(data, model, s.lambda);
    Design far(1, 2);
    far << 1.0, 1.0;
    const auto pm = predictive_moments(s, post, model, far);
    CHECK(pm.mean[0] == Approx(0.7).epsilon(1e-12));
    CHECK(pm.cov(0, 0) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("predictive matches the closed form") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        FailureDataset data;
        data.dx = 1;
        data.dt = 1;
        data.design = Design::NullaryExpr(5, 2, [&] { return rng.uniform(); });
        data.z = {1, 1, 1, 0, 0};
        const bool c1 = rep % 2 == 1;
        LatentModel model = model_1x1(c1 ? SliceMode::C1 : SliceMode::C2);
        LatentState s;
        s.zeta = Eigen::VectorXd::NullaryExpr(5, [&] { return rng.normal(); });
        s.mu = rng.normal();
        s.lambda = Eigen::VectorXd::NullaryExpr(model.kernel_dim(), [&] { return 0.1 + 0.3 * rng.uniform(); });
        const Design newp = Design::NullaryExpr(3, 2, [&] { return rng.uniform(); });
        const LatentPosterior post(data, model, s.lambda);
        const auto pm = predictive_moments(s, post, model, newp);

        const Eigen::MatrixXd a = c1 ? Eigen::MatrixXd(data.design.rightCols(1)) : Eigen::MatrixXd(data.design);
        const Eigen::MatrixXd b = c1 ? Eigen::MatrixXd(newp.rightCols(1)) : Eigen::MatrixXd(newp);
        const Eigen::MatrixXd k = oracle::kernel_block(a, a, s.lambda, 1.0, true);
        const Eigen::MatrixXd ks = oracle::kernel_block(a, b, s.lambda, 1.0, true);
        const Eigen::MatrixXd kss = oracle::kernel_block(b, b, s.lambda, 1.0, true);
        const auto [mean, cov] = oracle::gp_conditional(k, ks, kss, s.zeta, s.mu);
        CHECK((pm.mean - mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((pm.cov - cov).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("LOOCV with identity precision") {
    LatentState s;
    s.mu = 0.8;
    s.zeta = Eigen::VectorXd::Constant(4, 1.0);
    const std::vector<int> z{1, 1, 0, 0};
    s.zeta[2] = s.zeta[3] = -1.0;
    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(4, 4);
    Rng rng(13);
    const int n = 20000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += loocv_rate(s, z, q, rng);
    // Each left-out draw is N(mu, 1): correct with Phi(mu) for successes, 1 - Phi(mu) for failures.
    const double expected = 0.5 * oracle::phi_cdf(0.8) + 0.5 * (1.0 - oracle::phi_cdf(0.8));
    CHECK(sum / n == Approx(expected).epsilon(0.01));
}

TEST_CASE("classifier runs") {
    auto data = small_grid();
    auto model = model_1x1();
    ClassifierRunConfig cfg;
    cfg.run = {0, 0, 1};
    const auto empty = run_classifier_mcmc(data, model, cfg, 1);
    CHECK(empty.chain.size() == 0);
    CHECK(empty.final_state.consistent_with(data.z));

    cfg.run = {600, 200, 2};
    cfg.loocv_stride = 100;
    const auto a = run_classifier_mcmc(data, model, cfg, 5);
    const auto b = run_classifier_mcmc(data, model, cfg, 5);
    REQUIRE(a.chain.size() == 200);
    CHECK(a.chain.column("mu_zeta") == b.chain.column("mu_zeta"));
    CHECK(a.chain.column("lambda_zeta_t1") == b.chain.column("lambda_zeta_t1"));
    CHECK(a.chain.acceptance.at("lambda_zeta").attempted == 600);
    CHECK(a.final_state.consistent_with(data.z));
    const auto states = latent_states_from_chain(a.chain);
    REQUIRE(states.size() == 200);
    for (const auto &s : states) CHECK(s.consistent_with(data.z));
    for (double l : a.chain.column("lambda_zeta_x1")) {
        CHECK(l > 0.1);
        CHECK(l < 5.0);
    }
}

TEST_CASE("dataset ordering and validation") {
    FailureDataset d;
    d.dx = 1;
    d.dt = 1;
    d.design.resize(4, 2);
    d.design << 0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4;
    d.z = {0, 1, 0, 1};
    CHECK_THROWS_AS(d.validate(), ValidationError);
    d.canonicalize();
    CHECK(d.z == std::vector<int>{1, 1, 0, 0});
    CHECK(d.design(0, 0) == 0.2);
    CHECK(d.design(1, 0) == 0.4);
    CHECK(d.design(2, 0) == 0.1);
    CHECK_NOTHROW(d.validate());
    auto all = d;
    all.z = {1, 1, 1, 1};
    CHECK_THROWS_AS(all.validate(), ValidationError);
    CHECK_NOTHROW(all.validate(false));
    auto bad = d;
    bad.z[0] = 2;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_THROWS_AS(parse_slice_mode("c3"), ValidationError);
    CHECK(parse_slice_mode("c1") == SliceMode::C1);
}

}  // TEST_SUITE
