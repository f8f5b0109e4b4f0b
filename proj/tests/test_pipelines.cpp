#include "oracles.hpp"

#include "failcal/design.hpp"
#include "failcal/pipelines.hpp"

#include <doctest.h>

using namespace failcal;
using doctest::Approx;

namespace {

fs::path fresh_dir(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("failcal_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("pipelines") {

TEST_CASE("kernel density integrates to one") {
    Rng rng(1);
    std::vector<double> v;
    for (int i = 0; i < 2000; ++i) v.push_back(rng.normal());
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -8.0, 8.0);
    const Eigen::VectorXd f = kde(v, grid);
    CHECK((f.array() >= 0.0).all());
    CHECK(f.sum() * 0.02 == Approx(1.0).epsilon(1e-3));
    CHECK(f[400] == Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(0.1));
}

TEST_CASE("empirical CDF") {
    const Eigen::VectorXd grid = Eigen::Vector4d(0.0, 1.0, 2.5, 10.0);
    const Eigen::VectorXd f = ecdf({3.0, 1.0, 2.0, 4.0}, grid);
    CHECK(f == Eigen::Vector4d(0.0, 0.25, 0.5, 1.0));
}

TEST_CASE("admissibility design from the configuration") {
    json doc = toy_config_json();
    auto grid = admissibility_from_config(parse_config(doc, "."));
    CHECK(grid.xtilde.rows() == 50);
    CHECK(grid.xtilde == equispaced_design(50, 1));
    CHECK(grid.weights.sum() == Approx(1.0));

    doc["admissibility"]["xtilde"] = "lhs";
    doc["admissibility"]["xtilde_size"] = 30;
    const auto lhs = admissibility_from_config(parse_config(doc, "."));
    CHECK(lhs.xtilde.rows() == 30);
    CHECK(lhs.xtilde == admissibility_from_config(parse_config(doc, ".")).xtilde);

    doc["classifier"]["mode"] = "c1";
    const auto c1 = admissibility_from_config(parse_config(doc, "."));
    CHECK(c1.slice_size() == 1);
}

TEST_CASE("short end-to-end run") {
    const fs::path dir = fresh_dir("e2e");
    const json truth = run_generate_toy(12, true, dir);
    CHECK(truth["M0"] == 30);
    auto cfg = load_config(dir / "config.json");
    json doc = cfg.raw;
    doc["mcmc"] = {{"iterations", 300}, {"burnin", 100}, {"thin", 2}};
    doc["classifier"]["loocv_stride"] = 50;
    doc["bmatrix"]["latent_draws"] = 10;
    doc["bmatrix"]["theta_draws"] = 20;
    cfg = parse_config(doc, dir);

    const json cls = run_fit_classifier(cfg, dir);
    CHECK(cls["loocv"]["evaluations"] == 4);
    CHECK(fs::exists(dir / "classifier.csv"));
    const json cal = run_fit_calibration(cfg, dir);
    CHECK(cal.contains("pi_hat_naive"));
    cfg.warm_classifier = dir / "classifier";
    cfg.warm_calibration = dir / "calibration";
    const json cpl = run_fit_coupled(cfg, dir);
    CHECK(cpl["admissible_fraction"] == 1.0);
    const json bm = run_b_matrix(cfg, dir);
    CHECK(bm["rows"] == 10);
    CHECK(bm["cols"] == 20);
    CHECK(fs::exists(dir / "bmatrix.csv"));
    const json sm = run_summarize(&cfg, dir);
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "t1.density.csv"));
    const Table dens = read_csv(dir / "t1.density.csv");
    CHECK(dens.rows.size() == 201);
    fs::remove_all(dir);
}

}  // TEST_SUITE
