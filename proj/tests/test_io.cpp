#include "failcal/coupled.hpp"
#include "failcal/error.hpp"
#include "failcal/io.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace failcal;
using doctest::Approx;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("failcal_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path &p, const std::string &s) { std::ofstream(p) << s; }

std::string message_of(const std::function<void()> &f) {
    try {
        f();
    } catch (const std::exception &e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("doubles round trip through text") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(rng.normal(), int(rng.below(80)) - 40);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("CSV round trip") {
    TempDir dir("csv");
    Table t;
    t.header = {"a", "b"};
    t.rows = {{0.1, -2.5e-300}, {1.0 / 3.0, 7.0}};
    write_csv(dir.path / "t.csv", t);
    const Table r = read_csv(dir.path / "t.csv");
    CHECK(r.header == t.header);
    CHECK(r.rows == t.rows);
    CHECK(r.column("b") == 1);
    CHECK_THROWS_AS(r.column("c"), ValidationError);
}

TEST_CASE("CSV errors carry file and line") {
    TempDir dir("csv_err");
    write_text(dir.path / "bad.csv", "a,b\n1,2\n3\n");
    const auto m = message_of([&] { read_csv(dir.path / "bad.csv"); });
    CHECK(m.find("bad.csv line 3") != std::string::npos);
    write_text(dir.path / "nan.csv", "a,b\n1,x\n");
    CHECK(message_of([&] { read_csv(dir.path / "nan.csv"); }).find("line 2") != std::string::npos);
    write_text(dir.path / "empty.csv", "");
    CHECK_THROWS_AS(read_csv(dir.path / "empty.csv"), ValidationError);
    CHECK_THROWS_AS(read_csv(dir.path / "missing.csv"), IoError);
    write_text(dir.path / "bad.json", "{\"a\": ");
    CHECK_THROWS_AS(read_json(dir.path / "bad.json"), ValidationError);
}

TEST_CASE("dotted paths") {
    json doc = json::object();
    set_path(doc, "coupled.mcmc.iterations", 5);
    set_path(doc, "seed", 3);
    CHECK(doc["coupled"]["mcmc"]["iterations"] == 5);
    CHECK(doc["seed"] == 3);
}

TEST_CASE("prior JSON round trip") {
    for (const auto &p : {PriorSpec::uniform(0.2, 0.9), PriorSpec::trunc_normal(0.5, 0.2, 0.0, 1.0)}) {
        const PriorSpec q = prior_from_json(prior_to_json(p));
        CHECK(q.kind == p.kind);
        CHECK(q.variance == p.variance);
        CHECK(q.lower == p.lower);
        CHECK(q.upper == p.upper);
    }
    CHECK_THROWS_AS(prior_from_json(json{{"type", "cauchy"}, {"lower", 0.0}, {"upper", 1.0}}), ValidationError);
}

TEST_CASE("configuration errors") {
    const json good = toy_config_json();
    CHECK_NOTHROW(parse_config(good, "."));
    auto bad = [&](const std::string &key, json v) {
        json d = good;
        set_path(d, key, std::move(v));
        return message_of([&] { parse_config(d, "."); });
    };
    CHECK(bad("admissibility.ptol", 1.5).find("ptol") != std::string::npos);
    CHECK(bad("admissibility.xtilde", "sobol").find("xtilde") != std::string::npos);
    CHECK_FALSE(bad("mcmc.burnin", 200000).empty());
    CHECK_FALSE(bad("classifier.kernel", "cubic").empty());
    CHECK_FALSE(bad("classifier.mode", "c3").empty());
    json no_t = good;
    no_t["inputs"]["t"] = json::array();
    CHECK_THROWS_AS(parse_config(no_t, "."), ValidationError);
}

TEST_CASE("toy data sizes and truth") {
    ToySpec spec;
    const ToyData toy = generate_toy(spec);
    CHECK(toy.truth.n == 18);
    CHECK(toy.truth.m == 114);
    CHECK(toy.truth.m0 == 30);
    CHECK(toy.raw.y.size() == 18);
    CHECK(toy.raw.eta.size() == 114);
    CHECK(toy.raw.fail_design.rows() == 144);
    CHECK(toy.truth.band_lower < toy.truth.theta);
    CHECK(toy.truth.band_upper > toy.truth.theta);
    CHECK(toy_discrepancy(0.2) == 0.0);

    ToySpec clean;
    clean.failures = false;
    const ToyData c = generate_toy(clean);
    CHECK(c.truth.m == 144);
    CHECK(c.truth.m0 == 0);

    const ToyData again = generate_toy(spec);
    CHECK(again.raw.y == toy.raw.y);
    CHECK(again.raw.eta == toy.raw.eta);
    ToySpec other;
    other.seed = spec.seed + 1;
    CHECK(generate_toy(other).raw.y != toy.raw.y);
}

TEST_CASE("failure cells outside the grid are rejected") {
    ToySpec spec;
    spec.failure_cells = {{18, 0}};
    CHECK_THROWS_AS(toy_failure_cells(spec), InvalidArgument);
}

TEST_CASE("raw data written and read back") {
    TempDir dir("raw");
    ToySpec spec;
    const ToyData toy = generate_toy(spec);
    write_toy(toy, spec, dir.path);
    for (const char *f : {"field.csv", "simulator.csv", "failures.csv", "truth.json", "config.json"}) {
        CHECK(fs::exists(dir.path / f));
    }
    const auto cfg = load_config(dir.path / "config.json");
    const RawData raw = read_raw_data(cfg);
    CHECK(raw.y == toy.raw.y);
    CHECK(raw.eta == toy.raw.eta);
    CHECK(raw.z == toy.raw.z);
    const Datasets ds = prepare_datasets(raw, cfg);
    CHECK(ds.calibration.y.size() == 18);
    CHECK(ds.failures.size() == 144);
    CHECK(ds.failures.failures() == 30);
    // Standardization is a pure rescale.
    CHECK((ds.calibration.y * ds.calibration.output_scale - raw.y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("out-of-range inputs name the file and row") {
    TempDir dir("range");
    ToySpec spec;
    const ToyData toy = generate_toy(spec);
    write_toy(toy, spec, dir.path);
    auto cfg = load_config(dir.path / "config.json");
    RawData raw = read_raw_data(cfg);
    raw.x(4, 0) = 1.5;
    const auto m = message_of([&] { prepare_datasets(raw, cfg); });
    CHECK(m.find("field.csv row 5") != std::string::npos);
}

TEST_CASE("input scaling round trips") {
    TempDir dir("scale");
    ToySpec spec;
    ToyData toy = generate_toy(spec);
    // Variable input on [2, 7], calibration input on [-1, 3].
    RawData raw = toy.raw;
    raw.x = (raw.x.array() * 5.0 + 2.0).matrix();
    raw.xstar = (raw.xstar.array() * 5.0 + 2.0).matrix();
    raw.tstar = (raw.tstar.array() * 4.0 - 1.0).matrix();
    raw.fail_design.col(0) = (raw.fail_design.col(0).array() * 5.0 + 2.0).matrix();
    raw.fail_design.col(1) = (raw.fail_design.col(1).array() * 4.0 - 1.0).matrix();
    json doc = toy_config_json();
    doc["inputs"]["x"][0]["lower"] = 2.0;
    doc["inputs"]["x"][0]["upper"] = 7.0;
    doc["inputs"]["t"][0]["prior"] = {{"type", "uniform"}, {"lower", -1.0}, {"upper", 3.0}};
    const auto cfg = parse_config(doc, dir.path);
    const Datasets ds = prepare_datasets(raw, cfg);
    CHECK((ds.calibration.x - toy.raw.x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ds.calibration.tstar - toy.raw.tstar).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("archives round trip") {
    TempDir dir("archive");
    Chain a({"t1", "mu"}), b({"t1", "mu"});
    a.record(std::vector<double>{0.25, 1.0 / 3.0});
    a.record(std::vector<double>{0.5, -2.0});
    b.record(std::vector<double>{0.75, 1e-300});
    a.acceptance["theta"].add(true);
    a.acceptance["theta"].add(false);
    a.diagnostics["loocv"] = {{200, 0.99}};
    ArchiveMeta meta;
    meta.kind = "calibration";
    meta.seed = 9;
    meta.config_hash = 0xabcdefULL;
    meta.extra["note"] = "x";
    write_archive(dir.path / "cal", {a, b}, meta);
    const Archive r = read_archive(dir.path / "cal");
    REQUIRE(r.chains.size() == 2);
    CHECK(r.chains[0].column("mu") == a.column("mu"));
    CHECK(r.chains[1].column("t1") == b.column("t1"));
    CHECK(r.chains[0].acceptance.at("theta").rate() == 0.5);
    CHECK(r.meta["kind"] == "calibration");
    CHECK(r.meta["note"] == "x");
    CHECK_THROWS_AS(read_archive(dir.path / "nothing"), IoError);
}

TEST_CASE("states and checkpoints round trip") {
    const std::vector<PriorSpec> priors{PriorSpec::uniform(0.0, 2.0)};
    CalibrationState cs;
    cs.theta = Theta::from_natural(Eigen::VectorXd::Constant(1, 0.3), priors);
    cs.params = EtaDeltaParams::defaults(1, 1);
    cs.params.var_eta = 1.0 / 7.0;
    const CalibrationState cs2 = calibration_state_from_json(calibration_state_to_json(cs), priors);
    CHECK(cs2.theta.natural == cs.theta.natural);
    CHECK(cs2.theta.unit == cs.theta.unit);
    CHECK(cs2.params.var_eta == cs.params.var_eta);

    LatentState ls;
    ls.zeta = Eigen::Vector3d(0.1, -0.2, 1.0 / 3.0);
    ls.mu = 0.7;
    ls.lambda = Eigen::Vector2d(0.4, 1.1);
    const LatentState ls2 = latent_state_from_json(latent_state_to_json(ls));
    CHECK(ls2.zeta == ls.zeta);
    CHECK(ls2.mu == ls.mu);
    CHECK(ls2.lambda == ls.lambda);

    CoupledCheckpoint c;
    c.iteration = 42;
    c.calibration = cs;
    c.latent = ls;
    Rng rng(3);
    rng.normal();
    c.rng_calibration = c.rng_classifier = c.rng_gate = c.rng_loocv = rng.save();
    AdaptiveProposal p(Eigen::MatrixXd::Identity(2, 2), AdaptationSettings{});
    p.update(Eigen::Vector2d(1, 2));
    p.update(Eigen::Vector2d(0.5, 2.5));
    c.etadelta = c.theta = c.lambda = ProposalSnapshot::of(p);
    const CoupledCheckpoint c2 = checkpoint_from_json(checkpoint_to_json(c), priors);
    CHECK(c2.iteration == 42);
    CHECK(c2.rng_gate == c.rng_gate);
    CHECK(c2.lambda.count == 2);
    CHECK(c2.lambda.scatter == c.lambda.scatter);
    CHECK(c2.latent.zeta == ls.zeta);
}

TEST_CASE("multi-input data set with failures") {
    // Four variable inputs and fourteen calibration inputs, 335 successful and 136 failed runs.
    TempDir dir("wide");
    Rng rng(5);
    const int dx = 4, dt = 14, ok = 335, bad = 136, n = 12;
    std::vector<std::string> xn, tn;
    json doc = toy_config_json();
    doc["inputs"]["x"] = json::array();
    doc["inputs"]["t"] = json::array();
    for (int i = 0; i < dx; ++i) {
        xn.push_back("x" + std::to_string(i + 1));
        doc["inputs"]["x"].push_back({{"name", xn.back()}, {"lower", 0.0}, {"upper", 10.0}});
    }
    for (int i = 0; i < dt; ++i) {
        tn.push_back("t" + std::to_string(i + 1));
        doc["inputs"]["t"].push_back({{"name", tn.back()}, {"prior", {{"type", "uniform"}, {"lower", -1.0}, {"upper", 1.0}}}});
    }
    RawData raw;
    raw.y = Eigen::VectorXd::NullaryExpr(n, [&] { return rng.normal(); });
    raw.x = Design::NullaryExpr(n, dx, [&] { return 10.0 * rng.uniform(); });
    raw.eta = Eigen::VectorXd::NullaryExpr(ok, [&] { return rng.normal(); });
    raw.xstar = Design::NullaryExpr(ok, dx, [&] { return 10.0 * rng.uniform(); });
    raw.tstar = Design::NullaryExpr(ok, dt, [&] { return 2.0 * rng.uniform() - 1.0; });
    raw.fail_design.resize(ok + bad, dx + dt);
    raw.fail_design << raw.xstar, raw.tstar,
        Design::NullaryExpr(bad, dx, [&] { return 10.0 * rng.uniform(); }),
        Design::NullaryExpr(bad, dt, [&] { return 2.0 * rng.uniform() - 1.0; });
    raw.z.assign(ok, 1);
    raw.z.insert(raw.z.end(), bad, 0);
    write_raw_data(raw, dir.path, xn, tn);
    write_json(dir.path / "config.json", doc);
    const auto cfg = load_config(dir.path / "config.json");
    const Datasets ds = prepare_datasets(read_raw_data(cfg), cfg);
    CHECK(ds.failures.size() == 471);
    CHECK(ds.failures.failures() == 136);
    CHECK(ds.failures.design.cols() == 18);
    CHECK(ds.calibration.m() == 335);
    CHECK(cfg.latent_model().kernel_dim() == 18);
}

TEST_CASE("hashing") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(255).size() == 16);
    const auto a = parse_config(toy_config_json(), ".");
    json d = toy_config_json();
    d["seed"] = 2;
    CHECK(a.hash() != parse_config(d, ".").hash());
    CHECK(a.hash() == parse_config(toy_config_json(), ".").hash());
}

}  // TEST_SUITE
