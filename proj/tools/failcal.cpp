// failcal command-line interface; talks to the library only through failcal.h.
#include "failcal/failcal.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> chains;
    std::optional<int> threads;
    std::optional<long> iterations;
    std::optional<long> burnin;
    std::optional<long> thin;
    std::optional<std::string> mode;
    std::optional<double> ptol;
    std::optional<long> xtilde_size;
    std::optional<std::string> warm_start;
};

int report(fcal_status s) {
    if (s != FCAL_OK) {
        std::fprintf(stderr, "failcal: %s\n", fcal_last_error());
        return static_cast<int>(s);
    }
    std::printf("%s\n", fcal_last_summary());
    return 0;
}

void add_common(CLI::App *cmd, Overrides &o, bool mcmc) {
    cmd->add_option("--config", o.config, "Analysis configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory")->required();
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--mode", o.mode, "Slice mode for the classifier and gate")->check(CLI::IsMember({"c1", "c2", "C1", "C2"}));
    cmd->add_option("--ptol", o.ptol, "Admissibility tolerance")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--xtilde-size", o.xtilde_size, "Number of gate design points")->check(CLI::PositiveNumber);
    if (!mcmc) return;
    cmd->add_option("--chains", o.chains, "Independent chains")->check(CLI::PositiveNumber);
    cmd->add_option("--iterations", o.iterations, "Total iterations per chain")->check(CLI::PositiveNumber);
    cmd->add_option("--burnin", o.burnin, "Burn-in iterations")->check(CLI::NonNegativeNumber);
    cmd->add_option("--thin", o.thin, "Record every k-th iteration")->check(CLI::PositiveNumber);
}

/// Opens the config and applies command-line overrides; `section` scopes the MCMC settings.
int open_analysis(const Overrides &o, const char *section, fcal_analysis **out) {
    fcal_status s = fcal_analysis_open(o.config.c_str(), out);
    auto key = [&](const char *leaf) { return std::string(section) + ".mcmc." + leaf; };
    if (s == FCAL_OK && o.seed) s = fcal_analysis_set_int(*out, "seed", static_cast<int64_t>(*o.seed));
    if (s == FCAL_OK && o.chains) s = fcal_analysis_set_int(*out, "chains", *o.chains);
    if (s == FCAL_OK && o.threads) s = fcal_analysis_set_int(*out, "threads", *o.threads);
    if (s == FCAL_OK && o.iterations) s = fcal_analysis_set_int(*out, key("iterations").c_str(), *o.iterations);
    if (s == FCAL_OK && o.burnin) s = fcal_analysis_set_int(*out, key("burnin").c_str(), *o.burnin);
    if (s == FCAL_OK && o.thin) s = fcal_analysis_set_int(*out, key("thin").c_str(), *o.thin);
    if (s == FCAL_OK && o.mode) s = fcal_analysis_set_string(*out, "classifier.mode", o.mode->c_str());
    if (s == FCAL_OK && o.ptol) s = fcal_analysis_set_double(*out, "admissibility.ptol", *o.ptol);
    if (s == FCAL_OK && o.xtilde_size) s = fcal_analysis_set_int(*out, "admissibility.xtilde_size", *o.xtilde_size);
    if (s == FCAL_OK && o.warm_start) {
        // Relative to the config directory, so relocated runs hash the same.
        namespace fs = std::filesystem;
        const fs::path base = fs::weakly_canonical(fs::absolute(o.config)).parent_path();
        const std::string dir = fs::weakly_canonical(fs::absolute(*o.warm_start)).lexically_relative(base).string();
        s = fcal_analysis_set_string(*out, "warm_start.classifier", dir.c_str());
        if (s == FCAL_OK) s = fcal_analysis_set_string(*out, "warm_start.calibration", dir.c_str());
    }
    if (s == FCAL_OK) s = fcal_analysis_validate(*out);
    if (s != FCAL_OK) {
        std::fprintf(stderr, "failcal: %s\n", fcal_last_error());
        fcal_analysis_free(*out);
        *out = nullptr;
    }
    return static_cast<int>(s);
}

using Runner = fcal_status (*)(fcal_analysis *, const char *);

int run_with(const Overrides &o, const char *section, Runner runner) {
    fcal_analysis *a = nullptr;
    if (int rc = open_analysis(o, section, &a); rc != 0) return rc;
    std::unique_ptr<fcal_analysis, decltype(&fcal_analysis_free)> guard(a, fcal_analysis_free);
    return report(runner(a, o.out.c_str()));
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Bayesian calibration with informative simulator failures"};
    app.set_version_flag("--version", std::string(fcal_version()));
    app.require_subcommand(1);

    std::uint64_t toy_seed = 12;
    std::string toy_out;
    bool no_failures = false;
    auto *toy = app.add_subcommand("generate-toy", "Write the synthetic example data set");
    toy->add_option("--seed", toy_seed, "Seed of the GP draw and noise");
    toy->add_option("--out", toy_out, "Output directory")->required();
    toy->add_flag("--no-failures", no_failures, "Omit simulator failures");

    Overrides cls_o, cal_o, cpl_o, bm_o;
    auto *cls = app.add_subcommand("fit-classifier", "Fit the latent failure classifier");
    add_common(cls, cls_o, true);
    auto *cal = app.add_subcommand("fit-calibration", "Fit the calibration model ignoring failures");
    add_common(cal, cal_o, true);
    auto *cpl = app.add_subcommand("fit-coupled", "Fit calibration with the admissibility constraint");
    add_common(cpl, cpl_o, true);
    cpl->add_option("--warm-start", cpl_o.warm_start, "Directory holding classifier and calibration archives")
        ->check(CLI::ExistingDirectory);
    auto *bm = app.add_subcommand("b-matrix", "Pointwise admissibility of calibration draws");
    add_common(bm, bm_o, false);

    std::string sum_out, sum_config;
    auto *sum = app.add_subcommand("summarize", "Posterior summaries and plot-ready tables");
    sum->add_option("--out", sum_out, "Directory holding the archives")->required()->check(CLI::ExistingDirectory);
    sum->add_option("--config", sum_config, "Analysis configuration (JSON)")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(FCAL_ERR_USAGE);
    }

    if (*toy) return report(fcal_generate_toy(toy_seed, no_failures ? 0 : 1, toy_out.c_str()));
    if (*cls) return run_with(cls_o, "classifier", fcal_fit_classifier);
    if (*cal) return run_with(cal_o, "calibration", fcal_fit_calibration);
    if (*cpl) return run_with(cpl_o, "coupled", fcal_fit_coupled);
    if (*bm) return run_with(bm_o, "bmatrix", fcal_b_matrix);
    if (*sum) {
        if (sum_config.empty()) return report(fcal_summarize(nullptr, sum_out.c_str()));
        Overrides o;
        o.config = sum_config;
        o.out = sum_out;
        return run_with(o, "summary", fcal_summarize);
    }
    return static_cast<int>(FCAL_ERR_USAGE);
}
