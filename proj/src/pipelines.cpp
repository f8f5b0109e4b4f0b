#include "failcal/pipelines.hpp"

#include "failcal/design.hpp"
#include "failcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

namespace failcal {

namespace {

Datasets load_data(const AnalysisConfig &cfg) { return prepare_datasets(read_raw_data(cfg), cfg); }

fs::path stem(const fs::path &dir, const char *name) { return dir / name; }

fs::path with_suffix(const fs::path &stem_path, const char *suffix) {
    fs::path p = stem_path;
    p += suffix;
    return p;
}

/// Runs fn(c) for every chain, on up to `threads` threads; results keep chain order.
template <class Result, class Fn>
std::vector<Result> run_chains(int chains, unsigned threads, Fn fn) {
    std::vector<std::optional<Result>> out(static_cast<std::size_t>(chains));
    std::vector<std::exception_ptr> errors(out.size());
    auto one = [&](std::size_t c) {
        try {
            out[c].emplace(fn(static_cast<std::uint64_t>(c)));
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    const unsigned workers = std::min<unsigned>(std::max(1u, threads), static_cast<unsigned>(chains));
    if (workers <= 1) {
        for (std::size_t c = 0; c < out.size(); ++c) one(c);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t c = w; c < out.size(); c += workers) one(c);
            });
        }
        for (auto &t : pool) t.join();
    }
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<Result> res;
    for (auto &o : out) res.push_back(std::move(*o));
    return res;
}

json acceptance_json(const Chain &chain) {
    json j = json::object();
    for (const auto &[name, a] : chain.acceptance) j[name] = a.rate();
    return j;
}

json summary_json(const ColumnSummary &s) {
    return json{{"mean", s.mean}, {"sd", s.sd},   {"q025", s.q025}, {"median", s.median},
                {"q975", s.q975}, {"min", s.min}, {"max", s.max}};
}

/// Column summaries over all chains, skipping latent-vector columns.
json column_summaries(const std::vector<Chain> &chains) {
    json out = json::object();
    if (chains.empty()) return out;
    for (const auto &name : chains.front().columns()) {
        if (name.rfind("zeta", 0) == 0) continue;
        std::vector<double> v;
        for (const auto &ch : chains) {
            const auto col = ch.column(name);
            v.insert(v.end(), col.begin(), col.end());
        }
        if (!v.empty()) out[name] = summary_json(summarize_values(name, v));
    }
    return out;
}

std::vector<double> pooled(const std::vector<Chain> &chains, const std::string &name) {
    std::vector<double> v;
    for (const auto &ch : chains) {
        const auto col = ch.column(name);
        v.insert(v.end(), col.begin(), col.end());
    }
    return v;
}

json priors_json(const AnalysisConfig &cfg) {
    json p = json::array();
    for (std::size_t i = 0; i < cfg.t_priors.size(); ++i) {
        json e = prior_to_json(cfg.t_priors[i]);
        e["name"] = cfg.t_names[i];
        p.push_back(e);
    }
    return p;
}

ArchiveMeta meta_for(const AnalysisConfig &cfg, const char *kind) {
    ArchiveMeta m;
    m.kind = kind;
    m.seed = cfg.seed;
    m.config_hash = cfg.hash();
    m.extra["theta_priors"] = priors_json(cfg);
    return m;
}

/// Naive bounds from the config, one [lower, upper] pair per calibration input.
std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> naive_bounds(const AnalysisConfig &cfg) {
    const json *bm = cfg.raw.contains("bmatrix") ? &cfg.raw.at("bmatrix") : nullptr;
    if (!bm || !bm->contains("naive_bounds")) return std::nullopt;
    const json &nb = bm->at("naive_bounds");
    if (static_cast<Eigen::Index>(nb.size()) != cfg.dt()) throw ValidationError("naive_bounds needs one pair per t input");
    Eigen::VectorXd lo(cfg.dt()), hi(cfg.dt());
    for (Eigen::Index i = 0; i < cfg.dt(); ++i) {
        lo[i] = nb[std::size_t(i)].at(0).get<double>();
        hi[i] = nb[std::size_t(i)].at(1).get<double>();
    }
    return std::make_pair(lo, hi);
}

std::vector<Eigen::VectorXd> theta_draws(const std::vector<Chain> &chains, const std::vector<std::string> &names) {
    std::vector<Eigen::VectorXd> out;
    for (const auto &ch : chains) {
        std::vector<std::size_t> idx;
        for (const auto &n : names) idx.push_back(ch.index(n));
        for (std::size_t r = 0; r < ch.size(); ++r) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k) v[Eigen::Index(k)] = ch.at(r, idx[k]);
            out.push_back(std::move(v));
        }
    }
    return out;
}

/// `count` evenly spaced indices into [0, n).
std::vector<std::size_t> even_subsample(std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    count = std::min(count, n);
    for (std::size_t k = 0; k < count; ++k) idx.push_back(k * n / count);
    return idx;
}

fs::path archive_stem(const fs::path &p, const char *name) {
    return fs::is_directory(p) ? p / name : p;
}

json read_optional_path(const json &section, const char *key) {
    return section.is_object() && section.contains(key) ? section.at(key) : json();
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::VectorXd kde(const std::vector<double> &values, const Eigen::VectorXd &grid) {
    if (values.empty()) throw InvalidArgument("kde: no values");
    const auto s = summarize_values("", values);
    const double iqr = quantile(values, 0.75) - quantile(values, 0.25);
    double spread = s.sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    double h = 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
    if (!(h > 0.0)) h = 1e-3 * std::max(1.0, std::abs(s.mean));
    Eigen::VectorXd d = Eigen::VectorXd::Zero(grid.size());
    const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (double v : values) {
            const double u = (grid[g] - v) / h;
            acc += std::exp(-0.5 * u * u);
        }
        d[g] = acc * norm;
    }
    return d;
}

Eigen::VectorXd ecdf(std::vector<double> values, const Eigen::VectorXd &grid) {
    if (values.empty()) throw InvalidArgument("ecdf: no values");
    std::sort(values.begin(), values.end());
    Eigen::VectorXd f(grid.size());
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        const auto it = std::upper_bound(values.begin(), values.end(), grid[g]);
        f[g] = static_cast<double>(it - values.begin()) / static_cast<double>(values.size());
    }
    return f;
}

AdmissibilityConfig admissibility_from_config(const AnalysisConfig &cfg) {
    if (cfg.mode == SliceMode::C1) return AdmissibilityConfig::uniform(SliceMode::C1, Design(0, cfg.dx()), cfg.p_tol);
    if (cfg.dx() == 0) throw ValidationError("C2 admissibility needs at least one variable input");
    Design xt;
    if (cfg.xtilde == XtildeKind::Grid) {
        xt = equispaced_design(cfg.xtilde_size, cfg.dx());
    } else {
        Rng rng(derive_seed(cfg.seed, {stream::design}));
        xt = maximin_lhs(cfg.xtilde_size, cfg.dx(), rng, 50);
    }
    return AdmissibilityConfig::uniform(SliceMode::C2, std::move(xt), cfg.p_tol);
}

json run_generate_toy(std::uint64_t seed, bool with_failures, const fs::path &out_dir) {
    ToySpec spec;
    spec.seed = seed;
    spec.failures = with_failures;
    const ToyData toy = generate_toy(spec);
    write_toy(toy, spec, out_dir);
    return read_json(out_dir / "truth.json");
}

json run_fit_classifier(const AnalysisConfig &cfg, const fs::path &out_dir) {
    const Datasets ds = load_data(cfg);
    ds.failures.validate(true);
    const LatentModel lm = cfg.latent_model();
    const McmcSection &mc = cfg.classifier_mcmc;

    auto results = run_chains<ClassifierResult>(cfg.chains, cfg.threads, [&](std::uint64_t c) {
        ClassifierRunConfig rc;
        rc.run = mc.run;
        rc.loocv_stride = cfg.loocv_stride;
        rc.record_latent = cfg.record_latent;
        rc.adaptation = mc.adaptation;
        rc.initial_sd = mc.initial_sd;
        return run_classifier_mcmc(ds.failures, lm, rc, cfg.seed, c);
    });

    ArchiveMeta meta = meta_for(cfg, artifact::classifier);
    meta.extra["mode"] = cfg.mode == SliceMode::C1 ? "c1" : "c2";
    meta.extra["kernel"] = std::string(family_name(cfg.latent_family));
    std::vector<Chain> chains;
    json per_chain = json::array();
    for (const auto &r : results) {
        chains.push_back(r.chain);
        per_chain.push_back({{"final_state", latent_state_to_json(r.final_state)},
                             {"lambda_cov", matrix_to_json(r.lambda_cov)}});
    }
    meta.extra["chains"] = per_chain;
    write_archive(stem(out_dir, artifact::classifier), chains, meta);

    json summary{{"kind", "classifier"}, {"chains", cfg.chains}, {"draws", chains.front().size() * chains.size()}};
    std::vector<double> loocv;
    json acc = json::array();
    for (const auto &ch : chains) {
        for (const auto &[t, v] : ch.diagnostics.at("loocv")) loocv.push_back(v);
        acc.push_back(acceptance_json(ch));
    }
    if (!loocv.empty()) {
        summary["loocv"] = {{"evaluations", loocv.size()},
                            {"median", quantile(loocv, 0.5)},
                            {"q025", quantile(loocv, 0.025)},
                            {"q975", quantile(loocv, 0.975)},
                            {"mean", summarize_values("loocv", loocv).mean}};
    }
    summary["acceptance"] = acc;
    if (!chains.front().empty()) summary["parameters"] = column_summaries(chains);
    write_json(with_suffix(stem(out_dir, artifact::classifier), ".summary.json"), summary);
    return summary;
}

json run_fit_calibration(const AnalysisConfig &cfg, const fs::path &out_dir) {
    const Datasets ds = load_data(cfg);
    const CalibrationModel model = cfg.calibration_model();
    const McmcSection &mc = cfg.calibration_mcmc;

    auto results = run_chains<CalibrationResult>(cfg.chains, cfg.threads, [&](std::uint64_t c) {
        CalibrationRunConfig rc;
        rc.run = mc.run;
        rc.proposals.adaptation = mc.adaptation;
        rc.proposals.initial_sd = mc.initial_sd;
        return run_calibration_mcmc(ds.calibration, model, rc, cfg.seed, c);
    });

    ArchiveMeta meta = meta_for(cfg, artifact::calibration);
    meta.extra["output_scale"] = ds.calibration.output_scale;
    std::vector<Chain> chains;
    json per_chain = json::array();
    for (const auto &r : results) {
        chains.push_back(r.chain);
        per_chain.push_back({{"final_state", calibration_state_to_json(r.final_state)},
                             {"etadelta_cov", matrix_to_json(r.etadelta_cov)},
                             {"theta_cov", matrix_to_json(r.theta_cov)}});
    }
    meta.extra["chains"] = per_chain;
    write_archive(stem(out_dir, artifact::calibration), chains, meta);

    json summary{{"kind", "calibration"},
                 {"chains", cfg.chains},
                 {"draws", chains.front().size() * chains.size()},
                 {"output_scale", ds.calibration.output_scale}};
    json acc = json::array();
    for (const auto &ch : chains) acc.push_back(acceptance_json(ch));
    summary["acceptance"] = acc;
    if (!chains.front().empty()) {
        summary["parameters"] = column_summaries(chains);
        if (auto nb = naive_bounds(cfg)) {
            summary["pi_hat_naive"] = pi_hat(theta_draws(chains, cfg.t_names), nb->first, nb->second);
        }
    }
    write_json(with_suffix(stem(out_dir, artifact::calibration), ".summary.json"), summary);
    return summary;
}

json run_fit_coupled(const AnalysisConfig &cfg, const fs::path &out_dir) {
    const Datasets ds = load_data(cfg);
    ds.failures.validate(true);
    const CalibrationModel model = cfg.calibration_model();
    const LatentModel lm = cfg.latent_model();
    const AdmissibilityConfig adm = admissibility_from_config(cfg);
    const McmcSection &mc = cfg.coupled_mcmc;
    const json coupled = cfg.raw.value("coupled", json::object());

    std::optional<Archive> warm_cls, warm_cal;
    if (cfg.warm_classifier) warm_cls = read_archive(archive_stem(*cfg.warm_classifier, artifact::classifier));
    if (cfg.warm_calibration) warm_cal = read_archive(archive_stem(*cfg.warm_calibration, artifact::calibration));

    std::vector<CoupledCheckpoint> resume;
    if (const json r = read_optional_path(coupled, "resume"); !r.is_null()) {
        const json doc = read_json(cfg.base_dir / r.get<std::string>());
        for (const auto &c : doc.at("chains")) resume.push_back(checkpoint_from_json(c, cfg.t_priors));
        if (static_cast<int>(resume.size()) != cfg.chains) throw ValidationError("checkpoint chain count differs from config");
    }
    const long stop_after = coupled.value("stop_after", 0L);

    auto results = run_chains<CoupledResult>(cfg.chains, cfg.threads, [&](std::uint64_t c) {
        CoupledRunConfig rc;
        rc.run = mc.run;
        rc.proposals.adaptation = mc.adaptation;
        rc.proposals.initial_sd = mc.initial_sd;
        rc.loocv_stride = 0;
        rc.record_latent = false;
        rc.stop_after = stop_after;
        CalibrationState cal_state;
        LatentState lat_state;
        Eigen::MatrixXd ed_cov, th_cov, lam_cov;
        if (warm_cal) {
            const json &m = warm_cal->meta.at("chains").at(c % warm_cal->meta.at("chains").size());
            cal_state = calibration_state_from_json(m.at("final_state"), cfg.t_priors);
            ed_cov = matrix_from_json(m.at("etadelta_cov"));
            th_cov = matrix_from_json(m.at("theta_cov"));
            rc.calibration_state = &cal_state;
            rc.etadelta_cov = &ed_cov;
            rc.theta_cov = &th_cov;
        }
        if (warm_cls) {
            const json &m = warm_cls->meta.at("chains").at(c % warm_cls->meta.at("chains").size());
            lat_state = latent_state_from_json(m.at("final_state"));
            lam_cov = matrix_from_json(m.at("lambda_cov"));
            rc.latent_state = &lat_state;
            rc.lambda_cov = &lam_cov;
        }
        if (!resume.empty()) rc.resume = &resume[c];
        return run_coupled_mcmc(ds.calibration, model, ds.failures, lm, adm, rc, cfg.seed, c);
    });

    ArchiveMeta meta = meta_for(cfg, artifact::coupled);
    meta.extra["mode"] = cfg.mode == SliceMode::C1 ? "c1" : "c2";
    meta.extra["ptol"] = cfg.p_tol;
    meta.extra["xtilde_rows"] = adm.slice_size();
    meta.extra["output_scale"] = ds.calibration.output_scale;
    std::vector<Chain> chains;
    json per_chain = json::array();
    json checkpoints = json::array();
    std::string failure;
    for (const auto &r : results) {
        chains.push_back(r.chain);
        per_chain.push_back({{"final_state", calibration_state_to_json(r.calibration_final)},
                             {"latent_state", latent_state_to_json(r.latent_final)},
                             {"iterations_done", r.iterations_done},
                             {"completed", r.completed}});
        if (r.checkpoint) checkpoints.push_back(checkpoint_to_json(*r.checkpoint));
        if (!r.failure.empty() && failure.empty()) failure = r.failure;
    }
    meta.extra["chains"] = per_chain;
    write_archive(stem(out_dir, artifact::coupled), chains, meta);
    if (!checkpoints.empty()) write_json(out_dir / artifact::checkpoint, json{{"chains", checkpoints}});

    json summary{{"kind", "coupled"}, {"chains", cfg.chains}, {"draws", chains.front().size() * chains.size()}};
    json acc = json::array();
    for (const auto &ch : chains) acc.push_back(acceptance_json(ch));
    summary["acceptance"] = acc;
    if (!chains.front().empty()) {
        summary["parameters"] = column_summaries(chains);
        const auto flags = pooled(chains, "admissible");
        summary["admissible_fraction"] =
            static_cast<double>(std::count(flags.begin(), flags.end(), 1.0)) / static_cast<double>(flags.size());
        if (auto nb = naive_bounds(cfg)) {
            summary["pi_hat_naive"] = pi_hat(theta_draws(chains, cfg.t_names), nb->first, nb->second);
        }
    }
    if (!checkpoints.empty()) summary["checkpoint"] = (out_dir / artifact::checkpoint).string();
    write_json(with_suffix(stem(out_dir, artifact::coupled), ".summary.json"), summary);
    if (!failure.empty()) throw ChainAborted("coupled chain stopped early: " + failure);
    return summary;
}

json run_b_matrix(const AnalysisConfig &cfg, const fs::path &out_dir) {
    const Datasets ds = load_data(cfg);
    ds.failures.validate(true);
    const LatentModel lm = cfg.latent_model();
    const AdmissibilityConfig adm = admissibility_from_config(cfg);
    const json bm = cfg.raw.value("bmatrix", json::object());

    fs::path cls_stem = stem(out_dir, artifact::classifier);
    fs::path cal_stem = stem(out_dir, artifact::calibration);
    if (const json p = read_optional_path(bm, "classifier"); !p.is_null()) {
        cls_stem = archive_stem(cfg.base_dir / p.get<std::string>(), artifact::classifier);
    }
    if (const json p = read_optional_path(bm, "calibration"); !p.is_null()) {
        cal_stem = archive_stem(cfg.base_dir / p.get<std::string>(), artifact::calibration);
    }
    const Archive cls = read_archive(cls_stem);
    const Archive cal = read_archive(cal_stem);

    std::vector<LatentState> latent_all;
    for (const auto &ch : cls.chains) {
        auto s = latent_states_from_chain(ch);
        latent_all.insert(latent_all.end(), s.begin(), s.end());
    }
    for (const auto &s : latent_all) {
        if (!s.consistent_with(ds.failures.z)) throw ValidationError("classifier archive does not match the failure data");
    }
    const std::vector<Eigen::VectorXd> theta_all = theta_draws(cal.chains, cfg.t_names);

    std::vector<LatentState> latent;
    for (auto i : even_subsample(latent_all.size(), std::size_t(cfg.bmatrix_latent_draws))) latent.push_back(latent_all[i]);
    std::vector<Eigen::VectorXd> theta_nat, theta_unit;
    for (auto j : even_subsample(theta_all.size(), std::size_t(cfg.bmatrix_theta_draws))) {
        theta_nat.push_back(theta_all[j]);
        theta_unit.push_back(Theta::from_natural(theta_all[j], cfg.t_priors).unit);
    }
    if (latent.empty() || theta_unit.empty()) throw ValidationError("B-matrix needs nonempty classifier and calibration chains");

    const BMatrix b = build_b_matrix(theta_unit, latent, ds.failures, lm, adm, cfg.seed, cfg.threads);
    const AdmissibilitySummary s = admissibility_summary(b, cfg.low_cut, cfg.high_cut);

    Table entries;
    for (Eigen::Index j = 0; j < b.cols(); ++j) entries.header.push_back("theta" + std::to_string(j + 1));
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        std::vector<double> row(std::size_t(b.cols()));
        for (Eigen::Index j = 0; j < b.cols(); ++j) row[std::size_t(j)] = b.entries(i, j);
        entries.rows.push_back(std::move(row));
    }
    write_csv(out_dir / "bmatrix.csv", entries);

    Table rows;
    rows.header = {"latent_draw", "pi"};
    for (Eigen::Index i = 0; i < b.rows(); ++i) rows.rows.push_back({double(i + 1), s.row_means[i]});
    write_csv(out_dir / "bmatrix.rows.csv", rows);

    Table cols;
    cols.header = cfg.t_names;
    cols.header.insert(cols.header.end(), {"pi_hat", "weight"});
    const double total = s.col_means.sum();
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        std::vector<double> row(theta_nat[std::size_t(j)].data(),
                                theta_nat[std::size_t(j)].data() + theta_nat[std::size_t(j)].size());
        row.push_back(s.col_means[j]);
        row.push_back(total > 0.0 ? s.col_means[j] / total : 0.0);
        cols.rows.push_back(std::move(row));
    }
    write_csv(out_dir / "bmatrix.columns.csv", cols);

    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(101, 0.0, 1.0);
    const std::vector<double> pij(s.col_means.data(), s.col_means.data() + s.col_means.size());
    Table dist;
    dist.header = {"pi_hat", "density", "cdf"};
    const Eigen::VectorXd dens = kde(pij, grid), cdf = ecdf(pij, grid);
    for (Eigen::Index g = 0; g < grid.size(); ++g) dist.rows.push_back({grid[g], dens[g], cdf[g]});
    write_csv(out_dir / "bmatrix.pi_hat.csv", dist);

    json summary{{"kind", "bmatrix"},
                 {"rows", b.rows()},
                 {"cols", b.cols()},
                 {"xtilde_rows", adm.slice_size()},
                 {"ptol", adm.p_tol},
                 {"low_cut", s.low_cut},
                 {"high_cut", s.high_cut},
                 {"always_fail", s.always_fail},
                 {"always_succeed", s.always_succeed},
                 {"pi_min", s.pi_min},
                 {"pi_max", s.pi_max},
                 {"pi_mean", s.pi_mean}};
    if (auto nb = naive_bounds(cfg)) summary["pi_hat_naive"] = pi_hat(theta_all, nb->first, nb->second);
    write_json(with_suffix(stem(out_dir, artifact::bmatrix), ".summary.json"), summary);
    return summary;
}

json run_summarize(const AnalysisConfig *cfg, const fs::path &out_dir) {
    json summary = json::object();
    std::optional<Archive> cal, cpl;
    for (const char *kind : {artifact::classifier, artifact::calibration, artifact::coupled}) {
        const fs::path st = stem(out_dir, kind);
        if (!fs::exists(with_suffix(st, ".meta.json"))) continue;
        Archive a = read_archive(st);
        json s{{"draws", 0}, {"config_hash", a.meta.value("config_hash", "")}};
        std::size_t n = 0;
        json acc = json::array();
        for (const auto &ch : a.chains) {
            n += ch.size();
            acc.push_back(acceptance_json(ch));
        }
        s["draws"] = n;
        s["acceptance"] = acc;
        if (n > 0) s["parameters"] = column_summaries(a.chains);
        if (std::string(kind) == artifact::classifier && !a.chains.empty()) {
            std::vector<double> loocv;
            for (const auto &ch : a.chains) {
                if (auto it = ch.diagnostics.find("loocv"); it != ch.diagnostics.end()) {
                    for (const auto &[t, v] : it->second) loocv.push_back(v);
                }
            }
            if (!loocv.empty()) {
                s["loocv"] = {{"median", quantile(loocv, 0.5)}, {"q025", quantile(loocv, 0.025)},
                              {"q975", quantile(loocv, 0.975)}};
            }
        }
        summary[kind] = s;
        if (std::string(kind) == artifact::calibration && n > 0) cal = std::move(a);
        if (std::string(kind) == artifact::coupled && n > 0) cpl = std::move(a);
    }
    if (summary.empty()) throw ValidationError("no chain archives found in '" + out_dir.string() + "'");

    // Density and CDF tables for each calibration parameter.
    const Archive *ref = cal ? &*cal : (cpl ? &*cpl : nullptr);
    if (ref) {
        const json priors = ref->meta.value("theta_priors", json::array());
        json files = json::array();
        for (const auto &p : priors) {
            const std::string name = p.at("name").get<std::string>();
            double lo = p.at("lower").get<double>(), hi = p.at("upper").get<double>();
            if (cfg) {
                for (std::size_t i = 0; i < cfg->t_names.size(); ++i) {
                    if (cfg->t_names[i] == name) {
                        lo = cfg->t_priors[i].lower;
                        hi = cfg->t_priors[i].upper;
                    }
                }
            }
            const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(201, lo, hi);
            Table dens, cdf;
            dens.header = {name};
            cdf.header = {name};
            std::vector<Eigen::VectorXd> dcols, ccols;
            for (const Archive *a : {cal ? &*cal : nullptr, cpl ? &*cpl : nullptr}) {
                if (!a) continue;
                const std::string label = a->meta.value("kind", "chain");
                const auto v = pooled(a->chains, name);
                dens.header.push_back(label);
                cdf.header.push_back(label);
                dcols.push_back(kde(v, grid));
                ccols.push_back(ecdf(v, grid));
            }
            for (Eigen::Index g = 0; g < grid.size(); ++g) {
                std::vector<double> dr{grid[g]}, cr{grid[g]};
                for (const auto &c : dcols) dr.push_back(c[g]);
                for (const auto &c : ccols) cr.push_back(c[g]);
                dens.rows.push_back(std::move(dr));
                cdf.rows.push_back(std::move(cr));
            }
            write_csv(out_dir / (name + ".density.csv"), dens);
            write_csv(out_dir / (name + ".cdf.csv"), cdf);
            files.push_back(name + ".density.csv");
            files.push_back(name + ".cdf.csv");
        }
        summary["plot_data"] = files;
    }
    write_json(out_dir / "summary.json", summary);
    return summary;
}

}  // namespace failcal
