#include "failcal/failcal.h"

#include "failcal/error.hpp"
#include "failcal/pipelines.hpp"

#include <new>

using namespace failcal;

struct fcal_analysis {
    AnalysisConfig cfg;
    json pending;  ///< raw document with overrides not yet validated
    bool dirty = false;
};

struct fcal_archive {
    Archive archive;
    std::vector<std::string> columns;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_summary;

fcal_status fail(fcal_status s, std::string msg) {
    last_error = std::move(msg);
    return s;
}

template <class Fn>
fcal_status guarded(Fn fn) {
    try {
        fn();
        last_error.clear();
        return FCAL_OK;
    } catch (const InvalidArgument &e) {
        return fail(FCAL_ERR_USAGE, e.what());
    } catch (const ValidationError &e) {
        return fail(FCAL_ERR_VALIDATION, e.what());
    } catch (const NumericalError &e) {
        return fail(FCAL_ERR_NUMERICAL, e.what());
    } catch (const IoError &e) {
        return fail(FCAL_ERR_IO, e.what());
    } catch (const json::exception &e) {
        return fail(FCAL_ERR_VALIDATION, e.what());
    } catch (const fs::filesystem_error &e) {
        return fail(FCAL_ERR_IO, e.what());
    } catch (const std::bad_alloc &) {
        return fail(FCAL_ERR_INTERNAL, "out of memory");
    } catch (const std::exception &e) {
        return fail(FCAL_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(FCAL_ERR_INTERNAL, "unknown error");
    }
}

fcal_status set_value(fcal_analysis *a, const char *key, json value) {
    if (!a || !key) return fail(FCAL_ERR_USAGE, "null analysis handle or key");
    return guarded([&] {
        set_path(a->pending, key, std::move(value));
        a->dirty = true;
    });
}

/// Parses pending overrides; on failure they are discarded.
void validate(fcal_analysis *a) {
    if (!a->dirty) return;
    a->dirty = false;
    try {
        a->cfg = parse_config(a->pending, a->cfg.base_dir);
    } catch (...) {
        a->pending = a->cfg.raw;
        throw;
    }
}

fs::path out_path(const char *out_dir) {
    if (!out_dir || !*out_dir) throw InvalidArgument("output directory is required");
    fs::path p(out_dir);
    fs::create_directories(p);
    return p;
}

template <class Run>
fcal_status run(fcal_analysis *a, const char *out_dir, Run r) {
    if (!a) return fail(FCAL_ERR_USAGE, "null analysis handle");
    return guarded([&] {
        validate(a);
        last_summary = r(a->cfg, out_path(out_dir)).dump();
    });
}

}  // namespace

extern "C" {

const char *fcal_version(void) { return "0.1.0"; }
const char *fcal_last_error(void) { return last_error.c_str(); }
const char *fcal_last_summary(void) { return last_summary.c_str(); }

fcal_status fcal_generate_toy(uint64_t seed, int with_failures, const char *out_dir) {
    return guarded([&] { last_summary = run_generate_toy(seed, with_failures != 0, out_path(out_dir)).dump(); });
}

fcal_status fcal_analysis_open(const char *config_path, fcal_analysis **out) {
    if (!config_path || !out) return fail(FCAL_ERR_USAGE, "null config path or output pointer");
    *out = nullptr;
    return guarded([&] {
        AnalysisConfig cfg = load_config(config_path);
        json raw = cfg.raw;
        *out = new fcal_analysis{std::move(cfg), std::move(raw)};
    });
}

void fcal_analysis_free(fcal_analysis *a) { delete a; }

fcal_status fcal_analysis_set_int(fcal_analysis *a, const char *key, int64_t value) {
    return set_value(a, key, json(value));
}

fcal_status fcal_analysis_set_double(fcal_analysis *a, const char *key, double value) {
    return set_value(a, key, json(value));
}

fcal_status fcal_analysis_set_string(fcal_analysis *a, const char *key, const char *value) {
    if (!value) return fail(FCAL_ERR_USAGE, "null value");
    return set_value(a, key, json(std::string(value)));
}

fcal_status fcal_analysis_set_json(fcal_analysis *a, const char *key, const char *json_text) {
    if (!json_text) return fail(FCAL_ERR_USAGE, "null value");
    json v;
    if (const auto s = guarded([&] { v = json::parse(json_text); }); s != FCAL_OK) return s;
    return set_value(a, key, std::move(v));
}

fcal_status fcal_analysis_validate(fcal_analysis *a) {
    if (!a) return fail(FCAL_ERR_USAGE, "null analysis handle");
    return guarded([&] { validate(a); });
}

uint64_t fcal_analysis_hash(const fcal_analysis *a) { return a ? a->cfg.hash() : 0; }

fcal_status fcal_fit_classifier(fcal_analysis *a, const char *out_dir) {
    return run(a, out_dir, run_fit_classifier);
}

fcal_status fcal_fit_calibration(fcal_analysis *a, const char *out_dir) {
    return run(a, out_dir, run_fit_calibration);
}

fcal_status fcal_fit_coupled(fcal_analysis *a, const char *out_dir) {
    return run(a, out_dir, run_fit_coupled);
}

fcal_status fcal_b_matrix(fcal_analysis *a, const char *out_dir) { return run(a, out_dir, run_b_matrix); }

fcal_status fcal_summarize(fcal_analysis *a, const char *out_dir) {
    return guarded([&] {
        if (!out_dir) throw InvalidArgument("output directory is required");
        if (a) validate(a);
        last_summary = run_summarize(a ? &a->cfg : nullptr, out_dir).dump();
    });
}

fcal_status fcal_archive_open(const char *stem, fcal_archive **out) {
    if (!stem || !out) return fail(FCAL_ERR_USAGE, "null stem or output pointer");
    *out = nullptr;
    return guarded([&] {
        auto *ar = new fcal_archive{read_archive(stem), {}};
        if (!ar->archive.chains.empty()) ar->columns = ar->archive.chains.front().columns();
        *out = ar;
    });
}

void fcal_archive_free(fcal_archive *ar) { delete ar; }

size_t fcal_archive_chains(const fcal_archive *ar) { return ar ? ar->archive.chains.size() : 0; }

size_t fcal_archive_rows(const fcal_archive *ar, size_t chain) {
    if (!ar || chain >= ar->archive.chains.size()) return 0;
    return ar->archive.chains[chain].size();
}

size_t fcal_archive_columns(const fcal_archive *ar) { return ar ? ar->columns.size() : 0; }

const char *fcal_archive_column_name(const fcal_archive *ar, size_t index) {
    if (!ar || index >= ar->columns.size()) return nullptr;
    return ar->columns[index].c_str();
}

fcal_status fcal_archive_column(const fcal_archive *ar, size_t chain, const char *name, double *out, size_t cap,
                                size_t *written) {
    if (!ar || !name) return fail(FCAL_ERR_USAGE, "null archive or column name");
    if (chain >= ar->archive.chains.size()) return fail(FCAL_ERR_USAGE, "chain index out of range");
    const Chain &ch = ar->archive.chains[chain];
    if (!ch.has(name)) return fail(FCAL_ERR_USAGE, std::string("no column '") + name + "'");
    const std::size_t col = ch.index(name);
    const std::size_t n = ch.size();
    if (out) {
        for (std::size_t r = 0; r < std::min(n, cap); ++r) out[r] = ch.at(r, col);
    }
    if (written) *written = n;
    last_error.clear();
    return FCAL_OK;
}

double fcal_archive_acceptance(const fcal_archive *ar, size_t chain, const char *name) {
    if (!ar || !name || chain >= ar->archive.chains.size()) return -1.0;
    const auto &acc = ar->archive.chains[chain].acceptance;
    const auto it = acc.find(name);
    return it == acc.end() ? -1.0 : it->second.rate();
}

}  // extern "C"
