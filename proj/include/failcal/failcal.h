/* C interface to the failcal library. */
#ifndef FAILCAL_H
#define FAILCAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(FAILCAL_BUILDING_LIBRARY)
#define FCAL_API __attribute__((visibility("default")))
#else
#define FCAL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fcal_status {
    FCAL_OK = 0,
    FCAL_ERR_USAGE = 1,      /* null handle, unknown key, bad argument */
    FCAL_ERR_VALIDATION = 2, /* malformed data or configuration */
    FCAL_ERR_NUMERICAL = 3,  /* factorization failure, non-finite density, aborted chain */
    FCAL_ERR_IO = 4,         /* unreadable or unwritable file */
    FCAL_ERR_INTERNAL = 5
} fcal_status;

typedef struct fcal_analysis fcal_analysis;
typedef struct fcal_archive fcal_archive;

FCAL_API const char *fcal_version(void);

/* Message of the last failing call on this thread; "" if none. */
FCAL_API const char *fcal_last_error(void);

/* JSON summary written by the last successful run on this thread; "" if none. */
FCAL_API const char *fcal_last_summary(void);

/* Writes a toy data set, truth.json and config.json into out_dir. */
FCAL_API fcal_status fcal_generate_toy(uint64_t seed, int with_failures, const char *out_dir);

/* Analysis handle built from a JSON configuration file. */
FCAL_API fcal_status fcal_analysis_open(const char *config_path, fcal_analysis **out);
FCAL_API void fcal_analysis_free(fcal_analysis *a);

/* Overrides keyed by dotted path, e.g. "coupled.mcmc.iterations". They take effect at
 * fcal_analysis_validate or the next run; if validation fails all pending overrides are dropped. */
FCAL_API fcal_status fcal_analysis_set_int(fcal_analysis *a, const char *key, int64_t value);
FCAL_API fcal_status fcal_analysis_set_double(fcal_analysis *a, const char *key, double value);
FCAL_API fcal_status fcal_analysis_set_string(fcal_analysis *a, const char *key, const char *value);
FCAL_API fcal_status fcal_analysis_set_json(fcal_analysis *a, const char *key, const char *json_text);

FCAL_API fcal_status fcal_analysis_validate(fcal_analysis *a);

/* Stable hash of the effective configuration. */
FCAL_API uint64_t fcal_analysis_hash(const fcal_analysis *a);

FCAL_API fcal_status fcal_fit_classifier(fcal_analysis *a, const char *out_dir);
FCAL_API fcal_status fcal_fit_calibration(fcal_analysis *a, const char *out_dir);
FCAL_API fcal_status fcal_fit_coupled(fcal_analysis *a, const char *out_dir);
FCAL_API fcal_status fcal_b_matrix(fcal_analysis *a, const char *out_dir);
/* a may be NULL; prior ranges are then taken from the archives. */
FCAL_API fcal_status fcal_summarize(fcal_analysis *a, const char *out_dir);

/* Read access to a chain archive; stem is the path without ".csv". */
FCAL_API fcal_status fcal_archive_open(const char *stem, fcal_archive **out);
FCAL_API void fcal_archive_free(fcal_archive *ar);
FCAL_API size_t fcal_archive_chains(const fcal_archive *ar);
FCAL_API size_t fcal_archive_rows(const fcal_archive *ar, size_t chain);
FCAL_API size_t fcal_archive_columns(const fcal_archive *ar);
FCAL_API const char *fcal_archive_column_name(const fcal_archive *ar, size_t index);
/* Copies up to cap values of a column; *written receives the chain length. */
FCAL_API fcal_status fcal_archive_column(const fcal_archive *ar, size_t chain, const char *name, double *out,
                                         size_t cap, size_t *written);
FCAL_API double fcal_archive_acceptance(const fcal_archive *ar, size_t chain, const char *name);

#ifdef __cplusplus
}
#endif

#endif
