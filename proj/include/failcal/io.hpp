#pragma once

#include "failcal/calibration.hpp"
#include "failcal/coupled.hpp"
#include "failcal/latent.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace failcal {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Delimited text

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string &name) const;
    bool has(const std::string &name) const;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

Table read_csv(const fs::path &path);
void write_csv(const fs::path &path, const Table &table);

/// Pretty-printed with sorted keys, so equal documents give equal bytes.
void write_json(const fs::path &path, const json &j);
json read_json(const fs::path &path);

// ---------------------------------------------------------------------------
// Configuration

struct InputRange {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
};

struct McmcSection {
    RunSettings run;
    double initial_sd = 0.1;
    AdaptationSettings adaptation;
};

enum class XtildeKind { Grid, Lhs };

struct AnalysisConfig {
    json raw;            ///< document after overrides; hashed into archives
    fs::path base_dir;   ///< data paths are relative to this directory

    fs::path field_path;
    fs::path simulator_path;
    fs::path failures_path;

    std::vector<InputRange> x_inputs;
    std::vector<std::string> t_names;
    std::vector<PriorSpec> t_priors;

    std::uint64_t seed = 1;
    int chains = 1;

    McmcSection classifier_mcmc;
    McmcSection calibration_mcmc;
    McmcSection coupled_mcmc;

    CorrelationFamily eta_family = CorrelationFamily::SquaredExponential;
    CorrelationFamily delta_family = CorrelationFamily::SquaredExponential;
    CorrelationFamily latent_family = CorrelationFamily::Matern32;
    SliceMode mode = SliceMode::C2;
    long loocv_stride = 200;
    bool record_latent = true;

    double p_tol = 0.0;
    XtildeKind xtilde = XtildeKind::Lhs;
    Eigen::Index xtilde_size = 200;

    long bmatrix_latent_draws = 200;
    long bmatrix_theta_draws = 500;
    double low_cut = 0.1;
    double high_cut = 0.9;
    unsigned threads = 1;

    std::optional<fs::path> warm_classifier;
    std::optional<fs::path> warm_calibration;

    Eigen::Index dx() const { return static_cast<Eigen::Index>(x_inputs.size()); }
    Eigen::Index dt() const { return static_cast<Eigen::Index>(t_priors.size()); }
    CalibrationModel calibration_model() const;
    LatentModel latent_model() const;
    /// FNV-1a of the canonical JSON dump.
    std::uint64_t hash() const;
};

/// Parses and validates a configuration document.
AnalysisConfig parse_config(const json &doc, const fs::path &base_dir);
AnalysisConfig load_config(const fs::path &path);
/// Sets a dotted key ("coupled.mcmc.iterations") in a JSON document, creating objects as needed.
void set_path(json &doc, const std::string &dotted, json value);
PriorSpec prior_from_json(const json &j);
json prior_to_json(const PriorSpec &p);

// ---------------------------------------------------------------------------
// Datasets

/// Natural-unit contents of the three data files.
struct RawData {
    Eigen::VectorXd y;
    Design x;
    Eigen::VectorXd eta;
    Design xstar;
    Design tstar;
    Design fail_design;  ///< all runs, (x, t) columns
    std::vector<int> z;
};

RawData read_raw_data(const AnalysisConfig &cfg);
void write_raw_data(const RawData &raw, const fs::path &dir, const std::vector<std::string> &x_names,
                    const std::vector<std::string> &t_names);

struct Datasets {
    CalibrationDataset calibration;
    FailureDataset failures;
};

/// Scales inputs to [0, 1], standardizes (y, eta) by their sample SD and
/// canonicalizes the failure ordering. Errors name the file and data row.
Datasets prepare_datasets(const RawData &raw, const AnalysisConfig &cfg);

// ---------------------------------------------------------------------------
// Toy problem

struct ToySpec {
    std::uint64_t seed = 12;
    double theta = 0.4;
    double var_eta = 10.0;
    double lambda_x = 1.0;
    double lambda_t = 2.0;
    double var_eps = 0.002;
    Eigen::Index nx = 18;
    Eigen::Index nt = 8;
    bool failures = true;
    /// (x index, t index) cells that fail; empty selects the default pattern.
    std::vector<std::pair<int, int>> failure_cells;
};

/// delta(x) = 0.1 (x - 0.2)^2 - 0.5 (x - 0.2).
double toy_discrepancy(double x);

/// Grid cells (x index, t index) marked as failures.
std::vector<std::pair<int, int>> toy_failure_cells(const ToySpec &spec);

struct ToyTruth {
    double theta = 0.4;
    double band_lower = 0.0;  ///< largest failing t below theta
    double band_upper = 1.0;  ///< smallest failing t above theta
    double success_lower = 0.0;  ///< smallest t row with no failures
    double success_upper = 1.0;  ///< largest t row with no failures
    Eigen::Index n = 0, m = 0, m0 = 0;
};

struct ToyData {
    RawData raw;
    ToyTruth truth;
};

ToyData generate_toy(const ToySpec &spec);
/// Writes field.csv, simulator.csv, failures.csv, truth.json and config.json into `dir`.
void write_toy(const ToyData &toy, const ToySpec &spec, const fs::path &dir);
json toy_config_json();

// ---------------------------------------------------------------------------
// Chain archives: <stem>.csv plus <stem>.meta.json

struct ArchiveMeta {
    std::string kind;  ///< "classifier", "calibration", "coupled"
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    json extra = json::object();
};

/// Merges per-chain draws into one archive with a leading "chain" column.
void write_archive(const fs::path &stem, const std::vector<Chain> &chains, const ArchiveMeta &meta);
struct Archive {
    std::vector<Chain> chains;
    json meta;
};
Archive read_archive(const fs::path &stem);

json vector_to_json(const Eigen::VectorXd &v);
Eigen::VectorXd vector_from_json(const json &j);
json matrix_to_json(const Eigen::MatrixXd &m);
Eigen::MatrixXd matrix_from_json(const json &j);

json calibration_state_to_json(const CalibrationState &s);
CalibrationState calibration_state_from_json(const json &j, const std::vector<PriorSpec> &priors);
json latent_state_to_json(const LatentState &s);
LatentState latent_state_from_json(const json &j);
json checkpoint_to_json(const CoupledCheckpoint &c);
CoupledCheckpoint checkpoint_from_json(const json &j, const std::vector<PriorSpec> &priors);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a(const std::string &s);

}  // namespace failcal
