#pragma once

#include "failcal/error.hpp"
#include "failcal/io.hpp"

namespace failcal {

/// Artifact names inside an output directory.
namespace artifact {
inline constexpr const char *classifier = "classifier";
inline constexpr const char *calibration = "calibration";
inline constexpr const char *coupled = "coupled";
inline constexpr const char *bmatrix = "bmatrix";
inline constexpr const char *checkpoint = "coupled.checkpoint.json";
}  // namespace artifact

/// Thrown by run_fit_coupled after the partial chain and checkpoint are on disk.
class ChainAborted : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Toy data set plus truth.json and a ready-to-run config.json.
json run_generate_toy(std::uint64_t seed, bool with_failures, const fs::path &out_dir);

/// Each run_* writes its artifacts under `out_dir` and returns the summary it also writes as <name>.summary.json.
json run_fit_classifier(const AnalysisConfig &cfg, const fs::path &out_dir);
json run_fit_calibration(const AnalysisConfig &cfg, const fs::path &out_dir);
json run_fit_coupled(const AnalysisConfig &cfg, const fs::path &out_dir);
json run_b_matrix(const AnalysisConfig &cfg, const fs::path &out_dir);
/// Column summaries of every archive in `out_dir`, plus density and CDF tables of the
/// calibration parameters (calibration and coupled chains side by side when both exist).
json run_summarize(const AnalysisConfig *cfg, const fs::path &out_dir);

/// Design over the variable inputs used by the admissibility gate.
AdmissibilityConfig admissibility_from_config(const AnalysisConfig &cfg);

/// Gaussian kernel density estimate with Silverman's bandwidth on `grid`.
Eigen::VectorXd kde(const std::vector<double> &values, const Eigen::VectorXd &grid);
/// Empirical CDF of `values` at each grid point.
Eigen::VectorXd ecdf(std::vector<double> values, const Eigen::VectorXd &grid);

}  // namespace failcal
