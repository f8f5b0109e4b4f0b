#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace failcal {

/// A design: one input configuration per row, columns already scaled to [0, 1].
using Design = Eigen::MatrixXd;

enum class CorrelationFamily {
    SquaredExponential,  ///< exp(-(l/lambda)^2)
    Matern32,            ///< (1 + sqrt(6)|l|/lambda) exp(-sqrt(6)|l|/lambda)
};

CorrelationFamily parse_family(std::string_view name);
std::string_view family_name(CorrelationFamily family);

/// One-dimensional correlation R(|l|; lambda). Throws InvalidArgument when
/// lambda <= 0 or either argument is not finite.
double correlation(CorrelationFamily family, double lengthscale, double distance);

struct CorrelationSpec {
    CorrelationFamily family = CorrelationFamily::SquaredExponential;
    double lengthscale = 1.0;

    double operator()(double distance) const { return correlation(family, lengthscale, distance); }
};

/// Separable kernel sigma^2 * prod_d R(|a_d - b_d|; lambda_d).
///
/// The family is shared by all dimensions of one process.
class ProductKernel {
public:
    ProductKernel(CorrelationFamily family, Eigen::VectorXd lengthscales, double variance = 1.0);

    double operator()(const Eigen::Ref<const Eigen::RowVectorXd> &a,
                      const Eigen::Ref<const Eigen::RowVectorXd> &b) const;

    Eigen::Index dimension() const { return lengthscales_.size(); }
    CorrelationFamily family() const { return family_; }
    const Eigen::VectorXd &lengthscales() const { return lengthscales_; }
    double variance() const { return variance_; }

private:
    CorrelationFamily family_;
    Eigen::VectorXd lengthscales_;
    double variance_;
};

/// Rectangular cross-covariance block, entry (i, j) = k(a_i, b_j).
Eigen::MatrixXd cov_matrix(const ProductKernel &k, const Design &a, const Design &b);

/// Square covariance of a design with itself; exactly symmetric.
Eigen::MatrixXd cov_matrix(const ProductKernel &k, const Design &a);

/// Cholesky factor of C + jitter * I together with the jitter that was needed.
struct JitteredCholesky {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;

    Eigen::MatrixXd lower() const { return llt.matrixL(); }
    double log_det() const;
    Eigen::Index size() const { return llt.matrixLLT().rows(); }
};

/// Factorizes a symmetric matrix, escalating a diagonal nugget on failure.
///
/// The first attempt adds nothing. After that the nugget runs through
/// 1e-8, 1e-7, ..., 1e-4 times `scale`, where `scale` defaults to the mean of
/// the diagonal. Throws FactorizationError listing the ladder when every rung
/// fails.
JitteredCholesky chol_jitter(const Eigen::MatrixXd &c, double scale = -1.0);

}  // namespace failcal
