#include "failcal/kernels.hpp"

#include "failcal/error.hpp"

#include <cmath>
#include <sstream>

namespace failcal {

namespace {

constexpr double kSqrt6 = 2.449489742783178098197284074705891391965947480656670128432692567;

inline double corr_unchecked(CorrelationFamily family, double lengthscale, double distance) {
    const double r = std::abs(distance) / lengthscale;
    switch (family) {
    case CorrelationFamily::SquaredExponential:
        return std::exp(-r * r);
    case CorrelationFamily::Matern32: {
        const double s = kSqrt6 * r;
        return (1.0 + s) * std::exp(-s);
    }
    }
    return 0.0;
}

}  // namespace

CorrelationFamily parse_family(std::string_view name) {
    if (name == "sqexp" || name == "squared_exponential" || name == "se") {
        return CorrelationFamily::SquaredExponential;
    }
    if (name == "matern32" || name == "matern" || name == "matern1.5") return CorrelationFamily::Matern32;
    throw ValidationError("unknown correlation family '" + std::string(name) + "'");
}

std::string_view family_name(CorrelationFamily family) {
    return family == CorrelationFamily::SquaredExponential ? "sqexp" : "matern32";
}

double correlation(CorrelationFamily family, double lengthscale, double distance) {
    if (!std::isfinite(distance)) throw InvalidArgument("correlation: non-finite distance");
    if (!std::isfinite(lengthscale) || lengthscale <= 0.0) {
        throw InvalidArgument("correlation: lengthscale must be positive and finite");
    }
    return corr_unchecked(family, lengthscale, distance);
}

ProductKernel::ProductKernel(CorrelationFamily family, Eigen::VectorXd lengthscales, double variance)
    : family_(family), lengthscales_(std::move(lengthscales)), variance_(variance) {
    for (Eigen::Index d = 0; d < lengthscales_.size(); ++d) {
        if (!std::isfinite(lengthscales_[d]) || lengthscales_[d] <= 0.0) {
            throw InvalidArgument("ProductKernel: lengthscales must be positive and finite");
        }
    }
    if (!std::isfinite(variance_) || variance_ < 0.0) {
        throw InvalidArgument("ProductKernel: variance must be nonnegative");
    }
}

double ProductKernel::operator()(const Eigen::Ref<const Eigen::RowVectorXd> &a,
                                 const Eigen::Ref<const Eigen::RowVectorXd> &b) const {
    if (a.size() != dimension() || b.size() != dimension()) {
        throw InvalidArgument("ProductKernel: point dimension does not match kernel");
    }
    double v = variance_;
    for (Eigen::Index d = 0; d < dimension(); ++d) {
        const double l = a[d] - b[d];
        if (!std::isfinite(l)) throw InvalidArgument("ProductKernel: non-finite coordinate");
        v *= corr_unchecked(family_, lengthscales_[d], l);
    }
    return v;
}

Eigen::MatrixXd cov_matrix(const ProductKernel &k, const Design &a, const Design &b) {
    if (a.cols() != k.dimension() || b.cols() != k.dimension()) {
        throw InvalidArgument("cov_matrix: design dimension does not match kernel");
    }
    if (!a.allFinite() || !b.allFinite()) throw InvalidArgument("cov_matrix: non-finite design");
    const auto &lam = k.lengthscales();
    const auto family = k.family();
    Eigen::MatrixXd out(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            double v = k.variance();
            for (Eigen::Index d = 0; d < lam.size(); ++d) v *= corr_unchecked(family, lam[d], a(i, d) - b(j, d));
            out(i, j) = v;
        }
    }
    return out;
}

Eigen::MatrixXd cov_matrix(const ProductKernel &k, const Design &a) {
    if (a.cols() != k.dimension()) throw InvalidArgument("cov_matrix: design dimension does not match kernel");
    if (!a.allFinite()) throw InvalidArgument("cov_matrix: non-finite design");
    const auto &lam = k.lengthscales();
    const auto family = k.family();
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        out(j, j) = k.variance();
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double v = k.variance();
            for (Eigen::Index d = 0; d < lam.size(); ++d) v *= corr_unchecked(family, lam[d], a(i, d) - a(j, d));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

double JitteredCholesky::log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

JitteredCholesky chol_jitter(const Eigen::MatrixXd &c, double scale) {
    if (c.rows() != c.cols()) throw InvalidArgument("chol_jitter: matrix is not square");
    const Eigen::Index n = c.rows();
    if (n == 0) return {};
    if (!c.allFinite()) throw FactorizationError("chol_jitter: matrix has non-finite entries", {});
    if (scale <= 0.0) scale = c.diagonal().mean();
    if (!(scale > 0.0)) scale = 1.0;

    std::vector<double> ladder{0.0};
    for (double f : {1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) ladder.push_back(f * scale);

    JitteredCholesky out;
    for (double jitter : ladder) {
        if (jitter == 0.0) {
            out.llt.compute(c);
        } else {
            Eigen::MatrixXd cj = c;
            cj.diagonal().array() += jitter;
            out.llt.compute(cj);
        }
        if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            out.jitter = jitter;
            return out;
        }
    }
    std::ostringstream msg;
    msg << "Cholesky factorization failed after jitter ladder up to " << ladder.back() << " (n=" << n << ")";
    throw FactorizationError(msg.str(), ladder);
}

}  // namespace failcal
