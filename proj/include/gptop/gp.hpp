#pragma once

// Gaussian-process conditioning with fixed hyperparameters. A conditioner
// corrects any mean function so prescribed values are reproduced at the
// conditioning points; the density projection sharpens corrected fields
// toward binary designs.

#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gptop/errors.hpp"
#include "gptop/tensor.hpp"

namespace gptop::gp {

struct KernelParams {
    Eigen::Vector2d phi{0.5, 0.5};  // per-dimension inverse-squared length scales (1/mm^2)
    double s2 = 1.0;                // process variance
    double nugget = 1e-5;
};

/// Gaussian kernel with a nugget on exact coordinate matches.
inline double kernel(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const KernelParams& kp) {
    Eigen::Vector2d d = a - b;
    double c = kp.s2 * std::exp(-(d(0) * d(0) * kp.phi(0) + d(1) * d(1) * kp.phi(1)));
    if (a(0) == b(0) && a(1) == b(1)) c += kp.nugget;
    return c;
}

/// One GP's conditioning data: points, prescribed values, and the cached
/// Cholesky factor of the covariance. Immutable and cheap to copy.
class Conditioner {
public:
    Conditioner() = default;

    Conditioner(Eigen::Matrix2Xd points, Eigen::VectorXd values, KernelParams kp = {})
        : points_(std::move(points)), values_(std::move(values)), kp_(kp) {
        const auto m = points_.cols();
        if (m < 1) throw ConditioningError("at least one conditioning point required");
        if (values_.size() != m)
            throw ConditioningError("point/value count mismatch: " + std::to_string(m) + " vs " +
                                    std::to_string(values_.size()));
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j)
                if ((points_.col(i) - points_.col(j)).norm() <= 1e-9)
                    throw ConditioningError("conditioning points " + std::to_string(i) + " and " +
                                            std::to_string(j) + " coincide");

        Eigen::MatrixXd cov(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                cov(i, j) = kernel(points_.col(i), points_.col(j), kp_);
        auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(cov);
        if (llt->info() != Eigen::Success) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
            throw ConditioningError("covariance factorization failed; smallest pivot " +
                                    std::to_string(ldlt.vectorD().minCoeff()));
        }
        llt_ = std::move(llt);
        kinv_values_ = llt_->solve(values_);
    }

    bool empty() const { return points_.cols() == 0; }
    Eigen::Index size() const { return points_.cols(); }
    const Eigen::Matrix2Xd& points() const { return points_; }
    const Eigen::VectorXd& prescribed() const { return values_; }
    const KernelParams& params() const { return kp_; }
    const Eigen::LLT<Eigen::MatrixXd>& factor() const { return *llt_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_->solve(rhs); }

    /// Cross-covariance c(X, x*) between conditioning points and queries.
    Eigen::MatrixXd cross_covariance(const Eigen::Matrix2Xd& queries) const {
        Eigen::MatrixXd k(points_.cols(), queries.cols());
        for (Eigen::Index q = 0; q < queries.cols(); ++q)
            for (Eigen::Index i = 0; i < points_.cols(); ++i)
                k(i, q) = kernel(points_.col(i), queries.col(q), kp_);
        return k;
    }

    /// Posterior-mean correction, value-only path.
    Eigen::VectorXd correct_values(const Eigen::Matrix2Xd& queries, const Eigen::VectorXd& mean_q,
                                   const Eigen::VectorXd& mean_x) const {
        if (empty()) return mean_q;
        if (mean_x.size() != points_.cols() || mean_q.size() != queries.cols())
            throw DimensionError("correct_values: mean sizes do not match point sets");
        Eigen::VectorXd w = llt_->solve(values_ - mean_x);
        return mean_q + cross_covariance(queries).transpose() * w;
    }

private:
    Eigen::Matrix2Xd points_;
    Eigen::VectorXd values_;
    KernelParams kp_;
    std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> llt_;
    Eigen::VectorXd kinv_values_;
};

/// K^{-1} r as a differentiable op; the covariance is constant so the adjoint
/// is another solve against the cached factor.
inline ad::Tensor cholesky_solve(const Conditioner& cond, const ad::Tensor& rhs) {
    const auto m = static_cast<std::size_t>(cond.size());
    if (rhs.numel() != m) throw DimensionError("cholesky_solve: rhs length mismatch");
    Eigen::Map<const Eigen::VectorXd> r(rhs.values().data(), m);
    Eigen::VectorXd w = cond.solve(r);
    std::vector<double> out(w.data(), w.data() + m);

    ad::NodePtr rn = rhs.node();
    Conditioner cond_copy = cond;  // shares the factor
    auto back = [rn, cond_copy, m](ad::Node& self) {
        Eigen::Map<const Eigen::VectorXd> g(self.grad.data(), m);
        Eigen::VectorXd dr = cond_copy.solve(g);
        for (std::size_t i = 0; i < m; ++i) ad::detail::accumulate(rn, i, dr(i));
    };
    return ad::Tensor(ad::detail::make_result({m}, std::move(out), {rn}, back));
}

/// GP correction differentiable through both mean arguments:
/// mean_q + kstar^T K^{-1} (v - mean_x). `kstar` is the (constant)
/// cross-covariance for the query set, precomputable per fixed grid.
inline ad::Tensor correct(const Conditioner& cond, const Eigen::MatrixXd& kstar,
                          const ad::Tensor& mean_q, const ad::Tensor& mean_x) {
    if (cond.empty()) return mean_q;
    const auto m = static_cast<std::size_t>(cond.size());
    const auto q = mean_q.numel();
    if (kstar.rows() != cond.size() || static_cast<std::size_t>(kstar.cols()) != q)
        throw DimensionError("correct: kstar is " + std::to_string(kstar.rows()) + "x" +
                             std::to_string(kstar.cols()) + ", expected " + std::to_string(m) +
                             "x" + std::to_string(q));

    ad::Tensor v = ad::Tensor::constant({m}, std::vector<double>(cond.prescribed().data(),
                                                                 cond.prescribed().data() + m));
    ad::Tensor w = cholesky_solve(cond, ad::sub(v, mean_x));

    // kstar^T stored row-major as a constant tensor
    std::vector<double> kt(q * m);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < m; ++j) kt[i * m + j] = kstar(j, i);
    ad::Tensor ktw = ad::matmul(ad::Tensor::constant({q, m}, std::move(kt)),
                                ad::reshape(w, {m, 1}));
    return ad::add(mean_q, ad::reshape(ktw, {q}));
}

struct ProjectionParams {
    double beta = 8.0;
    double rho_t = 0.5;

    void validate() const {
        if (beta <= 0) throw ParameterError("projection: beta must be positive");
        if (rho_t <= 0 || rho_t >= 1) throw ParameterError("projection: rho_t outside (0,1)");
    }
};

inline double project_value(double rho, const ProjectionParams& p = {}) {
    double denom = std::tanh(p.beta * p.rho_t) + std::tanh(p.beta * (1.0 - p.rho_t));
    return (std::tanh(p.beta * p.rho_t) + std::tanh(p.beta * (rho - p.rho_t))) / denom;
}

/// tanh projection sharpening corrected densities toward {0, 1}; strictly
/// increasing and maps [0,1] into [0,1].
inline ad::Tensor project(const ad::Tensor& rho, const ProjectionParams& p = {}) {
    p.validate();
    double denom = std::tanh(p.beta * p.rho_t) + std::tanh(p.beta * (1.0 - p.rho_t));
    ad::Tensor shifted = ad::scale(ad::add_scalar(rho, -p.rho_t), p.beta);
    return ad::scale(ad::add_scalar(ad::tanh(shifted), std::tanh(p.beta * p.rho_t)), 1.0 / denom);
}

}  // namespace gptop::gp
