#pragma once

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "rejref/coding.hpp"
#include "rejref/losses.hpp"

namespace rejref {

enum class Penalty { L1, L2 };

inline std::string to_string(Penalty p) { return p == Penalty::L1 ? "l1" : "l2"; }

inline Penalty penalty_from_string(const std::string& name) {
    if (name == "l1" || name == "L1") return Penalty::L1;
    if (name == "l2" || name == "L2") return Penalty::L2;
    throw std::invalid_argument("unknown penalty '" + name + "' (expected l1 or l2)");
}

/// Stopping rules shared by the solvers.
struct SolverOptions {
    double tol = 1e-7;            // dual CD: largest coordinate change in an epoch
    double rel_tol = 1e-6;        // primal: stationarity, relative to max(1, objective), at the final smoothing level
    int max_epochs = 10000;       // dual CD epochs / primal iterations per smoothing level
    double duality_tol = 1e-6;    // relative primal-dual gap reported as converged
    double smoothing_start = 1e-1;
    double smoothing_min = 1e-6;  // final Moreau smoothing level of the primal solver
    double warm_smoothing_start = 1e-3;  // first smoothing level when warm-started
};

enum class KernelKind { Linear, Gaussian };

struct KernelSpec {
    KernelKind kind = KernelKind::Linear;
    double bandwidth = 1.0;

    void validate() const {
        if (kind == KernelKind::Gaussian && !(bandwidth > 0.0)) {
            throw std::invalid_argument("gaussian kernel needs bandwidth > 0, got " + std::to_string(bandwidth));
        }
    }

    double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
        if (kind == KernelKind::Linear) return a.dot(b);
        return std::exp(-(a - b).squaredNorm() / (2.0 * bandwidth * bandwidth));
    }

    std::string describe() const {
        if (kind == KernelKind::Linear) return "linear";
        return "gaussian(bandwidth=" + std::to_string(bandwidth) + ")";
    }
};

inline std::string to_string(KernelKind k) { return k == KernelKind::Linear ? "linear" : "gaussian"; }

inline KernelKind kernel_kind_from_string(const std::string& name) {
    if (name == "linear") return KernelKind::Linear;
    if (name == "gaussian" || name == "rbf") return KernelKind::Gaussian;
    throw std::invalid_argument("unknown kernel '" + name + "' (expected linear or gaussian)");
}

/// Cross-kernel matrix K(A_i, B_j).
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) {
        throw std::invalid_argument("kernel_matrix: inputs have " + std::to_string(A.cols()) + " and " +
                                    std::to_string(B.cols()) + " features");
    }
    Eigen::MatrixXd K = A * B.transpose();
    if (spec.kind == KernelKind::Gaussian) {
        const Eigen::VectorXd an = A.rowwise().squaredNorm();
        const Eigen::VectorXd bn = B.rowwise().squaredNorm();
        const double scale = -1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
        for (Eigen::Index j = 0; j < K.cols(); ++j) {
            for (Eigen::Index i = 0; i < K.rows(); ++i) {
                K(i, j) = std::exp(scale * std::max(0.0, an(i) + bn(j) - 2.0 * K(i, j)));
            }
        }
    }
    return K;
}

/// Convergence record attached to every fitted model.
struct FitInfo {
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;      // true (unsmoothed) training objective
    double kkt_residual = 0.0;   // dual CD only
    double duality_gap = 0.0;    // dual CD only, relative
};

/// f_q(x) = beta_q^T (1, x); row 0 of beta holds the intercepts.
struct LinearModel {
    Eigen::MatrixXd beta;  // (p+1) x (k-1)
    int k = 0;
    Penalty penalty = Penalty::L2;
    double lambda = 0.0;
    BentLoss loss = BentLoss::hinge(2.0);
    FitInfo info;

    int classes() const { return k; }
    Eigen::Index features() const { return beta.rows() - 1; }

    Eigen::MatrixXd decision(const Eigen::MatrixXd& X) const {
        if (X.cols() != features()) {
            throw std::invalid_argument("linear model expects " + std::to_string(features()) + " features, got " +
                                        std::to_string(X.cols()));
        }
        Eigen::MatrixXd F = X * beta.bottomRows(beta.rows() - 1);
        F.rowwise() += beta.row(0);
        return F;
    }
};

/// f_q(x) = sum_i theta_{q,i} K(x_i, x) + theta_{q,0}.
struct KernelModel {
    Eigen::MatrixXd theta;       // n x (k-1)
    Eigen::RowVectorXd intercept;  // k-1
    Eigen::MatrixXd support;     // n x p training inputs
    KernelSpec kernel;
    int k = 0;
    double lambda = 0.0;
    bool penalize_intercept = false;
    BentLoss loss = BentLoss::hinge(2.0);
    FitInfo info;

    int classes() const { return k; }
    Eigen::Index features() const { return support.cols(); }

    Eigen::MatrixXd decision(const Eigen::MatrixXd& X) const {
        if (X.cols() != features()) {
            throw std::invalid_argument("kernel model expects " + std::to_string(features()) + " features, got " +
                                        std::to_string(X.cols()));
        }
        Eigen::MatrixXd F = kernel_matrix(kernel, X, support) * theta;
        F.rowwise() += intercept;
        return F;
    }
};

/// Anything that maps inputs to R^(k-1) function values.
template <class M>
concept MarginModel = requires(const M& m, const Eigen::MatrixXd& X) {
    { m.decision(X) } -> std::convertible_to<Eigen::MatrixXd>;
    { m.classes() } -> std::convertible_to<int>;
};

/// Either model family, for code that picks the family at run time.
struct AnyModel {
    std::variant<LinearModel, KernelModel> model;

    int classes() const {
        return std::visit([](const auto& m) { return m.classes(); }, model);
    }
    Eigen::MatrixXd decision(const Eigen::MatrixXd& X) const {
        return std::visit([&](const auto& m) { return m.decision(X); }, model);
    }
    const BentLoss& loss() const {
        return std::visit([](const auto& m) -> const BentLoss& { return m.loss; }, model);
    }
    double lambda() const {
        return std::visit([](const auto& m) { return m.lambda; }, model);
    }
    const FitInfo& info() const {
        return std::visit([](const auto& m) -> const FitInfo& { return m.info; }, model);
    }
};

/// n x k angle margins of a model on inputs X.
template <MarginModel M>
Eigen::MatrixXd model_margins(const M& model, const Eigen::MatrixXd& X) {
    return angle_margins_batch(model.decision(X), *simplex_for(model.classes()));
}

}  // namespace rejref
