#pragma once

// Training for the angle-based bent-loss classifier:
//
//   minimize (1/n) sum_i sum_{j != y_i} l(<Y_j, f(x_i)>) + penalty(f)
//
// with penalty (lambda/2) sum_q ||beta_q||^2 (L2), lambda sum_q ||beta_q||_1 (L1)
// or (lambda/2) sum_q theta_q^T K theta_q (kernel).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rejref/coding.hpp"
#include "rejref/dataset.hpp"
#include "rejref/errors.hpp"
#include "rejref/losses.hpp"
#include "rejref/models.hpp"

namespace rejref {

/// Design matrix with the constant-1 column prepended.
inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd W(X.rows(), X.cols() + 1);
    W.col(0).setOnes();
    W.rightCols(X.cols()) = X;
    return W;
}

/// (1/n) sum_i sum_{j != y_i} l(U_ij) for an n x k margin matrix U.
inline double empirical_risk(const Eigen::MatrixXd& margins, const std::vector<int>& y, const BentLoss& loss) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < margins.rows(); ++i) {
        const int yi = y[static_cast<std::size_t>(i)] - 1;
        for (Eigen::Index j = 0; j < margins.cols(); ++j) {
            if (j != yi) total += loss.value(margins(i, j));
        }
    }
    return total / static_cast<double>(margins.rows());
}

/// Penalty on a coefficient matrix; `row_weights` scales each row (0 leaves it unpenalized).
inline double penalty_value(const Eigen::MatrixXd& B, Penalty penalty, double lambda,
                            const Eigen::VectorXd& row_weights) {
    if (penalty == Penalty::L2) {
        return 0.5 * lambda * (B.rowwise().squaredNorm().array() * row_weights.array()).sum();
    }
    return lambda * (B.cwiseAbs().rowwise().sum().array() * row_weights.array()).sum();
}

/// Training objective of a linear model on `data` (intercept penalized).
inline double linear_objective(const Eigen::MatrixXd& beta, const Dataset& data, const BentLoss& loss,
                               Penalty penalty, double lambda) {
    const auto& V = simplex_for(data.k)->vertices();
    const Eigen::MatrixXd U = with_intercept(data.X) * beta * V.transpose();
    return empirical_risk(U, data.y, loss) + penalty_value(beta, penalty, lambda, Eigen::VectorXd::Ones(beta.rows()));
}

inline double linear_objective(const LinearModel& model, const Dataset& data) {
    return linear_objective(model.beta, data, model.loss, model.penalty, model.lambda);
}

// ---------------------------------------------------------------------------
// Primal solver: Moreau smoothing of the loss with continuation, (proximal)
// Newton steps at each smoothing level and an Armijo line search.

struct PrimalProblem {
    Eigen::MatrixXd W;  // n x m, rows are (1, x_i) or kernel features
    std::vector<int> y;
    int k = 2;
    BentLoss loss = BentLoss::hinge(2.0);
    Penalty penalty = Penalty::L2;
    double lambda = 0.0;
    Eigen::VectorXd row_weights;  // m, penalty multiplier per coefficient row
};

struct PrimalSolution {
    Eigen::MatrixXd B;
    std::vector<double> trace;        // smoothed objective after each accepted step
    std::vector<double> trace_level;  // smoothing level of each trace entry
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;           // true objective at B
};

namespace detail {

class PrimalSolver {
public:
    PrimalSolver(const PrimalProblem& prob, const SolverOptions& opts)
        : prob_(prob), opts_(opts), V_(simplex_for(prob.k)->vertices()) {
        n_ = prob.W.rows();
        m_ = prob.W.cols();
        kd_ = prob.k - 1;
        slopes_.setZero(n_, prob.k);
        curv_.setZero(n_, prob.k);
        weights_ = prob_.lambda * prob_.row_weights.replicate(kd_, 1);
    }

    PrimalSolution run(const Eigen::MatrixXd* init) {
        PrimalSolution sol;
        sol.B = init ? *init : Eigen::MatrixXd::Zero(m_, kd_);
        if (sol.B.rows() != m_ || sol.B.cols() != kd_) throw std::invalid_argument("primal solver: bad initial point");
        const double mu_min = opts_.smoothing_min;
        double mu = std::max(mu_min, init ? opts_.warm_smoothing_start : opts_.smoothing_start);
        Eigen::MatrixXd U = prob_.W * sol.B * V_.transpose();
        bool final_ok = false;
        while (true) {
            const bool last = mu <= mu_min * (1.0 + 1e-12);
            const double tol = last ? opts_.rel_tol : std::max(opts_.rel_tol, 1e-4);
            final_ok = prob_.penalty == Penalty::L2 ? stage_newton(sol, U, mu, tol) : stage_fista(sol, U, mu, tol);
            if (last) break;
            mu = std::max(mu_min, mu * 0.1);
        }
        sol.converged = final_ok;
        sol.objective = empirical_risk(U, prob_.y, prob_.loss) + penalty(sol.B);
        return sol;
    }

private:
    double penalty(const Eigen::MatrixXd& B) const {
        return penalty_value(B, prob_.penalty, prob_.lambda, prob_.row_weights);
    }

    double smoothed_risk(const Eigen::MatrixXd& U, double mu, bool slopes, bool curvature) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const int yi = prob_.y[static_cast<std::size_t>(i)] - 1;
            for (Eigen::Index j = 0; j < prob_.k; ++j) {
                if (j == yi) continue;
                const Smoothed s = prob_.loss.smoothed(U(i, j), mu);
                total += s.value;
                if (slopes) slopes_(i, j) = s.slope;
                if (curvature) curv_(i, j) = s.curvature;
            }
        }
        return total / static_cast<double>(n_);
    }

    Eigen::MatrixXd gradient() const {
        return prob_.W.transpose() * (slopes_ * V_) / static_cast<double>(n_);
    }

    // Damped Newton for the L2 penalty. The smoothed losses have flat pieces, so
    // the Hessian can be singular when lambda is small; a Levenberg-Marquardt
    // term adapts to the line search outcome.
    bool stage_newton(PrimalSolution& sol, Eigen::MatrixXd& U, double mu, double tol) {
        const double inv_n = 1.0 / static_cast<double>(n_);
        const Eigen::Index dim = m_ * kd_;
        double F = smoothed_risk(U, mu, true, true) + penalty(sol.B);
        for (int it = 0; it < opts_.max_epochs; ++it) {
            const Eigen::MatrixXd G = gradient();
            const Eigen::Map<const Eigen::VectorXd> b(sol.B.data(), dim);
            const Eigen::Map<const Eigen::VectorXd> g(G.data(), dim);
            const Eigen::VectorXd grad = g + weights_.cwiseProduct(b);
            if (grad.lpNorm<Eigen::Infinity>() <= tol * 1e-2 * std::max(1.0, std::abs(F))) return true;

            Eigen::MatrixXd H(dim, dim);
            for (Eigen::Index q = 0; q < kd_; ++q) {
                for (Eigen::Index r = q; r < kd_; ++r) {
                    Eigen::VectorXd c = Eigen::VectorXd::Zero(n_);
                    for (Eigen::Index j = 0; j < prob_.k; ++j) c += curv_.col(j) * (V_(j, q) * V_(j, r));
                    H.block(q * m_, r * m_, m_, m_).noalias() =
                        prob_.W.transpose() * (c * inv_n).asDiagonal() * prob_.W;
                    if (r != q) H.block(r * m_, q * m_, m_, m_) = H.block(q * m_, r * m_, m_, m_).transpose();
                }
            }
            const double floor = 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
            damping_ = std::max(damping_, floor);
            H.diagonal() += weights_;
            H.diagonal().array() += damping_;
            ++sol.iterations;
            const Eigen::VectorXd d = -Eigen::LLT<Eigen::MatrixXd>(H).solve(grad);
            const double decrease = grad.dot(d);
            if (!(decrease < 0.0)) return true;

            const Eigen::Map<const Eigen::MatrixXd> D(d.data(), m_, kd_);
            const Eigen::MatrixXd dU = prob_.W * D * V_.transpose();
            double t = 1.0;
            double Ft = F;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                Ft = smoothed_risk(U + t * dU, mu, false, false) + penalty(sol.B + t * D);
                if (Ft <= F + 1e-4 * t * decrease) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                if (damping_ >= 1e8) return false;  // line search stalled
                damping_ *= 100.0;
                continue;
            }
            // No representable decrease left at this level.
            if (Ft >= F) return -decrease <= tol * std::max(1.0, std::abs(F));
            damping_ = t == 1.0 ? std::max(floor, damping_ * 0.25) : std::min(1e8, damping_ * std::min(1e4, 2.0 / t));
            sol.B += t * D;
            U += t * dU;
            const double rel = (F - Ft) / std::max(1.0, std::abs(Ft));
            F = smoothed_risk(U, mu, true, true) + penalty(sol.B);
            sol.trace.push_back(F);
            sol.trace_level.push_back(mu);
            if (t == 1.0 && rel <= tol * 1e-2 && -decrease <= tol * std::max(1.0, std::abs(F))) return true;
        }
        return false;
    }

    Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& Z, double step) const {
        Eigen::MatrixXd out(Z.rows(), Z.cols());
        for (Eigen::Index q = 0; q < Z.cols(); ++q) {
            for (Eigen::Index r = 0; r < Z.rows(); ++r) {
                const double w = step * prob_.lambda * prob_.row_weights(r);
                const double z = Z(r, q);
                out(r, q) = z > w ? z - w : (z < -w ? z + w : 0.0);
            }
        }
        return out;
    }

    // Monotone accelerated proximal gradient with backtracking and adaptive
    // restart, for the L1 penalty. Stops on the gradient-mapping norm.
    bool stage_fista(PrimalSolution& sol, Eigen::MatrixXd& U, double mu, double tol) {
        Eigen::MatrixXd x = sol.B;
        double Fx = smoothed_risk(U, mu, false, false) + penalty(x);
        Eigen::MatrixXd y = x;
        Eigen::MatrixXd Uy = U;
        double tk = 1.0;
        for (int it = 0; it < opts_.max_epochs; ++it) {
            ++sol.iterations;
            const double fy = smoothed_risk(Uy, mu, true, false);
            const Eigen::MatrixXd G = gradient();
            Eigen::MatrixXd z, Uz;
            double fz = 0.0;
            for (int bt = 0; bt < 100; ++bt) {
                z = soft_threshold(y - G / lipschitz_, 1.0 / lipschitz_);
                Uz = prob_.W * z * V_.transpose();
                fz = smoothed_risk(Uz, mu, false, false);
                const Eigen::MatrixXd step = z - y;
                if (fz <= fy + (G.array() * step.array()).sum() + 0.5 * lipschitz_ * step.squaredNorm() + 1e-15 * std::abs(fy)) break;
                lipschitz_ *= 2.0;
            }
            const double mapping = lipschitz_ * (z - y).cwiseAbs().maxCoeff();
            const double Fz = fz + penalty(z);
            if (Fz > Fx) {
                // Momentum overshot: restart from x, whose plain proximal step cannot increase F.
                if (tk == 1.0) {
                    sol.B = x;
                    return mapping <= tol * std::max(1.0, std::abs(Fx));
                }
                tk = 1.0;
                y = x;
                Uy = U;
                continue;
            }
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            const bool restart = ((y - z).array() * (z - x).array()).sum() > 0.0;
            if (restart) {
                tk = 1.0;
                y = z;
                Uy = Uz;
            } else {
                y = z + ((tk - 1.0) / tn) * (z - x);
                Uy = Uz + ((tk - 1.0) / tn) * (Uz - U);
                tk = tn;
            }
            x = std::move(z);
            U = std::move(Uz);
            Fx = Fz;
            sol.trace.push_back(Fx);
            sol.trace_level.push_back(mu);
            lipschitz_ = std::max(1e-12, lipschitz_ * 0.95);
            if (mapping <= tol * std::max(1.0, std::abs(Fx))) {
                sol.B = x;
                return true;
            }
        }
        sol.B = x;
        return false;
    }

    const PrimalProblem& prob_;
    const SolverOptions& opts_;
    const RowMatrix& V_;
    Eigen::Index n_ = 0, m_ = 0, kd_ = 0;
    Eigen::MatrixXd slopes_, curv_;
    Eigen::VectorXd weights_;
    double damping_ = 1e-3;
    double lipschitz_ = 1.0;
};

inline void check_lambda(double lambda, bool allow_zero) {
    if (!std::isfinite(lambda) || lambda < 0.0 || (!allow_zero && lambda == 0.0)) {
        throw std::invalid_argument("regularization weight lambda must be " + std::string(allow_zero ? ">= 0" : "> 0") +
                                    ", got " + std::to_string(lambda));
    }
}

}  // namespace detail

inline PrimalSolution solve_primal(const PrimalProblem& problem, const SolverOptions& opts,
                                   const Eigen::MatrixXd* init = nullptr) {
    detail::PrimalSolver solver(problem, opts);
    return solver.run(init);
}

/// Primal training for any bent loss with L1 or L2 penalty; lambda = 0 is allowed.
inline LinearModel train_linear_primal(const Dataset& data, const BentLoss& loss, Penalty penalty, double lambda,
                                       const SolverOptions& opts = {}, const Eigen::MatrixXd* init = nullptr) {
    data.validate();
    detail::check_lambda(lambda, true);
    PrimalProblem prob;
    prob.W = with_intercept(data.X);
    prob.y = data.y;
    prob.k = data.k;
    prob.loss = loss;
    prob.penalty = penalty;
    prob.lambda = lambda;
    prob.row_weights = Eigen::VectorXd::Ones(prob.W.cols());
    const PrimalSolution sol = solve_primal(prob, opts, init);
    LinearModel model;
    model.beta = sol.B;
    model.k = data.k;
    model.penalty = penalty;
    model.lambda = lambda;
    model.loss = loss;
    model.info.iterations = sol.iterations;
    model.info.converged = sol.converged;
    model.info.objective = sol.objective;
    return model;
}

// ---------------------------------------------------------------------------
// Dual coordinate descent for the bent hinge with L2 penalty.
//
// With l(u) = [1+u]_+ + (a-1)[u]_+ the dual is
//   min (n lambda / 2) sum_q ||beta_q||^2 - sum_{i, j != y_i} alpha_ij
//   s.t. 0 <= alpha_ij <= 1, 0 <= gamma_ij <= 1,
//   beta_q = -(1/(n lambda)) sum_{i, j != y_i} (alpha_ij + (a-1) gamma_ij) Y_jq (1, x_i).
// Each coordinate has a closed-form clipped minimizer.

struct DualState {
    Eigen::MatrixXd alpha;  // n x k, column y_i unused
    Eigen::MatrixXd gamma;
};

struct DualSolution {
    Eigen::MatrixXd B;
    DualState state;
    int epochs = 0;
    bool converged = false;
    double max_change = 0.0;
    double kkt_residual = 0.0;
    double primal = 0.0;  // normalized primal objective at B
    double dual = 0.0;    // normalized dual objective (lower bound on primal)
};

/// Upper box bound for alpha_ij and gamma_ij (unit sample weights).
inline constexpr double kDualBoxBound = 1.0;

inline DualSolution solve_dual_cd(const Eigen::MatrixXd& W, const std::vector<int>& y, int k, double a, double lambda,
                                  const SolverOptions& opts = {}) {
    const Eigen::Index n = W.rows();
    const Eigen::Index m = W.cols();
    const auto& V = simplex_for(k)->vertices();
    const double nl = static_cast<double>(n) * lambda;
    const double bend = a - 1.0;
    const double A = kDualBoxBound;

    DualSolution sol;
    sol.state.alpha.setZero(n, k);
    sol.state.gamma.setZero(n, k);
    Eigen::MatrixXd Bt = Eigen::MatrixXd::Zero(k - 1, m);  // beta transposed; rows are beta_q
    const Eigen::VectorXd sq = W.rowwise().squaredNorm();
    Eigen::VectorXd t(k - 1);

    // Largest clipped coordinate step available at the current point, in the units of opts.tol.
    const auto residual = [&] {
        const Eigen::MatrixXd Um = W * Bt.transpose() * V.transpose();
        double r = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (sq(i) == 0.0) continue;
            const int yi = y[static_cast<std::size_t>(i)] - 1;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j == yi) continue;
                const double al = sol.state.alpha(i, j), ga = sol.state.gamma(i, j);
                r = std::max(r, std::abs(std::clamp(al + (1.0 + Um(i, j)) * nl / sq(i), 0.0, A) - al));
                r = std::max(r, std::abs(std::clamp(ga + Um(i, j) * nl / (bend * sq(i)), 0.0, A) - ga));
            }
        }
        return r;
    };

    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        double max_change = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (sq(i) == 0.0) continue;
            const int yi = y[static_cast<std::size_t>(i)] - 1;
            t.noalias() = Bt * W.row(i).transpose();
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j == yi) continue;
                const auto vj = V.row(j).transpose();
                double u = vj.dot(t);
                // alpha: gradient -(1 + u), curvature ||w_i||^2 / (n lambda)
                double& al = sol.state.alpha(i, j);
                const double an = std::clamp(al + (1.0 + u) * nl / sq(i), 0.0, A);
                double dc = an - al;
                if (dc != 0.0) {
                    al = an;
                    Bt.noalias() -= (dc / nl) * vj * W.row(i);
                    t.noalias() -= (dc * sq(i) / nl) * vj;
                    u -= dc * sq(i) / nl;
                    max_change = std::max(max_change, std::abs(dc));
                }
                // gamma: gradient -(a-1) u, curvature (a-1)^2 ||w_i||^2 / (n lambda)
                double& ga = sol.state.gamma(i, j);
                const double gn = std::clamp(ga + u * nl / (bend * sq(i)), 0.0, A);
                dc = gn - ga;
                if (dc != 0.0) {
                    ga = gn;
                    Bt.noalias() -= (bend * dc / nl) * vj * W.row(i);
                    t.noalias() -= (bend * dc * sq(i) / nl) * vj;
                    max_change = std::max(max_change, std::abs(dc));
                }
            }
        }
        sol.epochs = epoch + 1;
        sol.max_change = max_change;
        if (max_change < opts.tol) {
            sol.kkt_residual = residual();
            if (sol.kkt_residual <= opts.tol) {
                sol.converged = true;
                break;
            }
        }
    }
    sol.B = Bt.transpose();
    if (!sol.converged) sol.kkt_residual = residual();
    const Eigen::MatrixXd U = W * sol.B * V.transpose();
    const BentLoss loss = BentLoss::hinge(a);
    const double sqnorm = sol.B.squaredNorm();
    sol.primal = empirical_risk(U, y, loss) + 0.5 * lambda * sqnorm;
    sol.dual = (sol.state.alpha.sum() - 0.5 * nl * sqnorm) / static_cast<double>(n);
    return sol;
}

/// Dual coordinate descent training (BentHinge, L2, intercept penalized).
inline LinearModel train_linear_dual_cd(const Dataset& data, const BentLoss& loss, double lambda,
                                        const SolverOptions& opts = {}) {
    if (loss.kind() != LossKind::BentHinge) {
        throw std::invalid_argument("dual coordinate descent needs the bent hinge loss, got " + to_string(loss.kind()));
    }
    data.validate();
    detail::check_lambda(lambda, false);
    const DualSolution sol = solve_dual_cd(with_intercept(data.X), data.y, data.k, loss.a(), lambda, opts);
    LinearModel model;
    model.beta = sol.B;
    model.k = data.k;
    model.penalty = Penalty::L2;
    model.lambda = lambda;
    model.loss = loss;
    model.info.iterations = sol.epochs;
    model.info.converged = sol.converged;
    model.info.objective = sol.primal;
    model.info.kkt_residual = sol.kkt_residual;
    model.info.duality_gap = (sol.primal - sol.dual) / std::max(1e-300, std::abs(sol.primal));
    return model;
}

/// Chooses dual CD where it applies (hinge + L2), the primal solver otherwise.
inline LinearModel train_linear(const Dataset& data, const BentLoss& loss, Penalty penalty, double lambda,
                                const SolverOptions& opts = {}, const Eigen::MatrixXd* init = nullptr) {
    if (penalty == Penalty::L2 && loss.kind() == LossKind::BentHinge && lambda > 0.0) {
        return train_linear_dual_cd(data, loss, lambda, opts);
    }
    return train_linear_primal(data, loss, penalty, lambda, opts, init);
}

// ---------------------------------------------------------------------------
// Kernel learning. With K = U diag(s) U^T the problem in theta is the linear
// L2 problem on features Phi = U_r diag(sqrt(s_r)) with v = diag(sqrt(s_r)) U_r^T theta.

/// Throws DataError if K has an eigenvalue below -1e-8; returns the eigensystem otherwise.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check_gram_psd(const Eigen::MatrixXd& K, const KernelSpec& spec) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    if (eig.info() != Eigen::Success) throw DataError("Gram matrix eigendecomposition failed for kernel " + spec.describe());
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < -1e-8) {
        throw DataError("Gram matrix for kernel " + spec.describe() + " is not positive semidefinite (min eigenvalue " +
                        std::to_string(min_eig) + ")");
    }
    return eig;
}

inline KernelModel train_kernel(const Dataset& data, const BentLoss& loss, const KernelSpec& kernel, double lambda,
                                const SolverOptions& opts = {}, bool penalize_intercept = false) {
    data.validate();
    kernel.validate();
    detail::check_lambda(lambda, false);
    const Eigen::MatrixXd K = kernel_matrix(kernel, data.X, data.X);
    const auto eig = check_gram_psd(K, kernel);
    const Eigen::VectorXd& s = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(1.0, s.maxCoeff());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < s.size(); ++c) {
        if (s(c) > cutoff) keep.push_back(c);
    }
    const auto r = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd Ur(data.n(), r);
    Eigen::VectorXd root(r);
    for (Eigen::Index c = 0; c < r; ++c) {
        Ur.col(c) = eig.eigenvectors().col(keep[static_cast<std::size_t>(c)]);
        root(c) = std::sqrt(s(keep[static_cast<std::size_t>(c)]));
    }
    PrimalProblem prob;
    prob.W.resize(data.n(), r + 1);
    prob.W.col(0).setOnes();
    prob.W.rightCols(r) = Ur * root.asDiagonal();
    prob.y = data.y;
    prob.k = data.k;
    prob.loss = loss;
    prob.penalty = Penalty::L2;
    prob.lambda = lambda;
    prob.row_weights = Eigen::VectorXd::Ones(r + 1);
    prob.row_weights(0) = penalize_intercept ? 1.0 : 0.0;
    const PrimalSolution sol = solve_primal(prob, opts);

    KernelModel model;
    model.theta = Ur * root.cwiseInverse().asDiagonal() * sol.B.bottomRows(r);
    model.intercept = sol.B.row(0);
    model.support = data.X;
    model.kernel = kernel;
    model.k = data.k;
    model.lambda = lambda;
    model.penalize_intercept = penalize_intercept;
    model.loss = loss;
    model.info.iterations = sol.iterations;
    model.info.converged = sol.converged;
    model.info.objective = sol.objective;
    return model;
}

/// Training objective of a kernel model: risk + (lambda/2) sum_q theta_q^T K theta_q (+ intercepts if penalized).
inline double kernel_objective(const KernelModel& model, const Dataset& data) {
    const Eigen::MatrixXd K = kernel_matrix(model.kernel, model.support, model.support);
    Eigen::MatrixXd F = K * model.theta;
    F.rowwise() += model.intercept;
    const Eigen::MatrixXd U = angle_margins_batch(F, *simplex_for(model.k));
    double pen = (model.theta.transpose() * K * model.theta).trace();
    if (model.penalize_intercept) pen += model.intercept.squaredNorm();
    return empirical_risk(U, data.y, model.loss) + 0.5 * model.lambda * pen;
}

}  // namespace rejref
