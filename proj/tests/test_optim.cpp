#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rejref/generators.hpp"
#include "rejref/optim.hpp"
#include "rejref/predict.hpp"

using namespace rejref;

namespace {

// Reference settings: smoothing bias and stopping error well under 1e-6 relative.
SolverOptions tight() {
    SolverOptions o;
    o.smoothing_min = 1e-8;
    o.rel_tol = 1e-12;
    o.tol = 1e-10;
    o.max_epochs = 1000000;
    return o;
}

Dataset random_instance(std::mt19937_64& rng, int n, int p, int k) {
    std::normal_distribution<double> g;
    Dataset d;
    d.k = k;
    d.X.resize(n, p);
    d.y.resize(n);
    const CodingSimplex& s = *simplex_for(k);
    for (int i = 0; i < n; ++i) {
        const int label = 1 + i % k;
        d.y[i] = label;
        for (int c = 0; c < p; ++c) d.X(i, c) = g(rng) + (c < k - 1 ? s.vertex(label)(c) : 0.0);
    }
    return d;
}

double training_error(const LinearModel& m, const Dataset& d) {
    const Eigen::MatrixXd U = model_margins(m, d.X);
    int wrong = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        Eigen::Index j;
        U.row(i).maxCoeff(&j);
        wrong += (j + 1) != d.y[i];
    }
    return static_cast<double>(wrong) / d.n();
}

}  // namespace

TEST(DualCd, SeparableToyHasZeroTrainingError) {
    Dataset d;
    d.k = 2;
    d.X.resize(10, 2);
    d.X << 1, 1, 2, 1, 1.5, 2, 2, 2.5, 1, 3, -1, -1, -2, -1, -1.5, -2, -2, -2.5, -1, -3;
    d.y = {1, 1, 1, 1, 1, 2, 2, 2, 2, 2};
    const LinearModel m = train_linear_dual_cd(d, BentLoss::hinge(2.0), 0.1);
    EXPECT_TRUE(m.info.converged);
    EXPECT_EQ(training_error(m, d), 0.0);
}

TEST(DualCd, HugeLambdaShrinksToZeroAndRejects) {
    std::mt19937_64 rng(1);
    const Dataset d = random_instance(rng, 40, 5, 3);
    const LinearModel m = train_linear_dual_cd(d, BentLoss::hinge(2.0), 1e6);
    EXPECT_LT(m.beta.cwiseAbs().maxCoeff(), 1e-5);
    const Eigen::MatrixXd U = model_margins(m, d.X);
    EXPECT_LT(U.cwiseAbs().maxCoeff(), 1e-4);
    for (Eigen::Index i = 0; i < d.n(); ++i) EXPECT_TRUE(predict_reject(U.row(i).transpose(), 1e-3).is_reject());
}

TEST(DualCd, MatchesPrimalOnExampleTwoSample) {
    const SimulatedSplit s = generate({2, {60, 1, 1}, 8, 5, 0});
    const BentLoss loss = BentLoss::hinge(1.5);
    const LinearModel dual = train_linear_dual_cd(s.train, loss, 0.05, tight());
    const LinearModel primal = train_linear_primal(s.train, loss, Penalty::L2, 0.05, tight());
    const double fd = linear_objective(dual, s.train);
    const double fp = linear_objective(primal, s.train);
    EXPECT_LE(std::abs(fd - fp) / std::abs(fp), 1e-6) << fd << " vs " << fp;
    EXPECT_LE(dual.info.duality_gap, 1e-6);
}

TEST(DualCd, RandomInstancesAgreeWithPrimal) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 8; ++t) {
        const int k = 2 + t % 3;
        const Dataset d = random_instance(rng, 20 + 5 * t, 2 + t, k);
        const BentLoss loss = BentLoss::hinge(1.3 + 0.4 * t);
        const double lambda = std::pow(10.0, -2.0 + 0.3 * t);
        const double fd = linear_objective(train_linear_dual_cd(d, loss, lambda, tight()), d);
        const double fp = linear_objective(train_linear_primal(d, loss, Penalty::L2, lambda, tight()), d);
        EXPECT_LE(std::abs(fd - fp) / std::abs(fp), 1e-6) << "instance " << t;
    }
}

TEST(DualCd, KktResidualBelowTolerance) {
    std::mt19937_64 rng(3);
    const Dataset d = random_instance(rng, 50, 4, 4);
    SolverOptions o;
    o.tol = 1e-8;
    const LinearModel m = train_linear_dual_cd(d, BentLoss::hinge(2.0), 0.02, o);
    ASSERT_TRUE(m.info.converged);
    EXPECT_LE(m.info.kkt_residual, o.tol);
}

TEST(DualCd, InputChecks) {
    std::mt19937_64 rng(4);
    Dataset d = random_instance(rng, 12, 2, 3);
    EXPECT_THROW(train_linear_dual_cd(d, BentLoss::hinge(2.0), 0.0), std::invalid_argument);
    EXPECT_THROW(train_linear_dual_cd(d, BentLoss::hinge(2.0), -1.0), std::invalid_argument);
    EXPECT_THROW(train_linear_dual_cd(d, BentLoss::dwd(2.0), 0.1), std::invalid_argument);
    d.X(0, 0) = std::nan("");
    EXPECT_THROW(train_linear_dual_cd(d, BentLoss::hinge(2.0), 0.1), DataError);
    EXPECT_THROW(train_linear_primal(d, BentLoss::hinge(2.0), Penalty::L1, 0.1), DataError);
}

TEST(Primal, UnregularizedSeparablePair) {
    Dataset d;
    d.k = 2;
    d.X.resize(2, 1);
    d.X << -1, 1;
    d.y = {2, 1};
    const LinearModel m = train_linear_primal(d, BentLoss::hinge(2.0), Penalty::L2, 0.0);
    const Eigen::MatrixXd U = model_margins(m, d.X);
    EXPECT_GT(U(0, 1) - U(0, 0), 0.0);
    EXPECT_GT(U(1, 0) - U(1, 1), 0.0);
}

TEST(Primal, LargeL1ZeroesAllSlopes) {
    std::mt19937_64 rng(5);
    const Dataset d = random_instance(rng, 40, 6, 3);
    for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
        const LinearModel m = train_linear_primal(d, BentLoss(kind, 2.0), Penalty::L1, 50.0);
        EXPECT_TRUE(m.beta.bottomRows(m.beta.rows() - 1).isZero(0.0)) << to_string(kind);
    }
}

TEST(Primal, L1GivesExactZerosOnNoise) {
    const SimulatedSplit s = generate({1, {150, 1, 1}, 30, 8, 0});
    const LinearModel m = train_linear_primal(s.train, BentLoss::hinge(1.2), Penalty::L1, 0.03);
    int zero_rows = 0;
    for (Eigen::Index r = 3; r < m.beta.rows(); ++r) zero_rows += m.beta.row(r).isZero(0.0);
    EXPECT_GT(zero_rows, 20);
    EXPECT_FALSE(m.beta.row(1).isZero(0.0));
}

TEST(Primal, TraceIsMonotoneWithinEachLevel) {
    std::mt19937_64 rng(6);
    for (Penalty pen : {Penalty::L1, Penalty::L2}) {
        for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
            const Dataset d = random_instance(rng, 45, 5, 3);
            PrimalProblem prob;
            prob.W = with_intercept(d.X);
            prob.y = d.y;
            prob.k = d.k;
            prob.loss = BentLoss(kind, 2.0);
            prob.penalty = pen;
            prob.lambda = 0.01;
            prob.row_weights = Eigen::VectorXd::Ones(prob.W.cols());
            const PrimalSolution sol = solve_primal(prob, SolverOptions{});
            ASSERT_EQ(sol.trace.size(), sol.trace_level.size());
            ASSERT_FALSE(sol.trace.empty());
            for (std::size_t i = 1; i < sol.trace.size(); ++i) {
                if (sol.trace_level[i] != sol.trace_level[i - 1]) continue;
                EXPECT_LE(sol.trace[i], sol.trace[i - 1] + 1e-10);
            }
            EXPECT_NEAR(sol.objective, linear_objective(sol.B, d, prob.loss, pen, prob.lambda), 1e-12);
        }
    }
}

TEST(Primal, DominantClassHasPositiveMargin) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    Dataset d;
    d.k = 3;
    d.X.resize(90, 2);
    d.y.resize(90);
    for (int i = 0; i < 90; ++i) {
        d.X(i, 0) = g(rng);
        d.X(i, 1) = g(rng);
        d.y[i] = i % 10 == 0 ? 2 + (i / 10) % 2 : 1;  // class 1 at 80% everywhere
    }
    const LinearModel m = train_linear_primal(d, BentLoss::hinge(2.0), Penalty::L2, 0.01);
    const Eigen::MatrixXd U = model_margins(m, d.X);
    EXPECT_GT(U.col(0).minCoeff(), 0.0);
}

TEST(Primal, LabelPermutationLeavesObjective) {
    std::mt19937_64 rng(8);
    const Dataset d = random_instance(rng, 36, 4, 3);
    Dataset perm = d;
    const int map[4] = {0, 3, 1, 2};
    for (int& y : perm.y) y = map[y];
    for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
        const BentLoss loss(kind, 1.7);
        const double a = linear_objective(train_linear_primal(d, loss, Penalty::L2, 0.05, tight()), d);
        const double b = linear_objective(train_linear_primal(perm, loss, Penalty::L2, 0.05, tight()), perm);
        EXPECT_NEAR(a, b, 1e-8 * std::max(1.0, a));
    }
}

TEST(Kernel, GaussianFitsXor) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.15);
    Dataset d;
    d.k = 4;
    d.X.resize(40, 2);
    d.y.resize(40);
    const double centers[4][2] = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}};
    for (int i = 0; i < 40; ++i) {
        const int q = i % 4;
        d.X(i, 0) = centers[q][0] + g(rng);
        d.X(i, 1) = centers[q][1] + g(rng);
        d.y[i] = q == 0 || q == 2 ? 1 + q / 2 : 3 + q / 2;  // opposite quadrants get different labels
    }
    const KernelModel m = train_kernel(d, BentLoss::hinge(2.0), {KernelKind::Gaussian, 0.5}, 1e-3);
    const Eigen::MatrixXd U = model_margins(m, d.X);
    int wrong = 0;
    for (int i = 0; i < 40; ++i) {
        Eigen::Index j;
        U.row(i).maxCoeff(&j);
        wrong += (j + 1) != d.y[i];
    }
    EXPECT_LE(wrong, 2);
    EXPECT_NEAR(kernel_objective(m, d), m.info.objective, 1e-10);
}

TEST(Kernel, LinearKernelMatchesLinearModel) {
    std::mt19937_64 rng(10);
    const Dataset d = random_instance(rng, 30, 3, 3);
    const BentLoss loss = BentLoss::hinge(2.0);
    const KernelModel km = train_kernel(d, loss, {KernelKind::Linear, 1.0}, 0.05, tight(), true);
    const LinearModel lm = train_linear_primal(d, loss, Penalty::L2, 0.05, tight());
    const Dataset probe = random_instance(rng, 20, 3, 3);
    const double diff = (model_margins(km, probe.X) - model_margins(lm, probe.X)).cwiseAbs().maxCoeff();
    EXPECT_LE(diff, 1e-4);
}

TEST(Kernel, HugeLambdaLeavesInterceptOnly) {
    std::mt19937_64 rng(11);
    const Dataset d = random_instance(rng, 30, 3, 3);
    const KernelModel m = train_kernel(d, BentLoss::hinge(2.0), {KernelKind::Gaussian, 1.0}, 1e6);
    const Eigen::MatrixXd U = model_margins(m, d.X);
    for (Eigen::Index c = 0; c < U.cols(); ++c) EXPECT_LT(U.col(c).maxCoeff() - U.col(c).minCoeff(), 1e-4);
}

TEST(Kernel, NonPsdGramNamesTheKernel) {
    Eigen::MatrixXd K(2, 2);
    K << 1, 2, 2, 1;
    try {
        check_gram_psd(K, {KernelKind::Gaussian, 0.7});
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("gaussian(bandwidth=0.7"), std::string::npos) << e.what();
    }
    EXPECT_NO_THROW(check_gram_psd(Eigen::MatrixXd::Identity(3, 3), {}));
}

TEST(Kernel, InputChecks) {
    std::mt19937_64 rng(12);
    const Dataset d = random_instance(rng, 10, 2, 2);
    EXPECT_THROW(train_kernel(d, BentLoss::hinge(2.0), {KernelKind::Gaussian, 0.0}, 0.1), std::invalid_argument);
    EXPECT_THROW(train_kernel(d, BentLoss::hinge(2.0), {}, 0.0), std::invalid_argument);
}
