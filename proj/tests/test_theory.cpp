#include <algorithm>
#include <cstddef>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "rejref/theory.hpp"

using namespace rejref;

namespace {

// Conditional risk evaluated straight from the vertices and the loss.
double risk(const ProbVector& p, const BentLoss& loss, const Eigen::VectorXd& f) {
    const auto s = simplex_for(p.k());
    double total = 0.0;
    for (int j = 1; j <= p.k(); ++j) total += p.Q(j) * loss(s->vertex(j).dot(f));
    return total;
}

std::vector<int> signs(const Eigen::VectorXd& m, double tol) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < m.size(); ++j) out.push_back(std::abs(m(j)) <= tol ? 0 : (m(j) > 0 ? 1 : -1));
    return out;
}

}  // namespace

TEST(ProbVector, ValidatesAndRanks) {
    EXPECT_THROW(ProbVector({1.0}), std::invalid_argument);
    EXPECT_THROW(ProbVector({0.6, 0.6}), std::invalid_argument);
    EXPECT_THROW(ProbVector({1.2, -0.2}), std::invalid_argument);
    const ProbVector p{0.2, 0.5, 0.3};
    EXPECT_EQ(p.ranked(1), 2);
    EXPECT_EQ(p.ranked(2), 3);
    EXPECT_EQ(p.ranked(3), 1);
    EXPECT_DOUBLE_EQ(p.Q_sorted(1), 0.5);
    const ProbVector tie{0.4, 0.4, 0.2};
    EXPECT_EQ(tie.ranked(1), 1);
}

TEST(SampleSimplex, OnTheSimplexWithFlatMean) {
    std::mt19937_64 rng(1);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const ProbVector p = sample_simplex(4, rng);
        EXPECT_GE(p.p().minCoeff(), 0.0);
        mean += p.p();
    }
    mean /= n;
    // Flat Dirichlet(4): each coordinate has mean 1/4 and variance 3/80.
    const double se = std::sqrt(3.0 / 80.0 / n);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(mean(j), 0.25, 4 * se);
}

TEST(BayesRule, Examples) {
    const Prediction a = bayes_rule({0.7, 0.2, 0.1}, 0.4);
    ASSERT_TRUE(a.is_definite());
    EXPECT_EQ(a.label(), 1);
    EXPECT_TRUE(bayes_rule({0.4, 0.3, 0.3}, 0.4).is_reject());
    EXPECT_TRUE(bayes_rule({1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.5).is_reject());
    EXPECT_TRUE(bayes_rule({0.6, 0.4}, 0.4).is_reject());  // P_(1) = 1 - d rejects
    EXPECT_THROW(bayes_rule({0.5, 0.5}, 0.6), std::invalid_argument);
}

TEST(FstarRegion, Examples) {
    EXPECT_EQ(fstar_region({0.5, 0.3, 0.2}, 1.3).str(), "1");
    EXPECT_TRUE(fstar_region({0.45, 0.35, 0.2}, 2.0).is_reject());
    const RegionLabel r = fstar_region({0.1, 0.45, 0.4, 0.05}, 1.3);
    EXPECT_EQ(r.kind, RegionLabel::Kind::FstarRefine);
    EXPECT_EQ(r.str(), "2,3");
    EXPECT_THROW(fstar_region({0.5, 0.5}, 1.0), std::invalid_argument);
}

TEST(PopulationMinimizer, HingeLabelExample) {
    const ProbVector p{0.5, 0.3, 0.2};
    const auto fm = population_minimizer(p, BentLoss::hinge(1.3), *simplex_for(3));
    EXPECT_NEAR(fm.margins(0), 2.0, 1e-8);
    EXPECT_NEAR(fm.margins(1), -1.0, 1e-8);
    EXPECT_NEAR(fm.margins(2), -1.0, 1e-8);
    EXPECT_LE(fm.residual, 1e-8);
}

TEST(PopulationMinimizer, HingeRejectExample) {
    const auto fm = population_minimizer({0.45, 0.35, 0.2}, BentLoss::hinge(2.0), *simplex_for(3));
    EXPECT_LE(fm.margins.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PopulationMinimizer, RefineExampleMatchesPattern) {
    const ProbVector p{0.1, 0.45, 0.4, 0.05};
    for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
        const auto fm = population_minimizer(p, BentLoss(kind, 1.3), *simplex_for(4));
        EXPECT_EQ(signs(fm.margins, 1e-6), (std::vector<int>{-1, 1, 0, -1})) << to_string(kind);
    }
}

TEST(PopulationMinimizer, NoDirectionImprovesTheValue) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int k : {2, 3, 4, 5}) {
        for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
            for (double a : {1.2, 2.0, 3.0}) {
                const BentLoss loss(kind, a);
                const ProbVector p = sample_simplex(k, rng);
                const auto fm = population_minimizer(p, loss, *simplex_for(k));
                const double base = risk(p, loss, fm.f);
                EXPECT_NEAR(base, fm.value, 1e-12 * std::max(1.0, base));
                for (int t = 0; t < 200; ++t) {
                    Eigen::VectorXd v(k - 1);
                    for (Eigen::Index c = 0; c < v.size(); ++c) v(c) = g(rng);
                    const double step = std::pow(10.0, -1.0 - (t % 6));
                    EXPECT_GE(risk(p, loss, fm.f + step * v.normalized()), base - 1e-10);
                }
            }
        }
    }
}

TEST(PopulationMinimizer, MarginsSumToZero) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const ProbVector p = sample_simplex(5, rng);
        const auto fm = population_minimizer(p, BentLoss::dwd(2.0), *simplex_for(5));
        EXPECT_NEAR(fm.margins.sum(), 0.0, 1e-10);
    }
}

TEST(PopulationMinimizer, PermutationEquivariant) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 30; ++i) {
        const int k = 3 + i % 3;
        const ProbVector p = sample_simplex(k, rng);
        std::vector<int> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), 1);
        std::shuffle(perm.begin(), perm.end(), rng);
        const ProbVector q = p.permuted(perm);
        const BentLoss loss = i % 2 ? BentLoss::hinge(1.8) : BentLoss::dwd(1.8);
        const auto fp = population_minimizer(p, loss, *simplex_for(k));
        const auto fq = population_minimizer(q, loss, *simplex_for(k));
        EXPECT_NEAR(fp.value, fq.value, 1e-8);
        // Old label j is now called perm[j-1] and keeps its margin.
        for (int j = 1; j <= k; ++j) EXPECT_NEAR(fq.margins(perm[static_cast<std::size_t>(j - 1)] - 1), fp.margins(j - 1), 1e-7);
    }
}

TEST(Prop1, SweepAgreesAwayFromBoundaries) {
    for (int k : {3, 4}) {
        const Prop1Sweep s = sweep_prop1(k, {LossKind::BentHinge, LossKind::BentDWD}, {1.2, 2.0, 3.0}, 30, 9);
        EXPECT_TRUE(s.passed()) << (s.mismatches.empty() ? "" : s.mismatches.front().describe());
        EXPECT_EQ(s.checked + s.excluded, 180u);
    }
}

TEST(Prop1, BoundaryDetection) {
    EXPECT_TRUE(near_region_boundary({0.4, 0.4, 0.2}, 3.0, 1e-3));
    // Q = (0.5, 0.7, 0.8); 0.7 / 0.5 = 1.4
    EXPECT_TRUE(near_region_boundary({0.5, 0.3, 0.2}, 1.4, 1e-3));
    EXPECT_FALSE(near_region_boundary({0.5, 0.3, 0.2}, 1.3, 1e-3));
}

TEST(RatioSup, BruteForceOverGrid) {
    for (auto [k, d] : std::vector<std::pair<int, double>>{{3, 0.5}, {3, 0.6}, {4, 0.5}, {4, 0.7}, {5, 0.3}}) {
        // Enumerate a lattice of the simplex with spacing 1/60 and take the largest ratio in the reject region.
        const int res = 60;
        double best = 0.0;
        std::vector<int> c(static_cast<std::size_t>(k), 0);
        std::function<void(int, int)> rec = [&](int j, int left) {
            if (j == k - 1) {
                c[static_cast<std::size_t>(j)] = left;
                Eigen::VectorXd p(k);
                for (int t = 0; t < k; ++t) p(t) = static_cast<double>(c[static_cast<std::size_t>(t)]) / res;
                if (p.maxCoeff() <= 1.0 - d + 1e-12) best = std::max(best, (1.0 - p.minCoeff()) / (1.0 - p.maxCoeff()));
                return;
            }
            for (int v = 0; v <= left; ++v) {
                c[static_cast<std::size_t>(j)] = v;
                rec(j + 1, left - v);
            }
        };
        rec(0, res);
        EXPECT_NEAR(bayes_reject_ratio_sup(k, d), best, 1e-9) << "k=" << k << " d=" << d;
    }
    EXPECT_NEAR(bayes_reject_ratio_sup(4, 0.5), 2.0, 1e-12);
    EXPECT_NEAR(bayes_reject_ratio_sup(3, 0.6), a_bounds(3, 0.6).second, 1e-12);
}

TEST(Sandwich, SmallRunsPass) {
    for (auto [k, d] : std::vector<std::pair<int, double>>{{2, 0.3}, {3, 0.5}, {3, 0.6}, {4, 0.5}}) {
        const SandwichReport r = verify_region_sandwich(k, d, 20000);
        EXPECT_TRUE(r.passed()) << r.describe();
    }
}

TEST(Sandwich, InflatedLowerBoundIsCaught) {
    SandwichOptions o;
    o.a1_scale = 1.5;
    const SandwichReport r = verify_region_sandwich(3, 0.5, 20000, o);
    EXPECT_GT(r.lower_violations, 0u);
    EXPECT_FALSE(r.passed());
    EXPECT_FALSE(r.offenders.empty());
}

TEST(RegionMap, MatchesClosedForm) {
    std::ostringstream os;
    write_region_map(os, 0.6, 20);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "p1,p2,p3,bayes,fstar_a1,fstar_a2");
    const auto [a1, a2] = a_bounds(3, 0.6);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        ASSERT_EQ(f.size(), 6u);
        const double p[3] = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
        const double top = std::max({p[0], p[1], p[2]});
        const double lo = std::min({p[0], p[1], p[2]});
        EXPECT_EQ(f[3] == "REJECT", top <= 0.4 + 1e-12) << line;
        EXPECT_EQ(f[4] == "REJECT", (1 - lo) < a1 * (1 - top)) << line;
        EXPECT_EQ(f[5] == "REJECT", (1 - lo) < a2 * (1 - top)) << line;
    }
    EXPECT_EQ(rows, 21 * 22 / 2);
}

TEST(FstarRegion, DependsOnlyOnExtremeRatio) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 40; ++t) {
        const int k = 4 + t % 2;
        const ProbVector p = sample_simplex(k, rng);
        // Keep the largest and smallest entries, move mass among the others.
        const int top = p.ranked(1), low = p.ranked(k);
        const double hi = p.P(top), lo = p.P(low);
        const double middle = 1.0 - hi - lo;
        std::vector<double> w(static_cast<std::size_t>(k - 2));
        for (auto& x : w) x = u(rng);
        Eigen::VectorXd q = p.p();
        // Convex mix toward an even split keeps every middle entry inside [lo, hi].
        const double even = middle / (k - 2);
        double wsum = 0.0;
        for (double x : w) wsum += x;
        int idx = 0;
        for (int l = 1; l <= k; ++l) {
            if (l == top || l == low) continue;
            const double target = middle * w[static_cast<std::size_t>(idx++)] / wsum;
            q(l - 1) = 0.5 * even + 0.5 * std::clamp(target, lo, hi);
        }
        const double fix = middle - (q.sum() - hi - lo);
        for (int l = 1; l <= k; ++l) {
            if (l != top && l != low) {
                q(l - 1) += fix / (k - 2);
            }
        }
        if (q.minCoeff() < lo || q.maxCoeff() > hi) continue;
        const ProbVector p2(q);
        for (double a : {1.2, 1.6, 2.5}) {
            if (near_region_boundary(p, a, 1e-3)) continue;
            EXPECT_EQ(fstar_region(p, a).is_reject(), fstar_region(p2, a).is_reject());
            const auto m1 = population_minimizer(p, BentLoss::hinge(a), *simplex_for(k)).margins;
            const auto m2 = population_minimizer(p2, BentLoss::hinge(a), *simplex_for(k)).margins;
            EXPECT_EQ(m1.cwiseAbs().maxCoeff() <= 1e-5, m2.cwiseAbs().maxCoeff() <= 1e-5);
            EXPECT_EQ(m1.cwiseAbs().maxCoeff() <= 1e-5, fstar_region(p, a).is_reject());
        }
    }
}

TEST(PopulationMinimizer, UniformGivesZeros) {
    for (int k : {2, 3, 5}) {
        const ProbVector p(Eigen::VectorXd::Constant(k, 1.0 / k));
        for (LossKind kind : {LossKind::BentHinge, LossKind::BentDWD}) {
            const auto fm = population_minimizer(p, BentLoss(kind, 1.5), *simplex_for(k));
            EXPECT_LE(fm.margins.cwiseAbs().maxCoeff(), 1e-8);
            EXPECT_EQ(predicted_sign_pattern(p, 1.5), std::vector<int>(static_cast<std::size_t>(k), 0));
        }
    }
}
