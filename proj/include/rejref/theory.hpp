#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rejref/coding.hpp"
#include "rejref/errors.hpp"
#include "rejref/losses.hpp"
#include "rejref/predict.hpp"

namespace rejref {

/// Class conditional probabilities P_1..P_k at a point, with Q_j = 1 - P_j.
class ProbVector {
public:
    explicit ProbVector(Eigen::VectorXd p) : p_(std::move(p)) {
        if (p_.size() < 2) throw std::invalid_argument("ProbVector needs k >= 2 entries");
        for (Eigen::Index j = 0; j < p_.size(); ++j) {
            if (!(p_(j) >= 0.0) || !std::isfinite(p_(j))) {
                throw std::invalid_argument("ProbVector entries must be finite and nonnegative");
            }
        }
        const double total = p_.sum();
        if (std::abs(total - 1.0) > 1e-12) {
            std::ostringstream msg;
            msg << "ProbVector must sum to 1 (got " << std::setprecision(17) << total << ")";
            throw std::invalid_argument(msg.str());
        }
        order_.resize(p_.size());
        std::iota(order_.begin(), order_.end(), 1);
        // Largest P first; ties broken by the smaller label.
        std::stable_sort(order_.begin(), order_.end(), [&](int l, int r) { return p_(l - 1) > p_(r - 1); });
    }

    ProbVector(std::initializer_list<double> values)
        : ProbVector(Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

    int k() const { return static_cast<int>(p_.size()); }
    const Eigen::VectorXd& p() const { return p_; }
    double P(int label) const { return p_(label - 1); }
    double Q(int label) const { return 1.0 - p_(label - 1); }

    /// y_(j): label with the j-th largest probability (j is 1-based).
    int ranked(int j) const { return order_.at(j - 1); }
    /// P_(j), descending in j.
    double P_sorted(int j) const { return P(ranked(j)); }
    /// Q_(j), ascending in j.
    double Q_sorted(int j) const { return Q(ranked(j)); }

    ProbVector permuted(const std::vector<int>& perm) const {
        // New label perm[j-1] gets the probability of old label j.
        Eigen::VectorXd out(p_.size());
        for (int j = 0; j < k(); ++j) out(perm.at(j) - 1) = p_(j);
        return ProbVector(out);
    }

private:
    Eigen::VectorXd p_;
    std::vector<int> order_;
};

/// Flat Dirichlet draw, i.e. uniform on the probability simplex.
template <class Rng>
ProbVector sample_simplex(int k, Rng& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    Eigen::VectorXd g(k);
    for (int j = 0; j < k; ++j) g(j) = gamma(rng);
    g /= g.sum();
    // Pin the sum to exactly 1 within rounding.
    g(k - 1) = std::max(0.0, 1.0 - (g.sum() - g(k - 1)));
    return ProbVector(g);
}

/// Bayes rule under the 0-d-1 loss: the top label if P_(1) > 1 - d, else reject.
inline Prediction bayes_rule(const ProbVector& p, double d) {
    check_rejection_cost(d, p.k());
    if (p.P_sorted(1) > 1.0 - d) return Prediction::definite(p.ranked(1));
    return Prediction::reject();
}

struct RegionLabel {
    enum class Kind { BayesReject, BayesLabel, FstarReject, FstarRefine, FstarLabel };
    Kind kind;
    std::vector<int> labels;  // sorted; empty for the reject kinds

    bool is_reject() const { return kind == Kind::BayesReject || kind == Kind::FstarReject; }
    std::string str(const std::string& sep = ",") const {
        if (is_reject()) return "REJECT";
        std::string out;
        for (int l : labels) out += (out.empty() ? "" : sep) + std::to_string(l);
        return out;
    }
    friend bool operator==(const RegionLabel&, const RegionLabel&) = default;
};

inline RegionLabel bayes_region(const ProbVector& p, double d) {
    const Prediction pred = bayes_rule(p, d);
    if (pred.is_reject()) return {RegionLabel::Kind::BayesReject, {}};
    return {RegionLabel::Kind::BayesLabel, {pred.label()}};
}

/// Number of leading ranked classes with Q_(j) < a Q_(1); equals k inside the f*-reject region.
inline int zero_block_size(const ProbVector& p, double a) {
    const double q1 = p.Q_sorted(1);
    int s = 0;
    for (int j = 1; j <= p.k(); ++j) {
        if (p.Q_sorted(j) < a * q1) s = j;
    }
    return s;
}

/// Region of the population minimizer for slope a: reject, a refined set, or one label.
inline RegionLabel fstar_region(const ProbVector& p, double a) {
    if (!(a > 1.0)) throw std::invalid_argument("fstar_region needs a > 1, got " + std::to_string(a));
    const int k = p.k();
    if (p.Q_sorted(k) < a * p.Q_sorted(1)) return {RegionLabel::Kind::FstarReject, {}};
    const int s = std::max(1, zero_block_size(p, a));
    std::vector<int> labels;
    for (int j = 1; j <= s; ++j) labels.push_back(p.ranked(j));
    std::sort(labels.begin(), labels.end());
    if (s == 1) return {RegionLabel::Kind::FstarLabel, labels};
    return {RegionLabel::Kind::FstarRefine, labels};
}

struct PopulationMinimum {
    Eigen::VectorXd f;        // k-1
    Eigen::VectorXd margins;  // k, <Y_j, f>
    double value = 0.0;
    double residual = 0.0;    // norm of the least-norm subgradient
    int iterations = 0;
};

namespace detail {

/// Conditional risk g(f) = sum_j Q_j l(<Y_j, f>).
inline double conditional_risk(const Eigen::VectorXd& margins, const Eigen::VectorXd& q, const BentLoss& loss) {
    double g = 0.0;
    for (Eigen::Index j = 0; j < margins.size(); ++j) g += q(j) * loss.value(margins(j));
    return g;
}

inline bool near_kink(const BentLoss& loss, double m, double tol, double* kink = nullptr) {
    for (double b : loss.kinks()) {
        if (std::abs(m - b) <= tol) {
            if (kink) *kink = b;
            return true;
        }
    }
    return false;
}

/// Least norm over the subdifferential of g at f. Margins within `kink_tol` of a kink
/// take their whole subgradient interval; a small box QP is solved by coordinate descent.
inline double min_subgradient_norm(const Eigen::VectorXd& margins, const Eigen::VectorXd& q, const BentLoss& loss,
                                   const RowMatrix& Y, double kink_tol) {
    const Eigen::Index k = margins.size();
    Eigen::VectorXd r = Eigen::VectorXd::Zero(Y.cols());
    std::vector<Eigen::Index> free;
    std::vector<Interval> box;
    std::vector<double> s;
    for (Eigen::Index j = 0; j < k; ++j) {
        double b = 0.0;
        if (q(j) > 0.0 && near_kink(loss, margins(j), kink_tol, &b)) {
            const Interval iv = loss.subgradient(b);
            free.push_back(j);
            box.push_back(iv);
            s.push_back(0.5 * (iv.lo + iv.hi));
            r += q(j) * s.back() * Y.row(j).transpose();
        } else {
            r += q(j) * loss.subgradient(margins(j)).lo * Y.row(j).transpose();
        }
    }
    for (int sweep = 0; sweep < 20000 && !free.empty(); ++sweep) {
        double moved = 0.0;
        for (std::size_t t = 0; t < free.size(); ++t) {
            const Eigen::VectorXd col = q(free[t]) * Y.row(free[t]).transpose();
            const double cc = col.squaredNorm();
            if (cc == 0.0) continue;
            const double next = std::clamp(s[t] - col.dot(r) / cc, box[t].lo, box[t].hi);
            const double step = next - s[t];
            if (step != 0.0) {
                r += step * col;
                s[t] = next;
                moved = std::max(moved, std::abs(step));
            }
        }
        if (moved <= 1e-16) break;
    }
    return r.norm();
}

/// Null-space parametrization f = f0 + N z of {f : <Y_j, f> = b_j, j in active}.
struct AffineSlice {
    Eigen::VectorXd f0;
    Eigen::MatrixXd N;
    bool consistent = true;
};

inline AffineSlice affine_slice(const RowMatrix& Y, const std::vector<std::pair<Eigen::Index, double>>& active) {
    const Eigen::Index dim = Y.cols();
    AffineSlice out;
    if (active.empty()) {
        out.f0 = Eigen::VectorXd::Zero(dim);
        out.N = Eigen::MatrixXd::Identity(dim, dim);
        return out;
    }
    Eigen::MatrixXd C(static_cast<Eigen::Index>(active.size()), dim);
    Eigen::VectorXd b(C.rows());
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
        C.row(i) = Y.row(active[i].first);
        b(i) = active[i].second;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-10);
    out.f0 = svd.solve(b);
    out.consistent = (C * out.f0 - b).norm() <= 1e-10 * (1.0 + b.norm());
    const Eigen::Index rank = svd.rank();
    out.N = svd.matrixV().rightCols(dim - rank);
    return out;
}

}  // namespace detail

/// Minimizes g(f) = sum_y p_y sum_{j != y} l(<Y_j, f>) over R^(k-1).
///
/// Smoothing continuation with damped Newton lands near the kinks; margins close to a
/// kink are then pinned to it and the problem is re-solved on the resulting affine
/// slice. Succeeds once the least-norm subgradient is below `tol`.
inline PopulationMinimum population_minimizer(const ProbVector& p, const BentLoss& loss,
                                              const CodingSimplex& simplex, double tol = 1e-8) {
    const int k = p.k();
    if (simplex.k() != k) throw std::invalid_argument("population_minimizer: simplex and ProbVector disagree on k");
    const RowMatrix& Y = simplex.vertices();
    const Eigen::Index dim = Y.cols();
    Eigen::VectorXd q(k);
    for (int j = 1; j <= k; ++j) q(j - 1) = p.Q(j);

    PopulationMinimum out;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(dim);

    // Newton on an affine slice; `mu` > 0 smooths every margin, mu == 0 uses the loss itself.
    const auto newton = [&](const detail::AffineSlice& slice, Eigen::VectorXd z, double mu, int cap) {
        const auto margins_of = [&](const Eigen::VectorXd& zz) -> Eigen::VectorXd {
            return Y * (slice.f0 + slice.N * zz);
        };
        const auto value_of = [&](const Eigen::VectorXd& m) {
            if (mu == 0.0) return detail::conditional_risk(m, q, loss);
            double g = 0.0;
            for (int j = 0; j < k; ++j) g += q(j) * loss.smoothed(m(j), mu).value;
            return g;
        };
        double damping = 1e-6;
        Eigen::VectorXd m = margins_of(z);
        double g = value_of(m);
        for (int it = 0; it < cap && z.size() > 0; ++it, ++out.iterations) {
            Eigen::VectorXd grad_f = Eigen::VectorXd::Zero(dim);
            Eigen::MatrixXd hess_f = Eigen::MatrixXd::Zero(dim, dim);
            for (int j = 0; j < k; ++j) {
                double slope;
                double curv;
                if (mu == 0.0) {
                    slope = loss.subgradient(m(j)).lo;
                    curv = loss.curvature(m(j));
                } else {
                    const Smoothed sm = loss.smoothed(m(j), mu);
                    slope = sm.slope;
                    curv = sm.curvature;
                }
                const Eigen::VectorXd y = Y.row(j).transpose();
                grad_f += q(j) * slope * y;
                hess_f += q(j) * curv * y * y.transpose();
            }
            const Eigen::VectorXd grad = slice.N.transpose() * grad_f;
            if (grad.lpNorm<Eigen::Infinity>() <= 1e-14) break;
            const Eigen::MatrixXd hess = slice.N.transpose() * hess_f * slice.N;
            bool moved = false;
            for (int tries = 0; tries < 60; ++tries) {
                Eigen::MatrixXd h = hess;
                h.diagonal().array() += damping;
                const Eigen::VectorXd step = -h.ldlt().solve(grad);
                const Eigen::VectorXd zn = z + step;
                const Eigen::VectorXd mn = margins_of(zn);
                const double gn = value_of(mn);
                // Near the optimum the decrease drops below rounding in g; accept on the model then.
                const double slack = -grad.dot(step) <= 1e-13 * std::max(1.0, std::abs(g))
                                         ? 1e-13 * std::max(1.0, std::abs(g))
                                         : 1e-4 * grad.dot(step);
                if (gn <= g + slack) {
                    moved = gn < g || step.norm() > 0.0;
                    const double decrease = g - gn;
                    z = zn;
                    m = mn;
                    g = gn;
                    damping = std::max(damping * 0.3, 1e-12);
                    if (decrease <= 1e-16 * std::max(1.0, std::abs(g)) && step.norm() <= 1e-14) moved = false;
                    break;
                }
                damping *= 10.0;
            }
            if (!moved) break;
        }
        return z;
    };

    const detail::AffineSlice whole = detail::affine_slice(Y, {});
    for (double mu = 1e-1; mu >= 1e-12; mu /= 10.0) f = newton(whole, f, mu, 200);

    double best_residual = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_f = f;
    for (double snap : {1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-3, 1e-2}) {
        Eigen::VectorXd cur = f;
        for (int round = 0; round < 8; ++round) {
            const Eigen::VectorXd m = Y * cur;
            std::vector<std::pair<Eigen::Index, double>> active;
            for (int j = 0; j < k; ++j) {
                double b = 0.0;
                if (detail::near_kink(loss, m(j), snap, &b)) active.emplace_back(j, b);
            }
            const detail::AffineSlice slice = detail::affine_slice(Y, active);
            if (!slice.consistent) break;
            Eigen::VectorXd z = slice.N.transpose() * (cur - slice.f0);
            z = newton(slice, z, 0.0, 100);
            cur = slice.f0 + slice.N * z;
            const double res = detail::min_subgradient_norm(Y * cur, q, loss, Y, 1e-11);
            if (res < best_residual) {
                best_residual = res;
                best_f = cur;
            }
            if (res <= tol) break;
        }
        if (best_residual <= tol) break;
    }
    if (!(best_residual <= tol)) {
        throw ConvergenceError("population_minimizer did not reach the subgradient tolerance", best_residual);
    }
    out.f = best_f;
    out.margins = Y * best_f;
    out.value = detail::conditional_risk(out.margins, q, loss);
    out.residual = best_residual;
    return out;
}

/// Expected sign of each margin under the minimizer: +1, 0 or -1 per label.
inline std::vector<int> predicted_sign_pattern(const ProbVector& p, double a) {
    const int k = p.k();
    std::vector<int> pattern(k, 0);
    if (fstar_region(p, a).is_reject()) return pattern;
    const int s = std::max(1, zero_block_size(p, a));
    pattern[p.ranked(1) - 1] = 1;
    for (int j = s + 1; j <= k; ++j) pattern[p.ranked(j) - 1] = -1;
    return pattern;
}

/// True when some ratio Q_(j)/Q_(1) sits within a relative `band` of a, or the top two
/// probabilities nearly tie; the sign pattern changes across these sets.
inline bool near_region_boundary(const ProbVector& p, double a, double band) {
    const double q1 = p.Q_sorted(1);
    for (int j = 2; j <= p.k(); ++j) {
        if (std::abs(p.Q_sorted(j) - a * q1) <= band * a * q1) return true;
    }
    return p.Q_sorted(2) - q1 <= band * q1;
}

struct Prop1Report {
    ProbVector p;
    double a;
    std::vector<int> predicted;
    std::vector<int> observed;
    Eigen::VectorXd margins;
    double residual = 0.0;
    bool agrees = false;

    std::string describe() const {
        std::ostringstream os;
        os << std::setprecision(10) << "p=(" << p.p().transpose() << ") a=" << a << " margins=(" << margins.transpose()
           << ") predicted=(";
        for (std::size_t j = 0; j < predicted.size(); ++j) os << (j ? "," : "") << predicted[j];
        os << ") observed=(";
        for (std::size_t j = 0; j < observed.size(); ++j) os << (j ? "," : "") << observed[j];
        os << ")";
        return os.str();
    }
};

/// Runs the oracle and compares its margin signs with the pattern implied by the Q-ratios.
inline Prop1Report verify_prop1(const ProbVector& p, const BentLoss& loss, double tol = 1e-5) {
    const auto simplex = simplex_for(p.k());
    const PopulationMinimum fm = population_minimizer(p, loss, *simplex);
    Prop1Report rep{p, loss.a(), predicted_sign_pattern(p, loss.a()), {}, fm.margins, fm.residual, false};
    for (Eigen::Index j = 0; j < fm.margins.size(); ++j) {
        const double m = fm.margins(j);
        rep.observed.push_back(std::abs(m) <= tol ? 0 : (m > 0.0 ? 1 : -1));
    }
    rep.agrees = rep.observed == rep.predicted;
    return rep;
}

struct Prop1Sweep {
    std::size_t checked = 0;
    std::size_t excluded = 0;  // boundary draws
    std::vector<Prop1Report> mismatches;
    bool passed() const { return mismatches.empty() && checked > 0; }
};

/// `draws` flat-Dirichlet vectors per (loss, a), skipping draws near a region boundary.
inline Prop1Sweep sweep_prop1(int k, const std::vector<LossKind>& kinds, const std::vector<double>& slopes, int draws,
                              std::uint64_t seed, double tol = 1e-5, double band = 1e-3) {
    Prop1Sweep out;
    std::mt19937_64 rng(seed);
    for (LossKind kind : kinds) {
        for (double a : slopes) {
            const BentLoss loss(kind, a);
            for (int i = 0; i < draws; ++i) {
                const ProbVector p = sample_simplex(k, rng);
                if (near_region_boundary(p, a, band)) {
                    ++out.excluded;
                    continue;
                }
                Prop1Report rep = verify_prop1(p, loss, tol);
                ++out.checked;
                if (!rep.agrees) out.mismatches.push_back(std::move(rep));
            }
        }
    }
    return out;
}

/// Largest Q_(k)/Q_(1) over the Bayes reject region P_(1) <= 1 - d. Equals a2 only when
/// d >= (k-2)/(k-1); below that, R_f*(a) already contains R_Bayes for a past this value.
inline double bayes_reject_ratio_sup(int k, double d) {
    check_rejection_cost(d, k);
    // Extremal point: P_(1) = 1 - d, the next classes filled up to 1 - d, the rest on P_(k).
    double rest = d;
    for (int j = 2; j <= k - 1; ++j) rest -= std::min(1.0 - d, rest);
    return (1.0 - rest) / d;
}

struct SandwichOptions {
    std::uint64_t seed = 20170101;
    double a1_scale = 1.0;  // != 1 only for negative controls
    std::size_t keep_offenders = 10;
    std::optional<double> a_interior;  // default: middle of (a1, min(a2, bayes_reject_ratio_sup))
};

struct SandwichReport {
    int k = 0;
    double d = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double a_interior = 0.0;
    double ratio_sup = 0.0;
    std::size_t samples = 0;
    std::size_t lower_violations = 0;  // in R_f*(a1) but not Bayes-reject
    std::size_t upper_violations = 0;  // Bayes-reject but not in R_f*(a2)
    std::vector<Eigen::VectorXd> offenders;
    // Tightness at a_interior (k > 2).
    std::optional<Eigen::VectorXd> witness_fstar_only;
    std::optional<Eigen::VectorXd> witness_bayes_only;
    // k == 2: disagreements between R_f*(a1) and R_Bayes.
    std::size_t symmetric_difference = 0;

    bool inclusions_hold() const { return lower_violations == 0 && upper_violations == 0; }
    bool tight() const { return k == 2 ? symmetric_difference == 0 : (witness_fstar_only && witness_bayes_only); }
    bool passed() const { return inclusions_hold() && tight(); }

    std::string describe() const {
        std::ostringstream os;
        os << std::setprecision(6) << "k=" << k << " d=" << d << " a1=" << a1 << " a2=" << a2
           << " ratio_sup=" << ratio_sup << " samples=" << samples
           << " lower_violations=" << lower_violations << " upper_violations=" << upper_violations;
        if (k == 2) {
            os << " symmetric_difference=" << symmetric_difference;
        } else {
            os << " a=" << a_interior << " witnesses=" << (witness_fstar_only ? "f*" : "-") << "/"
               << (witness_bayes_only ? "bayes" : "-");
        }
        for (const auto& v : offenders) os << "\n  offending p=(" << v.transpose() << ")";
        return os.str();
    }
};

/// Monte Carlo check that R_f*(a1) is inside the Bayes reject region, which is inside R_f*(a2).
inline SandwichReport verify_region_sandwich(int k, double d, std::size_t n_samples, const SandwichOptions& opts = {}) {
    if (n_samples < 1) throw std::invalid_argument("verify_region_sandwich needs at least one sample");
    auto [a1, a2] = a_bounds(k, d);
    a1 *= opts.a1_scale;
    SandwichReport rep;
    rep.k = k;
    rep.d = d;
    rep.a1 = a1;
    rep.a2 = a2;
    rep.ratio_sup = bayes_reject_ratio_sup(k, d);
    rep.a_interior = opts.a_interior.value_or(0.5 * (a1 + std::min(a2, rep.ratio_sup)));
    rep.samples = n_samples;
    std::mt19937_64 rng(opts.seed ^ (static_cast<std::uint64_t>(k) << 32));
    const auto fstar_reject = [](const ProbVector& p, double a) { return p.Q_sorted(p.k()) < a * p.Q_sorted(1); };
    for (std::size_t i = 0; i < n_samples; ++i) {
        const ProbVector p = sample_simplex(k, rng);
        const bool bayes = p.P_sorted(1) <= 1.0 - d;
        bool bad = false;
        if (a1 > 1.0 && fstar_reject(p, a1) && !bayes) {
            ++rep.lower_violations;
            bad = true;
        }
        if (bayes && !fstar_reject(p, a2)) {
            ++rep.upper_violations;
            bad = true;
        }
        if (bad && rep.offenders.size() < opts.keep_offenders) rep.offenders.push_back(p.p());
        if (k == 2) {
            if (fstar_reject(p, a1) != bayes) ++rep.symmetric_difference;
        } else {
            const bool inner = fstar_reject(p, rep.a_interior);
            if (inner && !bayes && !rep.witness_fstar_only) rep.witness_fstar_only = p.p();
            if (bayes && !inner && !rep.witness_bayes_only) rep.witness_bayes_only = p.p();
        }
    }
    return rep;
}

/// Barycentric grid over the 3-class simplex with Bayes, f*(a1) and f*(a2) labels as CSV.
/// Label sets are joined with ';'.
inline void write_region_map(std::ostream& out, double d, int resolution) {
    if (resolution < 1) throw std::invalid_argument("region map resolution must be >= 1");
    const auto [a1, a2] = a_bounds(3, d);
    out << "p1,p2,p3,bayes,fstar_a1,fstar_a2\n";
    out << std::setprecision(10);
    for (int i = 0; i <= resolution; ++i) {
        for (int j = 0; i + j <= resolution; ++j) {
            const int l = resolution - i - j;
            const double p1 = static_cast<double>(i) / resolution;
            const double p2 = static_cast<double>(j) / resolution;
            const double p3 = static_cast<double>(l) / resolution;
            const ProbVector p{p1, p2, std::max(0.0, 1.0 - p1 - p2)};
            out << p1 << ',' << p2 << ',' << p3 << ',' << bayes_region(p, d).str() << ','
                << fstar_region(p, a1).str(";") << ',' << fstar_region(p, a2).str(";") << '\n';
        }
    }
}

}  // namespace rejref
