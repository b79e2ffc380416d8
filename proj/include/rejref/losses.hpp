#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace rejref {

enum class LossKind { BentHinge, BentDWD, Custom };

inline std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::BentHinge: return "hinge";
        case LossKind::BentDWD: return "dwd";
        case LossKind::Custom: return "custom";
    }
    return "unknown";
}

inline LossKind loss_kind_from_string(const std::string& name) {
    if (name == "hinge" || name == "svm") return LossKind::BentHinge;
    if (name == "dwd") return LossKind::BentDWD;
    throw std::invalid_argument("unknown loss '" + name + "' (expected hinge or dwd)");
}

/// Closed subdifferential interval [lo, hi].
struct Interval {
    double lo;
    double hi;
    bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
};

/// User-supplied left branch l1 on u <= 0 for a custom bent loss.
///
/// Must be convex, nondecreasing, differentiable on (-inf, 0) with left slope
/// 1 at 0. `curvature` may return 0 where l1 is piecewise linear.
struct LeftBranch {
    std::function<double(double)> value;
    std::function<double(double)> slope;
    std::function<double(double)> curvature;
};

/// Moreau envelope of a loss at one point: value, first and second derivative.
struct Smoothed {
    double value;
    double slope;
    double curvature;
};

/// A bent loss l = l1 + l2: slope 1 just left of 0, slope a > 1 right of 0.
class BentLoss {
public:
    BentLoss(LossKind kind, double a) : kind_(kind), a_(a) {
        if (kind == LossKind::Custom) {
            throw std::invalid_argument("custom bent loss needs a LeftBranch; use BentLoss::custom");
        }
        check_slope(a);
    }

    static BentLoss hinge(double a) { return {LossKind::BentHinge, a}; }
    static BentLoss dwd(double a) { return {LossKind::BentDWD, a}; }

    static BentLoss custom(LeftBranch branch, double a) {
        check_slope(a);
        if (!branch.value || !branch.slope || !branch.curvature) {
            throw std::invalid_argument("custom bent loss: value, slope and curvature are all required");
        }
        const double s0 = branch.slope(-1e-12);
        if (std::abs(s0 - 1.0) > 1e-6) {
            throw std::invalid_argument("custom bent loss: left slope at 0 must be 1, got " + std::to_string(s0));
        }
        BentLoss loss;
        loss.kind_ = LossKind::Custom;
        loss.a_ = a;
        loss.left_ = std::make_shared<const LeftBranch>(std::move(branch));
        return loss;
    }

    LossKind kind() const noexcept { return kind_; }
    double a() const noexcept { return a_; }

    /// Same loss family with a different right slope.
    BentLoss with_slope(double a) const {
        BentLoss copy = *this;
        check_slope(a);
        copy.a_ = a;
        return copy;
    }

    double operator()(double u) const { return value(u); }

    double value(double u) const {
        if (u >= 0.0) return left_value(0.0) + a_ * u;
        return left_value(u);
    }

    Interval subgradient(double u) const {
        if (u > 0.0) return {a_, a_};
        if (u == 0.0) return {1.0, a_};
        switch (kind_) {
            case LossKind::BentHinge:
                if (u < -1.0) return {0.0, 0.0};
                if (u == -1.0) return {0.0, 1.0};
                return {1.0, 1.0};
            case LossKind::BentDWD:
                if (u < -0.5) {
                    const double s = 1.0 / (4.0 * u * u);
                    return {s, s};
                }
                return {1.0, 1.0};
            case LossKind::Custom: {
                const double s = left_->slope(u);
                return {s, s};
            }
        }
        return {0.0, 0.0};
    }

    /// Second derivative where it exists (0 on linear pieces and at kinks).
    double curvature(double u) const {
        if (u >= 0.0) return 0.0;
        switch (kind_) {
            case LossKind::BentHinge: return 0.0;
            case LossKind::BentDWD: return u < -0.5 ? -1.0 / (2.0 * u * u * u) : 0.0;
            case LossKind::Custom: return left_->curvature(u);
        }
        return 0.0;
    }

    /// Points where the loss is not differentiable, ascending.
    std::vector<double> kinks() const {
        if (kind_ == LossKind::BentHinge) return {-1.0, 0.0};
        return {0.0};
    }

    /// Hinge part [1+u]_+ of the decomposition l(u) = [1+u]_+ + (a-1)[u]_+ (BentHinge only).
    static double hinge_part(double u) { return std::max(1.0 + u, 0.0); }
    double bend_part(double u) const { return (a_ - 1.0) * std::max(u, 0.0); }

    /// Moreau envelope min_v l(v) + (u-v)^2 / (2 mu); smooth, and below l by at most mu a^2 / 2.
    Smoothed smoothed(double u, double mu) const {
        const double v = prox(u, mu);
        const double gap = u - v;
        const double val = value(v) + gap * gap / (2.0 * mu);
        const double slope = gap / mu;
        double curv;
        if (is_kink(v)) {
            curv = 1.0 / mu;
        } else {
            const double c = curvature(v);
            curv = c / (1.0 + mu * c);
        }
        return {val, slope, curv};
    }

    /// argmin_v l(v) + (u-v)^2 / (2 mu).
    double prox(double u, double mu) const {
        const auto ks = kinks();
        // Solutions sitting exactly on a kink.
        std::size_t segment = 0;
        for (double b : ks) {
            const Interval s = subgradient(b);
            if (u < b + mu * s.lo) break;
            if (u <= b + mu * s.hi) return b;
            ++segment;
        }
        const double left = segment == 0 ? -std::numeric_limits<double>::infinity() : ks[segment - 1];
        const double right = segment == ks.size() ? std::numeric_limits<double>::infinity() : ks[segment];
        double lo = std::max(left, u - mu * a_);
        double hi = std::min(right, u);
        if (lo >= hi) return std::clamp(u, left, right);

        const auto slope_at = [&](double v) { return subgradient(v).lo; };
        // Linear pieces have a closed form; otherwise safeguarded Newton on v + mu l'(v) = u.
        double v = std::clamp(u - mu * slope_at(std::clamp(u, lo, hi)), lo, hi);
        for (int it = 0; it < 100; ++it) {
            const double f = v + mu * slope_at(v) - u;
            if (std::abs(f) <= 1e-15 * (1.0 + std::abs(u))) break;
            if (f > 0.0) hi = v; else lo = v;
            double next = v - f / (1.0 + mu * curvature(v));
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (next == v) break;
            v = next;
        }
        return v;
    }

private:
    BentLoss() = default;

    static void check_slope(double a) {
        if (!(a > 1.0) || !std::isfinite(a)) {
            throw std::invalid_argument("bent loss needs right slope a > 1, got " + std::to_string(a));
        }
    }

    bool is_kink(double v) const {
        for (double b : kinks()) {
            if (v == b) return true;
        }
        return false;
    }

    double left_value(double u) const {
        switch (kind_) {
            case LossKind::BentHinge: return u < -1.0 ? 0.0 : 1.0 + u;
            case LossKind::BentDWD: return u < -0.5 ? -1.0 / (4.0 * u) : 1.0 + u;
            case LossKind::Custom: return left_->value(u);
        }
        return 0.0;
    }

    LossKind kind_ = LossKind::BentHinge;
    double a_ = 2.0;
    std::shared_ptr<const LeftBranch> left_;
};

inline double loss_eval(const BentLoss& loss, double u) { return loss.value(u); }
inline Interval loss_subgradient(const BentLoss& loss, double u) { return loss.subgradient(u); }

}  // namespace rejref
