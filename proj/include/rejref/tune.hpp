#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rejref/dataset.hpp"
#include "rejref/losses.hpp"
#include "rejref/models.hpp"
#include "rejref/optim.hpp"
#include "rejref/predict.hpp"

namespace rejref {

/// `count` log-spaced values from `hi` down to `lo`.
inline std::vector<double> log_grid(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw std::invalid_argument("log_grid: need 0 < lo <= hi, count >= 1");
    std::vector<double> out;
    for (int i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        out.push_back(std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi))));
    }
    return out;
}

struct TuningGrid {
    std::vector<double> lambdas = log_grid(1e-4, 1e2, 30);
    std::vector<double> delta_fractions{0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.0};
    std::vector<double> a_candidates;  // empty: {a1, a2} for the data's k and d
    double d = 0.5;

    /// a values to fit, resolved against k.
    std::vector<double> slopes(int k) const {
        if (!a_candidates.empty()) return a_candidates;
        const auto [a1, a2] = a_bounds(k, d);
        if (std::abs(a2 - a1) <= 1e-12 * a2) return {a1};
        return {a1, a2};
    }

    void validate(int k) const {
        check_rejection_cost(d, k);
        if (lambdas.empty() || delta_fractions.empty()) throw ConfigError("tuning grid has an empty list");
        for (double l : lambdas) {
            if (!(l > 0.0)) throw ConfigError("tuning grid lambdas must be > 0");
        }
        for (double f : delta_fractions) {
            if (!(f >= 0.0 && f < 1.0)) throw ConfigError("delta fractions must lie in [0, 1)");
        }
        for (double a : slopes(k)) {
            if (!(a > 1.0)) throw ConfigError("bending slope a must be > 1, got " + std::to_string(a));
        }
    }
};

/// What to fit at each grid cell.
struct TrainSpec {
    LossKind loss = LossKind::BentHinge;
    Penalty penalty = Penalty::L2;
    std::optional<KernelSpec> kernel;  // set: kernel learning (squared-norm penalty)
    bool penalize_intercept = false;   // kernel only
    bool use_dual = true;              // dual coordinate descent where it applies (hinge + L2 linear)
    SolverOptions solver = tuning_solver_options();

    /// Looser primal stopping used inside grid searches.
    static SolverOptions tuning_solver_options() {
        SolverOptions o;
        o.rel_tol = 1e-4;
        o.smoothing_min = 1e-4;
        o.tol = 1e-5;
        o.warm_smoothing_start = o.smoothing_start;
        return o;
    }
};

inline BentLoss make_loss(LossKind kind, double a) {
    if (kind == LossKind::BentHinge) return BentLoss::hinge(a);
    if (kind == LossKind::BentDWD) return BentLoss::dwd(a);
    throw std::invalid_argument("custom losses need a LeftBranch; use BentLoss::custom");
}

/// Fits one model; `warm` (same family and shape) seeds the primal solver.
inline AnyModel fit_model(const Dataset& train, const TrainSpec& spec, double a, double lambda,
                          const AnyModel* warm = nullptr) {
    const BentLoss loss = make_loss(spec.loss, a);
    if (spec.kernel) return {train_kernel(train, loss, *spec.kernel, lambda, spec.solver, spec.penalize_intercept)};
    if (spec.use_dual && spec.penalty == Penalty::L2 && spec.loss == LossKind::BentHinge) {
        return {train_linear_dual_cd(train, loss, lambda, spec.solver)};
    }
    const Eigen::MatrixXd* init = nullptr;
    if (warm) {
        if (const auto* lm = std::get_if<LinearModel>(&warm->model)) init = &lm->beta;
    }
    return {train_linear_primal(train, loss, spec.penalty, lambda, spec.solver, init)};
}

/// One (lambda, a, delta) cell of a grid search.
struct TuneCell {
    double lambda = 0.0;
    double a = 0.0;
    double delta_fraction = 0.0;
    double delta = 0.0;  // on the final (or first-fold) model's margin scale
    double loss = 0.0;   // tuning 0-d-1 loss of the reject-and-refine rule
    double misclassification = 0.0;  // tuning error of the argmax rule (delta = 0)
};

struct TuneResult {
    double lambda = 0.0;
    double a = 0.0;
    double delta_fraction = 0.0;
    double delta = 0.0;
    double loss = 0.0;
    std::vector<TuneCell> cells;  // grid order: a, lambda, delta fraction
    std::optional<AnyModel> model;

    // Regular classifier: same fits, delta = 0, chosen by misclassification.
    double regular_lambda = 0.0;
    double regular_a = 0.0;
    double regular_error = 0.0;
    std::optional<AnyModel> regular_model;

    std::vector<std::string> warnings;
};

namespace detail {

/// Runs jobs 0..count-1 on up to `threads` workers; rethrows the first failure.
template <class F>
void parallel_for(std::size_t count, int threads, F&& job) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Largest |margin| over training points; the delta grid is relative to it.
inline double margin_scale(const AnyModel& model, const Dataset& train) {
    return model_margins(model, train.X).cwiseAbs().maxCoeff();
}

/// Scores of one fitted model on a validation set for every delta fraction.
struct PathScores {
    std::vector<double> loss;  // per delta fraction
    double misclassification = 0.0;
    double scale = 0.0;
    std::optional<AnyModel> model;
};

inline PathScores score_model(AnyModel model, const Dataset& fit_data, const Dataset& valid, const TuningGrid& grid,
                              bool keep_model) {
    PathScores s;
    s.scale = margin_scale(model, fit_data);
    const Eigen::MatrixXd margins = model_margins(model, valid.X);
    const double n = static_cast<double>(valid.n());
    for (double frac : grid.delta_fractions) {
        const double delta = frac * s.scale;
        double total = 0.0;
        for (Eigen::Index i = 0; i < margins.rows(); ++i) {
            total += zero_d_one_loss(predict_refine(margins.row(i).transpose(), delta),
                                     valid.y[static_cast<std::size_t>(i)], grid.d, valid.k);
        }
        s.loss.push_back(total / n);
    }
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < margins.rows(); ++i) {
        wrong += argmax_label(margins.row(i).transpose()) != valid.y[static_cast<std::size_t>(i)];
    }
    s.misclassification = static_cast<double>(wrong) / n;
    if (keep_model) s.model = std::move(model);
    return s;
}

/// Fits the lambda path (descending, warm-started) for one a and scores each fit.
inline std::vector<PathScores> fit_path(const Dataset& train, const Dataset& valid, const TuningGrid& grid,
                                        const TrainSpec& spec, double a, bool keep_models) {
    std::vector<std::size_t> order(grid.lambdas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return grid.lambdas[x] > grid.lambdas[y]; });
    std::vector<PathScores> out(grid.lambdas.size());
    std::optional<AnyModel> warm;
    for (std::size_t idx : order) {
        AnyModel model = fit_model(train, spec, a, grid.lambdas[idx], warm ? &*warm : nullptr);
        warm = model;
        out[idx] = score_model(std::move(model), train, valid, grid, keep_models);
    }
    return out;
}

// Tie-break toward the more conservative cell: larger lambda, then larger delta, then smaller a.
inline bool better_cell(const TuneCell& c, const TuneCell& best, double c_score, double best_score) {
    constexpr double eps = 1e-12;
    if (c_score < best_score - eps) return true;
    if (c_score > best_score + eps) return false;
    if (c.lambda != best.lambda) return c.lambda > best.lambda;
    if (c.delta_fraction != best.delta_fraction) return c.delta_fraction > best.delta_fraction;
    return c.a < best.a;
}

inline void check_tuning_inputs(const Dataset& train, const TuningGrid& grid, TuneResult& result,
                                const Dataset* valid) {
    train.validate();
    grid.validate(train.k);
    if (valid) {
        valid->validate();
        if (valid->k != train.k || valid->p() != train.p()) {
            throw DataError("tuning set shape (p=" + std::to_string(valid->p()) + ", k=" + std::to_string(valid->k) +
                            ") does not match training set (p=" + std::to_string(train.p()) +
                            ", k=" + std::to_string(train.k) + ")");
        }
        const auto counts = valid->class_counts();
        if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
            result.warnings.push_back("tuning set contains a single class; 0-d-1 tuning proceeds as defined");
        }
    }
}

/// Picks best cells from `cells` (loss and misclassification filled in).
inline void select(TuneResult& result) {
    const TuneCell* best = nullptr;
    const TuneCell* regular = nullptr;
    for (const auto& c : result.cells) {
        if (!best || better_cell(c, *best, c.loss, best->loss)) best = &c;
        // The regular rule ignores delta, so only (lambda, a) break ties.
        TuneCell lhs = c;
        lhs.delta_fraction = 0.0;
        if (!regular) {
            regular = &c;
            continue;
        }
        TuneCell rhs = *regular;
        rhs.delta_fraction = 0.0;
        if (better_cell(lhs, rhs, c.misclassification, regular->misclassification)) regular = &c;
    }
    result.lambda = best->lambda;
    result.a = best->a;
    result.delta_fraction = best->delta_fraction;
    result.delta = best->delta;
    result.loss = best->loss;
    result.regular_lambda = regular->lambda;
    result.regular_a = regular->a;
    result.regular_error = regular->misclassification;
}

}  // namespace detail

/// Grid search on a separate tuning set. One fit per (lambda, a); every delta
/// fraction reuses that fit. Returns the best reject-and-refine model and the
/// best regular (delta = 0) model.
inline TuneResult tune(const Dataset& train, const Dataset& tuning, const TuningGrid& grid, const TrainSpec& spec,
                       int threads = 1) {
    TuneResult result;
    detail::check_tuning_inputs(train, grid, result, &tuning);
    const std::vector<double> slopes = grid.slopes(train.k);
    std::vector<std::vector<detail::PathScores>> paths(slopes.size());
    detail::parallel_for(slopes.size(), threads, [&](std::size_t s) {
        paths[s] = detail::fit_path(train, tuning, grid, spec, slopes[s], true);
    });
    for (std::size_t s = 0; s < slopes.size(); ++s) {
        for (std::size_t l = 0; l < grid.lambdas.size(); ++l) {
            const auto& ps = paths[s][l];
            for (std::size_t f = 0; f < grid.delta_fractions.size(); ++f) {
                result.cells.push_back({grid.lambdas[l], slopes[s], grid.delta_fractions[f],
                                        grid.delta_fractions[f] * ps.scale, ps.loss[f], ps.misclassification});
            }
        }
    }
    detail::select(result);
    const auto find_model = [&](double a, double lambda) -> const AnyModel& {
        const auto s = static_cast<std::size_t>(std::find(slopes.begin(), slopes.end(), a) - slopes.begin());
        const auto l = static_cast<std::size_t>(std::find(grid.lambdas.begin(), grid.lambdas.end(), lambda) -
                                                grid.lambdas.begin());
        return *paths[s][l].model;
    };
    result.model = find_model(result.a, result.lambda);
    result.regular_model = find_model(result.regular_a, result.regular_lambda);
    return result;
}

/// Stratified fold assignment (0..folds-1) for each row.
inline std::vector<int> stratified_folds(const Dataset& data, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    std::mt19937_64 rng(seed);
    std::vector<int> fold(static_cast<std::size_t>(data.n()), 0);
    int offset = 0;
    for (int label = 1; label <= data.k; ++label) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < data.y.size(); ++i) {
            if (data.y[i] == label) rows.push_back(i);
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t r = 0; r < rows.size(); ++r) fold[rows[r]] = static_cast<int>((r + offset) % folds);
        offset += static_cast<int>(rows.size());
    }
    return fold;
}

/// Grid search by stratified cross-validation, then a refit on all of `train`.
inline TuneResult tune_cv(const Dataset& train, int folds, const TuningGrid& grid, const TrainSpec& spec,
                          std::uint64_t seed = 1, int threads = 1) {
    TuneResult result;
    detail::check_tuning_inputs(train, grid, result, nullptr);
    if (train.n() < folds) throw DataError("fewer rows than cross-validation folds");
    const auto fold_of = stratified_folds(train, folds, seed);
    const std::vector<double> slopes = grid.slopes(train.k);

    // jobs: (fold, a)
    const std::size_t jobs = static_cast<std::size_t>(folds) * slopes.size();
    std::vector<std::vector<detail::PathScores>> paths(jobs);
    detail::parallel_for(jobs, threads, [&](std::size_t job) {
        const int f = static_cast<int>(job / slopes.size());
        const std::size_t s = job % slopes.size();
        std::vector<Eigen::Index> fit_rows, valid_rows;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            (fold_of[i] == f ? valid_rows : fit_rows).push_back(static_cast<Eigen::Index>(i));
        }
        paths[job] = detail::fit_path(train.subset(fit_rows), train.subset(valid_rows), grid, spec, slopes[s], false);
    });
    for (std::size_t s = 0; s < slopes.size(); ++s) {
        for (std::size_t l = 0; l < grid.lambdas.size(); ++l) {
            for (std::size_t fr = 0; fr < grid.delta_fractions.size(); ++fr) {
                TuneCell cell{grid.lambdas[l], slopes[s], grid.delta_fractions[fr], 0.0, 0.0, 0.0};
                for (int f = 0; f < folds; ++f) {
                    const auto& ps = paths[static_cast<std::size_t>(f) * slopes.size() + s][l];
                    cell.loss += ps.loss[fr] / folds;
                    cell.misclassification += ps.misclassification / folds;
                }
                result.cells.push_back(cell);
            }
        }
    }
    detail::select(result);
    result.model = fit_model(train, spec, result.a, result.lambda);
    result.delta = result.delta_fraction * detail::margin_scale(*result.model, train);
    for (auto& c : result.cells) {
        if (c.a == result.a && c.lambda == result.lambda) c.delta = c.delta_fraction * detail::margin_scale(*result.model, train);
    }
    result.regular_model = (result.regular_a == result.a && result.regular_lambda == result.lambda)
                               ? *result.model
                               : fit_model(train, spec, result.regular_a, result.regular_lambda);
    return result;
}

}  // namespace rejref
