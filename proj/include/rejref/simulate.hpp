#pragma once

#include <cstdint>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "rejref/errors.hpp"
#include "rejref/generators.hpp"
#include "rejref/predict.hpp"
#include "rejref/tune.hpp"

namespace rejref {

/// One simulation study: R replicates of generate -> tune -> evaluate.
struct SimulationConfig {
    int example = 1;
    SampleSizes sizes{0, 0, 0};  // zeros: example defaults
    int noise_dim = -1;
    std::uint64_t seed = 1;
    int replicates = 20;
    TuningGrid grid;
    TrainSpec spec;
    int threads = 1;  // replicates run concurrently; tuning inside a replicate is serial
};

struct ReplicateResult {
    int replicate = 0;
    double lambda = 0.0;
    double a = 0.0;
    double delta_fraction = 0.0;
    double delta = 0.0;
    double regular_lambda = 0.0;
    double regular_a = 0.0;
    EvalReport report;
};

struct SimulationResult {
    std::vector<ReplicateResult> replicates;
    TableSummary summary;
};

namespace detail {

template <class E>
[[noreturn]] void rethrow_for_replicate(const E& e, int replicate, std::uint64_t seed) {
    const std::string where = "replicate " + std::to_string(replicate) + " (seed " + std::to_string(seed) + "): ";
    if constexpr (std::is_same_v<E, ConvergenceError>) {
        throw ConvergenceError(where + e.what(), e.last_residual);
    } else {
        throw E(where + e.what());
    }
}

}  // namespace detail

inline ReplicateResult run_replicate(const SimulationConfig& cfg, int replicate) {
    try {
        const SimulatedSplit split =
            generate({cfg.example, cfg.sizes, cfg.noise_dim, cfg.seed, static_cast<std::uint64_t>(replicate)});
        const TuneResult tuned = tune(split.train, split.tune, cfg.grid, cfg.spec, 1);
        ReplicateResult out;
        out.replicate = replicate;
        out.lambda = tuned.lambda;
        out.a = tuned.a;
        out.delta_fraction = tuned.delta_fraction;
        out.delta = tuned.delta;
        out.regular_lambda = tuned.regular_lambda;
        out.regular_a = tuned.regular_a;
        out.report = evaluate(*tuned.model, split.test, tuned.delta, cfg.grid.d, *tuned.regular_model);
        return out;
    } catch (const ConvergenceError& e) {
        detail::rethrow_for_replicate(e, replicate, cfg.seed);
    } catch (const DataError& e) {
        detail::rethrow_for_replicate(e, replicate, cfg.seed);
    } catch (const ConfigError& e) {
        detail::rethrow_for_replicate(e, replicate, cfg.seed);
    } catch (const std::exception& e) {
        throw std::runtime_error("replicate " + std::to_string(replicate) + " (seed " + std::to_string(cfg.seed) +
                                 "): " + e.what());
    }
}

/// Runs every replicate; results come back in replicate order whatever the thread count.
inline SimulationResult simulate(const SimulationConfig& cfg,
                                 const std::function<void(const ReplicateResult&)>& on_done = {}) {
    if (cfg.replicates < 1) throw ConfigError("simulation needs at least one replicate");
    cfg.grid.validate(example_classes(cfg.example));
    SimulationResult out;
    out.replicates.resize(static_cast<std::size_t>(cfg.replicates));
    std::mutex report_mutex;
    detail::parallel_for(out.replicates.size(), cfg.threads, [&](std::size_t r) {
        out.replicates[r] = run_replicate(cfg, static_cast<int>(r));
        if (on_done) {
            std::lock_guard lock(report_mutex);
            on_done(out.replicates[r]);
        }
    });
    std::vector<EvalReport> reports;
    for (const auto& r : out.replicates) reports.push_back(r.report);
    out.summary = summarize(reports);
    return out;
}

/// One row per replicate: tuned parameters and the three overall losses with their partitions.
inline void write_replicate_csv(std::ostream& out, const std::vector<ReplicateResult>& rows) {
    out << "replicate,lambda,a,delta_fraction,delta,regular_lambda,regular_a,p1,p2,p3,"
           "rr_error_p1,rr_misrefine_p2,rr_overall,reject_overall,regular_overall,regular_error_p2\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        const EvalReport& e = r.report;
        out << r.replicate << ',' << r.lambda << ',' << r.a << ',' << r.delta_fraction << ',' << r.delta << ','
            << r.regular_lambda << ',' << r.regular_a << ',' << e.p1 << ',' << e.p2 << ',' << e.p3 << ','
            << e.error_p1 << ',' << e.misrefine_p2 << ',' << e.overall_0d1 << ',' << e.reject_overall << ','
            << e.regular_overall << ',' << e.regular_error_p2 << '\n';
    }
}

}  // namespace rejref
