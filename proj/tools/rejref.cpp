// rejref: train, tune, predict, evaluate, simulate, verify, regions.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 bad configuration, 3 bad data,
// 4 solver did not converge, 5 a verification check failed.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rejref/rejref.hpp"

namespace fs = std::filesystem;
using namespace rejref;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kConvergence = 4, kVerification = 5 };

// INI sections only group keys for readers; every key names a command-line flag.
struct FlatIni : CLI::ConfigINI {
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> out;
        for (auto& item : CLI::ConfigINI::from_config(input)) {
            if (item.name == "++" || item.name == "--") continue;
            item.parents.clear();
            out.push_back(std::move(item));
        }
        return out;
    }
};

struct Options {
    std::string command;
    std::uint64_t seed = 1;
    int replicates = 20;
    std::string out_dir = ".";
    int threads = 1;

    std::string loss = "hinge";
    std::string penalty = "l2";
    std::string kernel = "linear";
    double bandwidth = 1.0;
    bool penalize_intercept = false;
    double d = std::numeric_limits<double>::quiet_NaN();  // unset: 0.5, or the model's own
    std::string a = "both";

    double lambda_min = 1e-4;
    double lambda_max = 1e2;
    int lambda_count = 30;
    std::vector<double> lambdas;
    std::vector<double> delta_fractions{0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.0};
    int folds = 5;

    std::string train;
    std::string tune;
    std::string data;
    std::string label_column = "label";
    int classes = 0;
    bool normalize = true;
    std::string model;
    std::string output;
    double delta = -1.0;

    int example = 1;
    int noise_dim = -1;
    int n_train = 0;
    int n_tune = 0;
    int n_test = 0;

    std::vector<int> verify_k{2, 3, 4};
    std::vector<double> verify_d{0.3, 0.5, 0.6};
    int samples = 100000;
    int draws = 200;
    double a1_scale = 1.0;
    int resolution = 100;
};

double cost(const Options& o, double fallback = 0.5) { return std::isnan(o.d) ? fallback : o.d; }

std::vector<double> resolve_slopes(const std::string& spec, int k, double d) {
    const auto [a1, a2] = a_bounds(k, d);
    if (spec == "both") return {};
    if (spec == "a1") return {a1};
    if (spec == "a2") return {a2};
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(spec, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != spec.size()) throw ConfigError("--a must be a1, a2, both or a number, got '" + spec + "'");
    return {value};
}

TuningGrid make_grid(const Options& o, int k) {
    TuningGrid g;
    g.d = cost(o);
    g.lambdas = o.lambdas.empty() ? log_grid(o.lambda_min, o.lambda_max, o.lambda_count) : o.lambdas;
    g.delta_fractions = o.delta_fractions;
    g.a_candidates = resolve_slopes(o.a, k, g.d);
    g.validate(k);
    return g;
}

TrainSpec make_spec(const Options& o) {
    TrainSpec s;
    try {
        s.loss = loss_kind_from_string(o.loss);
        s.penalty = penalty_from_string(o.penalty);
        const KernelKind kk = kernel_kind_from_string(o.kernel);
        if (kk == KernelKind::Gaussian) {
            s.kernel = KernelSpec{kk, o.bandwidth};
            s.kernel->validate();
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    s.penalize_intercept = o.penalize_intercept;
    return s;
}

std::string require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError("command needs " + flag);
    return value;
}

fs::path out_path(const Options& o, const std::string& explicit_path, const std::string& name) {
    if (!explicit_path.empty()) return explicit_path;
    fs::create_directories(o.out_dir);
    return fs::path(o.out_dir) / name;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    return out;
}

void write_cells(std::ostream& out, const TuneResult& t) {
    out << "lambda,a,delta_fraction,delta,loss,misclassification\n" << std::setprecision(10);
    for (const auto& c : t.cells) {
        out << c.lambda << ',' << c.a << ',' << c.delta_fraction << ',' << c.delta << ',' << c.loss << ','
            << c.misclassification << '\n';
    }
}

int cmd_train(const Options& o, bool write_grid) {
    CsvSchema schema;
    schema.label_column = o.label_column;
    if (o.classes > 0) schema.k = o.classes;
    Dataset train = load_csv(require(o.train, "--train"), schema);
    schema.k = train.k;
    std::optional<Dataset> tuning;
    if (!o.tune.empty()) tuning = load_csv(o.tune, schema);

    ModelBundle bundle;
    if (o.normalize) {
        bundle.standardizer = fit_standardizer(train);
        train = bundle.standardizer.apply(train);
        if (tuning) *tuning = bundle.standardizer.apply(*tuning);
    }
    const TuningGrid grid = make_grid(o, train.k);
    const TrainSpec spec = make_spec(o);
    TuneResult result = tuning ? tune(train, *tuning, grid, spec, o.threads)
                               : tune_cv(train, o.folds, grid, spec, o.seed, o.threads);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

    bundle.model = *result.model;
    bundle.regular = *result.regular_model;
    bundle.delta = result.delta;
    bundle.d = grid.d;
    result.model.reset();
    result.regular_model.reset();
    bundle.tuning = result;

    const fs::path model_path = out_path(o, o.model, "model.txt");
    save_model(model_path.string(), bundle);
    if (write_grid) {
        auto out = open_out(fs::path(o.out_dir) / "tuning.csv");
        write_cells(out, result);
    }
    std::cout << std::setprecision(6) << "lambda=" << result.lambda << " a=" << result.a
              << " delta_fraction=" << result.delta_fraction << " delta=" << result.delta
              << " tuning_loss=" << result.loss << "\nmodel written to " << model_path.string() << '\n';
    return kOk;
}

Dataset load_for_model(const Options& o, const ModelBundle& b, bool labels) {
    CsvSchema schema;
    schema.label_column = o.label_column;
    schema.k = b.model.classes();
    schema.require_labels = labels;
    Dataset data = load_csv(require(o.data, "--data"), schema);
    return b.standardizer.apply(data);
}

int cmd_predict(const Options& o) {
    const ModelBundle b = load_model(require(o.model, "--model"));
    const Dataset data = load_for_model(o, b, false);
    const double delta = o.delta >= 0.0 ? o.delta : b.delta;
    const Eigen::MatrixXd margins = model_margins(b.model, data.X);
    std::ostringstream text;
    for (Eigen::Index i = 0; i < margins.rows(); ++i) {
        text << predict_refine(margins.row(i).transpose(), delta).str() << '\n';
    }
    if (o.output.empty()) {
        std::cout << text.str();
    } else {
        auto out = open_out(o.output);
        out << text.str();
    }
    return kOk;
}

int cmd_evaluate(const Options& o) {
    const ModelBundle b = load_model(require(o.model, "--model"));
    const Dataset data = load_for_model(o, b, true);
    const double delta = o.delta >= 0.0 ? o.delta : b.delta;
    const EvalReport rep = b.regular ? evaluate(b.model, data, delta, cost(o, b.d), *b.regular)
                                     : evaluate(b.model, data, delta, cost(o, b.d));
    const std::string text = to_key_value(rep);
    if (o.output.empty()) {
        std::cout << text;
    } else {
        auto out = open_out(o.output);
        out << text;
    }
    return kOk;
}

std::vector<std::vector<int>> all_pairs(int k) {
    std::vector<std::vector<int>> out;
    for (int i = 1; i <= k; ++i) {
        for (int j = i + 1; j <= k; ++j) out.push_back({i, j});
    }
    return out;
}

int cmd_simulate(const Options& o) {
    SimulationConfig cfg;
    cfg.example = o.example;
    const int k = example_classes(o.example);
    cfg.sizes = {o.n_train, o.n_tune, o.n_test};
    cfg.noise_dim = o.noise_dim;
    cfg.seed = o.seed;
    cfg.replicates = o.replicates;
    cfg.grid = make_grid(o, k);
    cfg.spec = make_spec(o);
    cfg.threads = o.threads;
    const SimulationResult res = simulate(cfg, [](const ReplicateResult& r) {
        std::cerr << "replicate " << r.replicate << ": rr=" << r.report.overall_0d1
                  << " reject=" << r.report.reject_overall << " regular=" << r.report.regular_overall << '\n';
    });

    fs::create_directories(o.out_dir);
    {
        auto out = open_out(fs::path(o.out_dir) / "replicates.csv");
        write_replicate_csv(out, res.replicates);
    }
    const auto pairs = all_pairs(k);
    {
        auto out = open_out(fs::path(o.out_dir) / "summary.csv");
        write_table_csv(out, res.summary, pairs);
    }
    std::ostringstream text;
    text << std::fixed << std::setprecision(2);
    text << "example " << o.example << ", " << o.replicates << " replicates, seed " << o.seed << ", loss " << o.loss
         << ", penalty " << o.penalty << ", d " << cfg.grid.d << "\n";
    text << "                 prop   regular   reject      rr\n";
    const auto& s = res.summary;
    const auto row = [&](const char* name, double prop, double reg, double rej, double rr) {
        text << std::setw(8) << name << std::setw(13) << 100 * prop << std::setw(10) << 100 * reg << std::setw(9)
             << 100 * rej << std::setw(8) << 100 * rr << '\n';
    };
    row("p1", s.p1, s.regular_error_p1, s.reject_error_p1, s.error_p1);
    row("p2", s.p2, s.regular_error_p2, s.reject_error_p2, s.misrefine_p2);
    row("p3", s.p3, s.regular_error_p3, 0.0, 0.0);
    row("overall", 1.0, s.regular_overall, s.reject_overall, s.overall_0d1);
    for (const auto& pair : pairs) {
        text << "share of size-2 sets {" << pair[0] << "," << pair[1] << "}: " << 100 * s.set_share(pair) << "%\n";
    }
    {
        auto out = open_out(fs::path(o.out_dir) / "summary.txt");
        out << text.str();
    }
    std::cout << text.str();
    return kOk;
}

int cmd_verify(const Options& o) {
    bool ok = true;
    std::vector<int> ks;
    for (int k : o.verify_k) {
        for (double d : o.verify_d) {
            if (k < 2) throw ConfigError("verify: k must be >= 2");
            if (d > (k - 1.0) / k + 1e-15 || !(d > 0.0)) continue;  // inadmissible pair
            SandwichOptions so;
            so.seed = o.seed;
            so.a1_scale = o.a1_scale;
            const SandwichReport rep = verify_region_sandwich(k, d, static_cast<std::size_t>(o.samples), so);
            std::cout << (rep.passed() ? "PASS" : "FAIL") << " sandwich " << rep.describe() << '\n';
            ok = ok && rep.passed();
        }
        if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    }
    for (int k : ks) {
        const Prop1Sweep sw = sweep_prop1(k, {LossKind::BentHinge, LossKind::BentDWD}, {1.2, 2.0, 3.0}, o.draws,
                                          o.seed + static_cast<std::uint64_t>(k));
        std::cout << (sw.passed() ? "PASS" : "FAIL") << " sign-pattern k=" << k << " checked=" << sw.checked
                  << " excluded=" << sw.excluded << " mismatches=" << sw.mismatches.size() << '\n';
        for (std::size_t i = 0; i < std::min<std::size_t>(5, sw.mismatches.size()); ++i) {
            std::cout << "  " << sw.mismatches[i].describe() << '\n';
        }
        ok = ok && sw.passed();
    }
    if (!ok) throw VerificationError("verification failed");
    return kOk;
}

int cmd_regions(const Options& o) {
    const fs::path path = out_path(o, o.output, "regions.csv");
    auto out = open_out(path);
    write_region_map(out, cost(o, 0.6), o.resolution);
    std::cout << "region map written to " << path.string() << '\n';
    return kOk;
}

int run(const Options& o) {
    if (o.command == "train") return cmd_train(o, false);
    if (o.command == "tune") return cmd_train(o, true);
    if (o.command == "predict") return cmd_predict(o);
    if (o.command == "evaluate") return cmd_evaluate(o);
    if (o.command == "simulate") return cmd_simulate(o);
    if (o.command == "verify") return cmd_verify(o);
    if (o.command == "regions") return cmd_regions(o);
    throw ConfigError("unknown command '" + o.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multicategory classification with reject and refine options"};
    app.config_formatter(std::make_shared<FlatIni>());
    app.set_config("--config", "", "INI file; keys are flag names, sections are free-form");
    Options o;

    app.add_option("command,--command", o.command, "train | tune | predict | evaluate | simulate | verify | regions")
        ->required()
        ->check(CLI::IsMember({"train", "tune", "predict", "evaluate", "simulate", "verify", "regions"}));
    app.add_option("--seed", o.seed);
    app.add_option("--replicates", o.replicates)->check(CLI::PositiveNumber);
    app.add_option("--out-dir", o.out_dir);
    app.add_option("--threads", o.threads)->check(CLI::PositiveNumber);

    app.add_option("--loss", o.loss)->check(CLI::IsMember({"hinge", "svm", "dwd"}));
    app.add_option("--penalty", o.penalty)->check(CLI::IsMember({"l1", "l2"}));
    app.add_option("--kernel", o.kernel)->check(CLI::IsMember({"linear", "gaussian"}));
    app.add_option("--bandwidth", o.bandwidth);
    app.add_flag("--penalize-intercept", o.penalize_intercept);
    app.add_option("--d", o.d, "rejection cost");
    app.add_option("--a", o.a, "bending slope: a1, a2, both or a number");

    app.add_option("--lambda-min", o.lambda_min);
    app.add_option("--lambda-max", o.lambda_max);
    app.add_option("--lambda-count", o.lambda_count);
    app.add_option("--lambda", o.lambdas, "explicit lambda values, comma-separated (overrides the log grid)")->delimiter(',');
    app.add_option("--delta-fractions", o.delta_fractions)->delimiter(',');
    app.add_option("--folds", o.folds, "cross-validation folds when no --tune file is given");

    app.add_option("--train", o.train);
    app.add_option("--tune", o.tune);
    app.add_option("--data", o.data, "input rows for predict / evaluate");
    app.add_option("--label-column", o.label_column);
    app.add_option("--classes", o.classes, "number of classes (default: largest label)");
    app.add_flag("--normalize,!--no-normalize", o.normalize);
    app.add_option("--model", o.model);
    app.add_option("--output", o.output);
    app.add_option("--delta", o.delta, "threshold override for predict / evaluate");

    app.add_option("--example", o.example)->check(CLI::IsMember({1, 2, 3}));
    app.add_option("--noise-dim", o.noise_dim);
    app.add_option("--n-train", o.n_train);
    app.add_option("--n-tune", o.n_tune);
    app.add_option("--n-test", o.n_test);

    app.add_option("--verify-k", o.verify_k)->delimiter(',');
    app.add_option("--verify-d", o.verify_d)->delimiter(',');
    app.add_option("--samples", o.samples);
    app.add_option("--draws", o.draws);
    app.add_option("--a1-scale", o.a1_scale, "multiplies a1 (negative control)");
    app.add_option("--resolution", o.resolution);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        return run(o);
    } catch (const VerificationError& e) {
        std::cerr << "verification failure: " << e.what() << '\n';
        return kVerification;
    } catch (const ConvergenceError& e) {
        std::cerr << "solver did not converge: " << e.what() << '\n';
        return kConvergence;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
