#pragma once

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rejref/dataset.hpp"
#include "rejref/errors.hpp"
#include "rejref/models.hpp"
#include "rejref/tune.hpp"

namespace rejref {

inline constexpr int kModelFormatVersion = 1;

/// Everything `predict` and `evaluate` need: the fitted model, the regular
/// classifier, the input transform and the tuned thresholds.
struct ModelBundle {
    AnyModel model;
    std::optional<AnyModel> regular;
    Standardizer standardizer;
    double delta = 0.0;
    double d = 0.5;  // rejection cost the thresholds were tuned for
    std::optional<TuneResult> tuning;  // model pointers inside are not stored
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& M) {
    out << "matrix " << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? " " : "") << fmt(M(i, j));
        out << '\n';
    }
}

inline void write_model(std::ostream& out, const std::string& role, const AnyModel& any) {
    const BentLoss& loss = any.loss();
    if (loss.kind() == LossKind::Custom) throw ConfigError("models with a custom loss cannot be saved");
    const FitInfo& info = any.info();
    if (const auto* m = std::get_if<LinearModel>(&any.model)) {
        out << "model " << role << " linear\n";
        out << "k " << m->k << "\nloss " << to_string(loss.kind()) << ' ' << fmt(loss.a()) << '\n';
        out << "penalty " << to_string(m->penalty) << "\nlambda " << fmt(m->lambda) << '\n';
        out << "info " << info.iterations << ' ' << info.converged << ' ' << fmt(info.objective) << ' '
            << fmt(info.kkt_residual) << ' ' << fmt(info.duality_gap) << '\n';
        write_matrix(out, "beta", m->beta);
    } else {
        const auto& km = std::get<KernelModel>(any.model);
        out << "model " << role << " kernel\n";
        out << "k " << km.k << "\nloss " << to_string(loss.kind()) << ' ' << fmt(loss.a()) << '\n';
        out << "kernel " << to_string(km.kernel.kind) << ' ' << fmt(km.kernel.bandwidth) << '\n';
        out << "penalize_intercept " << km.penalize_intercept << "\nlambda " << fmt(km.lambda) << '\n';
        out << "info " << info.iterations << ' ' << info.converged << ' ' << fmt(info.objective) << ' '
            << fmt(info.kkt_residual) << ' ' << fmt(info.duality_gap) << '\n';
        write_matrix(out, "theta", km.theta);
        write_matrix(out, "intercept", km.intercept);
        write_matrix(out, "support", km.support);
    }
    out << "end model\n";
}

/// Line-oriented reader that tracks the line number for error messages.
class ModelReader {
public:
    explicit ModelReader(std::istream& in) : in_(in) {}

    std::istringstream line(const std::string& expect) {
        std::string text;
        do {
            if (!std::getline(in_, text)) fail("unexpected end of file, expected '" + expect + "'");
            ++line_no_;
        } while (text.empty());
        std::istringstream is(text);
        std::string key;
        is >> key;
        if (key != expect) fail("expected '" + expect + "', found '" + key + "'");
        return is;
    }

    std::istringstream raw_line() {
        std::string text;
        if (!std::getline(in_, text)) fail("unexpected end of file");
        ++line_no_;
        return std::istringstream(text);
    }

    std::string peek_key() {
        const auto pos = in_.tellg();
        const int saved = line_no_;
        std::string text;
        std::string key;
        while (std::getline(in_, text)) {
            if (text.empty()) continue;
            std::istringstream(text) >> key;
            break;
        }
        in_.clear();
        in_.seekg(pos);
        line_no_ = saved;
        return key;
    }

    double number(std::istringstream& is) {
        std::string tok;
        if (!(is >> tok)) fail("missing number");
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') fail("bad number '" + tok + "'");
        return v;
    }

    long integer(std::istringstream& is) {
        std::string tok;
        if (!(is >> tok)) fail("missing integer");
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0') fail("bad integer '" + tok + "'");
        return v;
    }

    std::string word(std::istringstream& is) {
        std::string tok;
        if (!(is >> tok)) fail("missing field");
        return tok;
    }

    Eigen::MatrixXd matrix(const std::string& name) {
        auto is = line("matrix");
        if (word(is) != name) fail("expected matrix '" + name + "'");
        const long rows = integer(is);
        const long cols = integer(is);
        if (rows < 0 || cols < 0) fail("negative matrix shape");
        Eigen::MatrixXd M(rows, cols);
        for (long i = 0; i < rows; ++i) {
            std::string text;
            if (!std::getline(in_, text)) fail("matrix '" + name + "' is truncated");
            ++line_no_;
            std::istringstream row(text);
            for (long j = 0; j < cols; ++j) M(i, j) = number(row);
        }
        return M;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("model file line " + std::to_string(line_no_) + ": " + what);
    }

private:
    std::istream& in_;
    int line_no_ = 0;
};

inline FitInfo read_info(ModelReader& r) {
    auto is = r.line("info");
    FitInfo info;
    info.iterations = static_cast<int>(r.integer(is));
    info.converged = r.integer(is) != 0;
    info.objective = r.number(is);
    info.kkt_residual = r.number(is);
    info.duality_gap = r.number(is);
    return info;
}

inline BentLoss read_loss(ModelReader& r) {
    auto is = r.line("loss");
    const std::string kind = r.word(is);
    const double a = r.number(is);
    try {
        return BentLoss(loss_kind_from_string(kind), a);
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
}

inline AnyModel read_model(ModelReader& r, const std::string& role) {
    auto head = r.line("model");
    if (r.word(head) != role) r.fail("expected model role '" + role + "'");
    const std::string family = r.word(head);
    auto kline = r.line("k");
    const int k = static_cast<int>(r.integer(kline));
    if (k < 2) r.fail("k must be >= 2");
    const BentLoss loss = read_loss(r);
    AnyModel out;
    if (family == "linear") {
        LinearModel m;
        m.k = k;
        m.loss = loss;
        auto pl = r.line("penalty");
        try {
            m.penalty = penalty_from_string(r.word(pl));
        } catch (const std::invalid_argument& e) {
            r.fail(e.what());
        }
        auto ll = r.line("lambda");
        m.lambda = r.number(ll);
        m.info = read_info(r);
        m.beta = r.matrix("beta");
        if (m.beta.cols() != k - 1 || m.beta.rows() < 1) r.fail("beta must have k-1 columns");
        out.model = std::move(m);
    } else if (family == "kernel") {
        KernelModel m;
        m.k = k;
        m.loss = loss;
        auto kl = r.line("kernel");
        try {
            m.kernel.kind = kernel_kind_from_string(r.word(kl));
        } catch (const std::invalid_argument& e) {
            r.fail(e.what());
        }
        m.kernel.bandwidth = r.number(kl);
        auto pi = r.line("penalize_intercept");
        m.penalize_intercept = r.integer(pi) != 0;
        auto ll = r.line("lambda");
        m.lambda = r.number(ll);
        m.info = read_info(r);
        m.theta = r.matrix("theta");
        const Eigen::MatrixXd icpt = r.matrix("intercept");
        m.support = r.matrix("support");
        if (m.theta.cols() != k - 1 || icpt.rows() != 1 || icpt.cols() != k - 1 || m.support.rows() != m.theta.rows()) {
            r.fail("kernel model matrices have inconsistent shapes");
        }
        m.intercept = icpt.row(0);
        out.model = std::move(m);
    } else {
        r.fail("unknown model family '" + family + "'");
    }
    auto end = r.line("end");
    if (r.word(end) != "model") r.fail("expected 'end model'");
    return out;
}

}  // namespace detail

inline void write_bundle(std::ostream& out, const ModelBundle& b) {
    using detail::fmt;
    out << "rejref-model " << kModelFormatVersion << '\n';
    out << "delta " << fmt(b.delta) << '\n';
    out << "cost " << fmt(b.d) << '\n';
    detail::write_model(out, "primary", b.model);
    if (b.regular) detail::write_model(out, "regular", *b.regular);
    if (b.standardizer.empty()) {
        out << "standardizer none\n";
    } else {
        out << "standardizer " << b.standardizer.mean.size() << '\n';
        detail::write_matrix(out, "mean", b.standardizer.mean.transpose());
        detail::write_matrix(out, "scale", b.standardizer.scale.transpose());
    }
    if (b.tuning) {
        const TuneResult& t = *b.tuning;
        out << "tuning " << fmt(t.lambda) << ' ' << fmt(t.a) << ' ' << fmt(t.delta_fraction) << ' ' << fmt(t.delta)
            << ' ' << fmt(t.loss) << '\n';
        out << "regular " << fmt(t.regular_lambda) << ' ' << fmt(t.regular_a) << ' ' << fmt(t.regular_error) << '\n';
        out << "cells " << t.cells.size() << '\n';
        for (const TuneCell& c : t.cells) {
            out << fmt(c.lambda) << ' ' << fmt(c.a) << ' ' << fmt(c.delta_fraction) << ' ' << fmt(c.delta) << ' '
                << fmt(c.loss) << ' ' << fmt(c.misclassification) << '\n';
        }
    } else {
        out << "tuning none\n";
    }
    out << "end\n";
}

inline ModelBundle read_bundle(std::istream& in) {
    detail::ModelReader r(in);
    auto head = r.line("rejref-model");
    const long version = r.integer(head);
    if (version != kModelFormatVersion) {
        r.fail("unsupported model format version " + std::to_string(version) + " (this build reads " +
               std::to_string(kModelFormatVersion) + ")");
    }
    ModelBundle b;
    auto dl = r.line("delta");
    b.delta = r.number(dl);
    auto cl = r.line("cost");
    b.d = r.number(cl);
    b.model = detail::read_model(r, "primary");
    if (r.peek_key() == "model") b.regular = detail::read_model(r, "regular");
    auto sl = r.line("standardizer");
    const std::string sfield = r.word(sl);
    if (sfield != "none") {
        b.standardizer.mean = r.matrix("mean").row(0).transpose();
        b.standardizer.scale = r.matrix("scale").row(0).transpose();
        if (b.standardizer.mean.size() != b.standardizer.scale.size()) r.fail("standardizer shapes differ");
        b.standardizer.zero_variance.resize(static_cast<std::size_t>(b.standardizer.scale.size()));
        for (Eigen::Index c = 0; c < b.standardizer.scale.size(); ++c) {
            b.standardizer.zero_variance[static_cast<std::size_t>(c)] = b.standardizer.scale(c) == 0.0;
        }
    }
    auto tl = r.line("tuning");
    const std::string tfield = r.word(tl);
    if (tfield != "none") {
        TuneResult t;
        std::istringstream head_fields(tfield + " " + std::string(std::istreambuf_iterator<char>(tl), {}));
        t.lambda = r.number(head_fields);
        t.a = r.number(head_fields);
        t.delta_fraction = r.number(head_fields);
        t.delta = r.number(head_fields);
        t.loss = r.number(head_fields);
        auto rl = r.line("regular");
        t.regular_lambda = r.number(rl);
        t.regular_a = r.number(rl);
        t.regular_error = r.number(rl);
        auto cl = r.line("cells");
        const long count = r.integer(cl);
        if (count < 0) r.fail("negative cell count");
        for (long i = 0; i < count; ++i) {
            auto row = r.raw_line();
            TuneCell c;
            c.lambda = r.number(row);
            c.a = r.number(row);
            c.delta_fraction = r.number(row);
            c.delta = r.number(row);
            c.loss = r.number(row);
            c.misclassification = r.number(row);
            t.cells.push_back(c);
        }
        b.tuning = std::move(t);
    }
    r.line("end");
    return b;
}

inline void save_model(const std::string& path, const ModelBundle& bundle) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    write_bundle(out, bundle);
    if (!out) throw DataError("failed writing model file '" + path + "'");
}

inline ModelBundle load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    return read_bundle(in);
}

}  // namespace rejref
