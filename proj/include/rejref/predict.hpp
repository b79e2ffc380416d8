#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rejref/dataset.hpp"
#include "rejref/models.hpp"

namespace rejref {

/// Definite label, refined label set (size 2..k-1) or reject.
class Prediction {
public:
    enum class Kind { Definite, Refined, Reject };

    static Prediction definite(int label) { return Prediction(Kind::Definite, {label}); }
    static Prediction reject() { return Prediction(Kind::Reject, {}); }

    /// Normalizes: a singleton is Definite, the full label set 1..k is Reject.
    static Prediction refined(std::vector<int> labels, int k) {
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        if (labels.empty()) throw std::invalid_argument("refined prediction needs at least one label");
        if (labels.size() == 1) return definite(labels.front());
        if (static_cast<int>(labels.size()) >= k) return reject();
        return Prediction(Kind::Refined, std::move(labels));
    }

    Kind kind() const { return kind_; }
    bool is_definite() const { return kind_ == Kind::Definite; }
    bool is_refined() const { return kind_ == Kind::Refined; }
    bool is_reject() const { return kind_ == Kind::Reject; }

    int label() const {
        if (kind_ != Kind::Definite) throw std::logic_error("prediction has no single label");
        return labels_.front();
    }
    /// Sorted labels; empty for Reject.
    const std::vector<int>& labels() const { return labels_; }
    bool contains(int truth) const { return std::binary_search(labels_.begin(), labels_.end(), truth); }

    /// "3", "1,2" or "REJECT".
    std::string str() const {
        if (kind_ == Kind::Reject) return "REJECT";
        std::string out;
        for (int l : labels_) out += (out.empty() ? "" : ",") + std::to_string(l);
        return out;
    }

    friend bool operator==(const Prediction&, const Prediction&) = default;

private:
    Prediction(Kind kind, std::vector<int> labels) : kind_(kind), labels_(std::move(labels)) {}
    Kind kind_;
    std::vector<int> labels_;
};

inline std::ostream& operator<<(std::ostream& os, const Prediction& p) { return os << p.str(); }

/// S_delta(c) = sign(c) max(|c| - delta, 0).
inline double soft_threshold(double c, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("soft threshold needs delta >= 0");
    if (c > delta) return c - delta;
    if (c < -delta) return c + delta;
    return 0.0;
}

namespace detail {

inline int argmax_label(const Eigen::Ref<const Eigen::VectorXd>& margins) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < margins.size(); ++j) {
        if (margins(j) > margins(best)) best = j;
    }
    return static_cast<int>(best) + 1;
}

inline bool all_thresholded_away(const Eigen::Ref<const Eigen::VectorXd>& margins, double delta) {
    for (Eigen::Index j = 0; j < margins.size(); ++j) {
        if (soft_threshold(margins(j), delta) != 0.0) return false;
    }
    return true;
}

}  // namespace detail

/// Reject-only rule: reject when every thresholded margin is 0, else the argmax label.
inline Prediction predict_reject(const Eigen::Ref<const Eigen::VectorXd>& margins, double delta) {
    if (detail::all_thresholded_away(margins, delta)) return Prediction::reject();
    return Prediction::definite(detail::argmax_label(margins));
}

/// Reject-and-refine rule.
///
/// All thresholded margins 0: reject. Some positive: the positive classes.
/// Otherwise: the classes whose thresholded margin is 0. delta = 0 turns both
/// options off, leaving the argmax label (and reject only for all-zero margins).
inline Prediction predict_refine(const Eigen::Ref<const Eigen::VectorXd>& margins, double delta) {
    if (detail::all_thresholded_away(margins, delta)) return Prediction::reject();
    if (delta == 0.0) return Prediction::definite(detail::argmax_label(margins));
    const int k = static_cast<int>(margins.size());
    std::vector<int> positive, zero;
    for (int j = 0; j < k; ++j) {
        const double s = soft_threshold(margins(j), delta);
        if (s > 0.0) positive.push_back(j + 1);
        else if (s == 0.0) zero.push_back(j + 1);
    }
    if (!positive.empty()) return Prediction::refined(std::move(positive), k);
    // Margins sum to zero, so an all-negative vector only arises from rounding.
    if (zero.empty()) return Prediction::definite(detail::argmax_label(margins));
    return Prediction::refined(std::move(zero), k);
}

/// Throws unless 0 < d <= (k-1)/k, the range where rejecting can be optimal.
inline void check_rejection_cost(double d, int k) {
    const double bound = static_cast<double>(k - 1) / static_cast<double>(k);
    if (!(d > 0.0) || d > bound + 1e-15) {
        std::ostringstream msg;
        msg << "rejection cost d = " << d << " is not admissible for k = " << k << ": need 0 < d <= (k-1)/k = "
            << bound;
        throw std::invalid_argument(msg.str());
    }
}

/// Smallest and largest bending slope whose reject region brackets the Bayes one.
inline std::pair<double, double> a_bounds(int k, double d) {
    if (k < 2) throw std::invalid_argument("a_bounds needs k >= 2");
    check_rejection_cost(d, k);
    const double kk = static_cast<double>(k);
    const double a1 = (kk - 1.0 - d) / (kk * d - d);
    const double a2 = (kk - 1.0) * (1.0 - d) / d;
    return {a1, a2};
}

/// 0 for a correct label or a set holding the truth, d for a rejection, 1 otherwise.
inline double zero_d_one_loss(const Prediction& pred, int truth, double d, int k) {
    check_rejection_cost(d, k);
    if (pred.is_reject()) return d;
    return pred.contains(truth) ? 0.0 : 1.0;
}

/// Test-set scores of the reject-and-refine rule, split by its outcome:
/// p1 label predicted, p2 set predicted, p3 rejected. The reject-only rule
/// and a regular classifier are scored on the same split. Rates over an
/// empty part are 0.
struct EvalReport {
    int k = 0;
    double d = 0.0;
    double delta = 0.0;
    std::size_t n = 0;
    std::size_t n1 = 0, n2 = 0, n3 = 0;
    double p1 = 0.0, p2 = 0.0, p3 = 0.0;

    double error_p1 = 0.0;       // reject-and-refine
    double misrefine_p2 = 0.0;
    double overall_0d1 = 0.0;

    double reject_error_p1 = 0.0;  // reject-only rule
    double reject_error_p2 = 0.0;
    double reject_overall = 0.0;

    double regular_error_p1 = 0.0;  // regular classifier
    double regular_error_p2 = 0.0;
    double regular_error_p3 = 0.0;
    double regular_overall = 0.0;

    std::map<std::vector<int>, std::size_t> set_histogram;  // refined sets and their counts
    std::map<std::vector<int>, std::size_t> set_misses;     // refined sets not holding the truth

    /// Number of refined predictions with `size` labels.
    std::size_t sets_of_size(std::size_t size) const {
        std::size_t total = 0;
        for (const auto& [set, count] : set_histogram) {
            if (set.size() == size) total += count;
        }
        return total;
    }
};

namespace detail {

inline std::vector<Prediction> refine_all(const Eigen::MatrixXd& margins, double delta) {
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(margins.rows()));
    for (Eigen::Index i = 0; i < margins.rows(); ++i) out.push_back(predict_refine(margins.row(i).transpose(), delta));
    return out;
}

}  // namespace detail

/// Scores margins of the reject-and-refine model and a regular model's margins on labels y.
inline EvalReport evaluate_margins(const Eigen::MatrixXd& margins, const Eigen::MatrixXd& regular_margins,
                                   const std::vector<int>& y, double delta, double d) {
    const auto n = static_cast<std::size_t>(margins.rows());
    if (n == 0) throw DataError("cannot evaluate on an empty test set");
    if (y.size() != n || static_cast<std::size_t>(regular_margins.rows()) != n ||
        regular_margins.cols() != margins.cols()) {
        throw std::invalid_argument("evaluate: margins and labels disagree in shape");
    }
    if (!(delta >= 0.0)) throw std::invalid_argument("evaluate: delta must be >= 0");
    const int k = static_cast<int>(margins.cols());
    check_rejection_cost(d, k);

    EvalReport r;
    r.k = k;
    r.d = d;
    r.delta = delta;
    r.n = n;
    std::size_t e1 = 0, m2 = 0, rej1 = 0, rej2 = 0, reg1 = 0, reg2 = 0, reg3 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int truth = y[i];
        const Prediction rr = predict_refine(margins.row(row).transpose(), delta);
        const Prediction ro = predict_reject(margins.row(row).transpose(), delta);
        const bool regular_wrong = detail::argmax_label(regular_margins.row(row).transpose()) != truth;
        switch (rr.kind()) {
            case Prediction::Kind::Definite:
                ++r.n1;
                e1 += rr.label() != truth;
                rej1 += ro.is_reject() || ro.label() != truth;
                reg1 += regular_wrong;
                break;
            case Prediction::Kind::Refined: {
                ++r.n2;
                const bool miss = !rr.contains(truth);
                m2 += miss;
                ++r.set_histogram[rr.labels()];
                if (miss) ++r.set_misses[rr.labels()];
                rej2 += ro.is_reject() || ro.label() != truth;
                reg2 += regular_wrong;
                break;
            }
            case Prediction::Kind::Reject:
                ++r.n3;
                reg3 += regular_wrong;
                break;
        }
    }
    const auto rate = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    const double nn = static_cast<double>(n);
    r.p1 = static_cast<double>(r.n1) / nn;
    r.p2 = static_cast<double>(r.n2) / nn;
    r.p3 = static_cast<double>(r.n3) / nn;
    r.error_p1 = rate(e1, r.n1);
    r.misrefine_p2 = rate(m2, r.n2);
    r.overall_0d1 = (static_cast<double>(e1 + m2) + d * static_cast<double>(r.n3)) / nn;
    r.reject_error_p1 = rate(rej1, r.n1);
    r.reject_error_p2 = rate(rej2, r.n2);
    r.reject_overall = (static_cast<double>(rej1 + rej2) + d * static_cast<double>(r.n3)) / nn;
    r.regular_error_p1 = rate(reg1, r.n1);
    r.regular_error_p2 = rate(reg2, r.n2);
    r.regular_error_p3 = rate(reg3, r.n3);
    r.regular_overall = static_cast<double>(reg1 + reg2 + reg3) / nn;
    return r;
}

/// Evaluates `model` with threshold delta; `regular` supplies the regular (delta = 0) column.
template <MarginModel M, MarginModel R>
EvalReport evaluate(const M& model, const Dataset& test, double delta, double d, const R& regular) {
    if (test.n() == 0) throw DataError("cannot evaluate on an empty test set");
    if (model.classes() != test.k) {
        throw std::invalid_argument("model has " + std::to_string(model.classes()) + " classes, test set has " +
                                    std::to_string(test.k));
    }
    return evaluate_margins(model_margins(model, test.X), model_margins(regular, test.X), test.y, delta, d);
}

/// Same model supplies the regular column (its argmax rule).
template <MarginModel M>
EvalReport evaluate(const M& model, const Dataset& test, double delta, double d) {
    if (test.n() == 0) throw DataError("cannot evaluate on an empty test set");
    if (model.classes() != test.k) {
        throw std::invalid_argument("model has " + std::to_string(model.classes()) + " classes, test set has " +
                                    std::to_string(test.k));
    }
    const Eigen::MatrixXd margins = model_margins(model, test.X);
    return evaluate_margins(margins, margins, test.y, delta, d);
}

/// Flat key = value block.
inline std::string to_key_value(const EvalReport& r) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "k = " << r.k << "\nd = " << r.d << "\ndelta = " << r.delta << "\nn = " << r.n << '\n';
    out << "p1 = " << r.p1 << "\np2 = " << r.p2 << "\np3 = " << r.p3 << '\n';
    out << "error_p1 = " << r.error_p1 << "\nmisrefine_p2 = " << r.misrefine_p2 << "\noverall_0d1 = " << r.overall_0d1
        << '\n';
    out << "reject_error_p1 = " << r.reject_error_p1 << "\nreject_error_p2 = " << r.reject_error_p2
        << "\nreject_overall = " << r.reject_overall << '\n';
    out << "regular_error_p1 = " << r.regular_error_p1 << "\nregular_error_p2 = " << r.regular_error_p2
        << "\nregular_error_p3 = " << r.regular_error_p3 << "\nregular_overall = " << r.regular_overall << '\n';
    for (const auto& [set, count] : r.set_histogram) {
        out << "set {" << Prediction::refined(set, r.k + 1).str() << "} = " << count << '\n';
    }
    return out.str();
}

/// Averages over replicates. A partition rate is averaged over the replicates
/// where that partition is nonempty; set shares pool counts over replicates.
struct TableSummary {
    int replicates = 0;
    int k = 0;
    double d = 0.0;
    double p1 = 0.0, p2 = 0.0, p3 = 0.0;
    std::map<std::size_t, double> size_proportion;  // refined-set size -> share of the test set
    double error_p1 = 0.0, misrefine_p2 = 0.0, overall_0d1 = 0.0;
    double reject_error_p1 = 0.0, reject_error_p2 = 0.0, reject_overall = 0.0;
    double regular_error_p1 = 0.0, regular_error_p2 = 0.0, regular_error_p3 = 0.0, regular_overall = 0.0;
    std::map<std::vector<int>, std::size_t> set_histogram;  // pooled

    /// Share of size-|set| refined predictions equal to `set` (pooled over replicates).
    double set_share(std::vector<int> set) const {
        std::sort(set.begin(), set.end());
        std::size_t same = 0, total = 0;
        for (const auto& [s, count] : set_histogram) {
            if (s.size() != set.size()) continue;
            total += count;
            if (s == set) same += count;
        }
        return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
    }
};

inline TableSummary summarize(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("summarize: no reports");
    TableSummary s;
    s.replicates = static_cast<int>(reports.size());
    s.k = reports.front().k;
    s.d = reports.front().d;
    const double R = static_cast<double>(reports.size());
    struct Mean {
        double sum = 0.0;
        int count = 0;
        void add(double v) { sum += v; ++count; }
        double value() const { return count == 0 ? 0.0 : sum / count; }
    };
    Mean e1, m2, rej1, rej2, reg1, reg2, reg3;
    std::map<std::size_t, double> sizes;
    for (const auto& r : reports) {
        s.p1 += r.p1 / R;
        s.p2 += r.p2 / R;
        s.p3 += r.p3 / R;
        s.overall_0d1 += r.overall_0d1 / R;
        s.reject_overall += r.reject_overall / R;
        s.regular_overall += r.regular_overall / R;
        if (r.n1 > 0) {
            e1.add(r.error_p1);
            rej1.add(r.reject_error_p1);
            reg1.add(r.regular_error_p1);
        }
        if (r.n2 > 0) {
            m2.add(r.misrefine_p2);
            rej2.add(r.reject_error_p2);
            reg2.add(r.regular_error_p2);
        }
        if (r.n3 > 0) reg3.add(r.regular_error_p3);
        for (const auto& [set, count] : r.set_histogram) {
            s.set_histogram[set] += count;
            sizes[set.size()] += static_cast<double>(count) / static_cast<double>(r.n) / R;
        }
    }
    s.size_proportion = sizes;
    s.error_p1 = e1.value();
    s.misrefine_p2 = m2.value();
    s.reject_error_p1 = rej1.value();
    s.reject_error_p2 = rej2.value();
    s.regular_error_p1 = reg1.value();
    s.regular_error_p2 = reg2.value();
    s.regular_error_p3 = reg3.value();
    return s;
}

/// CSV in the simulation-table layout, percentages: one row per partition,
/// columns proportion / regular / reject / rr. `selected` lists sets whose
/// share among refined predictions of the same size gets its own row.
inline void write_table_csv(std::ostream& out, const TableSummary& s, const std::vector<std::vector<int>>& selected = {}) {
    const auto pct = [](double v) { return 100.0 * v; };
    out << std::setprecision(6);
    out << "row,proportion,regular,reject,rr\n";
    out << "p1," << pct(s.p1) << ',' << pct(s.regular_error_p1) << ',' << pct(s.reject_error_p1) << ','
        << pct(s.error_p1) << '\n';
    out << "p2," << pct(s.p2) << ',' << pct(s.regular_error_p2) << ',' << pct(s.reject_error_p2) << ','
        << pct(s.misrefine_p2) << '\n';
    for (const auto& [size, prop] : s.size_proportion) out << "p2_size" << size << ',' << pct(prop) << ",,,\n";
    for (const auto& set : selected) {
        std::string name;
        for (int l : set) name += (name.empty() ? "" : "_") + std::to_string(l);
        out << "p2_set_" << name << ',' << pct(s.set_share(set)) << ",,,\n";
    }
    out << "p3," << pct(s.p3) << ',' << pct(s.regular_error_p3) << ",,\n";
    out << "overall,100," << pct(s.regular_overall) << ',' << pct(s.reject_overall) << ',' << pct(s.overall_0d1)
        << '\n';
}

}  // namespace rejref
