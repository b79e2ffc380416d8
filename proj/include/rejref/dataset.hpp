#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rejref/errors.hpp"

namespace rejref {

/// Labeled sample: rows of X are observations, labels are 1..k.
struct Dataset {
    Eigen::MatrixXd X;
    std::vector<int> y;
    int k = 0;
    std::vector<std::string> feature_names;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }

    /// Throws DataError if any invariant is broken.
    void validate() const {
        if (X.rows() < 1) throw DataError("dataset has no rows");
        if (static_cast<Eigen::Index>(y.size()) != X.rows()) {
            throw DataError("dataset has " + std::to_string(X.rows()) + " rows but " + std::to_string(y.size()) +
                            " labels");
        }
        if (k < 2) throw DataError("dataset needs k >= 2 classes, got " + std::to_string(k));
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] < 1 || y[i] > k) {
                throw DataError("label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                                " outside 1.." + std::to_string(k));
            }
        }
        if (!X.allFinite()) throw DataError("dataset contains non-finite feature values");
    }

    std::vector<int> class_counts() const {
        std::vector<int> counts(k, 0);
        for (int label : y) ++counts[label - 1];
        return counts;
    }

    Dataset subset(const std::vector<Eigen::Index>& rows) const {
        Dataset out;
        out.k = k;
        out.feature_names = feature_names;
        out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
        out.y.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.X.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
            out.y.push_back(y[rows[r]]);
        }
        return out;
    }

    Dataset select_features(const std::vector<Eigen::Index>& cols) const {
        Dataset out;
        out.k = k;
        out.y = y;
        out.X.resize(X.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out.X.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
            if (!feature_names.empty()) out.feature_names.push_back(feature_names[cols[c]]);
        }
        return out;
    }
};

struct CsvSchema {
    std::string label_column = "label";
    /// Number of classes; when unset it is the largest label seen.
    std::optional<int> k;
    bool require_labels = true;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        const auto first = field.find_first_not_of(" \t\r");
        const auto last = field.find_last_not_of(" \t\r");
        fields.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline double parse_number(const std::string& text, std::size_t line_no, const std::string& column) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        throw DataError("line " + std::to_string(line_no) + ": column '" + column + "' is not numeric: '" + text + "'");
    }
    if (!std::isfinite(value)) {
        throw DataError("line " + std::to_string(line_no) + ": column '" + column + "' is not finite");
    }
    return value;
}

}  // namespace detail

/// Reads a header-first CSV with one integer label column and numeric features.
///
/// With `schema.require_labels == false` a missing label column is allowed and
/// every label is set to 1 (used for unlabeled prediction input).
inline Dataset parse_csv(std::istream& in, const CsvSchema& schema = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos) throw DataError("CSV input is empty");
    const auto header = detail::split_csv_line(line);
    const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
    const bool has_label = label_it != header.end();
    if (!has_label && schema.require_labels) {
        throw DataError("CSV header has no label column '" + schema.label_column + "'");
    }
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

    Dataset data;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!has_label || c != label_idx) data.feature_names.push_back(header[c]);
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::set<int> bad_labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(header.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const double v = detail::parse_number(fields[c], line_no, header[c]);
            if (has_label && c == label_idx) {
                if (v != std::floor(v)) {
                    throw DataError("line " + std::to_string(line_no) + ": label '" + fields[c] + "' is not an integer");
                }
                const int label = static_cast<int>(v);
                if (label < 1 || (schema.k && label > *schema.k)) bad_labels.insert(label);
                labels.push_back(label);
            } else {
                row.push_back(v);
            }
        }
        if (!has_label) labels.push_back(1);
        rows.push_back(std::move(row));
    }
    if (!bad_labels.empty()) {
        std::string list;
        for (int b : bad_labels) list += (list.empty() ? "" : ", ") + std::to_string(b);
        throw DataError("unknown labels {" + list + "}; labels must be integers in 1.." +
                        (schema.k ? std::to_string(*schema.k) : std::string("k")));
    }
    if (rows.empty()) throw DataError("CSV has a header but no data rows");

    data.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.feature_names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
    }
    data.y = std::move(labels);
    data.k = schema.k ? *schema.k : std::max(2, *std::max_element(data.y.begin(), data.y.end()));
    data.validate();
    return data;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path + "'");
    return parse_csv(in, schema);
}

inline void write_csv(std::ostream& out, const Dataset& data, const std::string& label_column = "label") {
    out << label_column;
    for (Eigen::Index c = 0; c < data.p(); ++c) {
        out << ',' << (data.feature_names.size() == static_cast<std::size_t>(data.p())
                           ? data.feature_names[static_cast<std::size_t>(c)]
                           : "x" + std::to_string(c + 1));
    }
    out << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << data.y[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < data.p(); ++c) out << ',' << data.X(i, c);
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write CSV file '" + path + "'");
    write_csv(out, data);
}

/// Per-feature affine map to mean 0 and sample variance 1, fit on training rows.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;          // 1/sd; 0 for constant features
    std::vector<bool> zero_variance;

    bool empty() const { return mean.size() == 0; }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        if (empty()) return X;
        if (X.cols() != mean.size()) {
            throw DataError("standardizer fitted on " + std::to_string(mean.size()) + " features, input has " +
                            std::to_string(X.cols()));
        }
        return (X.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array();
    }

    Dataset apply(const Dataset& data) const {
        Dataset out = data;
        out.X = apply(data.X);
        return out;
    }
};

inline Standardizer fit_standardizer(const Dataset& train) {
    if (train.n() < 2) throw DataError("normalization needs at least 2 training rows");
    Standardizer s;
    s.mean = train.X.colwise().mean().transpose();
    s.scale.resize(train.p());
    s.zero_variance.assign(static_cast<std::size_t>(train.p()), false);
    for (Eigen::Index c = 0; c < train.p(); ++c) {
        const double var = (train.X.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(train.n() - 1);
        if (var <= 1e-24 * std::max(1.0, s.mean(c) * s.mean(c))) {
            s.scale(c) = 0.0;
            s.zero_variance[static_cast<std::size_t>(c)] = true;
        } else {
            s.scale(c) = 1.0 / std::sqrt(var);
        }
    }
    return s;
}

/// Fits on `train` and returns the transform with the transformed training set.
inline std::pair<Standardizer, Dataset> normalize(const Dataset& train) {
    Standardizer s = fit_standardizer(train);
    return {s, s.apply(train)};
}

/// Indices of the `keep` features with the largest median absolute deviation.
inline std::vector<Eigen::Index> top_mad_features(const Dataset& train, Eigen::Index keep) {
    const auto median = [](std::vector<double> v) {
        const auto mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        double m = v[mid];
        if (v.size() % 2 == 0) {
            m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
        }
        return m;
    };
    std::vector<double> mad(static_cast<std::size_t>(train.p()));
    for (Eigen::Index c = 0; c < train.p(); ++c) {
        std::vector<double> col(train.X.col(c).data(), train.X.col(c).data() + train.n());
        const double med = median(col);
        for (double& v : col) v = std::abs(v - med);
        mad[static_cast<std::size_t>(c)] = median(col);
    }
    std::vector<Eigen::Index> order(mad.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return mad[static_cast<std::size_t>(a)] > mad[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(std::min<Eigen::Index>(keep, train.p())));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace rejref
