#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rejref {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The k vertices of a centered regular simplex in R^(k-1), one per class.
///
/// Row j-1 of `vertices()` codes class label j. Rows have unit norm, pairwise
/// inner products of -1/(k-1) and sum to zero. Immutable once built.
class CodingSimplex {
public:
    explicit CodingSimplex(int k) : k_(k) {
        if (k < 2) {
            throw std::invalid_argument("coding simplex needs k >= 2 classes, got " + std::to_string(k));
        }
        const int dim = k - 1;
        const double km1 = static_cast<double>(k - 1);
        vertices_.resize(k, dim);
        vertices_.row(0).setConstant(1.0 / std::sqrt(km1));
        const double shift = -(1.0 + std::sqrt(static_cast<double>(k))) / std::pow(km1, 1.5);
        const double scale = std::sqrt(static_cast<double>(k) / km1);
        for (int j = 1; j < k; ++j) {
            vertices_.row(j).setConstant(shift);
            vertices_(j, j - 1) += scale;
        }
    }

    int k() const noexcept { return k_; }
    int dim() const noexcept { return k_ - 1; }

    const RowMatrix& vertices() const noexcept { return vertices_; }

    /// Coding vector of class `label` (1-based).
    auto vertex(int label) const { return vertices_.row(label - 1); }

private:
    int k_;
    RowMatrix vertices_;
};

/// Shared, cached simplex for k classes. Safe to call concurrently.
inline std::shared_ptr<const CodingSimplex> simplex_for(int k) {
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const CodingSimplex>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[k];
    if (!slot) slot = std::make_shared<const CodingSimplex>(k);
    return slot;
}

inline CodingSimplex build_simplex(int k) { return CodingSimplex(k); }

/// Angle margins <Y_j, f> for j = 1..k. Entries sum to zero.
inline Eigen::VectorXd angle_margins(const Eigen::Ref<const Eigen::VectorXd>& f_value,
                                     const CodingSimplex& simplex) {
    if (f_value.size() != simplex.dim()) {
        throw std::invalid_argument("angle_margins: f has dimension " + std::to_string(f_value.size()) +
                                    ", expected k-1 = " + std::to_string(simplex.dim()));
    }
    return simplex.vertices() * f_value;
}

/// Row-wise angle margins for a batch of function values (n x (k-1)) -> n x k.
inline Eigen::MatrixXd angle_margins_batch(const Eigen::Ref<const Eigen::MatrixXd>& f_values,
                                           const CodingSimplex& simplex) {
    if (f_values.cols() != simplex.dim()) {
        throw std::invalid_argument("angle_margins_batch: function values have " +
                                    std::to_string(f_values.cols()) + " columns, expected k-1 = " +
                                    std::to_string(simplex.dim()));
    }
    return f_values * simplex.vertices().transpose();
}

}  // namespace rejref
