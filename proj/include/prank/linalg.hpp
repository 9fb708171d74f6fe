#ifndef PRANK_LINALG_HPP
#define PRANK_LINALG_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prank/core_types.hpp"

namespace prank {

// Row-major so that row i of a batch matrix is one contiguous sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Stacks flattened trajectories into an n x 2M matrix.
inline Matrix stack_trajectories(std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) return Matrix(0, 0);
    const auto cols = static_cast<Eigen::Index>(trajectories.front().flat_size());
    Matrix out(static_cast<Eigen::Index>(trajectories.size()), cols);
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto f = trajectories[i].flat();
        if (static_cast<Eigen::Index>(f.size()) != cols) throw LengthError("trajectory lengths differ");
        for (Eigen::Index c = 0; c < cols; ++c) out(static_cast<Eigen::Index>(i), c) = f[c];
    }
    return out;
}

inline Trajectory row_to_trajectory(const Matrix& m, Eigen::Index row) {
    return Trajectory(std::vector<double>(m.row(row).data(), m.row(row).data() + m.cols()));
}

}  // namespace prank

#endif  // PRANK_LINALG_HPP
