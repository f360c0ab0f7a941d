#pragma once

#include <Eigen/Dense>
#include <vector>

namespace bdt {

struct Assignment {
    std::vector<int> row_to_col;  ///< -1 for unassigned rows
    std::vector<int> col_to_row;
};

/// Minimum-cost rectangular assignment (Jonker-Volgenant shortest
/// augmenting path, the scipy formulation). Entries of +infinity mark
/// forbidden pairs; rows that cannot be feasibly assigned stay at -1.
/// Assigns min(rows, cols) pairs when feasible.
Assignment hungarian_min(const Eigen::MatrixXd& cost);

/// Total cost of an assignment, summed in row order.
double assignment_cost(const Eigen::MatrixXd& cost, const Assignment& a);

}  // namespace bdt
