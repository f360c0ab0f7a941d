#include "bdt/assignment.hpp"

#include <limits>

namespace bdt {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path solver for rows <= cols.
Assignment solve_rectangular(const Eigen::MatrixXd& cost) {
    const int nr = static_cast<int>(cost.rows());
    const int nc = static_cast<int>(cost.cols());
    std::vector<double> u(nr, 0.0), v(nc, 0.0);
    std::vector<int> col4row(nr, -1), row4col(nc, -1);

    std::vector<double> shortest(nc);
    std::vector<int> pred(nc);
    std::vector<bool> sr(nr), sc(nc);

    for (int cur = 0; cur < nr; ++cur) {
        std::fill(shortest.begin(), shortest.end(), kInf);
        std::fill(pred.begin(), pred.end(), -1);
        std::fill(sr.begin(), sr.end(), false);
        std::fill(sc.begin(), sc.end(), false);

        int i = cur;
        int sink = -1;
        double min_val = 0.0;
        while (sink == -1) {
            sr[i] = true;
            int j_min = -1;
            double lowest = kInf;
            for (int j = 0; j < nc; ++j) {
                if (sc[j]) continue;
                const double r = min_val + cost(i, j) - u[i] - v[j];
                if (r < shortest[j]) {
                    shortest[j] = r;
                    pred[j] = i;
                }
                if (shortest[j] < lowest ||
                    (shortest[j] == lowest && row4col[j] == -1)) {
                    lowest = shortest[j];
                    j_min = j;
                }
            }
            if (lowest == kInf) {
                sink = -2;  // row cannot be augmented; leave unassigned
                break;
            }
            min_val = lowest;
            sc[j_min] = true;
            if (row4col[j_min] == -1)
                sink = j_min;
            else
                i = row4col[j_min];
        }
        if (sink < 0) continue;

        u[cur] += min_val;
        for (int r = 0; r < nr; ++r)
            if (sr[r] && r != cur) u[r] += min_val - shortest[col4row[r]];
        for (int j = 0; j < nc; ++j)
            if (sc[j]) v[j] -= min_val - shortest[j];

        int j = sink;
        for (;;) {
            const int r = pred[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == cur) break;
        }
    }

    Assignment out;
    out.row_to_col = std::move(col4row);
    out.col_to_row = std::move(row4col);
    return out;
}
}  // namespace

Assignment hungarian_min(const Eigen::MatrixXd& cost) {
    const int nr = static_cast<int>(cost.rows());
    const int nc = static_cast<int>(cost.cols());
    if (nr == 0 || nc == 0) {
        Assignment out;
        out.row_to_col.assign(nr, -1);
        out.col_to_row.assign(nc, -1);
        return out;
    }
    if (nr <= nc) {
        auto out = solve_rectangular(cost);
        // A forced infinite pair means the row was genuinely unassignable.
        for (int r = 0; r < nr; ++r) {
            if (out.row_to_col[r] >= 0 && cost(r, out.row_to_col[r]) == kInf) {
                out.col_to_row[out.row_to_col[r]] = -1;
                out.row_to_col[r] = -1;
            }
        }
        return out;
    }
    auto t = hungarian_min(cost.transpose());
    Assignment out;
    out.row_to_col = std::move(t.col_to_row);
    out.col_to_row = std::move(t.row_to_col);
    return out;
}

double assignment_cost(const Eigen::MatrixXd& cost, const Assignment& a) {
    double total = 0.0;
    for (std::size_t r = 0; r < a.row_to_col.size(); ++r)
        if (a.row_to_col[r] >= 0) total += cost(static_cast<int>(r), a.row_to_col[r]);
    return total;
}

}  // namespace bdt
