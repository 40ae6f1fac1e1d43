#include "kaclab/detail/mcmf.hpp"

#include <algorithm>
#include <cmath>

namespace kaclab::detail {

// Dense Jonker-Volgenant linear assignment: column reduction, reduction
// transfer, then shortest augmenting paths for the remaining free rows.
// cost is row-major n x n.
double assignment_cost(const std::vector<double>& cost, std::size_t nn) {
    const int n = static_cast<int>(nn);
    const double big = std::numeric_limits<double>::infinity();
    auto c = [&](int i, int j) { return cost[static_cast<std::size_t>(i) * nn + j]; };

    std::vector<int> rowsol(n, -1);   // row -> column
    std::vector<int> colsol(n, -1);   // column -> row
    std::vector<double> v(n, 0.0);
    std::vector<int> free_rows(n), collist(n), pred(n);
    std::vector<double> d(n);
    std::vector<int> matches(n, 0);

    // column reduction
    for (int j = n - 1; j >= 0; --j) {
        double minv = c(0, j);
        int imin = 0;
        for (int i = 1; i < n; ++i)
            if (c(i, j) < minv) { minv = c(i, j); imin = i; }
        v[j] = minv;
        if (++matches[imin] == 1) {
            rowsol[imin] = j;
            colsol[j] = imin;
        }
    }

    // reduction transfer
    int numfree = 0;
    for (int i = 0; i < n; ++i) {
        if (matches[i] == 0) {
            free_rows[numfree++] = i;
        } else if (matches[i] == 1) {
            const int j1 = rowsol[i];
            double minv = big;
            for (int j = 0; j < n; ++j)
                if (j != j1 && c(i, j) - v[j] < minv) minv = c(i, j) - v[j];
            v[j1] -= minv;
        }
    }

    // The classic augmenting-row-reduction heuristic is skipped on purpose:
    // with real-valued costs it can cycle (two rows trading the same column
    // forever when the reduction transfer is below rounding). The shortest
    // augmenting paths below handle all free rows and always terminate.

    // shortest augmenting paths for the remaining free rows
    for (int f = 0; f < numfree; ++f) {
        const int freerow = free_rows[f];
        for (int j = 0; j < n; ++j) {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        int low = 0, up = 0, last = -1, endofpath = -1;
        double minv = 0.0;
        bool unassigned_found = false;
        do {
            if (up == low) {
                last = low - 1;
                minv = d[collist[up++]];
                for (int k = up; k < n; ++k) {
                    const int j = collist[k];
                    const double h = d[j];
                    if (h <= minv) {
                        if (h < minv) { up = low; minv = h; }
                        collist[k] = collist[up];
                        collist[up++] = j;
                    }
                }
                for (int k = low; k < up; ++k)
                    if (colsol[collist[k]] < 0) {
                        endofpath = collist[k];
                        unassigned_found = true;
                        break;
                    }
            }
            if (!unassigned_found) {
                const int j1 = collist[low++];
                const int i = colsol[j1];
                const double h = c(i, j1) - v[j1] - minv;
                for (int k = up; k < n; ++k) {
                    const int j = collist[k];
                    const double v2 = c(i, j) - v[j] - h;
                    if (v2 < d[j]) {
                        pred[j] = i;
                        if (v2 == minv) {
                            if (colsol[j] < 0) {
                                endofpath = j;
                                unassigned_found = true;
                                break;
                            }
                            collist[k] = collist[up];
                            collist[up++] = j;
                        }
                        d[j] = v2;
                    }
                }
            }
        } while (!unassigned_found);

        for (int k = 0; k <= last; ++k) {
            const int j1 = collist[k];
            v[j1] += d[j1] - minv;
        }
        int i;
        do {
            i = pred[endofpath];
            colsol[endofpath] = i;
            const int j1 = rowsol[i];
            rowsol[i] = endofpath;
            endofpath = j1;
        } while (i != freerow);
    }

    double total = 0.0;
    for (int i = 0; i < n; ++i) total += c(i, rowsol[i]);
    return total;
}

} // namespace kaclab::detail
