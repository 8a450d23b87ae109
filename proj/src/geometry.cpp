#include "skelnav/geometry.hpp"

#include <vector>

namespace skelnav {

Raster<int> label_components8(const Mask& m, int* n_labels) {
    Raster<int> labels(m.rows(), m.cols(), 0);
    int next = 0;
    std::vector<Cell> stack;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (!m(r, c) || labels(r, c)) continue;
            ++next;
            labels(r, c) = next;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const Cell p = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = p.row + dr;
                        const int nc = p.col + dc;
                        if (!m.in_bounds(nr, nc) || !m(nr, nc) || labels(nr, nc)) continue;
                        labels(nr, nc) = next;
                        stack.push_back({nr, nc});
                    }
                }
            }
        }
    }
    if (n_labels) *n_labels = next;
    return labels;
}

std::size_t count_components8(const Mask& m) {
    int n = 0;
    label_components8(m, &n);
    return static_cast<std::size_t>(n);
}

}  // namespace skelnav
