#include "corgi/neighbors.hpp"

#include <algorithm>
#include <cmath>

namespace corgi {

namespace {

struct CellGrid {
    std::vector<int> n_cells;       // per axis
    std::vector<double> inv_width;  // cells per unit length
    std::vector<std::size_t> strides;
    int dim;

    std::size_t total() const {
        std::size_t t = 1;
        for (int c : n_cells) t *= static_cast<std::size_t>(c);
        return t;
    }
};

// Cell width >= r guarantees the 3^d stencil covers every pair within r.
CellGrid make_cell_grid(const Domain& domain, double r) {
    CellGrid g;
    g.dim = domain.dim();
    g.n_cells.resize(g.dim);
    g.inv_width.resize(g.dim);
    g.strides.resize(g.dim);
    for (int a = 0; a < g.dim; ++a) {
        g.n_cells[a] = std::max(1, static_cast<int>(std::floor(domain.extent(a) / r)));
        g.inv_width[a] = static_cast<double>(g.n_cells[a]) / domain.extent(a);
    }
    std::size_t s = 1;
    for (int a = g.dim; a-- > 0;) {
        g.strides[a] = s;
        s *= static_cast<std::size_t>(g.n_cells[a]);
    }
    return g;
}

}  // namespace

ParticleGraph build_graph(const std::vector<double>& positions, std::int64_t n, double r,
                          const Domain& domain) {
    domain.validate();
    const int d = domain.dim();
    if (!(r > 0.0)) throw ValidationError("build_graph: radius must be positive");
    for (int a = 0; a < d; ++a)
        if (domain.periodic[a] && !(r < 0.5 * domain.extent(a)))
            throw ValidationError("build_graph: radius " + std::to_string(r) +
                                  " violates the periodic half-box bound on axis " +
                                  std::to_string(a));
    if (positions.size() != static_cast<std::size_t>(n) * d)
        throw ValidationError("build_graph: positions length mismatch");

    // Wrapped working copy; bounded axes are used as-is.
    std::vector<double> pos(positions);
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) pos[i * d + a] = domain.wrap(pos[i * d + a], a);

    const CellGrid grid = make_cell_grid(domain, r);
    const std::size_t n_cells = grid.total();

    // Bucket particles by cell (counting sort keeps deterministic order).
    std::vector<int> cell_of(n);
    std::vector<std::int64_t> count(n_cells + 1, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        std::size_t flat = 0;
        for (int a = 0; a < d; ++a) {
            int c = static_cast<int>((pos[i * d + a] - domain.lo[a]) * grid.inv_width[a]);
            c = std::clamp(c, 0, grid.n_cells[a] - 1);
            flat += static_cast<std::size_t>(c) * grid.strides[a];
        }
        cell_of[i] = static_cast<int>(flat);
        ++count[flat + 1];
    }
    for (std::size_t c = 0; c < n_cells; ++c) count[c + 1] += count[c];
    std::vector<std::int64_t> bucket(n);
    {
        std::vector<std::int64_t> cursor(count.begin(), count.end() - 1);
        for (std::int64_t i = 0; i < n; ++i) bucket[cursor[cell_of[i]]++] = i;
    }

    const double r2 = r * r;
    ParticleGraph graph;
    graph.dim = d;

    // Neighbor-cell stencil per receiver cell, deduplicated when an axis has
    // fewer than 3 cells (wrapping would revisit the same cell).
    std::vector<std::size_t> stencil;
    std::vector<int> ci(d), cj(d);
    std::vector<double> delta(d);
    std::vector<std::int64_t> sorted_senders;

    for (std::int64_t i = 0; i < n; ++i) {
        const int home = cell_of[i];
        {
            std::size_t rem = home;
            for (int a = 0; a < d; ++a) {
                ci[a] = static_cast<int>(rem / grid.strides[a]);
                rem %= grid.strides[a];
            }
        }
        stencil.clear();
        // Enumerate the 3^d offsets.
        const int n_off = static_cast<int>(std::pow(3.0, d) + 0.5);
        for (int off = 0; off < n_off; ++off) {
            int rem = off;
            bool ok = true;
            std::size_t flat = 0;
            for (int a = d - 1; a >= 0; --a) {
                const int da = rem % 3 - 1;
                rem /= 3;
                int c = ci[a] + da;
                if (domain.periodic[a]) {
                    c = (c % grid.n_cells[a] + grid.n_cells[a]) % grid.n_cells[a];
                } else if (c < 0 || c >= grid.n_cells[a]) {
                    ok = false;
                    break;
                }
                flat += static_cast<std::size_t>(c) * grid.strides[a];
            }
            if (ok) stencil.push_back(flat);
        }
        std::sort(stencil.begin(), stencil.end());
        stencil.erase(std::unique(stencil.begin(), stencil.end()), stencil.end());

        sorted_senders.clear();
        for (std::size_t cell : stencil) {
            for (std::int64_t k = count[cell]; k < count[cell + 1]; ++k) {
                const std::int64_t j = bucket[k];
                if (j == i) continue;
                double d2 = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double dv = domain.min_image(pos[j * d + a] - pos[i * d + a], a);
                    delta[a] = dv;
                    d2 += dv * dv;
                }
                if (d2 <= r2) sorted_senders.push_back(j);
            }
        }
        std::sort(sorted_senders.begin(), sorted_senders.end());
        for (std::int64_t j : sorted_senders) {
            graph.receivers.push_back(i);
            graph.senders.push_back(j);
            double d2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double dv = domain.min_image(pos[j * d + a] - pos[i * d + a], a);
                graph.displacement.push_back(dv);
                d2 += dv * dv;
            }
            graph.distance.push_back(std::sqrt(d2));
        }
    }
    return graph;
}

double average_degree(const ParticleGraph& graph, std::int64_t n) {
    if (n <= 0) return 0.0;
    return static_cast<double>(graph.n_edges()) / static_cast<double>(n);
}

}  // namespace corgi
