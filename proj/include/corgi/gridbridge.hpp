#pragma once

// Particle <-> grid transfer with the NGP/CIC/TSC kernel family. The kernel
// weights and cell stencils are plain data; the differentiable transfers are
// the scatter_add / gather_weighted tape ops driven by a shared link table,
// so gradients flow through particle features only, never through positions.

#include <cstdint>
#include <string>
#include <vector>

#include "corgi/common.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

struct GridGeometry {
    std::vector<int> resolution;  // cells per axis
    Domain domain;

    int dim() const { return static_cast<int>(resolution.size()); }
    double cell_size(int axis) const {
        return domain.extent(axis) / static_cast<double>(resolution[axis]);
    }
    std::size_t cells() const {
        std::size_t n = 1;
        for (int r : resolution) n *= static_cast<std::size_t>(r);
        return n;
    }
    void validate() const {
        domain.validate();
        if (resolution.empty() || static_cast<int>(resolution.size()) != domain.dim())
            throw ValidationError("grid: resolution/domain dimension mismatch");
        for (int r : resolution)
            if (r < 1) throw ValidationError("grid: resolution must be >= 1 per axis");
    }
};

enum class KernelKind { Ngp, Cic, Tsc };

KernelKind kernel_from_string(const std::string& s);
std::string kernel_to_string(KernelKind k);

// The 1-D interpolation kernels. NGP breaks the |r| = 1/2 tie toward the
// lower-index cell: w(+1/2) = 1, w(-1/2) = 0.
double kernel_weight(KernelKind kind, double r);

// One row per (particle, stencil cell) pair. On periodic axes cell indices
// wrap; on bounded axes out-of-range stencil weight is dropped unless
// `renormalize` rescales the surviving weights to sum to 1.
struct BridgeTable {
    std::vector<std::int64_t> particle;
    std::vector<std::int64_t> cell;
    std::vector<double> weight;
    std::size_t n_particles = 0;
    std::size_t n_cells = 0;
};

BridgeTable build_bridge_table(const std::vector<double>& positions, std::int64_t n,
                               const GridGeometry& geom, KernelKind kind,
                               bool renormalize = false);

template <class T>
tc::LinkTablePtr<T> to_link_table(const BridgeTable& bt) {
    std::vector<T> w(bt.weight.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(bt.weight[i]);
    return tc::make_link_table<T>(std::vector<std::int64_t>(bt.particle),
                                  std::vector<std::int64_t>(bt.cell), std::move(w));
}

// G_c = sum_p K(i_p, c) h_p over the grid's cells.
template <class T>
tc::Tensor<T> scatter_to_grid(const tc::Tensor<T>& h, const tc::LinkTablePtr<T>& table,
                              const GridGeometry& geom) {
    return tc::scatter_add(h, table, geom.cells());
}

// h_p = sum_c K(i_p, c) G_c back onto particles.
template <class T>
tc::Tensor<T> gather_from_grid(const tc::Tensor<T>& grid, const tc::LinkTablePtr<T>& table,
                               std::size_t n_particles) {
    return tc::gather_weighted(grid, table, n_particles);
}

}  // namespace corgi
