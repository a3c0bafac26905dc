#include "corgi/gridbridge.hpp"

#include <cmath>

namespace corgi {

KernelKind kernel_from_string(const std::string& s) {
    if (s == "ngp") return KernelKind::Ngp;
    if (s == "cic") return KernelKind::Cic;
    if (s == "tsc") return KernelKind::Tsc;
    throw ValidationError("unknown interpolation kernel '" + s + "' (expected ngp|cic|tsc)");
}

std::string kernel_to_string(KernelKind k) {
    switch (k) {
        case KernelKind::Ngp: return "ngp";
        case KernelKind::Cic: return "cic";
        case KernelKind::Tsc: return "tsc";
    }
    throw ValidationError("invalid kernel kind");
}

double kernel_weight(KernelKind kind, double r) {
    switch (kind) {
        case KernelKind::Ngp:
            return (r > -0.5 && r <= 0.5) ? 1.0 : 0.0;
        case KernelKind::Cic:
            return std::max(0.0, 1.0 - std::fabs(r));
        case KernelKind::Tsc: {
            const double ar = std::fabs(r);
            if (ar < 0.5) return 0.75 - r * r;
            if (ar < 1.5) {
                const double t = 1.5 - ar;
                return 0.5 * t * t;
            }
            return 0.0;
        }
    }
    throw ValidationError("invalid kernel kind");
}

namespace {

// Widest stencil (TSC) spans 3 cells per axis; candidates around floor(u)
// cover every kernel's support.
constexpr int kLoOffset = -2;
constexpr int kHiOffset = 2;

}  // namespace

BridgeTable build_bridge_table(const std::vector<double>& positions, std::int64_t n,
                               const GridGeometry& geom, KernelKind kind, bool renormalize) {
    geom.validate();
    const int d = geom.dim();
    if (positions.size() != static_cast<std::size_t>(n) * d)
        throw ValidationError("bridge: positions length mismatch");

    std::vector<std::size_t> strides(d);
    {
        std::size_t s = 1;
        for (int a = d; a-- > 0;) {
            strides[a] = s;
            s *= static_cast<std::size_t>(geom.resolution[a]);
        }
    }

    BridgeTable bt;
    bt.n_particles = static_cast<std::size_t>(n);
    bt.n_cells = geom.cells();

    // Per-axis candidate (cell index, weight) lists for one particle.
    std::vector<std::vector<std::pair<int, double>>> axis(d);
    for (std::int64_t p = 0; p < n; ++p) {
        bool any_empty = false;
        for (int a = 0; a < d; ++a) {
            axis[a].clear();
            double x = positions[p * d + a];
            if (!std::isfinite(x)) throw NanDataError("bridge: non-finite position");
            x = geom.domain.wrap(x, a);
            const double u = (x - geom.domain.lo[a]) / geom.cell_size(a);
            const int base = static_cast<int>(std::floor(u));
            for (int off = kLoOffset; off <= kHiOffset; ++off) {
                int c = base + off;
                const double w = kernel_weight(kind, u - c - 0.5);
                if (w <= 0.0) continue;
                if (geom.domain.periodic[a]) {
                    c = (c % geom.resolution[a] + geom.resolution[a]) % geom.resolution[a];
                } else if (c < 0 || c >= geom.resolution[a]) {
                    continue;  // dropped outside walls
                }
                axis[a].emplace_back(c, w);
            }
            if (axis[a].empty()) any_empty = true;
        }
        if (any_empty) continue;  // all stencil weight fell outside a bounded axis

        // Tensor-product stencil in deterministic per-axis order.
        std::vector<int> pick(d, 0);
        const std::size_t first = bt.weight.size();
        while (true) {
            double w = 1.0;
            std::size_t flat = 0;
            for (int a = 0; a < d; ++a) {
                w *= axis[a][pick[a]].second;
                flat += static_cast<std::size_t>(axis[a][pick[a]].first) * strides[a];
            }
            bt.particle.push_back(p);
            bt.cell.push_back(static_cast<std::int64_t>(flat));
            bt.weight.push_back(w);
            int a = d - 1;
            while (a >= 0 && ++pick[a] == static_cast<int>(axis[a].size())) pick[a--] = 0;
            if (a < 0) break;
        }
        if (renormalize) {
            double total = 0.0;
            for (std::size_t k = first; k < bt.weight.size(); ++k) total += bt.weight[k];
            if (total > 0.0)
                for (std::size_t k = first; k < bt.weight.size(); ++k) bt.weight[k] /= total;
        }
    }
    return bt;
}

}  // namespace corgi
