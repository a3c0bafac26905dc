#pragma once

// Radius-graph construction via cell lists with periodic minimum-image
// distances.

#include <cstdint>
#include <vector>

#include "corgi/common.hpp"

namespace corgi {

// Directed edge list, both directions present, no self-edges, sorted by
// (receiver, sender). displacement[e] is the minimum-image vector from the
// receiver to the sender, so distance[e] = |displacement[e]| <= r.
struct ParticleGraph {
    std::vector<std::int64_t> senders;
    std::vector<std::int64_t> receivers;
    std::vector<double> displacement;  // [E][d]
    std::vector<double> distance;      // [E]
    int dim = 0;

    std::size_t n_edges() const { return senders.size(); }
};

// Exact fixed-radius neighbor search: all ordered pairs with minimum-image
// distance <= r (inclusive). Requires r < extent/2 on periodic axes.
ParticleGraph build_graph(const std::vector<double>& positions, std::int64_t n, double r,
                          const Domain& domain);

double average_degree(const ParticleGraph& graph, std::int64_t n);

}  // namespace corgi
