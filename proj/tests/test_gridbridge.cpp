#include <doctest.h>

#include "corgi/gridbridge.hpp"

using namespace corgi;
namespace tcc = corgi::tc;

TEST_SUITE_BEGIN("gridbridge");

TEST_CASE("1-D kernel values") {
    CHECK(kernel_weight(KernelKind::Cic, 0.0) == 1.0);
    CHECK(kernel_weight(KernelKind::Cic, 0.5) == 0.5);
    CHECK(kernel_weight(KernelKind::Cic, 1.0) == 0.0);

    CHECK(kernel_weight(KernelKind::Tsc, 0.0) == 0.75);
    CHECK(kernel_weight(KernelKind::Tsc, 0.5) == doctest::Approx(0.5));
    CHECK(kernel_weight(KernelKind::Tsc, 1.5) == 0.0);

    CHECK(kernel_weight(KernelKind::Ngp, 0.49) == 1.0);
    CHECK(kernel_weight(KernelKind::Ngp, 0.51) == 0.0);
    // tie goes to the lower-index cell
    CHECK(kernel_weight(KernelKind::Ngp, 0.5) == 1.0);
    CHECK(kernel_weight(KernelKind::Ngp, -0.5) == 0.0);

    CHECK_THROWS_AS(kernel_from_string("spline"), ValidationError);
}

TEST_CASE("worked 1-D CIC scatter example") {
    GridGeometry geom;
    geom.resolution = {4};
    geom.domain = {{0.0}, {4.0}, {0}};
    std::vector<double> pos{1.2};
    const BridgeTable bt = build_bridge_table(pos, 1, geom, KernelKind::Cic);
    auto table = to_link_table<double>(bt);
    tcc::Tape<double> tape;
    auto h = tape.constant({1, 1}, {2.0});
    auto grid = scatter_to_grid(h, table, geom);
    REQUIRE(grid.value().size() == 4);
    CHECK(grid.value()[0] == doctest::Approx(0.6));
    CHECK(grid.value()[1] == doctest::Approx(1.4));
    CHECK(grid.value()[2] == 0.0);
    CHECK(grid.value()[3] == 0.0);
}

TEST_CASE("particle at a cell center deposits everything in that cell") {
    GridGeometry geom;
    geom.resolution = {4, 4};
    geom.domain = {{0, 0}, {4, 4}, {1, 1}};
    std::vector<double> pos{2.5, 1.5};  // center of cell (2,1)
    for (KernelKind kind : {KernelKind::Ngp, KernelKind::Cic, KernelKind::Tsc}) {
        const BridgeTable bt = build_bridge_table(pos, 1, geom, kind);
        auto table = to_link_table<double>(bt);
        tcc::Tape<double> tape;
        auto h = tape.constant({1, 1}, {1.0});
        auto grid = scatter_to_grid(h, table, geom);
        CHECK(grid.value()[2 * 4 + 1] == doctest::Approx(1.0));
        double total = 0;
        for (double v : grid.value()) total += v;
        CHECK(total == doctest::Approx(1.0));
    }
}

TEST_CASE("partition of unity and mass conservation on periodic grids") {
    Rng rng(17);
    GridGeometry geom;
    geom.resolution = {8, 6};
    geom.domain = {{0, 0}, {2, 3}, {1, 1}};
    const std::int64_t n = 200;
    std::vector<double> pos(n * 2);
    for (std::int64_t i = 0; i < n; ++i) {
        pos[i * 2] = rng.uniform(0.0, 2.0);
        pos[i * 2 + 1] = rng.uniform(0.0, 3.0);
    }
    for (KernelKind kind : {KernelKind::Ngp, KernelKind::Cic, KernelKind::Tsc}) {
        const BridgeTable bt = build_bridge_table(pos, n, geom, kind);
        // per-particle weight sums (partition of unity)
        std::vector<double> wsum(n, 0.0);
        for (std::size_t k = 0; k < bt.weight.size(); ++k) wsum[bt.particle[k]] += bt.weight[k];
        for (std::int64_t i = 0; i < n; ++i) CHECK(wsum[i] == doctest::Approx(1.0).epsilon(1e-12));

        // scatter of h = 1 conserves total mass
        auto table = to_link_table<double>(bt);
        tcc::Tape<double> tape;
        auto h = tape.constant({static_cast<std::size_t>(n), 1}, std::vector<double>(n, 1.0));
        auto grid = scatter_to_grid(h, table, geom);
        double total = 0;
        for (double v : grid.value()) total += v;
        CHECK(total == doctest::Approx(static_cast<double>(n)).epsilon(1e-9));
    }
}

TEST_CASE("constant grid gathers to the constant for CIC and TSC") {
    Rng rng(23);
    GridGeometry geom;
    geom.resolution = {5, 7};
    geom.domain = {{0, 0}, {1, 1}, {1, 1}};
    const std::int64_t n = 64;
    std::vector<double> pos(n * 2);
    for (auto& p : pos) p = rng.uniform(0.0, 1.0);
    for (KernelKind kind : {KernelKind::Cic, KernelKind::Tsc}) {
        const BridgeTable bt = build_bridge_table(pos, n, geom, kind);
        auto table = to_link_table<double>(bt);
        tcc::Tape<double> tape;
        auto grid = tape.constant({geom.cells(), 1}, std::vector<double>(geom.cells(), 3.25));
        auto h = gather_from_grid(grid, table, n);
        for (double v : h.value()) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
    }
}

TEST_CASE("NGP gather-after-scatter at a cell center returns the feature") {
    GridGeometry geom;
    geom.resolution = {4};
    geom.domain = {{0.0}, {4.0}, {1}};
    std::vector<double> pos{1.5};
    const BridgeTable bt = build_bridge_table(pos, 1, geom, KernelKind::Ngp);
    auto table = to_link_table<double>(bt);
    tcc::Tape<double> tape;
    auto h = tape.constant({1, 2}, {0.7, -0.3});
    auto grid = scatter_to_grid(h, table, geom);
    auto back = gather_from_grid(grid, table, 1);
    CHECK(back.value()[0] == doctest::Approx(0.7));
    CHECK(back.value()[1] == doctest::Approx(-0.3));
}

TEST_CASE("adjoint identity over kernels and random data") {
    Rng rng(41);
    GridGeometry geom;
    geom.resolution = {6, 4};
    geom.domain = {{0, 0}, {1, 1}, {1, 0}};  // mixed periodic/bounded
    const std::int64_t n = 50;
    std::vector<double> pos(n * 2);
    for (auto& p : pos) p = rng.uniform(0.0, 1.0);
    for (KernelKind kind : {KernelKind::Ngp, KernelKind::Cic, KernelKind::Tsc}) {
        const BridgeTable bt = build_bridge_table(pos, n, geom, kind);
        auto table = to_link_table<float>(bt);
        tcc::Tape<float> tape;
        std::vector<float> hv(n * 3), gv(geom.cells() * 3);
        for (auto& v : hv) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : gv) v = static_cast<float>(rng.uniform(-1, 1));
        auto h = tape.constant({static_cast<std::size_t>(n), 3}, hv);
        auto g = tape.constant({geom.cells(), 3}, gv);
        auto sh = scatter_to_grid(h, table, geom);
        auto gh = gather_from_grid(g, table, n);
        double lhs = 0, rhs = 0;
        for (std::size_t k = 0; k < sh.value().size(); ++k)
            lhs += double(sh.value()[k]) * gv[k];
        for (std::size_t k = 0; k < gh.value().size(); ++k)
            rhs += double(hv[k]) * gh.value()[k];
        CHECK(std::fabs(lhs - rhs) <= 1e-5 * std::max(1.0, std::fabs(lhs)));
    }
}

TEST_CASE("bounded axes drop outside weight unless renormalized") {
    GridGeometry geom;
    geom.resolution = {4};
    geom.domain = {{0.0}, {4.0}, {0}};
    std::vector<double> pos{0.2};  // CIC stencil reaches cell -1
    const BridgeTable bt = build_bridge_table(pos, 1, geom, KernelKind::Cic);
    double total = 0;
    for (double w : bt.weight) total += w;
    CHECK(total == doctest::Approx(0.7));  // w(-0.3 - (-0.5)) dropped

    const BridgeTable rn = build_bridge_table(pos, 1, geom, KernelKind::Cic, true);
    total = 0;
    for (double w : rn.weight) total += w;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("gradients flow through features only") {
    Rng rng(53);
    GridGeometry geom;
    geom.resolution = {4, 4};
    geom.domain = {{0, 0}, {1, 1}, {1, 1}};
    std::vector<double> pos{0.31, 0.62, 0.8, 0.15, 0.5, 0.5};
    const BridgeTable bt = build_bridge_table(pos, 3, geom, KernelKind::Cic);
    auto table = to_link_table<double>(bt);

    tcc::ParamStore<double> store;
    auto& h = store.create("h", {3, 2});
    for (auto& v : h.value) v = rng.uniform(-1, 1);
    std::vector<double> target(geom.cells() * 2);
    for (auto& v : target) v = rng.uniform(-1, 1);
    const std::vector<double> nowrap(2, 0.0);

    tcc::Tape<double> tape;
    auto grid = scatter_to_grid(tape.leaf(h), table, geom);
    auto loss = tcc::mse_rows(grid, target, nowrap);
    tape.backward(loss);

    // finite differences on the feature entries
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double saved = h.value[k];
        const double step = 1e-6;
        auto eval = [&]() {
            tcc::Tape<double> t2;
            auto g2 = scatter_to_grid(t2.leaf(h), table, geom);
            return tcc::mse_rows(g2, target, nowrap).value()[0];
        };
        h.value[k] = saved + step;
        const double lp = eval();
        h.value[k] = saved - step;
        const double lm = eval();
        h.value[k] = saved;
        CHECK(h.grad[k] == doctest::Approx((lp - lm) / (2 * step)).epsilon(1e-5));
    }
}

TEST_SUITE_END();
