#include "pcf/vertex_table.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

using namespace pcf;

namespace {

// Independent gluing oracle: enumerate all (word, corner) addresses at level m
// and merge purely by geometric coincidence, with no shared machinery.
struct GlueOracle {
    int distinct = 0;
    int multi_address = 0;
    std::vector<Vector> reps;

    explicit GlueOracle(const PcfFractal& f, int m) {
        std::vector<Word> words{{}};
        for (int k = 0; k < m; ++k) {
            std::vector<Word> next;
            for (const auto& w : words)
                for (int j = 0; j < f.num_maps(); ++j) {
                    Word e = w;
                    e.push_back(j);
                    next.push_back(e);
                }
            words = std::move(next);
        }
        std::vector<int> counts;
        for (const auto& w : words) {
            for (int b = 0; b < f.num_boundary(); ++b) {
                Vector p = f.boundary_point(b);
                for (int i = m - 1; i >= 0; --i) p = f.maps[w[i]].apply(p);
                bool found = false;
                for (size_t r = 0; r < reps.size(); ++r) {
                    if ((reps[r] - p).cwiseAbs().maxCoeff() < 1e-9) {
                        counts[r]++;
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    reps.push_back(p);
                    counts.push_back(1);
                }
            }
        }
        distinct = static_cast<int>(reps.size());
        for (int c : counts)
            if (c >= 2) multi_address++;
    }
};

}  // namespace

TEST_CASE("interval level 1: three vertices, midpoint is a junction") {
    auto f = PcfFractal::interval();
    auto t = build_vertex_table(f, 1);
    REQUIRE(t.num_vertices() == 3);
    REQUIRE(t.junction_ids() == std::vector<int>{2});
    REQUIRE(t.address_count[2] == 2);
    REQUIRE(t.points[2](0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(t.address_count[0] == 1);
    REQUIRE(t.address_count[1] == 1);
}

TEST_CASE("level 0 table is V_0 with no junctions") {
    for (auto name : {"interval", "sierpinski-gasket"}) {
        auto f = PcfFractal::builtin(name);
        auto t = build_vertex_table(f, 0);
        REQUIRE(t.num_vertices() == f.num_boundary());
        REQUIRE(t.junction_ids().empty());
    }
}

TEST_CASE("SG level 2 vertex counts match the brute-force gluing oracle") {
    auto f = PcfFractal::sierpinski_gasket();
    GlueOracle oracle(f, 2);
    auto t = build_vertex_table(f, 2);
    REQUIRE(oracle.distinct == 15);
    REQUIRE(t.num_vertices() == oracle.distinct);
    // Every point of V_2 \ V_0 meets at least two 2-cells here.
    REQUIRE(static_cast<int>(t.junction_ids().size()) == oracle.multi_address);
    REQUIRE(t.junction_ids().size() == 12);
    // 9 junctions are new at level 2.
    REQUIRE(t.num_vertices() - t.level_sizes[1] == 9);
    for (int x : t.junction_ids()) REQUIRE(t.address_count[x] >= 2);
    for (int b = 0; b < 3; ++b) REQUIRE(t.address_count[b] == 1);
}

TEST_CASE("cell_of_word products") {
    auto interval = PcfFractal::interval();
    auto c = cell_of_word(interval, {0, 0});
    REQUIRE(c.measure == Catch::Approx(0.25));
    REQUIRE(c.resistance == Catch::Approx(0.25));
    Vector x(1);
    x << 1.0;
    REQUIRE(c.map.apply(x)(0) == Catch::Approx(0.25));
    x << 0.0;
    REQUIRE(c.map.apply(x)(0) == Catch::Approx(0.0));

    auto single = cell_of_word(interval, {1});
    REQUIRE(single.measure == Catch::Approx(0.5));
    REQUIRE(single.map.offset(0) == Catch::Approx(0.5));

    auto sg = PcfFractal::sierpinski_gasket();
    auto c2 = cell_of_word(sg, {0, 1});
    REQUIRE(c2.measure == Catch::Approx(1.0 / 9.0));
    REQUIRE(c2.resistance == Catch::Approx(9.0 / 25.0));
}

TEST_CASE("m-scale neighborhoods") {
    auto f = PcfFractal::interval();
    auto t = build_vertex_table(f, 3);

    // Junction 1/2 at level 1 belongs to both 1-cells.
    int half = -1;
    for (int i = 0; i < t.num_vertices(); ++i)
        if (std::abs(t.points[i](0) - 0.5) < 1e-12) half = i;
    auto nb = t.m_scale_neighborhood(half, 1);
    REQUIRE(nb.size() == 2);

    // Boundary point 0 at level 2: the single cell [0, 1/4].
    auto nb0 = t.m_scale_neighborhood(0, 2);
    REQUIRE(nb0.size() == 1);
    REQUIRE(t.word_of_cell(2, nb0[0]) == Word{0, 0});

    // A vertex interior to a cell: 1/8 is not in V_2, unique 2-cell [0,1/4].
    int eighth = -1;
    for (int i = 0; i < t.num_vertices(); ++i)
        if (std::abs(t.points[i](0) - 0.125) < 1e-12) eighth = i;
    REQUIRE_FALSE(t.in_level(eighth, 2));
    auto nbe = t.m_scale_neighborhood(eighth, 2);
    REQUIRE(nbe.size() == 1);
    REQUIRE(t.word_of_cell(2, nbe[0]) == Word{0, 0});

    auto sg = PcfFractal::sierpinski_gasket();
    auto ts = build_vertex_table(sg, 2);
    int bottom_mid = -1;
    for (int i = 0; i < ts.num_vertices(); ++i)
        if ((ts.points[i] - (0.5 * (sg.boundary_point(0) + sg.boundary_point(1))))
                .cwiseAbs()
                .maxCoeff() < 1e-12)
            bottom_mid = i;
    REQUIRE(bottom_mid >= 0);
    REQUIRE(ts.m_scale_neighborhood(bottom_mid, 1).size() == 2);
}

TEST_CASE("nesting and measure additivity") {
    auto f = PcfFractal::sierpinski_gasket();
    auto t3 = build_vertex_table(f, 3);
    auto t2 = build_vertex_table(f, 2);
    REQUIRE(t3.level_sizes[2] == t2.num_vertices());
    for (int i = 0; i < t2.num_vertices(); ++i)
        REQUIRE((t3.points[i] - t2.points[i]).cwiseAbs().maxCoeff() < 1e-12);

    for (int m = 0; m <= 3; ++m) {
        double total = 0.0;
        for (std::int64_t c = 0; c < t3.num_cells(m); ++c)
            total += f.measure_weight(t3.word_of_cell(m, c));
        REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("junction addresses agree geometrically") {
    auto f = PcfFractal::sierpinski_gasket();
    auto t = build_vertex_table(f, 3);
    const int n0 = t.num_corners();
    const auto& cells = t.cells_by_level[3];
    for (std::int64_t c = 0; c * n0 < static_cast<std::int64_t>(cells.size()); ++c) {
        Word w = t.word_of_cell(3, c);
        auto cm = f.compose_word(w);
        for (int i = 0; i < n0; ++i) {
            Vector p = cm.apply(f.boundary_point(i));
            REQUIRE((p - t.points[cells[c * n0 + i]]).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("canonical vertex order on the interval is spatial order") {
    auto f = PcfFractal::interval();
    auto t = build_vertex_table(f, 4);
    auto order = canonical_vertex_order(t);
    for (size_t i = 1; i < order.size(); ++i)
        REQUIRE(t.points[order[i - 1]](0) < t.points[order[i]](0));
}

TEST_CASE("cell pullback ids sample the coarse grid exactly") {
    auto f = PcfFractal::sierpinski_gasket();
    auto t = build_vertex_table(f, 3);
    Word w{1};
    auto pull = t.cell_pullback_ids(w);
    REQUIRE(static_cast<int>(pull.size()) == t.level_sizes[2]);
    auto cm = f.compose_word(w);
    for (size_t coarse = 0; coarse < pull.size(); ++coarse) {
        Vector expect = cm.apply(t.points[coarse]);
        REQUIRE((expect - t.points[pull[coarse]]).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("degenerate IFS raises AddressCollision") {
    PcfFractal f;
    f.name = "degenerate";
    f.ambient_dim = 1;
    Matrix half(1, 1), zero(1, 1);
    half << 0.5;
    zero << 0.0;
    Vector b0(1), b1(1);
    b0 << 0.0;
    b1 << 0.3;
    f.maps = {ContractionMap{half, b0}, ContractionMap{zero, b1}};
    f.resistance = {0.5, 0.5};
    f.measure = {0.5, 0.5};
    f.boundary = {0, 1};
    REQUIRE_THROWS_AS(build_vertex_table(f, 1), AddressCollision);
}

TEST_CASE("fractal spec validation") {
    auto f = PcfFractal::interval();
    f.measure = {0.5, 0.6};
    REQUIRE_THROWS_AS(f.validate(), InvalidFractalSpec);
    f = PcfFractal::interval();
    f.resistance = {1.0, 0.5};
    REQUIRE_THROWS_AS(f.validate(), InvalidFractalSpec);
    f = PcfFractal::interval();
    f.boundary = {0};
    REQUIRE_THROWS_AS(f.validate(), InvalidFractalSpec);
}
