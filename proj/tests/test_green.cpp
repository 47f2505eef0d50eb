#include "pcf/green.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace pcf;

namespace {

struct Setup {
    PcfFractal f;
    VertexTable t;
    LaplacianStack stack;
    Setup(const std::string& name, int M)
        : f(PcfFractal::builtin(name)), t(build_vertex_table(f, M)) {
        stack = build_laplacian_stack(f, t);
    }
};

}  // namespace

TEST_CASE("G(1) on the interval is x(x-1)/2 exactly on the grid") {
    Setup s("interval", 9);
    GreenSolver green(s.stack);
    Vector u = green.apply(Vector::Ones(s.t.num_vertices()));
    for (int i = 0; i < s.t.num_vertices(); ++i) {
        double x = s.t.points[i](0);
        REQUIRE(u(i) == Catch::Approx(x * (x - 1) / 2).margin(1e-12));
    }
    int half = s.t.locate(Vector::Constant(1, 0.5));
    REQUIRE(u(half) == Catch::Approx(-0.125).margin(1e-13));
}

TEST_CASE("G(0) = 0 and G inverts the Laplacian") {
    Setup s("sierpinski-gasket", 4);
    GreenSolver green(s.stack);
    REQUIRE(green.apply(Vector::Zero(s.t.num_vertices())).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937 rng(5);
    std::normal_distribution<double> gauss;
    Vector f(s.t.num_vertices());
    for (int i = 0; i < f.size(); ++i) f(i) = gauss(rng);
    Vector phi = green.apply(f);
    Vector lap = pointwise_laplacian(s.stack, phi);
    // Round trip in both directions: Delta(Gf) = f and G(Delta phi) = phi.
    for (int i = s.t.num_boundary(); i < s.t.num_vertices(); ++i)
        REQUIRE(lap(i) == Catch::Approx(f(i)).epsilon(1e-8).margin(1e-9));
    Vector back = green.apply(lap);
    REQUIRE((back - phi).cwiseAbs().maxCoeff() < 1e-8 * phi.cwiseAbs().maxCoeff());
}

TEST_CASE("iterated Green's operator") {
    Setup s("interval", 9);
    GreenSolver green(s.stack);
    Vector ones = Vector::Ones(s.t.num_vertices());
    REQUIRE((green.iterate(ones, 1) - green.apply(ones)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(green.iterate(Vector::Zero(ones.size()), 3).cwiseAbs().maxCoeff() == 0.0);

    Vector u2 = green.iterate(ones, 2);
    // u = (x^4 - 2x^3 + x)/24 solves Delta^2 u = 1, u = Delta u = 0 on {0,1};
    // the discrete solution matches to second order.
    double h = std::pow(2.0, -9);
    for (int i = 0; i < s.t.num_vertices(); ++i) {
        double x = s.t.points[i](0);
        double expect = (std::pow(x, 4) - 2 * std::pow(x, 3) + x) / 24.0;
        REQUIRE(u2(i) == Catch::Approx(expect).margin(h * h));
    }
    // Double application of the pointwise Laplacian recovers 1 away from V_0
    // (roundoff is amplified by the square of the top eigenvalue scale).
    auto [lap2, mask] = repeated_laplacian(s.stack, u2, 2);
    for (int i = 0; i < s.t.num_vertices(); ++i)
        if (mask[i]) REQUIRE(lap2(i) == Catch::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("interval kernel matches the closed form x(1-y)") {
    Setup s("interval", 6);
    GreenSolver green(s.stack);
    for (int y = 0; y < s.t.num_vertices(); ++y) {
        Vector col = green.kernel_column(y);
        double py = s.t.points[y](0);
        for (int x = 0; x < s.t.num_vertices(); ++x) {
            double px = s.t.points[x](0);
            double expect = std::min(px, py) * (1 - std::max(px, py));
            REQUIRE(col(x) == Catch::Approx(expect).margin(1e-12));
        }
    }
}

TEST_CASE("kernel symmetry and nonnegativity") {
    Setup s("sierpinski-gasket", 3);
    GreenSolver green(s.stack);
    Matrix g = green.kernel_matrix();
    REQUIRE((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(g.minCoeff() > -1e-12);
}

TEST_CASE("kernel scale bound on boundary cells") {
    Setup s("sierpinski-gasket", 5);
    GreenSolver green(s.stack);
    const double r = s.f.resistance[0];
    // Fit the constant at l1 = 1 with the model C (l1+1) r^{l1} (the series
    // contributes one comparable layer per scale down to l1), then check the
    // deeper scales against it.
    auto max_on_cell = [&](const Word& w) {
        auto ids = s.t.cell_vertex_ids(w);
        double mx = 0.0;
        for (int x : ids) {
            Vector col = green.kernel_column(x);
            for (int y : ids) mx = std::max(mx, col(y));
        }
        return mx;
    };
    double C = max_on_cell(Word{0}) / (2 * r);
    REQUIRE(C < 5.0);
    for (int l1 : {2, 3})
        for (int j = 0; j < 3; ++j) {
            Word w(l1, j);
            REQUIRE(max_on_cell(w) <= C * (l1 + 1) * std::pow(r, l1) * (1 + 1e-9));
        }
}

TEST_CASE("series: interval midpoint and boundary values") {
    Setup s("interval", 6);
    GreenKernelSeries series(s.stack);
    int half = s.t.locate(Vector::Constant(1, 0.5));
    REQUIRE(series.partial(half, half, 1) == Catch::Approx(0.25).margin(1e-12));
    // Dirichlet kernel vanishes when either argument is a boundary point.
    for (int y = 0; y < s.t.num_vertices(); ++y)
        REQUIRE(series.partial(0, y, 4) == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("series telescopes to the discrete kernel") {
    for (auto [name, M] : {std::pair{"interval", 6}, std::pair{"sierpinski-gasket", 4}}) {
        Setup s(name, M);
        GreenSolver green(s.stack);
        GreenKernelSeries series(s.stack);
        std::mt19937 rng(3);
        std::uniform_int_distribution<int> pick(s.t.num_boundary(), s.t.num_vertices() - 1);
        for (int rep = 0; rep < 10; ++rep) {
            int x = pick(rng), y = pick(rng);
            double exact = green.kernel_entry(x, y);
            double sum = series.partial(x, y, M);
            REQUIRE(sum == Catch::Approx(exact).margin(1e-10));
        }
    }
}

TEST_CASE("series error decreases monotonically for separated pairs") {
    Setup s("interval", 7);
    GreenSolver green(s.stack);
    GreenKernelSeries series(s.stack);
    int x = s.t.locate(Vector::Constant(1, 3.0 / 128));
    int y = s.t.locate(Vector::Constant(1, 93.0 / 128));
    double exact = green.kernel_entry(x, y);
    double prev = 1e300;
    for (int m = 1; m <= 7; ++m) {
        double err = std::abs(series.partial(x, y, m) - exact);
        REQUIRE(err <= prev + 1e-14);
        prev = err;
    }
    REQUIRE(prev < 1e-12);
}
