#include "pcf/heat.hpp"

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
    std::vector<int> ball(double lo, double hi) const {
        std::vector<int> ids;
        for (int i = 0; i < t.num_vertices(); ++i)
            if (t.points[i](0) >= lo && t.points[i](0) <= hi) ids.push_back(i);
        return ids;
    }
};

}  // namespace

TEST_CASE("interval Dirichlet eigenvalues approach (k pi)^2") {
    Setup s("interval", 8);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Dirichlet);
    const double pi = std::acos(-1.0);
    for (int k = 1; k <= 3; ++k)
        REQUIRE(dec.eigenvalues(k - 1) ==
                Catch::Approx(k * k * pi * pi).epsilon(1e-3 * k * k));
    REQUIRE(dec.eigenvalues(0) == Catch::Approx(pi * pi).epsilon(1e-3));
    // Eigenfunctions are discrete sines up to sign and normalization.
    Vector phi = dec.eigenvectors.col(0);
    int peak = s.t.locate(Vector::Constant(1, 0.5));
    double scale = phi(peak) / std::sqrt(2.0);
    for (int i = 0; i < s.t.num_vertices(); ++i) {
        double x = s.t.points[i](0);
        REQUIRE(phi(i) == Catch::Approx(scale * std::sqrt(2.0) * std::sin(pi * x))
                              .margin(5e-3 * std::abs(scale)));
    }
}

TEST_CASE("Neumann decomposition has the constant kernel and W-orthonormal modes") {
    Setup s("sierpinski-gasket", 3);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    REQUIRE(dec.eigenvalues(0) == Catch::Approx(0.0).margin(1e-9));
    Vector c = dec.eigenvectors.col(0);
    REQUIRE((c.array() - c(0)).abs().maxCoeff() < 1e-8 * std::abs(c(0)));
    Matrix gram = dec.eigenvectors.transpose() * s.stack.weights().asDiagonal() *
                  dec.eigenvectors;
    REQUIRE((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
            1e-10);
    REQUIRE(dec.spectral_gap > 0.0);
}

TEST_CASE("heat semigroup properties") {
    Setup s("interval", 7);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    std::mt19937 rng(9);
    std::normal_distribution<double> gauss;
    Vector f(s.t.num_vertices());
    for (int i = 0; i < f.size(); ++i) f(i) = gauss(rng);

    REQUIRE((heat_apply(dec, 0.0, f) - f).cwiseAbs().maxCoeff() < 1e-10);

    Vector phi5 = dec.eigenvectors.col(5);
    double lam = dec.eigenvalues(5);
    Vector pphi = heat_apply(dec, 0.02, phi5);
    REQUIRE((pphi - std::exp(-lam * 0.02) * phi5).cwiseAbs().maxCoeff() < 1e-10);

    Vector a = heat_apply(dec, 0.01, heat_apply(dec, 0.03, f));
    Vector b = heat_apply(dec, 0.04, f);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-10);

    // Markov property within the lumped-quadrature tolerance.
    Vector u01 = f;
    for (int i = 0; i < u01.size(); ++i) u01(i) = 0.5 + 0.5 * std::tanh(f(i));
    Vector pu = heat_apply(dec, 0.05, u01);
    REQUIRE(pu.minCoeff() > -1e-8);
    REQUIRE(pu.maxCoeff() < 1.0 + 1e-8);
}

TEST_CASE("||Delta^k P_t|| <= c_k t^{-k} with c_k = (k/e)^k on the spectrum") {
    Setup s("interval", 6);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    for (int k = 1; k <= 4; ++k) {
        double ck = std::pow(k / std::exp(1.0), k);
        for (double t : {1e-4, 1e-2, 0.5}) {
            double opnorm = 0.0;
            for (int i = 0; i < dec.modes(); ++i)
                opnorm = std::max(opnorm, std::pow(dec.eigenvalues(i), k) *
                                              std::exp(-dec.eigenvalues(i) * t));
            REQUIRE(opnorm <= ck * std::pow(t, -k) * (1 + 1e-12));
        }
    }
}

TEST_CASE("resistance distance: interval is the euclidean metric") {
    Setup s("interval", 7);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    REQUIRE(resistance_distance(dec, 0, 1) == Catch::Approx(1.0).epsilon(1e-9));
    REQUIRE(resistance_distance(dec, 5, 5) == Catch::Approx(0.0).margin(1e-12));
    std::mt19937 rng(13);
    std::uniform_int_distribution<int> pick(0, s.t.num_vertices() - 1);
    for (int rep = 0; rep < 30; ++rep) {
        int x = pick(rng), y = pick(rng), z = pick(rng);
        double rxy = resistance_distance(dec, x, y);
        REQUIRE(rxy ==
                Catch::Approx(std::abs(s.t.points[x](0) - s.t.points[y](0))).margin(1e-9));
        REQUIRE(rxy <= resistance_distance(dec, x, z) + resistance_distance(dec, z, y) +
                           1e-12);
    }
}

TEST_CASE("D estimates: norm one at zero separation, monotone, tiny when far") {
    Setup s("interval", 9);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    std::vector<int> all(s.t.num_vertices());
    for (int i = 0; i < s.t.num_vertices(); ++i) all[i] = i;
    REQUIRE(estimate_D(dec, 1e-3, all, all) == Catch::Approx(1.0).epsilon(1e-9));

    auto K = s.ball(3.0 / 8, 5.0 / 8);
    double prev = 2.0;
    for (double d : {0.05, 0.1, 0.2, 0.3}) {
        double D = estimate_D_at_distance(dec, 1e-3, K, d);
        REQUIRE(D <= prev + 1e-12);
        prev = D;
    }
    double t_prev = estimate_D_at_distance(dec, 2e-3, K, 0.2);
    REQUIRE(estimate_D_at_distance(dec, 1e-3, K, 0.2) <= t_prev + 1e-12);

    REQUIRE(estimate_D_at_distance(dec, 1e-4, K, 0.25) < 1e-8);
}

TEST_CASE("schedule search meets the paper constraints") {
    Setup s("interval", 7);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    auto K = s.ball(3.0 / 8, 5.0 / 8);
    const double eps = 0.25;
    auto reg = build_cutoff_regions(dec, K, eps, 6);
    auto sched = build_schedule(dec, reg, eps, 3, 6);

    REQUIRE(sched.C[0] <= 0.5);
    for (double t : sched.times) REQUIRE(t < 2.0 / dec.spectral_gap);
    for (size_t j = 1; j < sched.times.size(); ++j)
        REQUIRE(sched.times[j] < sched.times[j - 1]);

    // Shifted schedule has C_0 no larger than the unshifted one. For k >= 1
    // the truncated sums bottom out at the SVD noise floor (the true D decay
    // beats any power of t, the measured one cannot), so only k = 0 is a
    // numerically meaningful comparison.
    auto shifted = build_schedule(dec, reg, eps, 3, 6, sched.C[0] * 0.5);
    REQUIRE(shifted.shift > sched.shift);
    REQUIRE(shifted.C[0] <= sched.C[0] * (1 + 1e-9));

    for (int k = 0; k <= 3; ++k)
        REQUIRE(sched.c_measured[k] <=
                (k == 0 ? 1.0 : std::pow(k / std::exp(1.0), k)) * (1 + 1e-12));
}

TEST_CASE("heat cutoff: zero input, lemma bounds, constant-function bump") {
    Setup s("interval", 7);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);
    auto K = s.ball(3.0 / 8, 5.0 / 8);
    const double eps = 0.25;
    const int J = 6;
    auto reg = build_cutoff_regions(dec, K, eps, J);
    auto sched = build_schedule(dec, reg, eps, 3, J, 1e-4);

    auto zero = heat_cutoff(dec, K, Vector::Zero(s.t.num_vertices()), reg, sched);
    REQUIRE(zero.v.cwiseAbs().maxCoeff() < 1e-14);

    // Corollary-2.9 shape: cutting off the constant 1 gives a nonnegative
    // bump that is 1 on K up to the reported tolerance.
    Vector ones = Vector::Ones(s.t.num_vertices());
    auto res = heat_cutoff(dec, K, ones, reg, sched);
    for (const auto& st : res.steps) {
        REQUIRE(st.diff_total <= 2.0 * st.bound_26 + 1e-12);
        REQUIRE(st.diff_on_K <= 2.0 * st.bound_23 + 1e-12);
        REQUIRE(st.norm_u <= 3.0 + 1e-9);
    }
    REQUIRE(res.nonnegative);
    for (int x : K) REQUIRE(res.v(x) == Catch::Approx(1.0).margin(2e-3));
    REQUIRE(res.leak_outside < 1e-3);
    for (int k = 0; k <= sched.k_max; ++k)
        REQUIRE(res.delta_norm[k] <= 2.0 * res.delta_bound[k]);
    // Cauchy partial sums are monotone by construction and must stabilize.
    for (int k = 0; k <= sched.k_max; ++k) {
        const auto& part = res.cauchy_partials[k];
        REQUIRE(part.size() >= 2);
        REQUIRE(part.back() - part[part.size() - 2] <= 1e-6 * (1 + part.back()));
    }
}

TEST_CASE("sub-Gaussian fit on the interval is Gaussian") {
    Setup s("interval", 8);
    auto dec = eigendecompose(s.stack, BoundaryCondition::Neumann);

    // Semigroup identity p(2t,x,x) = ||p(t,x,.)||_2^2 and symmetry.
    int x0 = s.t.locate(Vector::Constant(1, 0.5));
    int y0 = s.t.locate(Vector::Constant(1, 0.25));
    for (double t : {1e-3, 1e-2}) {
        double on_diag = heat_kernel(dec, 2 * t, x0, x0);
        double norm2 = 0.0;
        for (int y = 0; y < s.t.num_vertices(); ++y)
            norm2 += s.stack.weights()(y) * std::pow(heat_kernel(dec, t, x0, y), 2);
        REQUIRE(on_diag == Catch::Approx(norm2).margin(1e-10));
        REQUIRE(heat_kernel(dec, t, x0, y0) ==
                Catch::Approx(heat_kernel(dec, t, y0, x0)).margin(1e-12));
    }

    std::vector<double> t_grid;
    for (double t = 3e-5; t <= 1e-3; t *= 1.7) t_grid.push_back(t);
    std::vector<std::pair<int, int>> pairs;
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> pick(0, s.t.num_vertices() - 1);
    while (pairs.size() < 60) {
        int x = pick(rng), y = pick(rng);
        double px = s.t.points[x](0), py = s.t.points[y](0);
        double d = std::abs(px - py);
        if (d > 0.05 && d < 0.3 && px > 0.1 && px < 0.9 && py > 0.1 && py < 0.9)
            pairs.emplace_back(x, y);
    }
    auto fit = fit_subgaussian(dec, t_grid, pairs);
    REQUIRE(fit.beta == Catch::Approx(2.0).epsilon(0.15));
    REQUIRE(fit.alpha == Catch::Approx(1.0).epsilon(0.15));
    REQUIRE(fit.gamma1 > 0.0);
    REQUIRE(fit.gamma2 > 0.0);

    // The envelope property on the sampled set.
    for (double t : t_grid)
        for (auto [x, y] : pairs) {
            double p = heat_kernel(dec, t, x, y);
            if (p < 1e-13) continue;
            double d = resistance_distance(dec, x, y);
            double bound = fit.gamma1 / std::pow(t, fit.alpha / fit.beta) *
                           std::exp(-fit.gamma2 *
                                    std::pow(std::pow(d, fit.beta) / t,
                                             1.0 / (fit.beta - 1.0)));
            REQUIRE(p <= bound * (1 + 1e-9));
        }
}
