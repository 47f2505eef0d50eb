#pragma once

#include "pcf/green.hpp"
#include "pcf/io.hpp"
#include "pcf/spectral.hpp"

#include <random>

namespace pcf {

struct InvariantCheck {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// The cross-module invariant suite: Gauss-Green, energy self-similarity,
/// Green round trip, kernel symmetry/nonnegativity, spectral sanity,
/// quadrature normalization, extension-matrix spectra.
inline std::vector<InvariantCheck> run_invariant_suite(const PcfFractal& fractal, int M,
                                                       const Matrix& conductances,
                                                       unsigned seed = 2026) {
    std::vector<InvariantCheck> out;
    auto push = [&](const std::string& name, double measured, double tol) {
        out.push_back({name, measured, tol, measured <= tol});
    };

    auto hs = renormalize_harmonic_structure(fractal, conductances);
    auto table = build_vertex_table(fractal, M);
    auto stack = build_laplacian_stack(fractal, table, hs);
    const int n = table.num_vertices();
    const int n0 = table.num_boundary();
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss;
    auto random_grid = [&] {
        Vector u(n);
        for (int i = 0; i < n; ++i) u(i) = gauss(rng);
        return u;
    };

    {
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            Vector u = random_grid(), v = random_grid();
            double lhs = 0.0;
            for (int q = 0; q < n0; ++q)
                lhs += v(q) * normal_derivative(stack, u, q).value -
                       u(q) * normal_derivative(stack, v, q).value;
            Vector lu = pointwise_laplacian(stack, u), lv = pointwise_laplacian(stack, v);
            double rhs = 0.0;
            for (int i = n0; i < n; ++i)
                rhs += stack.weights()(i) * (v(i) * lu(i) - u(i) * lv(i));
            worst = std::max(worst,
                             std::abs(lhs - rhs) / std::max(1.0, u.norm() * v.norm()));
        }
        push("gauss-green", worst, 1e-10);
    }

    {
        Vector u = random_grid();
        double total = graph_energy(stack, u, u);
        double sum = 0.0;
        for (std::int64_t c = 0; c < table.num_cells(1); ++c) {
            Word w = table.word_of_cell(1, c);
            auto pull = table.cell_pullback_ids(w);
            Vector uw(pull.size());
            for (size_t i = 0; i < pull.size(); ++i) uw(i) = u(pull[i]);
            sum += -uw.dot(stack.H[M - 1] * uw) / fractal.resistance_weight(w);
        }
        push("energy-self-similarity", std::abs(sum - total) / std::max(1.0, total), 1e-12);
    }

    {
        GreenSolver green(stack);
        Vector f = random_grid();
        Vector u = green.apply(f);
        Vector lap = pointwise_laplacian(stack, u);
        double worst = 0.0;
        for (int i = n0; i < n; ++i) worst = std::max(worst, std::abs(lap(i) - f(i)));
        push("green-round-trip", worst / std::max(1.0, f.cwiseAbs().maxCoeff()), 1e-10);

        double sym = 0.0, neg = 0.0;
        std::uniform_int_distribution<int> pick(n0, n - 1);
        for (int rep = 0; rep < 6; ++rep) {
            int y = pick(rng);
            Vector col = green.kernel_column(y);
            neg = std::max(neg, -col.minCoeff());
            for (int rep2 = 0; rep2 < 6; ++rep2) {
                int x = pick(rng);
                sym = std::max(sym, std::abs(col(x) - green.kernel_entry(y, x)));
            }
        }
        push("kernel-symmetry", sym, 1e-12);
        push("kernel-nonnegativity", neg, 1e-12);
    }

    {
        int Ms = M;
        auto* tbl = &table;
        VertexTable small;
        LaplacianStack sstack;
        // Cap the dense eigensolve at a spectral-friendly size.
        while (tbl->num_vertices() > 4000 && Ms > 2) {
            --Ms;
            small = build_vertex_table(fractal, Ms);
            tbl = &small;
        }
        const LaplacianStack* sp = &stack;
        if (Ms != M) {
            sstack = build_laplacian_stack(fractal, *tbl, hs);
            sp = &sstack;
        }
        auto dec = eigendecompose(*sp, BoundaryCondition::Neumann);
        Matrix gram = dec.eigenvectors.transpose() * sp->weights().asDiagonal() *
                      dec.eigenvectors;
        double ortho =
            (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        push("spectral-orthonormality", ortho, 1e-10);
        push("spectral-floor", std::abs(dec.eigenvalues(0)), 1e-8);
        push("spectral-gap-positive", dec.spectral_gap > 0 ? 0.0 : 1.0, 0.5);
    }

    push("quadrature-normalization", std::abs(stack.weights().sum() - 1.0), 1e-12);

    {
        double worst = 0.0;
        for (int j = 0; j < fractal.num_maps(); ++j) {
            const Matrix& A = hs.extension[j];
            Vector ones = Vector::Ones(A.rows());
            worst = std::max(worst, (A * ones - ones).cwiseAbs().maxCoeff());
            Eigen::EigenSolver<Matrix> es(A);
            std::vector<double> mags;
            for (int k = 0; k < A.rows(); ++k) mags.push_back(std::abs(es.eigenvalues()(k)));
            std::sort(mags.begin(), mags.end());
            worst = std::max(worst, mags[mags.size() - 2] - fractal.resistance[j]);
        }
        push("extension-matrix-spectra", std::max(worst, 0.0), 1e-10);
    }

    return out;
}

inline Json invariant_report_json(const std::vector<InvariantCheck>& checks) {
    Json j = Json::array();
    for (const auto& c : checks)
        j.push_back({{"name", c.name},
                     {"measured", c.measured},
                     {"tolerance", c.tolerance},
                     {"pass", c.pass}});
    return j;
}

}  // namespace pcf
