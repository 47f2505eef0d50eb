#pragma once

#include "pcf/vertex_table.hpp"

#include <Eigen/Eigenvalues>

namespace pcf {

/// Harmonic structure data derived from a level-0 conductance network and the
/// resistance factors r_j: the replicated level-1 network, the harmonic
/// extension matrices A_i (V_0 data -> F_i(V_0) data), and the integrals
/// beta_i = int h_i dmu of the harmonic basis (used for quadrature weights).
struct HarmonicStructure {
    Matrix level0_conductances;   // symmetric, zero diagonal, on V_0 positions
    SparseMatrix level1_conductances;  // on V_1 vertex ids of a level-1 table
    std::vector<Matrix> extension;     // A_i, one per map
    Vector harmonic_integrals;         // beta, sum 1
};

namespace detail {

// PSD graph Laplacian L = D - C from a symmetric conductance matrix given as
// triplets (i, j, c) with i < j.
inline SparseMatrix laplacian_from_edges(int n, const std::vector<Triplet>& edges) {
    std::vector<Triplet> trip;
    trip.reserve(edges.size() * 4);
    for (const auto& e : edges) {
        trip.emplace_back(e.row(), e.col(), -e.value());
        trip.emplace_back(e.col(), e.row(), -e.value());
        trip.emplace_back(e.row(), e.row(), e.value());
        trip.emplace_back(e.col(), e.col(), e.value());
    }
    SparseMatrix L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

}  // namespace detail

inline Matrix complete_graph_conductances(int n0) {
    Matrix c = Matrix::Ones(n0, n0);
    c.diagonal().setZero();
    return c;
}

/// Builds the harmonic structure from the level-0 network by replicating it
/// with weights r_j^{-1} into each 1-cell, computing the harmonic extension by
/// energy minimization, and verifying the renormalization fixed-point
/// property: the trace (Schur complement) of the level-1 energy onto V_0 must
/// reproduce the level-0 network.
inline HarmonicStructure renormalize_harmonic_structure(const PcfFractal& fractal,
                                                        const Matrix& level0_conductances,
                                                        double tol = 1e-10) {
    fractal.validate();
    const int n0 = fractal.num_boundary();
    require(level0_conductances.rows() == n0 && level0_conductances.cols() == n0,
            "level-0 conductance matrix must be n0 x n0");
    require((level0_conductances - level0_conductances.transpose()).cwiseAbs().maxCoeff() <
                1e-14,
            "level-0 conductances must be symmetric");

    VertexTable t1 = build_vertex_table(fractal, 1);
    const int n1 = t1.num_vertices();
    const int N = fractal.num_maps();

    std::vector<Triplet> edges;
    for (int j = 0; j < N; ++j) {
        const int* ids = t1.cell_corners(1, j);
        const double scale = 1.0 / fractal.resistance[j];
        for (int a = 0; a < n0; ++a)
            for (int b = a + 1; b < n0; ++b)
                if (level0_conductances(a, b) != 0.0)
                    edges.emplace_back(ids[a], ids[b], scale * level0_conductances(a, b));
    }
    SparseMatrix L1 = detail::laplacian_from_edges(n1, edges);

    const int ni = n1 - n0;
    require(ni > 0, "level-1 network has no interior vertices");
    Matrix L1d = Matrix(L1);
    Matrix Lbb = L1d.topLeftCorner(n0, n0);
    Matrix Lbi = L1d.topRightCorner(n0, ni);
    Matrix Lii = L1d.bottomRightCorner(ni, ni);

    Eigen::LLT<Matrix> llt(Lii);
    if (llt.info() != Eigen::Success)
        throw NotRenormalizable("level-1 interior network is not connected/positive");

    // Interior harmonic values for each unit boundary datum.
    Matrix Xint = -llt.solve(Lbi.transpose());  // ni x n0
    Matrix schur = Lbb + Lbi * Xint;

    SparseMatrix L0 = detail::laplacian_from_edges(
        n0, [&] {
            std::vector<Triplet> e;
            for (int a = 0; a < n0; ++a)
                for (int b = a + 1; b < n0; ++b)
                    if (level0_conductances(a, b) != 0.0)
                        e.emplace_back(a, b, level0_conductances(a, b));
            return e;
        }());
    double defect = (schur - Matrix(L0)).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, Matrix(L0).cwiseAbs().maxCoeff());
    if (defect > tol * scale)
        throw NotRenormalizable("Schur complement defect " + std::to_string(defect));

    HarmonicStructure hs;
    hs.level0_conductances = level0_conductances;
    {
        std::vector<Triplet> sym;
        sym.reserve(edges.size() * 2);
        for (const auto& e : edges) {
            sym.emplace_back(e.row(), e.col(), e.value());
            sym.emplace_back(e.col(), e.row(), e.value());
        }
        hs.level1_conductances.resize(n1, n1);
        hs.level1_conductances.setFromTriplets(sym.begin(), sym.end());
    }

    Matrix values(n1, n0);  // all level-1 vertex values per boundary datum
    values.topRows(n0) = Matrix::Identity(n0, n0);
    values.bottomRows(ni) = Xint;
    for (int j = 0; j < N; ++j) {
        const int* ids = t1.cell_corners(1, j);
        Matrix A(n0, n0);
        for (int c = 0; c < n0; ++c) A.row(c) = values.row(ids[c]);
        hs.extension.push_back(std::move(A));
    }

    // beta solves beta^T (sum_j mu_j A_j) = beta^T with sum beta = 1; this is
    // the self-similarity identity for integrals of harmonic functions.
    Matrix B = Matrix::Zero(n0, n0);
    for (int j = 0; j < N; ++j) B += fractal.measure[j] * hs.extension[j];
    Matrix sys(n0 + 1, n0);
    sys.topRows(n0) = B.transpose() - Matrix::Identity(n0, n0);
    sys.bottomRows(1).setOnes();
    Vector rhs = Vector::Zero(n0 + 1);
    rhs(n0) = 1.0;
    hs.harmonic_integrals = sys.colPivHouseholderQr().solve(rhs);
    require((sys * hs.harmonic_integrals - rhs).norm() < 1e-10,
            "harmonic integral system inconsistent");
    return hs;
}

/// Harmonic structure with the built-in defaults: complete unit-conductance
/// graph on V_0 (the standard choice for both built-in fractals).
inline HarmonicStructure standard_harmonic_structure(const PcfFractal& fractal) {
    return renormalize_harmonic_structure(
        fractal, complete_graph_conductances(fractal.num_boundary()));
}

/// Values of the unique energy-minimizing extension of boundary data on every
/// vertex of the table: h|_{F_w(V_0)} = A_{w_m} ... A_{w_1} h|_{V_0}.
inline Vector harmonic_extend(const HarmonicStructure& hs, const VertexTable& table,
                              const Vector& boundary_values, int level = -1) {
    const int n0 = table.num_corners();
    require(boundary_values.size() == n0, "boundary data must be indexed by V_0");
    const int N = table.fractal->num_maps();
    if (level < 0) level = table.level;
    require(level <= table.level, "harmonic_extend: level beyond table");
    Vector out = Vector::Zero(table.level_sizes[level]);

    // Words grow by appending letters: the data on F_{(w', j)}(V_0) is
    // A_j applied to the data on F_{w'}(V_0), and (w', j) = w' * N + j in
    // lexicographic cell indexing.
    Matrix prev(n0, 1);
    prev.col(0) = boundary_values;
    for (int i = 0; i < n0; ++i) out(i) = boundary_values(i);
    for (int m = 1; m <= level; ++m) {
        const std::int64_t prev_cells = prev.cols();
        Matrix cur(n0, prev_cells * N);
        for (std::int64_t c = 0; c < prev_cells; ++c)
            for (int j = 0; j < N; ++j) cur.col(c * N + j) = hs.extension[j] * prev.col(c);
        const auto& cells = table.cells_by_level[m];
        for (std::int64_t c = 0; c < cur.cols(); ++c)
            for (int i = 0; i < n0; ++i) out(cells[c * n0 + i]) = cur(i, c);
        prev = std::move(cur);
    }
    return out;
}

/// Harmonic h_i with h_i(q_j) = delta_ij.
inline Vector harmonic_basis_function(const HarmonicStructure& hs, const VertexTable& table,
                                      int i) {
    Vector b = Vector::Zero(table.num_corners());
    b(i) = 1.0;
    return harmonic_extend(hs, table, b);
}

}  // namespace pcf
