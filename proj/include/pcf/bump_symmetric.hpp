#pragma once

#include "pcf/green.hpp"

namespace pcf {

/// The interval rearrangement: signed half-scale copies of u placed in the
/// four boundary cells of width L/2, L = 2^{-l}, zero on [L, 1-L].
inline Vector symmetric_interval_phi(const LaplacianStack& stack, const Vector& u, int l) {
    const VertexTable& t = *stack.table;
    require(t.level >= l + 1, "table too shallow for L = 2^-l");
    check_level(stack, u);
    Vector out = Vector::Zero(stack.size());
    struct Piece {
        Word w;
        double sign;
    };
    std::vector<Piece> pieces;
    pieces.push_back({Word(static_cast<size_t>(l + 1), 0), +1.0});
    {
        Word w(static_cast<size_t>(l), 0);
        w.push_back(1);
        pieces.push_back({w, -1.0});
    }
    {
        Word w(static_cast<size_t>(l), 1);
        w.push_back(0);
        pieces.push_back({w, -1.0});
    }
    pieces.push_back({Word(static_cast<size_t>(l + 1), 1), +1.0});
    for (const auto& p : pieces) {
        auto pull = t.cell_pullback_ids(p.w);
        for (size_t coarse = 0; coarse < pull.size(); ++coarse)
            out(pull[coarse]) = p.sign * u(coarse);
    }
    return out;
}

/// The gasket rearrangement of Eq.-(10) type: 2u on the corner (l+1)-cells,
/// -u on the two sibling cells inside each corner l-cell, zero elsewhere.
inline Vector symmetric_sg_phi(const LaplacianStack& stack, const Vector& u, int l) {
    const VertexTable& t = *stack.table;
    const int N = stack.fractal->num_maps();
    require(l >= 2, "gasket operator needs l >= 2");
    require(t.level >= l + 1, "table too shallow");
    check_level(stack, u);
    Vector out = Vector::Zero(stack.size());
    for (int i = 0; i < N; ++i) {
        {
            Word w(static_cast<size_t>(l + 1), i);
            auto pull = t.cell_pullback_ids(w);
            for (size_t coarse = 0; coarse < pull.size(); ++coarse)
                out(pull[coarse]) = 2.0 * u(coarse);
        }
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            Word w(static_cast<size_t>(l), i);
            w.push_back(j);
            auto pull = t.cell_pullback_ids(w);
            for (size_t coarse = 0; coarse < pull.size(); ++coarse)
                out(pull[coarse]) = -u(coarse);
        }
    }
    return out;
}

struct SymmetricBumpResult {
    Vector u;
    Vector phi_u;  // the rearrangement of the fixed point
    int iterations = 0;
    double final_delta = 0.0;
};

/// Psi u = G(Phi u) / G(Phi u)(norm_vertex), iterated to the sup-norm fixed
/// point.
template <typename PhiFn>
SymmetricBumpResult symmetric_fixed_point(const LaplacianStack& stack,
                                          const GreenSolver& green, PhiFn&& phi,
                                          int norm_vertex, Vector u, double tol = 1e-10,
                                          int max_iter = 300) {
    SymmetricBumpResult res;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = phi(u);
        Vector g = green.apply(w);
        double denom = g(norm_vertex);
        if (std::abs(denom) < 1e-14 * std::max(1.0, g.cwiseAbs().maxCoeff()))
            throw NormalizationZero("G(Phi u) vanishes at the normalization vertex");
        Vector next = g / denom;
        double delta = (next - u).cwiseAbs().maxCoeff();
        u = std::move(next);
        if (delta < tol) {
            res.u = u;
            res.phi_u = phi(u);
            res.iterations = it + 1;
            res.final_delta = delta;
            return res;
        }
    }
    throw NoConvergence("symmetric operator did not reach a fixed point");
}

/// Interval driver: L = 2^{-l}, normalization at x = 1/2, tent start.
inline SymmetricBumpResult symmetric_interval_bump(const LaplacianStack& stack,
                                                   const GreenSolver& green, int l,
                                                   double tol = 1e-10) {
    const VertexTable& t = *stack.table;
    const double L = std::pow(2.0, -l);
    int half = t.locate(Vector::Constant(1, 0.5));
    require(half >= 0, "midpoint is not a vertex");
    Vector u0(t.num_vertices());
    for (int i = 0; i < t.num_vertices(); ++i) {
        double x = t.points[i](0);
        u0(i) = std::min({1.0, x / L, (1.0 - x) / L});
    }
    return symmetric_fixed_point(
        stack, green,
        [&](const Vector& v) { return symmetric_interval_phi(stack, v, l); }, half,
        std::move(u0), tol);
}

/// Gasket driver: normalization at a V_1 junction, seed 1 off the corner
/// l-cells and harmonic inside them.
inline SymmetricBumpResult symmetric_sg_bump(const LaplacianStack& stack,
                                             const GreenSolver& green, int l,
                                             int norm_vertex, double tol = 1e-10) {
    const VertexTable& t = *stack.table;
    const PcfFractal& f = *stack.fractal;
    const int n0 = t.num_corners();
    Vector u0 = Vector::Ones(t.num_vertices());
    for (int j = 0; j < n0; ++j) {
        Vector data = Vector::Ones(n0);
        data(j) = 0.0;
        Vector vals = harmonic_extend(stack.hs, t, data, t.level - l);
        auto pull = t.cell_pullback_ids(Word(static_cast<size_t>(l), f.boundary[j]));
        for (size_t coarse = 0; coarse < pull.size(); ++coarse)
            u0(pull[coarse]) = vals(coarse);
    }
    return symmetric_fixed_point(
        stack, green, [&](const Vector& v) { return symmetric_sg_phi(stack, v, l); },
        norm_vertex, std::move(u0), tol);
}

}  // namespace pcf
