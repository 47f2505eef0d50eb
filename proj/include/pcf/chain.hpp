#pragma once

#include "pcf/green.hpp"

namespace pcf {

/// A grid function carrying its Laplacian chain: deriv[k] represents
/// Delta^k u as a level-M grid function. For functions assembled from Green
/// solves, harmonic pieces, exact pullbacks and linear combinations the chain
/// is exact linear algebra, so smoothness certificates evaluate the chain
/// instead of differencing.
struct ChainFunction {
    std::vector<Vector> deriv;

    ChainFunction() = default;
    explicit ChainFunction(std::vector<Vector> d) : deriv(std::move(d)) {}

    int order() const { return static_cast<int>(deriv.size()) - 1; }
    const Vector& value() const { return deriv[0]; }
    Vector& value() { return deriv[0]; }
};

inline ChainFunction chain_zero(int n, int order) {
    ChainFunction c;
    c.deriv.assign(order + 1, Vector::Zero(n));
    return c;
}

/// Chain of a harmonic (or constant) function: all higher entries vanish.
inline ChainFunction chain_harmonic(const Vector& h, int order) {
    ChainFunction c;
    c.deriv.push_back(h);
    for (int k = 1; k <= order; ++k) c.deriv.emplace_back(Vector::Zero(h.size()));
    return c;
}

inline ChainFunction chain_scale(const ChainFunction& x, double a) {
    ChainFunction c = x;
    for (auto& d : c.deriv) d *= a;
    return c;
}

inline ChainFunction chain_add(const ChainFunction& x, const ChainFunction& y) {
    const int ord = std::min(x.order(), y.order());
    ChainFunction c;
    for (int k = 0; k <= ord; ++k) c.deriv.push_back(x.deriv[k] + y.deriv[k]);
    return c;
}

inline ChainFunction chain_axpy(double a, const ChainFunction& x, const ChainFunction& y) {
    return chain_add(chain_scale(x, a), y);
}

/// G applied to a chain: prepends the solve, shifting every order up by one.
inline ChainFunction chain_green(const GreenSolver& green, const ChainFunction& x) {
    ChainFunction c;
    c.deriv.push_back(green.apply(x.deriv[0]));
    for (const auto& d : x.deriv) c.deriv.push_back(d);
    return c;
}

/// Pullback of a chain into the cell F_w(X), scaled by `factor` at order 0 and
/// by the Laplacian rescaling (mu_w r_w)^{-k} at order k, zero outside the
/// cell. Sampling is exact: the pullback reads the chain on V_{M-|w|}.
inline ChainFunction chain_pullback(const LaplacianStack& stack, const ChainFunction& x,
                                    const Word& w, double factor) {
    const VertexTable& t = *stack.table;
    const double mu_r =
        stack.fractal->measure_weight(w) * stack.fractal->resistance_weight(w);
    auto pull = t.cell_pullback_ids(w);
    ChainFunction c = chain_zero(t.num_vertices(), x.order());
    double f = factor;
    for (int k = 0; k <= x.order(); ++k) {
        for (size_t coarse = 0; coarse < pull.size(); ++coarse)
            c.deriv[k](pull[coarse]) = f * x.deriv[k](coarse);
        f /= mu_r;
    }
    return c;
}

/// Numeric chain by repeated application of the renormalized Laplacian
/// (for functions that do not come with an exact construction).
inline ChainFunction chain_numeric(const LaplacianStack& stack, const Vector& u, int order) {
    ChainFunction c;
    c.deriv.push_back(u);
    for (int k = 1; k <= order; ++k)
        c.deriv.push_back(pointwise_laplacian(stack, c.deriv[k - 1]));
    return c;
}

/// Atom defect of the chain at vertex x and order k:
///   (H deriv[k])(x) - w_x deriv[k+1](x).
/// Zero (to solver precision) iff the distributional Laplacian of Delta^k u
/// carries no point mass at x, i.e. the order-k matching condition holds.
inline double chain_atom(const LaplacianStack& stack, const ChainFunction& c, int x, int k) {
    require(k + 1 <= c.order(), "chain too short for atom order");
    return (stack.top() * c.deriv[k])(x) - stack.weights()(x) * c.deriv[k + 1](x);
}

/// Max |atom| over a vertex set at each order k = 0..order-1.
inline std::vector<double> chain_atom_profile(const LaplacianStack& stack,
                                              const ChainFunction& c,
                                              const std::vector<int>& vertices) {
    std::vector<double> out;
    for (int k = 0; k + 1 <= c.order(); ++k) {
        Vector hv = stack.top() * c.deriv[k];
        double mx = 0.0;
        for (int x : vertices)
            mx = std::max(mx,
                          std::abs(hv(x) - stack.weights()(x) * c.deriv[k + 1](x)));
        out.push_back(mx);
    }
    return out;
}

}  // namespace pcf
