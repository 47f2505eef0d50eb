#pragma once

#include "pcf/chain.hpp"

#include <Eigen/SVD>

namespace pcf {

struct BumpConfig {
    int l1 = 3;
    int l2 = 3;
    double eps_target = 0.5;      // |u*-1| tolerance on X \ Y
    double tol_fixed_point = 1e-9;  // sup-norm stopping rule
    int max_iter = 200;
    int k_max = 4;                // smoothness certificate order
};

/// The Y_j / Z_{i,j} / x_{i,j} bookkeeping that drives the operator Psi.
/// Index j runs over boundary positions; i = 0 is the boundary cell Z_{0,j}
/// at q_j, i >= 1 are the cells at the points where Y_j meets the rest of X.
struct BoundaryCellIndex {
    int l1 = 0, l2 = 0;
    std::vector<Word> Y;                            // Y_j = F_j^{l1}(X)
    std::vector<std::vector<int>> x_ids;            // [j][i], i >= 1
    std::vector<std::vector<Word>> Z;               // [j][i], i >= 0
    std::vector<std::vector<std::vector<int>>> Z_pull;  // pullback ids per Z cell
    std::vector<std::vector<double>> Z_measure;     // mu(Z_{i,j})
    std::vector<Vector> h;                          // harmonic h_j, 1 at q_j
    std::vector<int> off_Y_ids;                     // vertices of X \ (interiors of Y)
    std::vector<int> S;                             // all x_{i,j}, i >= 1

    int num_boundary() const { return static_cast<int>(Y.size()); }
};

inline BoundaryCellIndex build_boundary_cells(const LaplacianStack& stack, int l1, int l2) {
    const VertexTable& t = *stack.table;
    const PcfFractal& f = *stack.fractal;
    const int n0 = t.num_corners();
    require(l1 >= 1 && l2 >= 1, "cell scales must be >= 1");
    require(t.level >= l1 + l2, "table level must be at least l1+l2");

    BoundaryCellIndex idx;
    idx.l1 = l1;
    idx.l2 = l2;

    std::vector<std::vector<int>> y_vertices;
    for (int j = 0; j < n0; ++j) {
        Word y(l1, f.boundary[j]);
        idx.Y.push_back(y);
        y_vertices.push_back(t.cell_vertex_ids(y));
    }
    for (int j = 0; j < n0; ++j)
        for (int j2 = j + 1; j2 < n0; ++j2) {
            std::vector<int> inter;
            std::set_intersection(y_vertices[j].begin(), y_vertices[j].end(),
                                  y_vertices[j2].begin(), y_vertices[j2].end(),
                                  std::back_inserter(inter));
            if (!inter.empty())
                throw CellsIntersect("Y_" + std::to_string(j) + " meets Y_" +
                                     std::to_string(j2) + " (l1 too small)");
        }

    idx.x_ids.resize(n0);
    idx.Z.resize(n0);
    for (int j = 0; j < n0; ++j) {
        const int jb = f.boundary[j];
        idx.Z[j].push_back(Word(static_cast<size_t>(l1 + l2), jb));  // Z_{0,j}
        const int* corners = t.cell_corners(l1, t.cell_index_of_word(idx.Y[j]));
        for (int c = 0; c < n0; ++c) {
            const int id = corners[c];
            if (id == j) continue;  // q_j itself
            auto [first, last] = t.incidence[l1].at(id);
            if (last - first < 2) continue;  // touches no other l1-cell
            idx.x_ids[j].push_back(id);
            Word z(idx.Y[j]);
            for (int k = 0; k < l2; ++k) z.push_back(f.boundary[c]);
            idx.Z[j].push_back(z);
            idx.S.push_back(id);
        }
        require(!idx.x_ids[j].empty(), "boundary cell has no contact points");
    }

    idx.Z_pull.resize(n0);
    idx.Z_measure.resize(n0);
    for (int j = 0; j < n0; ++j)
        for (const Word& z : idx.Z[j]) {
            idx.Z_pull[j].push_back(t.cell_pullback_ids(z));
            idx.Z_measure[j].push_back(f.measure_weight(z));
        }

    for (int j = 0; j < n0; ++j) idx.h.push_back(harmonic_basis_function(stack.hs, t, j));

    std::vector<char> inside(t.num_vertices(), 0);
    for (int j = 0; j < n0; ++j) {
        const int* corners = t.cell_corners(l1, t.cell_index_of_word(idx.Y[j]));
        std::vector<char> is_corner(t.num_vertices(), 0);
        for (int c = 0; c < n0; ++c) is_corner[corners[c]] = 1;
        for (int id : y_vertices[j])
            if (!is_corner[id]) inside[id] = 1;
    }
    for (int i = 0; i < t.num_vertices(); ++i)
        if (!inside[i]) idx.off_Y_ids.push_back(i);
    return idx;
}

/// Piecewise-harmonic seed f: identically 1 on X \ Y, harmonic on each Y_j
/// with f(q_j) = 0 and f = 1 at the contact corners. Its Laplacian is a sum
/// of point masses at the x_{i,j}; the returned coefficients a_{i,j} are the
/// (negated) localized normal derivatives there.
struct PiecewiseHarmonicSeed {
    Vector values;
    std::vector<std::vector<double>> a;  // [j][i-1], i >= 1
    std::vector<std::vector<double>> b;  // b_{i,j} = r_j^{l1} a_{i,j}
};

inline PiecewiseHarmonicSeed piecewise_harmonic_f(const LaplacianStack& stack,
                                                  const BoundaryCellIndex& idx) {
    const VertexTable& t = *stack.table;
    const PcfFractal& fr = *stack.fractal;
    const int n0 = t.num_corners();
    PiecewiseHarmonicSeed seed;
    seed.values = Vector::Ones(t.num_vertices());
    for (int j = 0; j < n0; ++j) {
        Vector data = Vector::Ones(n0);
        data(j) = 0.0;
        Vector vals = harmonic_extend(stack.hs, t, data, t.level - idx.l1);
        auto pull = t.cell_pullback_ids(idx.Y[j]);
        for (size_t coarse = 0; coarse < pull.size(); ++coarse)
            seed.values(pull[coarse]) = vals(coarse);
    }
    seed.a.resize(n0);
    seed.b.resize(n0);
    for (int j = 0; j < n0; ++j) {
        const double rl1 = std::pow(fr.resistance[fr.boundary[j]], idx.l1);
        for (int x : idx.x_ids[j]) {
            double a = -normal_derivative(stack, seed.values, x, idx.Y[j]).value;
            seed.a[j].push_back(a);
            seed.b[j].push_back(rl1 * a);
        }
    }
    return seed;
}

/// Membership in the candidate space C: u = 0 on V_0 and ||u-1||_1 <= 1/2.
inline double candidate_deficiency(const LaplacianStack& stack, const Vector& u) {
    double worst = 0.0;
    for (int b = 0; b < stack.table->num_boundary(); ++b)
        worst = std::max(worst, std::abs(u(b)));
    return worst;
}

inline double l1_distance_to_one(const LaplacianStack& stack, const Vector& u) {
    return stack.weights().dot((u.array() - 1.0).abs().matrix());
}

/// Mass of u as seen by the pullback sampling: the quadrature integral at the
/// coarse level M - (l1+l2), which makes the rescaled copies integrate to 1
/// exactly.
inline double pullback_mass(const LaplacianStack& stack, const BoundaryCellIndex& idx,
                            const Vector& u) {
    const int coarse = stack.level() - idx.l1 - idx.l2;
    const int nc = stack.table->level_sizes[coarse];
    return stack.quad[coarse].dot(u.head(nc));
}

/// u_{i,j}: the normalized copy of u squeezed into Z_{i,j}; integral 1 by
/// construction, support in the cell.
inline Vector rescale_into_cell(const LaplacianStack& stack, const BoundaryCellIndex& idx,
                                const Vector& u, int j, int i, double mass) {
    // Candidates have ||u-1||_1 <= 1/2 and hence int u >= 1/2.
    if (mass < 0.5)
        throw ZeroMass("pullback mass " + std::to_string(mass) + " < 1/2 (left C)");
    const auto& pull = idx.Z_pull[j][i];
    const double scale = 1.0 / (idx.Z_measure[j][i] * mass);
    Vector out = Vector::Zero(stack.size());
    for (size_t coarse = 0; coarse < pull.size(); ++coarse)
        out(pull[coarse]) = scale * u(coarse);
    return out;
}

struct PsiResult {
    Vector psi_u;          // G(v)
    Vector v;              // the assembled measure density
    Vector b0;             // boundary-cell coefficients
    double mass = 0.0;     // pullback mass of the input
    Matrix M;              // M_{j',j} = int h_j u_{0,j'} dmu
    Vector A;              // right-hand side of the b_0 system
    double cond_M = 0.0;
    double sup_norm = 0.0;          // ||Psi u||_inf
    double off_Y_err = 0.0;         // sup_{X\Y} |Psi u - 1|
    double l1_dist_to_one = 0.0;    // ||Psi u - 1||_1
    double boundary_normal_max = 0.0;  // max_q |dn Psi u(q)|
};

/// Solves the b_{0,j} system making the normal derivatives of G(v) vanish on
/// V_0; returns M, A, b0 and the conditioning of M.
inline void solve_b0(const LaplacianStack& stack, const BoundaryCellIndex& idx,
                     const PiecewiseHarmonicSeed& seed, const Vector& u, double mass,
                     PsiResult& res) {
    const PcfFractal& fr = *stack.fractal;
    const int n0 = idx.num_boundary();
    const Vector& w = stack.weights();

    auto integral_h_u = [&](int hj, const Vector& uij) {
        double s = 0.0;
        for (int x = 0; x < uij.size(); ++x)
            if (uij(x) != 0.0) s += w(x) * idx.h[hj](x) * uij(x);
        return s;
    };

    res.M = Matrix(n0, n0);  // M(j', j)
    std::vector<Vector> u0(n0);
    for (int jp = 0; jp < n0; ++jp) {
        u0[jp] = rescale_into_cell(stack, idx, u, jp, 0, mass);
        for (int j = 0; j < n0; ++j) res.M(jp, j) = integral_h_u(j, u0[jp]);
    }
    res.A = Vector::Zero(n0);
    for (int jp = 0; jp < n0; ++jp) {
        const double rinv = std::pow(fr.resistance[fr.boundary[jp]], -idx.l1);
        for (size_t i = 1; i < idx.Z[jp].size(); ++i) {
            Vector uij = rescale_into_cell(stack, idx, u, jp, static_cast<int>(i), mass);
            const double bij = seed.b[jp][i - 1];
            for (int j = 0; j < n0; ++j)
                res.A(j) -= bij * rinv * integral_h_u(j, uij);
        }
    }

    Matrix G(n0, n0);  // system sum_{j'} M(j',j) x_{j'} = A_j
    for (int j = 0; j < n0; ++j)
        for (int jp = 0; jp < n0; ++jp) G(j, jp) = res.M(jp, j);
    Eigen::JacobiSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    res.cond_M = svd.singularValues()(0) / svd.singularValues()(n0 - 1);
    if (res.cond_M > 1e8)
        throw NearSingularM("b0 system condition " + std::to_string(res.cond_M));
    Vector x = svd.solve(res.A);
    res.b0 = Vector(n0);
    for (int jp = 0; jp < n0; ++jp)
        res.b0(jp) = x(jp) * std::pow(fr.resistance[fr.boundary[jp]], idx.l1);
}

/// One application of Psi: v = sum b_{i,j} r_j^{-l1} u_{i,j}, Psi u = G(v),
/// with the b_{0,j} chosen so that the boundary normal derivatives vanish.
inline PsiResult apply_Psi(const LaplacianStack& stack, const GreenSolver& green,
                           const BoundaryCellIndex& idx, const PiecewiseHarmonicSeed& seed,
                           const Vector& u, bool enforce_candidate = true) {
    const PcfFractal& fr = *stack.fractal;
    const int n0 = idx.num_boundary();

    PsiResult res;
    res.mass = pullback_mass(stack, idx, u);
    solve_b0(stack, idx, seed, u, res.mass, res);

    res.v = Vector::Zero(stack.size());
    for (int j = 0; j < n0; ++j) {
        const double rinv = std::pow(fr.resistance[fr.boundary[j]], -idx.l1);
        res.v += res.b0(j) * rinv * rescale_into_cell(stack, idx, u, j, 0, res.mass);
        for (size_t i = 1; i < idx.Z[j].size(); ++i)
            res.v += seed.b[j][i - 1] * rinv *
                     rescale_into_cell(stack, idx, u, j, static_cast<int>(i), res.mass);
    }
    res.psi_u = green.apply(res.v);

    res.sup_norm = res.psi_u.cwiseAbs().maxCoeff();
    res.off_Y_err = 0.0;
    for (int x : idx.off_Y_ids)
        if (!stack.table->is_boundary(x))
            res.off_Y_err = std::max(res.off_Y_err, std::abs(res.psi_u(x) - 1.0));
    res.l1_dist_to_one = l1_distance_to_one(stack, res.psi_u);
    for (int q = 0; q < n0; ++q)
        res.boundary_normal_max = std::max(
            res.boundary_normal_max,
            std::abs(normal_derivative(stack, res.psi_u, q).value));
    if (enforce_candidate && res.l1_dist_to_one > 0.5)
        throw LeftCandidateSpace("||Psi u - 1||_1 = " + std::to_string(res.l1_dist_to_one) +
                                 " (l1 or l2 too small)");
    return res;
}

/// Certificate data for the fixed point.
struct BumpCertificate {
    int iterations = 0;
    double final_delta_sup = 0.0;
    std::vector<double> contraction_ratios;  // L^1 step ratios
    double max_contraction_ratio = 0.0;
    double sup_err_off_Y = 0.0;        // sup_{X\Y} |u*-1|
    double boundary_value_max = 0.0;   // max_q |u*(q)|
    double boundary_normal_max = 0.0;  // max_q |dn u*(q)|
    double mass = 0.0;
    double cond_M = 0.0;
    std::vector<double> chain_sup;     // ||Delta^k u*||_inf over the grid
    std::vector<double> atom_all;      // max |atom_k| over all junctions
    std::vector<double> atom_rel_all;  // atom_all[k] / ||Delta^k u*||_inf
    std::vector<double> atom_S;        // max |atom_k| over the contact points
    std::vector<double> atom_rel_S;
    std::vector<double> atom_decay_ratio;  // atom at level M / level M-1, per k
};

struct BumpResult {
    Vector u;                 // the fixed point
    ChainFunction chain;      // exact Laplacian chain of u
    Vector b0;
    PiecewiseHarmonicSeed seed;
    BumpCertificate cert;
};

/// Exact Laplacian chain of the fixed point: Delta u = v is the rearrangement
/// of u into the Z cells, and each further order is the same rearrangement
/// with the cellwise (mu_w r_w)^{-k} rescaling.
inline ChainFunction bump_chain(const LaplacianStack& stack, const BoundaryCellIndex& idx,
                                const PiecewiseHarmonicSeed& seed, const Vector& u,
                                const Vector& b0, double mass, int k_max) {
    const PcfFractal& fr = *stack.fractal;
    const int n0 = idx.num_boundary();
    ChainFunction c;
    c.deriv.push_back(u);
    for (int k = 0; k < k_max; ++k) {
        const Vector& prev = c.deriv[k];
        Vector next = Vector::Zero(stack.size());
        for (int j = 0; j < n0; ++j) {
            const double rinv = std::pow(fr.resistance[fr.boundary[j]], -idx.l1);
            for (size_t i = 0; i < idx.Z[j].size(); ++i) {
                const double bij = (i == 0) ? b0(j) : seed.b[j][i - 1];
                const double coeff = bij * rinv / (idx.Z_measure[j][i] * mass);
                const Word& z = idx.Z[j][i];
                const double mu_r = fr.measure_weight(z) * fr.resistance_weight(z);
                const double factor = coeff * std::pow(mu_r, -k);
                const auto& pull = idx.Z_pull[j][i];
                for (size_t coarse = 0; coarse < pull.size(); ++coarse)
                    next(pull[coarse]) = factor * prev(coarse);
            }
        }
        c.deriv.push_back(std::move(next));
    }
    return c;
}

/// Fixed-point iteration of Psi from a starting candidate (default: the
/// piecewise-harmonic seed itself). Returns the fixed point with its exact
/// chain and the full certificate.
inline BumpResult iterate_to_fixed_point(const LaplacianStack& stack,
                                         const GreenSolver& green,
                                         const BoundaryCellIndex& idx,
                                         const BumpConfig& cfg,
                                         const Vector* start = nullptr) {
    const VertexTable& t = *stack.table;
    PiecewiseHarmonicSeed seed = piecewise_harmonic_f(stack, idx);

    Vector u = start ? *start : seed.values;
    require(candidate_deficiency(stack, u) < 1e-12, "start does not vanish on V_0");
    require(l1_distance_to_one(stack, u) <= 0.5, "start not in the candidate space");

    BumpResult out;
    out.seed = seed;
    PsiResult last;
    Vector prev_diff;
    double prev_l1 = 0.0;
    bool have_prev = false;
    int it = 0;
    for (; it < cfg.max_iter; ++it) {
        last = apply_Psi(stack, green, idx, seed, u);
        Vector diff = last.psi_u - u;
        double dsup = diff.cwiseAbs().maxCoeff();
        double dl1 = stack.weights().dot(diff.cwiseAbs());
        if (have_prev && prev_l1 > 1e-300)
            out.cert.contraction_ratios.push_back(dl1 / prev_l1);
        prev_l1 = dl1;
        have_prev = true;
        u = last.psi_u;
        if (dsup < cfg.tol_fixed_point) {
            out.cert.final_delta_sup = dsup;
            ++it;
            break;
        }
        if (it + 1 == cfg.max_iter)
            throw NoConvergence("no fixed point after " + std::to_string(cfg.max_iter) +
                                " iterations (last step " + std::to_string(dsup) + ")");
    }
    out.cert.iterations = it;
    out.cert.max_contraction_ratio =
        out.cert.contraction_ratios.empty()
            ? 0.0
            : *std::max_element(out.cert.contraction_ratios.begin(),
                                out.cert.contraction_ratios.end());

    out.u = u;
    // Coefficients re-solved for the converged iterate itself, so the chain
    // rearranges u* with its own b_0 and mass.
    PsiResult fin;
    fin.mass = pullback_mass(stack, idx, u);
    solve_b0(stack, idx, seed, u, fin.mass, fin);
    out.b0 = fin.b0;
    out.cert.mass = fin.mass;
    out.cert.cond_M = fin.cond_M;
    out.cert.sup_err_off_Y = last.off_Y_err;
    out.cert.boundary_normal_max = last.boundary_normal_max;
    out.cert.boundary_value_max = candidate_deficiency(stack, u);
    if (out.cert.sup_err_off_Y > cfg.eps_target)
        throw LeftCandidateSpace("off-Y error " + std::to_string(out.cert.sup_err_off_Y) +
                                 " exceeds target (increase l2)");

    out.chain = bump_chain(stack, idx, seed, u, fin.b0, fin.mass, cfg.k_max);

    auto junctions = t.junction_ids();
    out.cert.atom_all = chain_atom_profile(stack, out.chain, junctions);
    out.cert.atom_S = chain_atom_profile(stack, out.chain, idx.S);
    for (int k = 0; k <= out.chain.order(); ++k)
        out.cert.chain_sup.push_back(out.chain.deriv[k].cwiseAbs().maxCoeff());
    for (size_t k = 0; k < out.cert.atom_all.size(); ++k) {
        double scale = std::max(out.cert.chain_sup[k], 1e-300);
        out.cert.atom_rel_all.push_back(out.cert.atom_all[k] / scale);
        out.cert.atom_rel_S.push_back(out.cert.atom_S[k] / scale);
    }

    // Coarse-level probes of the same atoms: the decay ratio across levels is
    // the convergence evidence for the matching conditions.
    const int M = stack.level();
    for (int k = 0; k + 1 <= out.chain.order(); ++k) {
        double top = 0.0, below = 0.0;
        for (int x : idx.S) {
            if (!t.in_level(x, M - 1)) continue;
            Vector vk_top = out.chain.deriv[k];
            double s_top = -(stack.H[M] * vk_top)(x);
            Vector coarse = out.chain.deriv[k].head(t.level_sizes[M - 1]);
            double s_below = -(stack.H[M - 1] * coarse)(x);
            top = std::max(top, std::abs(s_top));
            below = std::max(below, std::abs(s_below));
        }
        out.cert.atom_decay_ratio.push_back(below > 1e-300 ? top / below : 0.0);
    }
    return out;
}

}  // namespace pcf
