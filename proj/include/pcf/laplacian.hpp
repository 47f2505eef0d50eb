#pragma once

#include "pcf/harmonic.hpp"

#include <array>

namespace pcf {

/// Real-valued function given by its values on V_M.
struct GridFunction {
    int level = 0;
    Vector values;
    const VertexTable* table = nullptr;

    GridFunction() = default;
    GridFunction(int lvl, Vector v, const VertexTable* t = nullptr)
        : level(lvl), values(std::move(v)), table(t) {}
};

/// Conductance-weighted graph Laplacians H_m for every m <= M together with
/// the quadrature weights w_x = int psi_x dmu realizing the measure.
///
/// Convention: H has nonnegative off-diagonal entries (edge conductances,
/// each carrying the r_w^{-1} renormalization of its cell) and zero row sums,
/// so (H u)(x) = sum_y c_xy (u(y) - u(x)). The energy form is u^T (-H) u and
/// the pointwise renormalized Laplacian is w_x^{-1} (H u)(x).
struct LaplacianStack {
    const PcfFractal* fractal = nullptr;
    const VertexTable* table = nullptr;
    HarmonicStructure hs;
    std::vector<SparseMatrix> H;     // per level m = 0..M
    std::vector<Vector> quad;        // per level m = 0..M

    int level() const { return table->level; }
    int size() const { return table->num_vertices(); }
    const SparseMatrix& top() const { return H[level()]; }
    const Vector& weights() const { return quad[level()]; }
};

inline LaplacianStack build_laplacian_stack(const PcfFractal& fractal,
                                            const VertexTable& table,
                                            HarmonicStructure hs) {
    LaplacianStack stack;
    stack.fractal = &fractal;
    stack.table = &table;
    stack.hs = std::move(hs);
    const int n0 = fractal.num_boundary();
    const int N = fractal.num_maps();
    const Matrix& C0 = stack.hs.level0_conductances;
    const Vector& beta = stack.hs.harmonic_integrals;

    std::vector<double> r_prev{1.0}, mu_prev{1.0};
    for (int m = 0; m <= table.level; ++m) {
        if (m > 0) {
            std::vector<double> r_cur(r_prev.size() * N), mu_cur(mu_prev.size() * N);
            for (int j = 0; j < N; ++j)
                for (size_t c = 0; c < r_prev.size(); ++c) {
                    r_cur[j * r_prev.size() + c] = fractal.resistance[j] * r_prev[c];
                    mu_cur[j * mu_prev.size() + c] = fractal.measure[j] * mu_prev[c];
                }
            r_prev = std::move(r_cur);
            mu_prev = std::move(mu_cur);
        }
        const auto& cells = table.cells_by_level[m];
        const std::int64_t ncells = static_cast<std::int64_t>(cells.size()) / n0;
        const int nv = table.level_sizes[m];

        std::vector<Triplet> trip;
        trip.reserve(ncells * n0 * n0);
        Vector w = Vector::Zero(nv);
        for (std::int64_t c = 0; c < ncells; ++c) {
            const int* ids = &cells[c * n0];
            const double rinv = 1.0 / r_prev[c];
            const double mu = mu_prev[c];
            for (int a = 0; a < n0; ++a) {
                w(ids[a]) += mu * beta(a);
                for (int b = a + 1; b < n0; ++b) {
                    const double cond = rinv * C0(a, b);
                    if (cond == 0.0) continue;
                    trip.emplace_back(ids[a], ids[b], cond);
                    trip.emplace_back(ids[b], ids[a], cond);
                    trip.emplace_back(ids[a], ids[a], -cond);
                    trip.emplace_back(ids[b], ids[b], -cond);
                }
            }
        }
        SparseMatrix Hm(nv, nv);
        Hm.setFromTriplets(trip.begin(), trip.end());
        stack.H.push_back(std::move(Hm));
        stack.quad.push_back(std::move(w));
    }
    return stack;
}

inline LaplacianStack build_laplacian_stack(const PcfFractal& fractal,
                                            const VertexTable& table) {
    return build_laplacian_stack(fractal, table, standard_harmonic_structure(fractal));
}

inline void check_level(const LaplacianStack& stack, const Vector& u) {
    if (u.size() != stack.size())
        throw LevelMismatch("grid function has " + std::to_string(u.size()) +
                            " values, stack expects " + std::to_string(stack.size()));
}

inline double integrate(const LaplacianStack& stack, const Vector& u) {
    check_level(stack, u);
    return stack.weights().dot(u);
}

/// E_M(u, v) = u^T (-H_M) v.
inline double graph_energy(const LaplacianStack& stack, const Vector& u, const Vector& v) {
    check_level(stack, u);
    check_level(stack, v);
    return -u.dot(stack.top() * v);
}

/// Energy of the restriction of u to V_m, computed with H_m.
inline double graph_energy_at_level(const LaplacianStack& stack, const Vector& u, int m) {
    check_level(stack, u);
    Vector um = u.head(stack.table->level_sizes[m]);
    return -um.dot(stack.H[m] * um);
}

/// Renormalized pointwise Laplacian at level M; boundary entries are zeroed
/// (the Laplacian is not defined pointwise on V_0).
inline Vector pointwise_laplacian(const LaplacianStack& stack, const Vector& u) {
    check_level(stack, u);
    Vector lap = stack.top() * u;
    lap.array() /= stack.weights().array();
    for (int b = 0; b < stack.table->num_boundary(); ++b) lap(b) = 0.0;
    return lap;
}

/// k-fold renormalized Laplacian by repeated matrix application. The validity
/// mask marks vertices whose value is uncontaminated by the undefined
/// boundary rows (the invalid region grows one graph neighborhood per
/// application).
inline std::pair<Vector, std::vector<char>> repeated_laplacian(const LaplacianStack& stack,
                                                               const Vector& u, int k) {
    check_level(stack, u);
    const int n = stack.size();
    Vector v = u;
    std::vector<char> valid(n, 1);
    for (int b = 0; b < stack.table->num_boundary(); ++b) valid[b] = 0;
    const SparseMatrix& H = stack.top();
    for (int it = 0; it < k; ++it) {
        Vector next = H * v;
        next.array() /= stack.weights().array();
        std::vector<char> nvalid(n, 1);
        for (int col = 0; col < n; ++col) {
            if (valid[col]) continue;
            nvalid[col] = 0;
            for (SparseMatrix::InnerIterator it2(H, col); it2; ++it2) nvalid[it2.row()] = 0;
        }
        for (int b = 0; b < stack.table->num_boundary(); ++b) {
            next(b) = 0.0;
            nvalid[b] = 0;
        }
        v = std::move(next);
        valid = std::move(nvalid);
    }
    return {v, valid};
}

namespace detail {

// Sum of c_xy (u(y) - u(x)) over edges at q lying inside the level-m cells
// that descend from the given word prefix (empty prefix = all of X).
inline double localized_row_apply(const LaplacianStack& stack, int m, const Word& prefix,
                                  int q, const Vector& u) {
    const VertexTable& t = *stack.table;
    require(t.in_level(q, m), "vertex not in V_m");
    const int n0 = t.num_corners();
    const Matrix& C0 = stack.hs.level0_conductances;
    std::int64_t pref_idx = 0, pref_span = t.num_cells(m);
    if (!prefix.empty()) {
        require(static_cast<int>(prefix.size()) <= m, "prefix longer than level");
        pref_idx = t.cell_index_of_word(prefix);
        pref_span = t.num_cells(m - static_cast<int>(prefix.size()));
    }
    double sum = 0.0;
    auto [first, last] = t.incidence[m].at(q);
    for (auto it = first; it != last; ++it) {
        const std::int64_t c = *it;
        if (!prefix.empty() && c / pref_span != pref_idx) continue;
        const int* ids = t.cell_corners(m, c);
        double rinv = 1.0;
        {
            Word w = t.word_of_cell(m, c);
            rinv = 1.0 / stack.fractal->resistance_weight(w);
        }
        int qpos = -1;
        for (int i = 0; i < n0; ++i)
            if (ids[i] == q) qpos = i;
        for (int i = 0; i < n0; ++i) {
            if (i == qpos) continue;
            sum += rinv * C0(qpos, i) * (u(ids[i]) - u(q));
        }
    }
    return sum;
}

}  // namespace detail

struct NormalDerivative {
    double value = 0.0;       // level-M localized normal derivative
    double richardson = 0.0;  // Aitken-extrapolated limit from three levels
    std::array<double, 3> probes{};  // levels M-2, M-1, M (raw values)
};

/// Outward normal derivative of u at a corner q of the cell F_w(X) (empty
/// word = the whole fractal): -(H^cell u)(q) with H^cell the level-M graph
/// Laplacian restricted to edges inside the cell. The conductances already
/// carry r_w^{-1}, which realizes the renormalized limit of Eq-style
/// definitions at finite level.
inline NormalDerivative normal_derivative(const LaplacianStack& stack, const Vector& u,
                                          int q, const Word& cell = {}) {
    check_level(stack, u);
    const VertexTable& t = *stack.table;
    const int M = stack.level();
    const int cl = static_cast<int>(cell.size());
    require(cl <= M, "cell deeper than table");
    // q must lie on the boundary of the specified cell.
    if (cell.empty()) {
        if (!t.is_boundary(q)) throw NotOnCellBoundary("vertex is not in V_0");
    } else {
        const int* ids = t.cell_corners(cl, t.cell_index_of_word(cell));
        bool found = false;
        for (int i = 0; i < t.num_corners(); ++i)
            if (ids[i] == q) found = true;
        if (!found) throw NotOnCellBoundary("vertex is not a corner of the cell");
    }

    NormalDerivative out;
    int lo = std::max(cl, M - 2);
    std::vector<double> s;
    for (int m = lo; m <= M; ++m)
        s.push_back(-detail::localized_row_apply(stack, m, cell, q, u));
    out.value = s.back();
    for (size_t i = 0; i < s.size() && i < 3; ++i)
        out.probes[3 - s.size() + i] = s[i];
    if (s.size() == 3) {
        // Aitken extrapolation assuming geometric error decay.
        double d1 = s[2] - s[1], d0 = s[1] - s[0];
        double denom = d0 - d1;
        out.richardson = (std::abs(denom) > 1e-300) ? s[2] + d1 * d1 / denom : s[2];
    } else {
        out.richardson = s.back();
    }
    return out;
}

struct MatchingResidual {
    double jump = 0.0;        // spread of one-sided estimates of Delta^k u at x
    double normal_sum = 0.0;  // sum of localized normal derivatives of Delta^k u
};

/// Numerical smoothness certificate at a junction vertex: Delta^k u is formed
/// by repeated application of the renormalized Laplacian, the normal sum is
/// -(H Delta^k u)(x), and the jump is the spread of per-cell one-sided
/// estimates at the finest scale. Both tend to zero (as M grows) iff Delta^k u
/// extends continuously across x.
inline MatchingResidual matching_residual(const LaplacianStack& stack, const Vector& u,
                                          int x, int k) {
    check_level(stack, u);
    const VertexTable& t = *stack.table;
    require(!t.is_boundary(x) || k == 0, "matching residual is for junction vertices");
    auto [v, valid] = repeated_laplacian(stack, u, k);
    MatchingResidual res;
    res.normal_sum = -(stack.top() * v)(x);

    const int M = stack.level();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto [first, last] = t.incidence[M].at(x);
    for (auto it = first; it != last; ++it) {
        const int* ids = t.cell_corners(M, *it);
        double acc = 0.0;
        int cnt = 0;
        for (int i = 0; i < t.num_corners(); ++i) {
            if (ids[i] == x) continue;
            acc += v(ids[i]);
            cnt++;
        }
        if (cnt > 0) {
            double est = acc / cnt;
            lo = std::min(lo, est);
            hi = std::max(hi, est);
        }
    }
    res.jump = (hi >= lo) ? hi - lo : 0.0;
    return res;
}

}  // namespace pcf
