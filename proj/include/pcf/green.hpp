#pragma once

#include "pcf/laplacian.hpp"

#include <Eigen/SparseCholesky>

namespace pcf {

/// Dirichlet Green's operator at level M, backed by a sparse Cholesky
/// factorization of the interior block of -H. The discrete interior-block
/// inverse is the production kernel; the self-similar series is a separate
/// validation path (GreenKernelSeries below).
class GreenSolver {
public:
    explicit GreenSolver(const LaplacianStack& stack) : stack_(&stack) {
        const int n = stack.size();
        const int n0 = stack.table->num_boundary();
        ni_ = n - n0;
        SparseMatrix Lint(ni_, ni_);
        {
            std::vector<Triplet> trip;
            const SparseMatrix& H = stack.top();
            for (int col = 0; col < n; ++col) {
                if (col < n0) continue;
                for (SparseMatrix::InnerIterator it(H, col); it; ++it) {
                    if (it.row() < n0) continue;
                    trip.emplace_back(static_cast<int>(it.row()) - n0, col - n0, -it.value());
                }
            }
            Lint.setFromTriplets(trip.begin(), trip.end());
        }
        llt_.compute(Lint);
        if (llt_.info() != Eigen::Success)
            throw SingularSystem("interior Laplacian block is not positive definite");

        // Round-trip sanity: Delta(G f) must reproduce f on the interior.
        Vector f = Vector::Zero(n);
        for (int i = n0; i < n; ++i) f(i) = std::sin(0.7 * i + 0.3);
        Vector u = apply(f);
        Vector lap = pointwise_laplacian(stack, u);
        double err = 0.0, scale = 0.0;
        for (int i = n0; i < n; ++i) {
            err = std::max(err, std::abs(lap(i) - f(i)));
            scale = std::max(scale, std::abs(f(i)));
        }
        if (err > 1e-10 * std::max(1.0, scale))
            throw SingularSystem("Green round-trip residual " + std::to_string(err));
    }

    const LaplacianStack& stack() const { return *stack_; }

    /// u = Gf: u vanishes on V_0 and Delta u = f at interior vertices.
    Vector apply(const Vector& f) const {
        check_level(*stack_, f);
        const int n0 = stack_->table->num_boundary();
        Vector rhs(ni_);
        for (int i = 0; i < ni_; ++i)
            rhs(i) = -stack_->weights()(n0 + i) * f(n0 + i);
        Vector ui = llt_.solve(rhs);
        Vector u = Vector::Zero(stack_->size());
        u.tail(ni_) = ui;
        return u;
    }

    /// G^k f by repeated solves; every application zeroes the boundary.
    Vector iterate(const Vector& f, int k) const {
        require(k >= 1, "green_iterate needs k >= 1");
        Vector u = f;
        for (int i = 0; i < k; ++i) u = apply(u);
        return u;
    }

    /// Kernel column g(., y): g(x, y) = [(-H_int)^{-1}]_{xy}, zero on V_0.
    Vector kernel_column(int y) const {
        const int n0 = stack_->table->num_boundary();
        Vector out = Vector::Zero(stack_->size());
        if (y < n0) return out;
        Vector e = Vector::Zero(ni_);
        e(y - n0) = 1.0;
        out.tail(ni_) = llt_.solve(e);
        return out;
    }

    double kernel_entry(int x, int y) const { return kernel_column(y)(x); }

    /// Dense kernel matrix (desk-scale levels only).
    Matrix kernel_matrix() const {
        const int n = stack_->size();
        Matrix g = Matrix::Zero(n, n);
        for (int y = stack_->table->num_boundary(); y < n; ++y) g.col(y) = kernel_column(y);
        return g;
    }

private:
    const LaplacianStack* stack_;
    int ni_ = 0;
    Eigen::SimplicialLLT<SparseMatrix> llt_;
};

/// Truncated self-similar kernel series
///   g(x,y) = sum_{k<m*} sum_{|w|=k} r_w Psi(F_w^{-1} x, F_w^{-1} y),
/// with Psi the level-1 discrete Green's kernel interpolated piecewise
/// harmonically between V_1 points. For x on cell boundaries every containing
/// cell contributes.
class GreenKernelSeries {
public:
    explicit GreenKernelSeries(const LaplacianStack& stack) : stack_(&stack) {
        const VertexTable& t = *stack.table;
        const int n0 = t.num_boundary();
        const int n1 = t.level_sizes[1];
        interior1_ = n1 - n0;
        require(interior1_ > 0, "level-1 network has no interior vertices");

        Matrix L1int(interior1_, interior1_);
        L1int.setZero();
        Matrix L1 = -Matrix(stack.H[1]);
        L1int = L1.block(n0, n0, interior1_, interior1_);
        psi_ = L1int.inverse();

        // Piecewise-harmonic tents psi_p, p in V_1 \ V_0, as level-M grids.
        tents_.resize(interior1_, Vector::Zero(t.num_vertices()));
        for (int p = 0; p < interior1_; ++p) {
            Vector& tent = tents_[p];
            tent(n0 + p) = 1.0;
            for (int j = 0; j < t.fractal->num_maps(); ++j) {
                const int* ids = t.cell_corners(1, j);
                Vector data(n0);
                for (int c = 0; c < n0; ++c) data(c) = (ids[c] == n0 + p) ? 1.0 : 0.0;
                Vector vals = harmonic_extend(stack.hs, t, data, t.level - 1);
                auto pull = t.cell_pullback_ids(Word{j});
                for (size_t coarse = 0; coarse < pull.size(); ++coarse)
                    tent(pull[coarse]) = vals(coarse);
            }
        }
    }

    /// Level-1 kernel value Psi(p, q) for interior level-1 ids.
    double psi(int p, int q) const {
        const int n0 = stack_->table->num_boundary();
        return psi_(p - n0, q - n0);
    }

    /// Partial sum of the series with truncation m* <= M.
    double partial(int x, int y, int mstar) const {
        const VertexTable& t = *stack_->table;
        require(mstar <= t.level, "truncation beyond table level");
        double sum = 0.0;
        for (int k = 0; k < mstar; ++k) {
            auto cx = t.m_scale_neighborhood(x, k);
            auto cy = t.m_scale_neighborhood(y, k);
            for (auto cell : cx) {
                if (std::find(cy.begin(), cy.end(), cell) == cy.end()) continue;
                int xi = x, eta = y;
                double rw = 1.0;
                if (k > 0) {
                    Word w = t.word_of_cell(k, cell);
                    auto cm = t.fractal->compose_word(w);
                    xi = t.locate(cm.inverse_apply(t.points[x]));
                    eta = t.locate(cm.inverse_apply(t.points[y]));
                    require(xi >= 0 && eta >= 0, "pullback point is not a vertex");
                    rw = t.fractal->resistance_weight(w);
                }
                sum += rw * interp(xi, eta);
            }
        }
        return sum;
    }

private:
    double interp(int xi, int eta) const {
        double v = 0.0;
        for (int p = 0; p < interior1_; ++p) {
            double tp = tents_[p](xi);
            if (tp == 0.0) continue;
            for (int q = 0; q < interior1_; ++q) {
                double tq = tents_[q](eta);
                if (tq == 0.0) continue;
                v += psi_(p, q) * tp * tq;
            }
        }
        return v;
    }

    const LaplacianStack* stack_;
    int interior1_ = 0;
    Matrix psi_;
    std::vector<Vector> tents_;
};

}  // namespace pcf
