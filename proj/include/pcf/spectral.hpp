#pragma once

#include "pcf/laplacian.hpp"

#include <Eigen/Eigenvalues>

namespace pcf {

enum class BoundaryCondition { Dirichlet, Neumann };

/// Full eigendecomposition of the renormalized Laplacian under the quadrature
/// inner product: (-H) phi = lambda W phi with Phi^T W Phi = I. Eigenvectors
/// are stored full-length (zero rows on V_0 for Dirichlet).
struct SpectralDecomposition {
    BoundaryCondition bc = BoundaryCondition::Neumann;
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // n x n_active
    double spectral_gap = 0.0;  // smallest nonzero eigenvalue
    const LaplacianStack* stack = nullptr;

    int modes() const { return static_cast<int>(eigenvalues.size()); }

    /// Quadrature-weighted coefficients <f, phi_k>.
    Vector coefficients(const Vector& f) const {
        return eigenvectors.transpose() * (stack->weights().asDiagonal() * f);
    }

    Vector synthesize(const Vector& coef) const { return eigenvectors * coef; }
};

inline SpectralDecomposition eigendecompose(const LaplacianStack& stack,
                                            BoundaryCondition bc,
                                            double residual_tol = 1e-8) {
    const int n = stack.size();
    const int n0 = stack.table->num_boundary();
    const int offset = (bc == BoundaryCondition::Dirichlet) ? n0 : 0;
    const int na = n - offset;
    if (na > 12000)
        throw SolverFailure("dense eigensolve refused for " + std::to_string(na) +
                            " vertices");

    Vector w = stack.weights().tail(na);
    Vector wsqrt = w.cwiseSqrt();
    Matrix L = -Matrix(stack.top()).bottomRightCorner(na, na);
    Matrix B = wsqrt.cwiseInverse().asDiagonal() * L * wsqrt.cwiseInverse().asDiagonal();
    B = 0.5 * (B + B.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> es(B);
    if (es.info() != Eigen::Success) throw SolverFailure("eigensolver did not converge");

    SpectralDecomposition dec;
    dec.bc = bc;
    dec.stack = &stack;
    dec.eigenvalues = es.eigenvalues().cwiseMax(0.0);
    dec.eigenvectors = Matrix::Zero(n, na);
    dec.eigenvectors.bottomRows(na) =
        wsqrt.cwiseInverse().asDiagonal() * es.eigenvectors();

    // Residual check per pair on the generalized problem.
    const SparseMatrix& H = stack.top();
    double lam_scale = std::max(1.0, dec.eigenvalues(na - 1));
    Matrix Hphi = -(H * dec.eigenvectors);
    for (int k = 0; k < na; ++k) {
        Vector r = Hphi.col(k) -
                   dec.eigenvalues(k) * (stack.weights().asDiagonal() * dec.eigenvectors.col(k));
        if (bc == BoundaryCondition::Dirichlet) r.head(n0).setZero();
        if (r.norm() > residual_tol * lam_scale)
            throw SolverFailure("eigenpair residual " + std::to_string(r.norm()));
    }

    double tiny = 1e-9 * lam_scale;
    dec.spectral_gap = 0.0;
    for (int k = 0; k < na; ++k)
        if (dec.eigenvalues(k) > tiny) {
            dec.spectral_gap = dec.eigenvalues(k);
            break;
        }
    return dec;
}

/// P_t f by the spectral representation.
inline Vector heat_apply(const SpectralDecomposition& dec, double t, const Vector& f) {
    require(t >= 0.0, "heat_apply needs t >= 0");
    Vector coef = dec.coefficients(f);
    coef.array() *= (-dec.eigenvalues.array() * t).exp();
    return dec.synthesize(coef);
}

/// Heat kernel value p(t, x, y) with respect to mu.
inline double heat_kernel(const SpectralDecomposition& dec, double t, int x, int y) {
    double p = 0.0;
    for (int k = 0; k < dec.modes(); ++k)
        p += std::exp(-dec.eigenvalues(k) * t) * dec.eigenvectors(x, k) *
             dec.eigenvectors(y, k);
    return p;
}

/// L^2(mu) norm.
inline double l2_norm(const LaplacianStack& stack, const Vector& u) {
    return std::sqrt(u.dot(stack.weights().asDiagonal() * u));
}

/// Effective resistance metric from the Neumann decomposition:
/// R(x,y) = sum_{lambda_k > 0} (phi_k(x) - phi_k(y))^2 / lambda_k.
inline double resistance_distance(const SpectralDecomposition& neumann, int x, int y) {
    require(neumann.bc == BoundaryCondition::Neumann, "resistance needs Neumann modes");
    double tiny = 1e-9 * std::max(1.0, neumann.eigenvalues(neumann.modes() - 1));
    double r = 0.0;
    for (int k = 0; k < neumann.modes(); ++k) {
        if (neumann.eigenvalues(k) <= tiny) continue;
        double d = neumann.eigenvectors(x, k) - neumann.eigenvectors(y, k);
        r += d * d / neumann.eigenvalues(k);
    }
    return r;
}

/// All resistance distances from the vertices of `sources`.
inline Matrix resistance_distances(const SpectralDecomposition& neumann,
                                   const std::vector<int>& sources) {
    const int n = neumann.eigenvectors.rows();
    Matrix out(n, sources.size());
    for (size_t s = 0; s < sources.size(); ++s)
        for (int x = 0; x < n; ++x) out(x, s) = resistance_distance(neumann, x, sources[s]);
    return out;
}

}  // namespace pcf
