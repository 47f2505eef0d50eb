#pragma once

#include "pcf/bump.hpp"

#include <map>

namespace pcf {

/// Prescribed jet at an anchor: rho_k = Delta^k f, sigma_k = dn Delta^k f,
/// k = 0..L.
struct Jet {
    Vector rho;
    Vector sigma;
    int length() const { return static_cast<int>(rho.size()); }
};

/// Localization U_j = U o F_j^{-m} on F_j^m(X), zero elsewhere (exact chain
/// pullback; smooth by the matching conditions since U vanishes to
/// certificate order on V_0).
inline ChainFunction localize_bump(const LaplacianStack& stack, const ChainFunction& U,
                                   int boundary_pos, int m) {
    const int map = stack.fractal->boundary[boundary_pos];
    return chain_pullback(stack, U, Word(static_cast<size_t>(m), map), 1.0);
}

/// Jet basis at a boundary anchor: functions f_{l,p} with
///   Delta^k f_{l,p}|_{V_0} = 0,  dn Delta^k f_{l,p}(q_i) = delta_{kl} delta_{ip},
/// and g_l with
///   Delta^k g_l(q_i) = delta_{kl} delta_{i,q},  dn Delta^k g_l|_{V_0} = 0,
/// certified at the level of the stack it was built on.
struct JetBasis {
    int q = 0;   // boundary anchor position
    int L = 0;   // top jet order
    int m = 0;   // localization scale of the U_j
    int level = 0;  // level of the stack the certificates hold on
    Matrix A;    // A_{ij} = int h_i U_j dmu
    std::vector<std::vector<ChainFunction>> f;  // [l][p]
    std::vector<ChainFunction> g;               // [l], anchored at q
    double delta_residual = 0.0;  // worst deviation from the delta property
};

namespace detail {

inline double boundary_normal_of(const LaplacianStack& stack, const Vector& u, int q) {
    return normal_derivative(stack, u, q).value;
}

}  // namespace detail

/// Builds the full (l, p) basis table by the iterated-Green construction,
/// searching the localization scale upward until the A matrix is well
/// conditioned, and certifying the delta property by direct evaluation.
inline JetBasis build_jet_basis(const LaplacianStack& stack, const GreenSolver& green,
                                const ChainFunction& U, int q, int L, int m_start = 2,
                                double cert_tol = 1e-6) {
    const int n0 = stack.table->num_boundary();
    const Vector& w = stack.weights();
    JetBasis basis;
    basis.q = q;
    basis.L = L;
    basis.level = stack.level();

    std::vector<ChainFunction> Uloc(n0);
    for (int m = m_start;; ++m) {
        if (m > stack.level() - 1)
            throw IllConditionedA("no localization scale conditions the A matrix");
        for (int j = 0; j < n0; ++j) Uloc[j] = localize_bump(stack, U, j, m);
        basis.A = Matrix(n0, n0);
        for (int i = 0; i < n0; ++i) {
            Vector h = harmonic_basis_function(stack.hs, *stack.table, i);
            for (int j = 0; j < n0; ++j)
                basis.A(i, j) = w.dot(h.cwiseProduct(Uloc[j].value()));
        }
        Eigen::JacobiSVD<Matrix> svd(basis.A);
        double cond = svd.singularValues()(0) / svd.singularValues()(n0 - 1);
        if (cond < 1e6) {
            basis.m = m;
            break;
        }
    }

    // Iterated Green solves of the localized bumps: the dictionary
    // {G^{n+1} U_j : n <= L, j}. Every member vanishes with its whole chain
    // on V_0, so only the normal-derivative data has to be solved for.
    std::vector<std::vector<ChainFunction>> GU(L + 2, std::vector<ChainFunction>(n0));
    for (int j = 0; j < n0; ++j) {
        GU[0][j] = Uloc[j];
        for (int n = 1; n <= L + 1; ++n) GU[n][j] = chain_green(green, GU[n - 1][j]);
    }

    // Full jet-data matrix over the dictionary:
    //   B[(k,p), (n,j)] = dn Delta^k G^{n+1} U_j (q_p),  k <= L.
    // With a finite-certificate U the columns carry nonzero tails at
    // k >= n+2 (the unresolved boundary data of Delta^{k-n-1} U); solving
    // against the full matrix cancels them by exact linear algebra instead of
    // relying on U's infinite-order vanishing.
    const int dim = (L + 1) * n0;
    Matrix B(dim, dim);
    for (int n = 0; n <= L; ++n)
        for (int j = 0; j < n0; ++j)
            for (int k = 0; k <= L; ++k)
                for (int p = 0; p < n0; ++p)
                    B(k * n0 + p, n * n0 + j) =
                        detail::boundary_normal_of(stack, GU[n + 1][j].deriv[k], p);
    // Column equilibration keeps the mixed scales solvable.
    Vector colscale(dim);
    for (int c = 0; c < dim; ++c) {
        double m = B.col(c).cwiseAbs().maxCoeff();
        colscale(c) = (m > 0) ? 1.0 / m : 1.0;
    }
    Matrix Bs = B * colscale.asDiagonal();
    Eigen::ColPivHouseholderQR<Matrix> Bqr(Bs);

    auto dictionary_combination = [&](const Vector& rhs) {
        Vector coef = colscale.asDiagonal() * Bqr.solve(rhs);
        ChainFunction out = chain_zero(stack.size(), GU[L + 1][0].order());
        for (int n = 0; n <= L; ++n)
            for (int j = 0; j < n0; ++j) {
                double c = coef(n * n0 + j);
                if (c != 0.0) out = chain_axpy(c, GU[n + 1][j], out);
            }
        return out;
    };

    basis.f.resize(L + 1, std::vector<ChainFunction>(n0));
    for (int l = 0; l <= L; ++l)
        for (int p = 0; p < n0; ++p) {
            Vector rhs = Vector::Zero(dim);
            rhs(l * n0 + p) = 1.0;
            basis.f[l][p] = dictionary_combination(rhs);
        }

    basis.g.resize(L + 1);
    {
        Vector hq = harmonic_basis_function(stack.hs, *stack.table, q);
        ChainFunction Gl = chain_harmonic(hq, GU[L + 1][0].order());
        for (int l = 0; l <= L; ++l) {
            if (l > 0) Gl = chain_green(green, Gl);
            ChainFunction cand = Gl;
            if (static_cast<int>(cand.deriv.size()) > GU[L + 1][0].order() + 1)
                cand.deriv.resize(GU[L + 1][0].order() + 1);
            // Cancel the whole normal-derivative profile of G^l h.
            Vector rhs(dim);
            for (int k = 0; k <= L; ++k)
                for (int p = 0; p < n0; ++p)
                    rhs(k * n0 + p) =
                        detail::boundary_normal_of(stack, cand.deriv[k], p);
            ChainFunction corr = dictionary_combination(rhs);
            basis.g[l] = chain_axpy(-1.0, corr, cand);
        }
    }

    // Delta-property certificate by direct evaluation.
    double worst = 0.0;
    for (int l = 0; l <= L; ++l) {
        for (int k = 0; k <= L; ++k) {
            for (int i = 0; i < n0; ++i) {
                for (int p = 0; p < n0; ++p) {
                    double val = basis.f[l][p].deriv[k](i);
                    worst = std::max(worst, std::abs(val));
                    double dn = detail::boundary_normal_of(stack, basis.f[l][p].deriv[k], i);
                    double want = (k == l && i == p) ? 1.0 : 0.0;
                    worst = std::max(worst, std::abs(dn - want));
                }
                double gval = basis.g[l].deriv[k](i);
                double gwant = (k == l && i == q) ? 1.0 : 0.0;
                worst = std::max(worst, std::abs(gval - gwant));
                double gdn = detail::boundary_normal_of(stack, basis.g[l].deriv[k], i);
                worst = std::max(worst, std::abs(gdn));
            }
        }
    }
    basis.delta_residual = worst;
    if (worst > cert_tol)
        throw Error("jet basis failed the delta-property certificate: " +
                    std::to_string(worst));
    return basis;
}

/// f_{l,m} and g_{l,m}: exact rescalings into F_i^{m}(X). The base basis must
/// be certified at level stack.level() - m: the pullback reads exactly that
/// grid, so the discrete jet at q_i transfers exactly (values sample, normal
/// rows rescale by the conductance factor the construction absorbs).
inline ChainFunction scale_basis_f(const LaplacianStack& stack, const JetBasis& basis,
                                   int l, int m_scale) {
    if (m_scale == 0) return basis.f[l][basis.q];
    require(basis.level == stack.level() - m_scale,
            "scaled basis needs a base certified at level M - m");
    const int i = stack.fractal->boundary[basis.q];
    const double mu = stack.fractal->measure[i], r = stack.fractal->resistance[i];
    double factor = std::pow(mu, static_cast<double>(m_scale) * l) *
                    std::pow(r, static_cast<double>(m_scale) * (l + 1));
    return chain_pullback(stack, basis.f[l][basis.q],
                          Word(static_cast<size_t>(m_scale), i), factor);
}

inline ChainFunction scale_basis_g(const LaplacianStack& stack, const JetBasis& basis,
                                   int l, int m_scale) {
    if (m_scale == 0) return basis.g[l];
    require(basis.level == stack.level() - m_scale,
            "scaled basis needs a base certified at level M - m");
    const int i = stack.fractal->boundary[basis.q];
    const double mu = stack.fractal->measure[i], r = stack.fractal->resistance[i];
    double factor = std::pow(mu * r, static_cast<double>(m_scale) * l);
    return chain_pullback(stack, basis.g[l],
                          Word(static_cast<size_t>(m_scale), i), factor);
}

/// Per-level kits for the Borel machinery: coarse stacks with Green solvers,
/// bumps certified there, and jet bases per (level, anchor). All pullback
/// sampling between levels is exact because vertex ids nest.
class BorelWorkspace {
public:
    BorelWorkspace(const PcfFractal& fractal, const LaplacianStack& fine_stack,
                   const GreenSolver& fine_green, BumpConfig bump_cfg, int L)
        : fractal_(&fractal),
          fine_stack_(&fine_stack),
          fine_green_(&fine_green),
          bump_cfg_(bump_cfg),
          L_(L) {}

    int fine_level() const { return fine_stack_->level(); }
    // Kits fall back to (l1, l2) as small as (2, 1).
    int min_coarse_level() const { return 3; }
    const LaplacianStack& fine_stack() const { return *fine_stack_; }
    int max_order() const { return L_; }

    const LaplacianStack& stack_at(int level) { return *kit_at(level).stack; }
    const GreenSolver& green_at(int level) { return *kit_at(level).green; }
    const ChainFunction& bump_chain_at(int level) { return kit_at(level).bump->chain; }

    /// Basis certified at `level`, anchored at boundary position q.
    const JetBasis& basis_at(int level, int q) {
        auto key = std::make_pair(level, q);
        auto it = bases_.find(key);
        if (it != bases_.end()) return it->second;
        Kit& kit = kit_at(level);
        JetBasis basis = build_jet_basis(*kit.stack, *kit.green, kit.bump->chain, q, L_);
        return bases_.emplace(key, std::move(basis)).first->second;
    }

private:
    struct Kit {
        std::unique_ptr<VertexTable> table;  // null at the fine level
        const LaplacianStack* stack = nullptr;
        const GreenSolver* green = nullptr;
        std::unique_ptr<LaplacianStack> owned_stack;
        std::unique_ptr<GreenSolver> owned_green;
        std::unique_ptr<BumpResult> bump;
    };

    Kit& kit_at(int level) {
        require(level >= min_coarse_level(), "level below the bump cell scales");
        require(level <= fine_level(), "level above the table");
        auto it = kits_.find(level);
        if (it != kits_.end()) return it->second;
        Kit kit;
        if (level == fine_level()) {
            kit.stack = fine_stack_;
            kit.green = fine_green_;
        } else {
            kit.table = std::make_unique<VertexTable>(build_vertex_table(*fractal_, level));
            kit.owned_stack = std::make_unique<LaplacianStack>(
                build_laplacian_stack(*fractal_, *kit.table, fine_stack_->hs));
            kit.owned_green = std::make_unique<GreenSolver>(*kit.owned_stack);
            kit.stack = kit.owned_stack.get();
            kit.green = kit.owned_green.get();
        }
        // The basis only needs some certified bump; at shallow levels the
        // configured cell scales can be infeasible (coarse-sampled mass or
        // candidate-space bounds), so fall back to smaller scales.
        std::exception_ptr last;
        for (int l1 = bump_cfg_.l1; l1 >= 2 && !kit.bump; --l1)
            for (int l2 = bump_cfg_.l2; l2 >= 1 && !kit.bump; --l2) {
                if (l1 + l2 > level) continue;
                try {
                    auto idx = build_boundary_cells(*kit.stack, l1, l2);
                    BumpConfig cfg = bump_cfg_;
                    cfg.l1 = l1;
                    cfg.l2 = l2;
                    // Coarse kits only need a certified, localizable U; the
                    // flatness target is the fine bump's concern.
                    if (level != fine_level())
                        cfg.eps_target = std::max(cfg.eps_target, 1.5);
                    kit.bump = std::make_unique<BumpResult>(
                        iterate_to_fixed_point(*kit.stack, *kit.green, idx, cfg));
                } catch (const ZeroMass&) {
                    last = std::current_exception();
                } catch (const LeftCandidateSpace&) {
                    last = std::current_exception();
                } catch (const CellsIntersect&) {
                    last = std::current_exception();
                }
            }
        if (!kit.bump) std::rethrow_exception(last);
        return kits_.emplace(level, std::move(kit)).first->second;
    }

    const PcfFractal* fractal_;
    const LaplacianStack* fine_stack_;
    const GreenSolver* fine_green_;
    BumpConfig bump_cfg_;
    int L_;
    std::map<int, Kit> kits_;
    std::map<std::pair<int, int>, JetBasis> bases_;
};

struct BorelReport {
    int scale = 0;              // uniform m for every term (paper's m_l = m_0 path)
    Vector achieved_rho;
    Vector achieved_sigma;
    double jet_residual = 0.0;  // worst deviation, relative (abs for zeros)
    std::vector<double> tail_sup;        // sum_{l>k} ||Delta^k(...)||_inf per k
    std::vector<double> norm_constants;  // ||Delta^k f||_inf / (sum |rho|+|sigma| + eps)
};

struct BorelResult {
    ChainFunction f;
    BorelReport report;
};

/// Theorem-4.3 assembly with the uniform-scale choice of the Eq.-(33) remark:
/// one scale m >= m0 for every term, increased until each lower-order tail
/// obeys eps 2^{k-l-1}; support is exactly contained in F_i^{m}(X). The
/// assembled chain lives on the stack at `target_level`.
inline BorelResult assemble_borel_at(BorelWorkspace& ws, int target_level, int q,
                                     const Jet& jet, int m0, double eps_tail = 1.0) {
    const int L = jet.length() - 1;
    require(L <= ws.max_order(), "jet longer than the workspace order");
    const LaplacianStack& tgt = ws.stack_at(target_level);
    const int i = tgt.fractal->boundary[q];
    const double mu = tgt.fractal->measure[i], r = tgt.fractal->resistance[i];
    const int cap = target_level - ws.min_coarse_level();
    require(m0 >= 0, "negative support scale");
    if (m0 > cap) throw TailNotSummable("support cell deeper than the resolution allows");

    for (int m = m0; m <= cap; ++m) {
        const JetBasis* basis_ptr = nullptr;
        try {
            basis_ptr = &ws.basis_at(target_level - m, q);
        } catch (const Error&) {
            break;  // deeper scales only coarsen the kit further
        }
        const JetBasis& basis = *basis_ptr;
        bool ok = true;
        for (int l = 0; l <= L && ok; ++l)
            for (int k = 0; k < l && ok; ++k) {
                double target = eps_tail * std::pow(2.0, k - l - 1);
                double gsup = std::abs(jet.rho(l)) *
                              std::pow(mu * r, static_cast<double>(m) * (l - k)) *
                              basis.g[l].deriv[k].cwiseAbs().maxCoeff();
                double fsup = std::abs(jet.sigma(l)) *
                              std::pow(mu, static_cast<double>(m) * (l - k)) *
                              std::pow(r, static_cast<double>(m) * (l + 1 - k)) *
                              basis.f[l][q].deriv[k].cwiseAbs().maxCoeff();
                if (gsup > target || fsup > target) ok = false;
            }
        if (!ok) continue;

        BorelResult out;
        out.report.scale = m;
        out.f = chain_zero(tgt.size(), basis.g[0].order());
        for (int l = 0; l <= L; ++l) {
            if (jet.rho(l) != 0.0)
                out.f = chain_axpy(jet.rho(l), scale_basis_g(tgt, basis, l, m), out.f);
            if (jet.sigma(l) != 0.0)
                out.f = chain_axpy(jet.sigma(l), scale_basis_f(tgt, basis, l, m), out.f);
        }

        out.report.achieved_rho = Vector(L + 1);
        out.report.achieved_sigma = Vector(L + 1);
        double worst = 0.0;
        for (int k = 0; k <= L; ++k) {
            double rho_k = out.f.deriv[k](q);
            double sigma_k = detail::boundary_normal_of(tgt, out.f.deriv[k], q);
            out.report.achieved_rho(k) = rho_k;
            out.report.achieved_sigma(k) = sigma_k;
            auto resid = [](double got, double want) {
                return want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
            };
            worst = std::max(worst, resid(rho_k, jet.rho(k)));
            worst = std::max(worst, resid(sigma_k, jet.sigma(k)));
        }
        out.report.jet_residual = worst;

        double jet_size = jet.rho.cwiseAbs().sum() + jet.sigma.cwiseAbs().sum();
        for (int k = 0; k <= L; ++k) {
            double tail = 0.0;
            for (int l = k + 1; l <= L; ++l) {
                tail += std::abs(jet.rho(l)) *
                        std::pow(mu * r, static_cast<double>(m) * (l - k)) *
                        basis.g[l].deriv[k].cwiseAbs().maxCoeff();
                tail += std::abs(jet.sigma(l)) *
                        std::pow(mu, static_cast<double>(m) * (l - k)) *
                        std::pow(r, static_cast<double>(m) * (l + 1 - k)) *
                        basis.f[l][q].deriv[k].cwiseAbs().maxCoeff();
            }
            out.report.tail_sup.push_back(tail);
            out.report.norm_constants.push_back(out.f.deriv[k].cwiseAbs().maxCoeff() /
                                                (jet_size + eps_tail));
        }
        return out;
    }
    throw TailNotSummable("no admissible scale within the table resolution");
}

inline BorelResult assemble_borel(BorelWorkspace& ws, int q, const Jet& jet, int m0,
                                  double eps_tail = 1.0) {
    return assemble_borel_at(ws, ws.fine_level(), q, jet, m0, eps_tail);
}

/// Corollary-4.4 transfer: realizes a jet at the junction F_w(q) by solving on
/// X for the pulled-back jet at level M - |w| and pushing the solution into
/// the cell, extended by zero. The jet is taken with respect to the cell
/// F_w(X): rho values are one-sided Laplacians, sigma values the
/// cell-localized normal derivatives.
inline BorelResult transfer_to_junction(BorelWorkspace& ws, int q, const Jet& jet,
                                        const Word& w, int m0, double eps_tail = 1.0) {
    const LaplacianStack& fine = ws.fine_stack();
    const PcfFractal& fr = *fine.fractal;
    const double mu_w = fr.measure_weight(w), r_w = fr.resistance_weight(w);
    Jet pulled;
    pulled.rho = Vector(jet.length());
    pulled.sigma = Vector(jet.length());
    for (int k = 0; k < jet.length(); ++k) {
        pulled.rho(k) = jet.rho(k) * std::pow(mu_w * r_w, k);
        pulled.sigma(k) = jet.sigma(k) * std::pow(mu_w, k) * std::pow(r_w, k + 1);
    }
    const int wl = static_cast<int>(w.size());
    BorelResult mid =
        assemble_borel_at(ws, ws.fine_level() - wl, q, pulled, m0, eps_tail);
    BorelResult out;
    out.report = mid.report;
    out.f = chain_pullback(fine, mid.f, w, 1.0);
    return out;
}

}  // namespace pcf
