#pragma once

#include "pcf/spectral.hpp"

#include <Eigen/SVD>

namespace pcf {

/// Nested vertex regions for the cutoff recursion, j = 0..J:
///   K_j = {dist(x,K) < eps 2^{-j}},  L_j = {dist(x,K) > eps (1 - 2^{-j})},
///   A_j the remainder. Distances are effective resistance.
struct CutoffRegions {
    double epsilon = 0.0;
    int J = 0;
    Vector dist_to_K;
    std::vector<std::vector<int>> K, L, A;

    std::vector<int> outside_epsilon() const {
        std::vector<int> out;
        for (int x = 0; x < dist_to_K.size(); ++x)
            if (dist_to_K(x) > epsilon) out.push_back(x);
        return out;
    }
};

inline CutoffRegions build_cutoff_regions(const SpectralDecomposition& neumann,
                                          const std::vector<int>& Kset, double eps, int J) {
    require(!Kset.empty(), "cutoff target set is empty");
    const int n = neumann.eigenvectors.rows();
    CutoffRegions reg;
    reg.epsilon = eps;
    reg.J = J;
    reg.dist_to_K = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int x = 0; x < n; ++x)
        for (int k : Kset)
            reg.dist_to_K(x) = std::min(reg.dist_to_K(x), resistance_distance(neumann, x, k));
    reg.K.resize(J + 1);
    reg.L.resize(J + 1);
    reg.A.resize(J + 1);
    // j = 0: the limiting sets (K_j -> closure of K, L_j -> complement);
    // the j >= 1 formulas would overlap at j = 0.
    for (int x = 0; x < n; ++x) {
        if (reg.dist_to_K(x) <= 0.0)
            reg.K[0].push_back(x);
        else
            reg.L[0].push_back(x);
    }
    for (int j = 1; j <= J; ++j) {
        const double rin = eps * std::pow(2.0, -j);
        const double rout = eps * (1.0 - std::pow(2.0, -j));
        for (int x = 0; x < n; ++x) {
            if (reg.dist_to_K(x) < rin)
                reg.K[j].push_back(x);
            else if (reg.dist_to_K(x) > rout)
                reg.L[j].push_back(x);
            else
                reg.A[j].push_back(x);
        }
    }
    return reg;
}

/// Largest singular value, under quadrature weights, of the P_t block mapping
/// functions supported on `support` into values on `target`.
inline double estimate_D(const SpectralDecomposition& dec, double t,
                         const std::vector<int>& target, const std::vector<int>& support) {
    if (target.empty() || support.empty()) return 0.0;
    const Vector& w = dec.stack->weights();
    Vector e = (-dec.eigenvalues.array() * (0.5 * t)).exp();
    Matrix left(target.size(), dec.modes());
    for (size_t i = 0; i < target.size(); ++i)
        left.row(i) = std::sqrt(w(target[i])) * dec.eigenvectors.row(target[i]);
    left *= e.asDiagonal();
    Matrix right(support.size(), dec.modes());
    for (size_t i = 0; i < support.size(); ++i)
        right.row(i) = std::sqrt(w(support[i])) * dec.eigenvectors.row(support[i]);
    right *= e.asDiagonal();
    Matrix block = left * right.transpose();
    return block.bdcSvd().singularValues()(0);
}

/// D(t, d) over the canonical pair: support S_0, target {dist(x, S_0) >= d}
/// with resistance distance. Monotone decreasing in d by set containment.
inline double estimate_D_at_distance(const SpectralDecomposition& dec, double t,
                                     const std::vector<int>& support, double d) {
    const int n = dec.eigenvectors.rows();
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int x = 0; x < n; ++x)
        for (int s : support)
            dist(x) = std::min(dist(x), resistance_distance(dec, x, s));
    std::vector<int> target;
    for (int x = 0; x < n; ++x)
        if (dist(x) >= d) target.push_back(x);
    return estimate_D(dec, t, target, support);
}

/// Combined union of two region lists.
inline std::vector<int> region_union(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out = a;
    out.insert(out.end(), b.begin(), b.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Schedule t_j = tau e^{-(j+shift)^2} with the cutoff algorithm's D table and
/// the truncated C_k sums. The shift realizes the tail trick: dropping to the
/// tail of the sequence shrinks C_0 below any target while keeping every
/// t_j < 2/lambda.
struct HeatSchedule {
    double epsilon = 0.0;
    std::vector<double> times;      // t_1..t_J, decreasing
    double total = 0.0;             // T = sum of smoothing times t_2..t_J
    int k_max = 0;
    std::vector<double> D;          // D_j, algorithm pairs at step j (1-based: D[0] = D_1)
    std::vector<double> C;          // C_k = sum_{j<J} t_{j+1}^{-k} D_j, k = 0..k_max
    std::vector<double> c_measured; // sup over schedule times of (lambda t)^k e^{-lambda t}
    double lambda = 0.0;
    double tau = 0.0;
    int shift = 0;
};

namespace detail {

inline std::vector<double> schedule_D_table(const SpectralDecomposition& dec,
                                            const CutoffRegions& reg,
                                            const std::vector<double>& times) {
    // Step-j leakage pairs used by the recursion: from A_{j-1} u L_{j-1}
    // into K_j, and from K_{j-1} u A_{j-1} into L_j; both separated by at
    // least eps 2^{-j}. The j = 1 term (no recursion step) pairs the closure
    // of K against {dist > eps/2}, an eps/2-separated pair in both directions.
    std::vector<double> D(times.size());
    for (size_t j = 1; j < times.size() + 1; ++j) {
        double d1, d2;
        if (j == 1) {
            d1 = estimate_D(dec, times[0], reg.K[0], reg.L[1]);
            d2 = estimate_D(dec, times[0], reg.L[1], reg.K[0]);
        } else {
            d1 = estimate_D(dec, times[j - 1], reg.K[j],
                            region_union(reg.A[j - 1], reg.L[j - 1]));
            d2 = estimate_D(dec, times[j - 1], reg.L[j],
                            region_union(reg.K[j - 1], reg.A[j - 1]));
        }
        D[j - 1] = std::max(d1, d2);
    }
    return D;
}

}  // namespace detail

inline HeatSchedule build_schedule(const SpectralDecomposition& dec,
                                   const CutoffRegions& reg, double eps, int k_max, int J,
                                   double C0_target = 0.5, int max_shift = 14) {
    require(J >= 2, "schedule needs at least two steps");
    const double lambda = dec.spectral_gap;
    require(lambda > 0, "no spectral gap");
    const double tau0 = 0.9 * (2.0 / lambda) * std::exp(1.0);

    for (int shift = 0; shift <= max_shift; ++shift) {
        HeatSchedule s;
        s.epsilon = eps;
        s.k_max = k_max;
        s.lambda = lambda;
        s.tau = tau0;
        s.shift = shift;
        s.times.resize(J);
        for (int j = 1; j <= J; ++j)
            s.times[j - 1] = tau0 * std::exp(-static_cast<double>((j + shift) * (j + shift)));
        if (s.times[0] >= 2.0 / lambda) continue;
        s.total = 0.0;
        for (int j = 2; j <= J; ++j) s.total += s.times[j - 1];
        s.D = detail::schedule_D_table(dec, reg, s.times);
        s.C.assign(k_max + 1, 0.0);
        for (int k = 0; k <= k_max; ++k)
            for (int j = 1; j <= J - 1; ++j)
                s.C[k] += std::pow(s.times[j], -static_cast<double>(k)) * s.D[j - 1];
        if (s.C[0] > C0_target) continue;
        s.c_measured.assign(k_max + 1, 0.0);
        for (int k = 0; k <= k_max; ++k)
            for (double t : s.times)
                for (int i = 0; i < dec.modes(); ++i) {
                    double lt = dec.eigenvalues(i) * t;
                    s.c_measured[k] =
                        std::max(s.c_measured[k], std::pow(lt, k) * std::exp(-lt));
                }
        return s;
    }
    throw NoSchedule("no shift achieves C_0 <= " + std::to_string(C0_target) + " within " +
                     std::to_string(max_shift) + " steps (epsilon too large?)");
}

struct CutoffStepDiag {
    int j = 0;
    double t = 0.0;
    double D = 0.0;
    double norm_u = 0.0;
    double norm_v = 0.0;
    double diff_total = 0.0;   // ||u_j - v_j||
    double diff_on_K = 0.0;    // ||(u_j - v_j) chi_{K_j}||
    double bound_26 = 0.0;     // 7 D_j
    double bound_23 = 0.0;     // D_j (1 + ||v_{j-1}||)
};

struct HeatCutoffResult {
    Vector v;
    Vector phi;                       // P_T f
    std::vector<CutoffStepDiag> steps;
    double err_on_K = 0.0;            // ||(v - phi) chi_K||_2
    double leak_outside = 0.0;        // ||v chi_{dist > eps}||_2
    std::vector<double> delta_norm;   // ||Delta^k v||_2, k = 0..k_max
    std::vector<double> delta_bound;  // 7 c_1 c_k C_k t_1^{-k} e^{2 lambda T}
    std::vector<std::vector<double>> cauchy_partials;  // per k: partial sums over steps
    double bound_t1 = 0.0;
    bool nonnegative = true;          // min(v) >= -1e-9 (Markov check, reported)
};

/// Theorem-2.2 style cutoff: runs the u_j / v_j recursion over the schedule
/// and reports every lemma bound next to its measured value. Throws
/// ScheduleViolation when a stepwise bound fails by more than `slack`.
inline HeatCutoffResult heat_cutoff(const SpectralDecomposition& dec,
                                    const std::vector<int>& Kset, const Vector& f,
                                    const CutoffRegions& reg, const HeatSchedule& sched,
                                    double slack = 2.0) {
    const LaplacianStack& stack = *dec.stack;
    check_level(stack, f);
    const int J = static_cast<int>(sched.times.size());
    require(reg.J >= J, "regions shallower than schedule");
    require(l2_norm(stack, f) <= 1.0 + 1e-9, "cutoff input needs ||f||_2 <= 1");

    auto masked = [&](const Vector& u, const std::vector<int>& set) {
        Vector out = Vector::Zero(u.size());
        for (int x : set) out(x) = u(x);
        return out;
    };

    HeatCutoffResult res;
    res.cauchy_partials.assign(sched.k_max + 1, {});
    std::vector<double> cauchy_acc(sched.k_max + 1, 0.0);

    Vector u = masked(f, reg.K[1]);
    Vector v = Vector::Zero(f.size());
    Vector v_prev_for_cauchy;
    double norm_v_prev = 0.0;  // ||v_1|| = 0 by convention
    double T_j = 0.0;
    for (int j = 2; j <= J; ++j) {
        const double t = sched.times[j - 1];
        T_j += t;
        Vector v_new = heat_apply(dec, t, u);
        if (j > 2) {
            Vector dv = v_new - v;
            Vector coef = dec.coefficients(dv);
            for (int k = 0; k <= sched.k_max; ++k) {
                Vector ck = coef.array() * dec.eigenvalues.array().pow(k);
                cauchy_acc[k] += ck.norm();
                res.cauchy_partials[k].push_back(cauchy_acc[k]);
            }
        }
        v = v_new;

        Vector ptf = heat_apply(dec, T_j, f);
        Vector u_new = v;
        for (int x : reg.K[j]) u_new(x) = ptf(x);
        for (int x : reg.L[j]) u_new(x) = 0.0;

        CutoffStepDiag d;
        d.j = j;
        d.t = t;
        d.D = sched.D[j - 1];
        d.norm_u = l2_norm(stack, u_new);
        d.norm_v = l2_norm(stack, v);
        d.diff_total = l2_norm(stack, u_new - v);
        d.diff_on_K = l2_norm(stack, masked(u_new - v, reg.K[j]));
        d.bound_26 = 7.0 * d.D;
        d.bound_23 = d.D * (1.0 + norm_v_prev);
        res.steps.push_back(d);

        if (d.diff_on_K > slack * d.bound_23 + 1e-12)
            throw ScheduleViolation("step " + std::to_string(j) + ": Lemma-2.3 bound");
        if (d.norm_u > slack * 3.0)
            throw ScheduleViolation("step " + std::to_string(j) + ": Lemma-2.4 bound");
        if (d.diff_total > slack * d.bound_26 + 1e-12)
            throw ScheduleViolation("step " + std::to_string(j) + ": Lemma-2.6 bound");

        norm_v_prev = d.norm_v;
        u = u_new;
    }

    res.v = v;
    res.phi = heat_apply(dec, sched.total, f);
    res.err_on_K = l2_norm(stack, masked(res.v - res.phi, Kset));
    res.leak_outside = l2_norm(stack, masked(res.v, reg.outside_epsilon()));
    res.nonnegative = res.v.minCoeff() >= -1e-9;

    res.bound_t1 = sched.times[0];
    const double c1 = 1.0 / std::exp(1.0);
    Vector coef = dec.coefficients(res.v);
    for (int k = 0; k <= sched.k_max; ++k) {
        Vector ck = coef.array() * dec.eigenvalues.array().pow(k);
        res.delta_norm.push_back(ck.norm());
        double c_k = (k == 0) ? 1.0 : std::pow(k / std::exp(1.0), k);
        if (k == 0) {
            // The k = 0 statement needs the unrolled recursion
            //   ||v|| <= e^{lambda T} (7 c_0 C_0 + ||v_2||),  ||v_2|| <= 1;
            // the compressed form 7 c_1 C_0 e^{2 lambda T} collapses to zero
            // under aggressively shifted schedules and cannot hold.
            res.delta_bound.push_back(std::exp(2.0 * sched.lambda * sched.total) *
                                      (7.0 * sched.C[0] + 1.0));
        } else {
            res.delta_bound.push_back(7.0 * c1 * c_k * sched.C[k] *
                                      std::pow(res.bound_t1, -static_cast<double>(k)) *
                                      std::exp(2.0 * sched.lambda * sched.total));
        }
    }
    return res;
}

/// Sub-Gaussian upper-bound fit: least squares of
///   log p = log gamma1 - (alpha/beta) log t - gamma2 (d^beta / t)^{1/(beta-1)}
/// over a (t, pair) sample grid with a scan over beta, then gamma1 inflated so
/// the fit is an upper envelope of every sample.
struct HeatKernelFit {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double residual = 0.0;  // RMS log-scale residual of the pre-envelope fit
    int samples = 0;
};

inline HeatKernelFit fit_subgaussian(const SpectralDecomposition& dec,
                                     const std::vector<double>& t_grid,
                                     const std::vector<std::pair<int, int>>& pairs) {
    struct Sample {
        double logp, logt, logd;
    };

    // Stage 1: on-diagonal slope gives alpha/beta and the prefactor, since
    // log p(t,x,x) = log gamma1 - (alpha/beta) log t up to lower order.
    std::vector<int> diag;
    for (auto [x, y] : pairs) {
        if (std::find(diag.begin(), diag.end(), x) == diag.end()) diag.push_back(x);
        if (std::find(diag.begin(), diag.end(), y) == diag.end()) diag.push_back(y);
    }
    std::vector<Sample> on_diag;
    for (double t : t_grid)
        for (int x : diag) {
            double p = heat_kernel(dec, t, x, x);
            if (p > 1e-13) on_diag.push_back({std::log(p), std::log(t), 0.0});
        }
    if (on_diag.size() < 8) throw FitDiverged("not enough on-diagonal samples");
    Matrix X1(on_diag.size(), 2);
    Vector y1(on_diag.size());
    for (size_t i = 0; i < on_diag.size(); ++i) {
        X1(i, 0) = 1.0;
        X1(i, 1) = on_diag[i].logt;
        y1(i) = on_diag[i].logp;
    }
    Vector b1 = X1.colPivHouseholderQr().solve(y1);
    const double alpha_over_beta = -b1(1);
    double log_gamma1 = b1(0);
    if (alpha_over_beta <= 0.0) throw FitDiverged("on-diagonal kernel does not decay");

    // Stage 2: the log of the exponent deficit is linear in (log d, log t)
    // with slopes beta/(beta-1) and -1/(beta-1).
    std::vector<Sample> off_diag;
    for (double t : t_grid)
        for (auto [x, y] : pairs) {
            double p = heat_kernel(dec, t, x, y);
            double d = resistance_distance(dec, x, y);
            if (p < 1e-12 || d <= 0.0) continue;
            double excess = log_gamma1 - alpha_over_beta * std::log(t) - std::log(p);
            if (excess < 0.3) continue;  // exponent-dominated samples only
            off_diag.push_back({std::log(excess), std::log(t), std::log(d)});
        }
    if (off_diag.size() < 8) throw FitDiverged("not enough exponent-dominated samples");
    Matrix X2(off_diag.size(), 3);
    Vector y2(off_diag.size());
    for (size_t i = 0; i < off_diag.size(); ++i) {
        X2(i, 0) = 1.0;
        X2(i, 1) = off_diag[i].logd;
        X2(i, 2) = off_diag[i].logt;
        y2(i) = off_diag[i].logp;  // log(excess)
    }
    Vector b2 = X2.colPivHouseholderQr().solve(y2);
    if (b2(2) >= 0.0) throw FitDiverged("exponent does not grow as t decreases");

    HeatKernelFit fit;
    fit.beta = 1.0 - 1.0 / b2(2);
    if (!(fit.beta > 1.0)) throw FitDiverged("fitted beta <= 1");
    fit.gamma2 = std::exp(b2(0));
    fit.alpha = alpha_over_beta * fit.beta;
    fit.residual = std::sqrt((X2 * b2 - y2).squaredNorm() / off_diag.size());
    fit.samples = static_cast<int>(on_diag.size() + off_diag.size());

    // Envelope: inflate gamma1 until the bound dominates every sample.
    double shift = 0.0;
    for (double t : t_grid)
        for (auto [x, y] : pairs) {
            double p = heat_kernel(dec, t, x, y);
            double d = resistance_distance(dec, x, y);
            if (p < 1e-13) continue;
            double logbound = log_gamma1 - alpha_over_beta * std::log(t);
            if (d > 0.0)
                logbound -=
                    fit.gamma2 * std::pow(std::pow(d, fit.beta) / t, 1.0 / (fit.beta - 1.0));
            shift = std::max(shift, std::log(p) - logbound);
        }
    fit.gamma1 = std::exp(log_gamma1 + shift);
    return fit;
}

}  // namespace pcf
