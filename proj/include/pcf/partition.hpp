#pragma once

#include "pcf/borel.hpp"

namespace pcf {

/// A cover member: open cells (given by words, any levels) plus the gluing
/// points — junctions between listed cells, or boundary points of X for
/// relatively open sets reaching the boundary. Its vertex set at level M is
/// the union of strict cell interiors and the listed points.
struct CoverMember {
    std::vector<Word> cells;
    std::vector<int> points;
};

struct OpenCover {
    std::vector<CoverMember> members;
};

namespace detail {

inline std::vector<char> member_mask(const LaplacianStack& stack, const CoverMember& m) {
    const VertexTable& t = *stack.table;
    std::vector<char> mask(t.num_vertices(), 0);
    const int n0 = t.num_corners();
    for (const Word& w : m.cells) {
        const int* corners = t.cell_corners(static_cast<int>(w.size()),
                                            t.cell_index_of_word(w));
        std::vector<char> corner(t.num_vertices(), 0);
        for (int c = 0; c < n0; ++c) corner[corners[c]] = 1;
        for (int id : t.cell_vertex_ids(w))
            if (!corner[id]) mask[id] = 1;
    }
    for (int j : m.points) mask[j] = 1;
    return mask;
}

inline std::vector<char> union_mask(const std::vector<std::vector<char>>& masks, size_t from) {
    if (masks.empty()) return {};
    std::vector<char> out(masks[0].size(), 0);
    for (size_t k = from; k < masks.size(); ++k)
        for (size_t i = 0; i < out.size(); ++i) out[i] |= masks[k][i];
    return out;
}

// Open vertex set of the m-scale neighborhood of x: the interiors of the
// m-cells containing x, plus x itself.
inline std::vector<int> neighborhood_set(const LaplacianStack& stack, int x, int m) {
    const VertexTable& t = *stack.table;
    const int n0 = t.num_corners();
    std::vector<int> out{x};
    for (auto cell : t.m_scale_neighborhood(x, m)) {
        Word w = t.word_of_cell(m, cell);
        const int* corners = t.cell_corners(m, cell);
        std::vector<char> corner(t.num_vertices(), 0);
        for (int c = 0; c < n0; ++c) corner[corners[c]] = 1;
        for (int id : t.cell_vertex_ids(w))
            if (!corner[id]) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Drops members whose removal keeps the union covering every vertex.
inline OpenCover reduce_cover(const LaplacianStack& stack, const OpenCover& cover) {
    const int n = stack.size();
    std::vector<std::vector<char>> masks;
    for (const auto& m : cover.members) masks.push_back(detail::member_mask(stack, m));

    auto covers_all = [&](const std::vector<char>& keep) {
        for (int x = 0; x < n; ++x) {
            bool hit = false;
            for (size_t k = 0; k < masks.size() && !hit; ++k)
                if (keep[k] && masks[k][x]) hit = true;
            if (!hit) return false;
        }
        return true;
    };

    std::vector<char> keep(cover.members.size(), 1);
    if (!covers_all(keep)) throw NotACover("member union misses part of the fractal");
    for (size_t k = 0; k < cover.members.size(); ++k) {
        keep[k] = 0;
        if (!covers_all(keep)) keep[k] = 1;
    }
    OpenCover out;
    for (size_t k = 0; k < cover.members.size(); ++k)
        if (keep[k]) out.members.push_back(cover.members[k]);
    return out;
}

/// The Lambda region: a finite union of maximal m-scale neighborhoods inside
/// the member, covering the target set.
struct LambdaRegion {
    std::vector<std::pair<int, std::int64_t>> cells;  // (level, cell row)
    std::vector<int> centers;
    std::vector<char> open_set;      // union of neighborhood interiors + centers
    std::vector<char> closure;      // open set plus cell corners
    std::vector<int> boundary;      // closure minus open set
};

inline LambdaRegion build_lambda(const LaplacianStack& stack,
                                 const std::vector<char>& target,
                                 const std::vector<char>& member_set,
                                 const std::vector<char>* remaining = nullptr) {
    const VertexTable& t = *stack.table;
    const int n = t.num_vertices();
    const int n0 = t.num_corners();
    LambdaRegion lam;
    lam.open_set.assign(n, 0);

    for (int x = 0; x < n; ++x) {
        if (!target[x] || lam.open_set[x]) continue;
        if (!member_set[x])
            throw CoverGap("target vertex " + std::to_string(x) + " not in the member");
        // Largest neighborhood fitting inside the member whose boundary
        // points are correction-feasible: each corner must be in the member
        // (cells around it exist for the jet corrections) or outside the
        // remaining members (where the remainder vanishes and no correction
        // is needed).
        bool placed = false;
        for (int m = 1; m <= t.level - 1 && !placed; ++m) {
            auto nb = detail::neighborhood_set(stack, x, m);
            bool inside = true;
            for (int id : nb)
                if (!member_set[id]) {
                    inside = false;
                    break;
                }
            if (!inside) continue;
            if (remaining) {
                bool corners_ok = true;
                for (auto cell : t.m_scale_neighborhood(x, m)) {
                    const int* corners = t.cell_corners(m, cell);
                    for (int c = 0; c < n0 && corners_ok; ++c) {
                        int y = corners[c];
                        if (!member_set[y] && (*remaining)[y]) corners_ok = false;
                    }
                    if (!corners_ok) break;
                }
                if (!corners_ok) continue;
            }
            placed = true;
            lam.centers.push_back(x);
            for (auto cell : t.m_scale_neighborhood(x, m)) lam.cells.emplace_back(m, cell);
            for (int id : nb) lam.open_set[id] = 1;
        }
        if (!placed)
            throw CoverGap("no admissible neighborhood at vertex " + std::to_string(x));
    }

    lam.closure = lam.open_set;
    for (auto [m, cell] : lam.cells) {
        const int* corners = t.cell_corners(m, cell);
        for (int c = 0; c < n0; ++c) lam.closure[corners[c]] = 1;
    }
    for (int x = 0; x < n; ++x)
        if (lam.closure[x] && !lam.open_set[x]) lam.boundary.push_back(x);
    return lam;
}

/// Correction cells at a Lambda boundary point: same-level cells meeting only
/// at x_j, inside the member, disjoint from Lambda, jointly completing a
/// neighborhood of x_j. Returns the lexicographically least admissible set.
inline std::vector<Word> correction_cells(const LaplacianStack& stack, int xj,
                                          const std::vector<char>& member_set,
                                          const LambdaRegion& lam,
                                          const std::vector<char>& occupied) {
    const VertexTable& t = *stack.table;
    for (int m = 1; m <= t.level - 1; ++m) {
        if (!t.in_level(xj, m)) continue;
        std::vector<Word> chosen;
        bool ok = true;
        for (auto cell : t.m_scale_neighborhood(xj, m)) {
            Word w = t.word_of_cell(m, cell);
            auto ids = t.cell_vertex_ids(w);
            bool inside_lambda = true, touches_lambda = false, inside_member = true,
                 clash = false;
            for (int id : ids) {
                if (!lam.open_set[id] && id != xj) inside_lambda = false;
                if (lam.open_set[id] && id != xj) touches_lambda = true;
                if (!member_set[id] && id != xj) inside_member = false;
                if (occupied[id] && id != xj) clash = true;
            }
            if (inside_lambda) continue;  // this side is already covered
            if (touches_lambda || !inside_member || clash || !member_set[xj]) {
                ok = false;
                break;
            }
            chosen.push_back(w);
        }
        if (ok && !chosen.empty()) {
            // Pairwise intersections must be exactly {x_j}.
            for (size_t a = 0; a < chosen.size() && ok; ++a)
                for (size_t b = a + 1; b < chosen.size() && ok; ++b) {
                    auto ia = stack.table->cell_vertex_ids(chosen[a]);
                    auto ib = stack.table->cell_vertex_ids(chosen[b]);
                    std::vector<int> inter;
                    std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(),
                                          std::back_inserter(inter));
                    if (!(inter.size() == 1 && inter[0] == xj)) ok = false;
                }
            if (ok) return chosen;
        }
    }
    throw NoAdmissibleCells("no correction cells at vertex " + std::to_string(xj));
}

struct PartitionPiece {
    ChainFunction chain;
    int member = 0;              // index into the reduced cover
    LambdaRegion lambda;
    std::vector<Word> correction_words;
    std::vector<int> correction_points;
};

struct PartitionResult {
    std::vector<PartitionPiece> pieces;
    OpenCover reduced;
    std::vector<std::vector<char>> member_masks;
};

/// Theorem-5.1 decomposition: f = sum f_k with supp f_k inside member k and
/// every piece smooth to the jet order of the input chain. The pieces are
/// g|_(closure of Lambda) plus Corollary-4.4 corrections on cells at the
/// Lambda boundary points that lie in the remaining members.
inline PartitionResult smooth_partition(const LaplacianStack& stack, BorelWorkspace& ws,
                                        const ChainFunction& f, const OpenCover& cover,
                                        int k_jet) {
    if (f.order() < k_jet + 1)
        throw CertificateTooWeak("input chain order " + std::to_string(f.order()) +
                                 " below jet order " + std::to_string(k_jet + 1));
    const VertexTable& t = *stack.table;
    const int n = t.num_vertices();
    const int n0 = t.num_corners();

    PartitionResult out;
    out.reduced = reduce_cover(stack, cover);
    for (const auto& m : out.reduced.members)
        out.member_masks.push_back(detail::member_mask(stack, m));
    const int K = static_cast<int>(out.reduced.members.size());

    ChainFunction g = f;
    for (int k = 0; k < K; ++k) {
        std::vector<char> remaining = detail::union_mask(out.member_masks, k + 1);
        if (remaining.empty()) remaining.assign(n, 0);

        std::vector<char> target(n, 0);
        for (int x = 0; x < n; ++x)
            if (g.value()(x) != 0.0 && !remaining[x]) target[x] = 1;

        PartitionPiece piece;
        piece.member = k;
        piece.lambda = build_lambda(stack, target, out.member_masks[k], &remaining);

        // Corrections at the Lambda boundary points inside the overlap zone.
        std::vector<char> occupied(n, 0);
        std::vector<std::vector<Word>> cells_per_point;
        std::vector<int> points;
        for (int xj : piece.lambda.boundary) {
            if (t.is_boundary(xj)) continue;  // no matching condition on V_0
            if (!remaining[xj]) continue;  // g vanishes nearby: smooth cut
            auto cells = correction_cells(stack, xj, out.member_masks[k], piece.lambda,
                                          occupied);
            for (const Word& w : cells)
                for (int id : t.cell_vertex_ids(w)) occupied[id] = 1;
            cells_per_point.push_back(cells);
            points.push_back(xj);
        }

        piece.chain = chain_zero(n, k_jet + 1);
        for (int i = 0; i <= k_jet + 1; ++i)
            for (int x = 0; x < n; ++x)
                if (piece.lambda.closure[x]) piece.chain.deriv[i](x) = g.deriv[i](x);

        for (size_t p = 0; p < points.size(); ++p) {
            const int xj = points[p];
            piece.correction_points.push_back(xj);
            for (const Word& w : cells_per_point[p]) {
                piece.correction_words.push_back(w);
                // Corner position of x_j in the cell gives the pullback anchor.
                const int* corners = t.cell_corners(static_cast<int>(w.size()),
                                                    t.cell_index_of_word(w));
                int anchor = -1;
                for (int c = 0; c < n0; ++c)
                    if (corners[c] == xj) anchor = c;
                require(anchor >= 0, "correction point is not a corner of its cell");

                // One order beyond the certified jet keeps the top-order atom
                // controlled (it reads chain[k_jet+1] at the seam).
                const int jet_len =
                    std::min({k_jet + 2, g.order() + 1, ws.max_order() + 1});
                Jet jet;
                jet.rho = Vector(jet_len);
                jet.sigma = Vector(jet_len);
                for (int i = 0; i < jet_len; ++i) {
                    jet.rho(i) = g.deriv[i](xj);
                    jet.sigma(i) = normal_derivative(stack, g.deriv[i], xj, w).value;
                }
                double jet_size = jet.rho.cwiseAbs().sum() + jet.sigma.cwiseAbs().sum();
                auto h = transfer_to_junction(ws, anchor, jet, w, 0,
                                              std::max(1.0, 4.0 * jet_size));
                // The closure of Lambda already carries its own values; the
                // correction's (near-zero) samples there would otherwise leave
                // dust in the remainder.
                for (int i = 0; i < static_cast<int>(h.f.deriv.size()); ++i)
                    for (int x = 0; x < n; ++x)
                        if (piece.lambda.closure[x]) h.f.deriv[i](x) = 0.0;
                piece.chain = chain_add(piece.chain, h.f);
            }
        }

        g = chain_axpy(-1.0, piece.chain, g);
        out.pieces.push_back(std::move(piece));
    }

    if (g.value().cwiseAbs().maxCoeff() > 1e-10 * (1 + f.value().cwiseAbs().maxCoeff()))
        throw Error("partition remainder is not zero: " +
                    std::to_string(g.value().cwiseAbs().maxCoeff()));
    return out;
}

/// Matching certificate of a piece: worst atom defect over all junctions per
/// order, split into seam points (where cells were glued) and the rest.
struct PieceCertificate {
    std::vector<double> atom_all;
    std::vector<double> atom_seam;
};

inline PieceCertificate certify_piece(const LaplacianStack& stack,
                                      const PartitionPiece& piece, int k_jet) {
    PieceCertificate cert;
    auto junctions = stack.table->junction_ids();
    std::vector<char> seam(stack.size(), 0);
    for (int xj : piece.correction_points) seam[xj] = 1;
    for (const Word& w : piece.correction_words) {
        const int* corners = stack.table->cell_corners(
            static_cast<int>(w.size()), stack.table->cell_index_of_word(w));
        for (int c = 0; c < stack.table->num_corners(); ++c)
            if (!stack.table->is_boundary(corners[c])) seam[corners[c]] = 1;
    }
    for (int x : piece.lambda.boundary)
        if (!stack.table->is_boundary(x)) seam[x] = 1;

    for (int i = 0; i < k_jet + 1; ++i) {
        Vector hv = stack.top() * piece.chain.deriv[i];
        double worst_all = 0.0, worst_seam = 0.0;
        for (int x : junctions) {
            double atom =
                std::abs(hv(x) - stack.weights()(x) * piece.chain.deriv[i + 1](x));
            worst_all = std::max(worst_all, atom);
            if (seam[x]) worst_seam = std::max(worst_seam, atom);
        }
        cert.atom_all.push_back(worst_all);
        cert.atom_seam.push_back(worst_seam);
    }
    return cert;
}

}  // namespace pcf
