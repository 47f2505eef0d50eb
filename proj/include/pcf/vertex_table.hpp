#pragma once

#include "pcf/fractal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <unordered_map>

namespace pcf {

namespace detail {

// Spatial hash for gluing vertices by geometric coincidence.
// Two points are identified when they agree within `tol` in every coordinate.
class PointGlue {
public:
    explicit PointGlue(int dim, double tol) : dim_(dim), tol_(tol) {}

    // Returns the id of the existing point within tolerance, or -1.
    int find(const Vector& p, const std::vector<Vector>& points) const {
        std::vector<std::int64_t> base(dim_);
        for (int d = 0; d < dim_; ++d) base[d] = quantize(p(d));
        std::vector<std::int64_t> key(dim_);
        return scan_neighbors(p, points, base, key, 0);
    }

    void insert(const Vector& p, int id) {
        std::vector<std::int64_t> key(dim_);
        for (int d = 0; d < dim_; ++d) key[d] = quantize(p(d));
        buckets_[hash_key(key)].push_back(id);
    }

private:
    std::int64_t quantize(double x) const {
        return static_cast<std::int64_t>(std::llround(x / tol_));
    }

    static std::uint64_t hash_key(const std::vector<std::int64_t>& key) {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : key) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
        }
        return h;
    }

    int scan_neighbors(const Vector& p, const std::vector<Vector>& points,
                       const std::vector<std::int64_t>& base,
                       std::vector<std::int64_t>& key, int d) const {
        if (d == dim_) {
            auto it = buckets_.find(hash_key(key));
            if (it == buckets_.end()) return -1;
            for (int id : it->second)
                if ((points[id] - p).cwiseAbs().maxCoeff() <= tol_) return id;
            return -1;
        }
        for (std::int64_t off = -1; off <= 1; ++off) {
            key[d] = base[d] + off;
            int id = scan_neighbors(p, points, base, key, d + 1);
            if (id >= 0) return id;
        }
        return -1;
    }

    int dim_;
    double tol_;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
};

}  // namespace detail

/// Geometric gluing tolerance for vertex identification (absolute, in ambient
/// coordinates). Distinguishes all dyadic/triadic points at desk-scale levels.
inline constexpr double kGlueTolerance = 1e-9;

/// Level-M vertex hierarchy of a p.c.f. fractal.
///
/// Ids are stable across levels: the first level_sizes[m] ids are exactly V_m,
/// so the level-m table embeds in the level-M one. Cells at every level
/// m <= M are stored as corner-id rows over lexicographically ordered words.
struct VertexTable {
    // CSR-layout list of cell rows incident to each vertex at one level.
    struct Incidence {
        std::vector<std::int64_t> offsets;
        std::vector<std::int64_t> cells;
        auto at(int id) const {
            return std::pair{cells.begin() + offsets[id], cells.begin() + offsets[id + 1]};
        }
    };

    const PcfFractal* fractal = nullptr;
    int level = 0;
    std::vector<Vector> points;
    std::vector<int> level_sizes;                    // |V_m| for m = 0..level
    std::vector<std::vector<int>> cells_by_level;    // [m]: (N^m rows) x n0 corner ids
    std::vector<Incidence> incidence;                // [m]: vertex -> incident cell rows
    std::vector<std::pair<std::int64_t, int>> canonical_address;  // level-M (word,corner)
    std::vector<int> address_count;                  // # of level-M addresses
    std::shared_ptr<detail::PointGlue> glue;         // geometric vertex lookup

    /// Vertex id at the given point (within gluing tolerance), or -1.
    int locate(const Vector& p) const { return glue->find(p, points); }

    int num_vertices() const { return static_cast<int>(points.size()); }
    int num_boundary() const { return level_sizes[0]; }
    int num_corners() const { return level_sizes[0]; }

    bool is_boundary(int id) const { return id < num_boundary(); }
    bool in_level(int id, int m) const { return id < level_sizes[m]; }

    std::vector<int> boundary_ids() const {
        std::vector<int> out(num_boundary());
        for (int i = 0; i < num_boundary(); ++i) out[i] = i;
        return out;
    }

    std::vector<int> junction_ids() const {
        std::vector<int> out;
        for (int i = num_boundary(); i < num_vertices(); ++i) out.push_back(i);
        return out;
    }

    int num_cells(int m) const {
        int n = 1;
        for (int i = 0; i < m; ++i) n *= fractal->num_maps();
        return n;
    }

    const int* cell_corners(int m, std::int64_t cell_index) const {
        return &cells_by_level[m][static_cast<size_t>(cell_index) * num_corners()];
    }

    Word word_of_cell(int m, std::int64_t cell_index) const {
        Word w(m);
        const int N = fractal->num_maps();
        for (int i = m - 1; i >= 0; --i) {
            w[i] = static_cast<int>(cell_index % N);
            cell_index /= N;
        }
        return w;
    }

    std::int64_t cell_index_of_word(const Word& w) const {
        std::int64_t idx = 0;
        for (int l : w) idx = idx * fractal->num_maps() + l;
        return idx;
    }

    /// Ids of V_{M-|w|} mapped into the cell F_w(X): result[coarse_id] = fine_id.
    /// The pullback u o F_w of a level-M grid function samples exactly onto
    /// the coarse vertex set through this map.
    std::vector<int> cell_pullback_ids(const Word& w) const {
        const int m = static_cast<int>(w.size());
        require(m <= level, "cell_pullback_ids: word longer than table level");
        const int sub = level - m;
        const int n0 = num_corners();
        std::vector<int> out(level_sizes[sub], -1);
        const std::int64_t base = cell_index_of_word(w);
        const std::int64_t stride = num_cells(sub);
        for (std::int64_t v = 0; v < stride; ++v) {
            const int* coarse = cell_corners(sub, v);
            const int* fine = cell_corners(level, base * stride + v);
            for (int i = 0; i < n0; ++i) out[coarse[i]] = fine[i];
        }
        return out;
    }

    /// All level-M vertex ids lying in the closed cell F_w(X).
    std::vector<int> cell_vertex_ids(const Word& w) const {
        std::vector<int> ids = cell_pullback_ids(w);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    /// m-cells (as cell row indices at level m) whose union is the m-scale
    /// neighborhood of vertex x: all m-cells containing x if x is in V_m,
    /// else the unique m-cell containing x.
    std::vector<std::int64_t> m_scale_neighborhood(int x, int m) const {
        require(m >= 0 && m <= level, "m_scale_neighborhood: bad level");
        if (in_level(x, m)) {
            auto [first, last] = incidence[m].at(x);
            return std::vector<std::int64_t>(first, last);
        }
        const auto [word_idx, corner] = canonical_address[x];
        std::int64_t pref = word_idx;
        for (int i = 0; i < level - m; ++i) pref /= fractal->num_maps();
        return {pref};
    }
};

/// Builds the level-m vertex table by enumerating all words and gluing
/// coincident corner points. Throws AddressCollision when two corners of one
/// cell collapse to a single vertex (degenerate IFS input).
inline VertexTable build_vertex_table(const PcfFractal& fractal, int m) {
    fractal.validate();
    require(m >= 0, "build_vertex_table: negative level");
    const int N = fractal.num_maps();
    const int n0 = fractal.num_boundary();

    VertexTable table;
    table.fractal = &fractal;
    table.level = m;

    table.glue = std::make_shared<detail::PointGlue>(fractal.ambient_dim, kGlueTolerance);
    detail::PointGlue& glue = *table.glue;
    auto intern = [&](const Vector& p) {
        int id = glue.find(p, table.points);
        if (id >= 0) return id;
        id = table.num_vertices();
        table.points.push_back(p);
        glue.insert(p, id);
        return id;
    };

    // Level 0: boundary points, one "cell" for the empty word.
    table.cells_by_level.emplace_back();
    for (int b = 0; b < n0; ++b) {
        int id = intern(fractal.boundary_point(b));
        if (id != b) throw AddressCollision("coincident boundary points in IFS spec");
        table.cells_by_level[0].push_back(id);
    }
    table.level_sizes.push_back(table.num_vertices());

    // Level k cells extend level k-1: word (j, w') maps cell w' through F_j.
    for (int k = 1; k <= m; ++k) {
        const auto& prev = table.cells_by_level[k - 1];
        const std::int64_t prev_cells = static_cast<std::int64_t>(prev.size()) / n0;
        std::vector<int> cur;
        cur.reserve(prev.size() * N);
        for (int j = 0; j < N; ++j) {
            for (std::int64_t c = 0; c < prev_cells; ++c) {
                int first = -1;
                for (int i = 0; i < n0; ++i) {
                    Vector p = fractal.maps[j].apply(table.points[prev[c * n0 + i]]);
                    int id = intern(p);
                    if (i > 0 && id == first)
                        throw AddressCollision("degenerate cell at level " +
                                               std::to_string(k));
                    if (i == 0) first = id;
                    cur.push_back(id);
                }
            }
        }
        table.cells_by_level.push_back(std::move(cur));
        table.level_sizes.push_back(table.num_vertices());
    }

    // Corner-to-cell incidence per level (CSR by counting sort).
    table.incidence.resize(m + 1);
    for (int k = 0; k <= m; ++k) {
        auto& inc = table.incidence[k];
        const auto& cells = table.cells_by_level[k];
        const std::int64_t ncells = static_cast<std::int64_t>(cells.size()) / n0;
        const int nv = table.level_sizes[k];
        inc.offsets.assign(nv + 1, 0);
        for (int id : cells) inc.offsets[id + 1]++;
        for (int v = 0; v < nv; ++v) inc.offsets[v + 1] += inc.offsets[v];
        inc.cells.resize(cells.size());
        std::vector<std::int64_t> cursor(inc.offsets.begin(), inc.offsets.end() - 1);
        for (std::int64_t c = 0; c < ncells; ++c)
            for (int i = 0; i < n0; ++i) inc.cells[cursor[cells[c * n0 + i]]++] = c;
    }

    // Canonical (lexicographically least) level-m address per vertex.
    table.canonical_address.assign(table.num_vertices(),
                                   {std::numeric_limits<std::int64_t>::max(), -1});
    table.address_count.assign(table.num_vertices(), 0);
    {
        const auto& cells = table.cells_by_level[m];
        const std::int64_t ncells = static_cast<std::int64_t>(cells.size()) / n0;
        for (std::int64_t c = 0; c < ncells; ++c) {
            for (int i = 0; i < n0; ++i) {
                int id = cells[c * n0 + i];
                table.address_count[id]++;
                auto cand = std::make_pair(c, i);
                if (cand < table.canonical_address[id]) table.canonical_address[id] = cand;
            }
        }
    }
    return table;
}

/// Serialization order: lexicographic by canonical level-M address.
inline std::vector<int> canonical_vertex_order(const VertexTable& table) {
    std::vector<int> order(table.num_vertices());
    for (int i = 0; i < table.num_vertices(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return table.canonical_address[a] < table.canonical_address[b];
    });
    return order;
}

}  // namespace pcf
