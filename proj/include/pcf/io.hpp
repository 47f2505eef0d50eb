#pragma once

#include "pcf/laplacian.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pcf {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// GridFunction CSV: one row per vertex in canonical order,
/// `vertex_id,x_1..x_d,value`.
inline std::string grid_csv(const VertexTable& table, const Vector& values) {
    std::ostringstream out;
    out << "vertex_id";
    for (int d = 0; d < table.fractal->ambient_dim; ++d) out << ",x_" << (d + 1);
    out << ",value\n";
    for (int id : canonical_vertex_order(table)) {
        out << id;
        for (int d = 0; d < table.fractal->ambient_dim; ++d)
            out << ',' << detail::format_double(table.points[id](d));
        out << ',' << detail::format_double(values(id)) << '\n';
    }
    return out.str();
}

/// Kernel dump CSV `x_id,y_id,g` over interior vertices in canonical order.
template <typename KernelColumnFn>
std::string kernel_csv(const VertexTable& table, KernelColumnFn&& column) {
    std::ostringstream out;
    out << "x_id,y_id,g\n";
    auto order = canonical_vertex_order(table);
    for (int y : order) {
        if (table.is_boundary(y)) continue;
        Vector col = column(y);
        for (int x : order)
            out << x << ',' << y << ',' << detail::format_double(col(x)) << '\n';
    }
    return out.str();
}

inline std::string spectrum_csv(const Vector& eigenvalues) {
    std::ostringstream out;
    out << "k,lambda\n";
    for (int k = 0; k < eigenvalues.size(); ++k)
        out << (k + 1) << ',' << detail::format_double(eigenvalues(k)) << '\n';
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot open " + path + " for writing");
    f << content;
}

/// Fractal spec file:
///   {"maps": [{"matrix": [[...]], "offset": [...]}, ...],
///    "resistance": [...], "measure": [...], "boundary": [...],
///    "conductances": [[...]] (optional level-0 network; default complete)}
inline PcfFractal fractal_from_json(const Json& j) {
    PcfFractal f;
    f.name = j.value("name", "custom");
    for (const auto& m : j.at("maps")) {
        ContractionMap cm;
        const auto& rows = m.at("matrix");
        int d = static_cast<int>(rows.size());
        cm.matrix = Matrix(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) cm.matrix(r, c) = rows[r][c].get<double>();
        cm.offset = Vector(d);
        for (int r = 0; r < d; ++r) cm.offset(r) = m.at("offset")[r].get<double>();
        f.maps.push_back(std::move(cm));
    }
    require(!f.maps.empty(), "fractal spec has no maps");
    f.ambient_dim = static_cast<int>(f.maps[0].offset.size());
    for (const auto& r : j.at("resistance")) f.resistance.push_back(r.get<double>());
    for (const auto& m : j.at("measure")) f.measure.push_back(m.get<double>());
    for (const auto& b : j.at("boundary")) f.boundary.push_back(b.get<int>());
    f.validate();
    return f;
}

inline Matrix conductances_from_json(const Json& j, int n0) {
    if (!j.contains("conductances")) return complete_graph_conductances(n0);
    const auto& rows = j.at("conductances");
    Matrix c(n0, n0);
    for (int r = 0; r < n0; ++r)
        for (int col = 0; col < n0; ++col) c(r, col) = rows[r][col].get<double>();
    return c;
}

inline PcfFractal load_fractal(const std::string& name_or_path) {
    if (name_or_path == "interval" || name_or_path == "sierpinski-gasket" ||
        name_or_path == "sg")
        return PcfFractal::builtin(name_or_path);
    std::ifstream in(name_or_path);
    require(in.good(), "cannot read fractal spec " + name_or_path);
    Json j = Json::parse(in);
    return fractal_from_json(j);
}

inline Word parse_word(const std::string& s, int num_maps) {
    Word w;
    for (char c : s) {
        int letter = c - '0';
        require(letter >= 0 && letter < num_maps, "bad cell word '" + s + "'");
        w.push_back(letter);
    }
    return w;
}

}  // namespace pcf
