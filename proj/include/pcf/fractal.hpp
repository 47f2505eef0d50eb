#pragma once

#include "pcf/common.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <utility>

namespace pcf {

/// Affine contraction x |-> Ax + b on R^d.
struct ContractionMap {
    Matrix matrix;
    Vector offset;

    Vector apply(const Vector& x) const { return matrix * x + offset; }

    Vector inverse_apply(const Vector& y) const {
        return matrix.fullPivLu().solve(y - offset);
    }

    double operator_norm() const {
        Eigen::JacobiSVD<Matrix> svd(matrix);
        return svd.singularValues()(0);
    }

    /// Fixed point of the map, q = (I - A)^{-1} b.
    Vector fixed_point() const {
        Matrix I = Matrix::Identity(matrix.rows(), matrix.cols());
        return (I - matrix).fullPivLu().solve(offset);
    }

    static ContractionMap compose(const ContractionMap& f, const ContractionMap& g) {
        // (f o g)(x) = A_f A_g x + A_f b_g + b_f
        return ContractionMap{f.matrix * g.matrix, f.matrix * g.offset + f.offset};
    }
};

/// Word over the alphabet of map indices {0..N-1}; addresses an m-cell F_w(X).
using Word = std::vector<int>;

/// A p.c.f. self-similar fractal: IFS maps, regular harmonic structure
/// factors r_j, self-similar measure weights mu_j, and the boundary given as
/// the indices j for which q_j = fix(F_j) is a boundary point of X.
struct PcfFractal {
    std::string name;
    std::vector<ContractionMap> maps;
    std::vector<double> resistance;  // r_j in (0,1)
    std::vector<double> measure;     // mu_j in (0,1), sum 1
    std::vector<int> boundary;       // map indices whose fixed points form V_0
    int ambient_dim = 1;

    int num_maps() const { return static_cast<int>(maps.size()); }
    int num_boundary() const { return static_cast<int>(boundary.size()); }

    Vector boundary_point(int b) const { return maps[boundary[b]].fixed_point(); }

    void validate() const {
        const int n = num_maps();
        if (n < 2) throw InvalidFractalSpec("need at least two maps");
        if (static_cast<int>(resistance.size()) != n || static_cast<int>(measure.size()) != n)
            throw InvalidFractalSpec("resistance/measure length must match map count");
        if (num_boundary() < 2)
            throw InvalidFractalSpec("boundary must contain at least two points");
        double mu_sum = std::accumulate(measure.begin(), measure.end(), 0.0);
        if (std::abs(mu_sum - 1.0) > 1e-12)
            throw InvalidFractalSpec("measure weights must sum to 1");
        for (int j = 0; j < n; ++j) {
            if (!(resistance[j] > 0.0 && resistance[j] < 1.0))
                throw InvalidFractalSpec("resistance factors must lie in (0,1)");
            if (!(measure[j] > 0.0 && measure[j] < 1.0))
                throw InvalidFractalSpec("measure weights must lie in (0,1)");
            if (maps[j].operator_norm() >= 1.0 - 1e-12)
                throw InvalidFractalSpec("map " + std::to_string(j) + " is not a contraction");
        }
        for (int b : boundary)
            if (b < 0 || b >= n) throw InvalidFractalSpec("boundary index out of range");
    }

    double resistance_weight(const Word& w) const {
        double r = 1.0;
        for (int l : w) r *= resistance[l];
        return r;
    }

    double measure_weight(const Word& w) const {
        double mu = 1.0;
        for (int l : w) mu *= measure[l];
        return mu;
    }

    /// F_w = F_{w_1} o ... o F_{w_m}.
    ContractionMap compose_word(const Word& w) const {
        require(!w.empty(), "compose_word: empty word");
        ContractionMap f = maps[w[0]];
        for (size_t i = 1; i < w.size(); ++i) f = ContractionMap::compose(f, maps[w[i]]);
        return f;
    }

    /// Unit interval as a p.c.f. set: F_0 = x/2, F_1 = (x+1)/2, r_j = mu_j = 1/2.
    static PcfFractal interval() {
        PcfFractal f;
        f.name = "interval";
        f.ambient_dim = 1;
        Matrix half(1, 1);
        half << 0.5;
        Vector zero(1), offs(1);
        zero << 0.0;
        offs << 0.5;
        f.maps = {ContractionMap{half, zero}, ContractionMap{half, offs}};
        f.resistance = {0.5, 0.5};
        f.measure = {0.5, 0.5};
        f.boundary = {0, 1};
        f.validate();
        return f;
    }

    /// Sierpinski gasket with the symmetric measure; r_j = 3/5 for the
    /// standard harmonic structure (accepted by the renormalization check).
    static PcfFractal sierpinski_gasket() {
        PcfFractal f;
        f.name = "sierpinski-gasket";
        f.ambient_dim = 2;
        Matrix half = 0.5 * Matrix::Identity(2, 2);
        std::vector<Vector> corners(3, Vector(2));
        corners[0] << 0.0, 0.0;
        corners[1] << 1.0, 0.0;
        corners[2] << 0.5, std::sqrt(3.0) / 2.0;
        for (const auto& q : corners) f.maps.push_back(ContractionMap{half, 0.5 * q});
        f.resistance = {0.6, 0.6, 0.6};
        f.measure = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        f.boundary = {0, 1, 2};
        f.validate();
        return f;
    }

    static PcfFractal builtin(const std::string& which) {
        if (which == "interval") return interval();
        if (which == "sierpinski-gasket" || which == "sg") return sierpinski_gasket();
        throw InvalidFractalSpec("unknown builtin fractal '" + which + "'");
    }
};

/// cell_of_word: composed map plus the exact weight products.
struct CellData {
    ContractionMap map;
    double measure;
    double resistance;
};

inline CellData cell_of_word(const PcfFractal& fractal, const Word& w) {
    return CellData{fractal.compose_word(w), fractal.measure_weight(w),
                    fractal.resistance_weight(w)};
}

}  // namespace pcf
