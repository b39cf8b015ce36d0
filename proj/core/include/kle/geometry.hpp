#pragma once

#include <complex>
#include <string>
#include <vector>

#include "kle/errors.hpp"

namespace kle {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Sheet index of a point on the glued surface: kBaseSheet for the base copy
/// of D, j >= 0 for the copy reflected across slit j.
inline constexpr int kBaseSheet = -1;

/// A parallel slit half-plane H \ (C_1 u ... u C_N), encoded by the vector
/// s = (y_1..y_N, x^l_1..x^l_N, x^r_1..x^r_N) of slit endpoint coordinates.
///
/// Construction validates: y_j > 0, x_left_j < x_right_j, and slits sharing a
/// height must be disjoint. Degenerate input is rejected, never repaired.
/// Slit indices are positional and stable over time; flows never re-sort.
class SlitConfig {
  public:
    SlitConfig() = default; // N = 0: the half-plane itself

    SlitConfig(std::vector<double> y, std::vector<double> x_left,
               std::vector<double> x_right);

    int slit_count() const { return static_cast<int>(y_.size()); }

    const std::vector<double>& heights() const { return y_; }
    const std::vector<double>& lefts() const { return xl_; }
    const std::vector<double>& rights() const { return xr_; }

    double height(int j) const { return y_[j]; }
    Complex left_end(int j) const { return {xl_[j], y_[j]}; }
    Complex right_end(int j) const { return {xr_[j], y_[j]}; }
    Complex center(int j) const { return {0.5 * (xl_[j] + xr_[j]), y_[j]}; }
    double half_length(int j) const { return 0.5 * (xr_[j] - xl_[j]); }

    /// Membership in the open domain D(s): Im z > 0 and off every closed slit.
    bool contains(Complex z) const;

    /// eta_D = min{ Im z ; z in H \ D } = min_j y_j; +inf when N = 0.
    double eta() const;

    /// r_out = sup{ |z| ; z in H \ D }; 0 when N = 0.
    double r_out() const;

    /// l_D = (1/2) min_j ( slit length  ^  dist(C_j, dH u other slits) );
    /// +inf when N = 0.
    double l_half_gap() const;

    /// Euclidean distance from z to the union of the closed slits
    /// (+inf when N = 0).
    double slit_distance_from(Complex z) const;

    /// Distance from z to slit j alone.
    double distance_to_slit(Complex z, int j) const;

    /// As a flat vector s in R^{3N} (y's, then lefts, then rights).
    std::vector<double> as_vector() const;
    static SlitConfig from_vector(const std::vector<double>& s);

    std::string to_json() const;
    static SlitConfig from_json(const std::string& text);

    bool operator==(const SlitConfig& o) const {
        return y_ == o.y_ && xl_ == o.xl_ && xr_ == o.xr_;
    }

  private:
    std::vector<double> y_, xl_, xr_;
};

/// d_Slit(s, s~) = max_j ( |z^l_j - z~^l_j| + |z^r_j - z~^r_j| ).
/// Throws ConfigError when slit counts differ.
double slit_distance(const SlitConfig& a, const SlitConfig& b);

/// A point of the glued surface D^natural: a complex coordinate plus the
/// sheet it lives on.
struct SheetPoint {
    Complex z;
    int sheet = kBaseSheet;

    static SheetPoint base(Complex z) { return {z, kBaseSheet}; }
    static SheetPoint reflected(Complex z, int j) { return {z, j}; }
    bool on_base() const { return sheet == kBaseSheet; }
};

/// pr(p): forget the sheet.
inline Complex project(const SheetPoint& p) { return p.z; }

/// Mirror reflection across the horizontal line Im z = eta.
inline Complex mirror(Complex z, double eta) {
    return std::conj(z) + Complex(0.0, 2.0 * eta);
}

/// For a reflected-sheet point, the corresponding base-domain point
/// Pi_{y_j} pr(p); identity for base points. Throws on a bad sheet index.
Complex reflect(const SheetPoint& p, const SlitConfig& s);

enum class SlitEnd { left, right };

/// Square-root chart value around the chosen endpoint of slit j.
/// Branch convention: argument in (0, 2pi) on the base sheet and (-2pi, 0) on
/// the reflected sheet, measured from the outward direction of the slit, so
/// both edges land on the real axis of the chart and sq(endpoint) = 0.
/// Throws Error when pr(p) lies outside the chart ball of radius l_D.
Complex sq_coordinate(const SlitConfig& s, int j, SlitEnd end, const SheetPoint& p);

/// Inverse chart: w in the disk of radius sqrt(l_D) back to a sheet point.
SheetPoint sq_inverse(const SlitConfig& s, int j, SlitEnd end, Complex w);

} // namespace kle
