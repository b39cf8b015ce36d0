#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kle/geometry.hpp"

namespace kle {

/// A finite Borel measure on R: point atoms plus a sampled density with
/// trapezoid quadrature weights on its grid. Masses and density values must
/// be nonnegative.
class BoundaryMeasure {
  public:
    struct Atom {
        double xi;
        double mass;
    };

    BoundaryMeasure() = default;

    static BoundaryMeasure atoms(std::vector<Atom> atoms);
    static BoundaryMeasure density(std::vector<double> grid,
                                   std::vector<double> values);
    static BoundaryMeasure mixed(std::vector<Atom> atoms,
                                 std::vector<double> grid,
                                 std::vector<double> values);

    static BoundaryMeasure dirac(double xi, double mass = 1.0) {
        return atoms({{xi, mass}});
    }

    const std::vector<Atom>& atom_list() const { return atoms_; }
    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& density_values() const { return values_; }
    const std::vector<double>& weights() const { return weights_; }

    double total_mass() const { return total_mass_; }
    /// sup of |xi| over the support (atoms and grid points with mass).
    double support_bound() const { return support_bound_; }
    bool empty() const { return total_mass_ == 0.0; }

    /// Integrate f against the measure: atoms summed exactly, density by
    /// the measure's own quadrature weights.
    template <typename F>
    auto integrate(F&& f) const -> decltype(f(0.0)) {
        using R = decltype(f(0.0));
        R acc{};
        for (const auto& a : atoms_) acc += a.mass * f(a.xi);
        for (std::size_t i = 0; i < grid_.size(); ++i)
            if (weights_[i] * values_[i] != 0.0)
                acc += weights_[i] * values_[i] * f(grid_[i]);
        return acc;
    }

    /// Visit the discrete nodes (location, mass) of the quadrature.
    void for_each_node(const std::function<void(double, double)>& f) const;

    /// Restricted mass of the open interval (a, b) plus half the atoms at
    /// the endpoints (the Stieltjes limit value).
    double stieltjes_mass(double a, double b) const;

    std::string to_json() const;
    static BoundaryMeasure from_json(const std::string& text);

  private:
    void finalize();

    std::vector<Atom> atoms_;
    std::vector<double> grid_, values_, weights_;
    double total_mass_ = 0.0;
    double support_bound_ = 0.0;
};

} // namespace kle
