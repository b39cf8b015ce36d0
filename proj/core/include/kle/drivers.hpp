#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kle/measure.hpp"

namespace kle {

/// Specification of a measure-valued driving process t -> nu_t with
/// nu_t(R) <= 1.
struct DriverSpec {
    enum class Kind { zero, dirac, multi_dirac, density, brownian, dyson };

    Kind kind = Kind::zero;

    // dirac / multi_dirac: initial locations and (constant) weights; optional
    // explicit paths sampled on the spec's own knots.
    std::vector<double> xi0;
    std::vector<double> weights; // empty: equal weights summing to 1
    // optional prescribed paths: knots x atoms (row per knot time)
    std::vector<double> path_times;
    std::vector<std::vector<double>> path_values;

    // density: grid plus one row of values per path knot (a single row means
    // a measure constant in time)
    std::vector<double> density_grid;
    std::vector<std::vector<double>> density_values;

    // brownian / dyson
    double kappa = 0.0;
    std::uint64_t seed = 0;
    double spread = 1.0; // dyson initial spacing

    double total_mass = 1.0; // mass carried by nu_t (must be <= 1)

    static DriverSpec zero() { return {}; }
    static DriverSpec dirac_const(double xi);
    static DriverSpec dirac_path(std::vector<double> times, std::vector<double> xis);
    static DriverSpec multi_dirac(std::vector<double> xis, std::vector<double> weights = {});
    static DriverSpec density_const(std::vector<double> grid, std::vector<double> values);
    static DriverSpec brownian(double kappa, std::uint64_t seed, double xi0);
    static DriverSpec dyson(int n, std::uint64_t seed, double spread);

    std::string to_json() const;
    static DriverSpec from_json(const std::string& text);
};

/// A realized driving process on a time grid. Atom locations interpolate
/// linearly between knots; weights are piecewise constant. Immutable.
class DrivingProcess {
  public:
    DrivingProcess() = default;

    const std::vector<double>& times() const { return times_; }
    int atom_count() const { return static_cast<int>(paths_.size()); }
    const std::vector<std::vector<double>>& atom_paths() const { return paths_; }

    BoundaryMeasure measure_at(double t) const;

    /// Tight bound max_t sup |supp nu_t| over the realization.
    double support_bound() const { return support_bound_; }

    double horizon() const { return times_.empty() ? 0.0 : times_.back(); }

    const std::string& id() const { return id_; }

    std::string to_json() const;
    void write_csv(std::ostream& os) const;

    friend DrivingProcess sample(const DriverSpec&, const std::vector<double>&);

  private:
    std::vector<double> times_;
    std::vector<std::vector<double>> paths_;   // per atom: location per knot
    std::vector<std::vector<double>> weights_; // per atom: weight per knot
    std::vector<double> density_grid_;
    std::vector<std::vector<double>> density_values_; // per knot (or single row)
    double support_bound_ = 0.0;
    std::string id_;
};

/// Realize a driver spec on a time grid. Deterministic given the seed;
/// throws CollisionUnderflow when a dyson sample collides.
DrivingProcess sample(const DriverSpec& spec, const std::vector<double>& grid);

/// Convenience uniform grid 0..T with n intervals.
std::vector<double> uniform_grid(double T, int n);

double support_bound(const DrivingProcess& p);

} // namespace kle
