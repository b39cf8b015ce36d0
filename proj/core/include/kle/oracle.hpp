#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "kle/geometry.hpp"

namespace kle {

struct McEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    int paths = 0;
};

/// P_z(hit C_j before dH) by walk-on-spheres with a slit capture band of
/// capture_scale * eta_D (the O(capture) bias is checked by band
/// refinement in the tests). Deterministic given the seed, also under
/// threading.
McEstimate hit_probability(const SlitConfig& s, Complex z, int j, int n_paths,
                           std::uint64_t rng_seed, int threads = 1,
                           double capture_scale = 1e-4);

/// G_D(z, w) = G_H(z, w) - E_z[G_H(B_sigma, w); sigma < infinity], the
/// hitting position sampled by the same walk.
McEstimate mc_green(const SlitConfig& s, Complex z, Complex w, int n_paths,
                    std::uint64_t rng_seed, int threads = 1,
                    double capture_scale = 1e-4);

struct FdGrid {
    double L = 24.0; // truncation half-width
    double H = 12.0; // truncation height
    double h = 0.05; // spacing; slit heights must sit on grid rows
};

/// Discrete BMD-harmonic field: 5-point Laplacian with every slit collapsed
/// to one unknown under a zero-net-flux (darning) row; Dirichlet boundary
/// data g on the bottom edge and the half-plane Poisson extension of g on
/// the far sides and top (analytic tail correction).
class FdField {
  public:
    double eval(Complex z) const;
    double slit_value(int j) const;
    /// Per-slit net discrete flux (a machine-precision zero by construction).
    double darning_flux(int j) const;
    const FdGrid& grid() const { return grid_; }
    void write_csv(std::ostream& os, int stride = 1) const;

  private:
    friend class FdSolver;
    FdGrid grid_;
    int nx_ = 0, ny_ = 0;
    Eigen::VectorXd u_;
    std::vector<double> slit_values_;
    std::vector<double> darning_flux_;
    std::shared_ptr<const void> layout_; // opaque index map
};

/// Factorizes the darned Laplacian once; solves per boundary datum.
/// `frame` supplies the Dirichlet values on the far sides and top (the
/// half-plane Poisson extension of g); when absent it is computed by
/// adaptive quadrature of g against K_H.
class FdSolver {
  public:
    FdSolver(const SlitConfig& s, const FdGrid& grid);
    ~FdSolver();
    FdSolver(FdSolver&&) noexcept;

    FdField solve(const std::function<double(double)>& g,
                  const std::function<double(Complex)>& frame = {}) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Exact half-plane Poisson integral of a boxcar: int_a^b K_H(z, t) dt.
double poisson_h_boxcar(Complex z, double a, double b);

/// Exact average of the boxcar 1_[a,b] over the grid cell centered at x.
double boxcar_cell_average(double x, double h, double a, double b);

FdField fd_bmd_solve(const SlitConfig& s, const std::function<double(double)>& g,
                     const FdGrid& grid);

/// K*(z, xi0) by narrow-boxcar data with Richardson in the boxcar width and
/// in the grid spacing (tip bias of the discrete slit is first order).
double fd_kstar(const SlitConfig& s, Complex z, double xi0, const FdGrid& grid,
                double width = 0.4);

/// FD estimate of the period matrix from the discrete flux of the classical
/// harmonic basis around each slit.
Eigen::MatrixXd fd_flux_period(const SlitConfig& s, const FdGrid& grid);

} // namespace kle
