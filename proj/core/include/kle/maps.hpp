#pragma once

#include <functional>
#include <vector>

#include "kle/geometry.hpp"
#include "kle/kernel.hpp"
#include "kle/measure.hpp"

namespace kle {

/// A hydrodynamically normalized map evaluated at base-plane points.
using MapEvaluator = std::function<Complex(Complex)>;

/// f(p) = pr(p) + pi int Psi_D(p, xi) mu(dxi), sheet-extended.
Complex apply_integral_rep(const SlitConfig& s, const BoundaryMeasure& mu,
                           const SheetPoint& p, KernelCache& cache,
                           int degree = 24);

/// Evaluator form of the integral representation (base sheet).
MapEvaluator integral_rep_map(const SlitConfig& s, BoundaryMeasure mu,
                              KernelCache& cache, int degree = 24);

/// c = -lim z (f(z) - z) inside sectors: extrapolated along three rays of
/// the sector Delta_theta over the radius ladder, with an error bar from the
/// extrapolation spread. Throws NonConvergent.
ResidueEstimate angular_residue(const MapEvaluator& f, double theta,
                                const std::vector<double>& radius_ladder);

struct RecoverOptions {
    std::vector<double> eps_ladder = {1e-2, 5e-3, 2.5e-3};
    double clip_negative = 1e-8; // tolerate fitted dips below zero up to this
};

struct RecoveredMeasure {
    BoundaryMeasure measure;
    std::vector<bool> converged; // per grid node
    double max_correction = 0.0; // last extrapolation update, worst node
};

/// mu(dxi) = pi^{-1} Im f(xi) dxi recovered from boundary values along the
/// epsilon ladder, node by node. Atoms are not searched for: maps satisfying
/// the standing assumptions have absolutely continuous boundary measure.
RecoveredMeasure recover_measure(const MapEvaluator& f, const SlitConfig& s,
                                 const std::vector<double>& grid,
                                 const RecoverOptions& opts = {});

/// lim_{y->0} int int_a^b K*(x+iy, xi) dx mu(dxi); equals
/// mu((a,b)) + (mu({a}) + mu({b}))/2. The K_H part of the inner integral is
/// evaluated in closed form, the slit correction by panel Gauss quadrature.
double stieltjes_inversion(const SlitConfig& s, const BoundaryMeasure& mu,
                           double a, double b,
                           const std::vector<double>& y_ladder,
                           KernelCache& cache, int degree = 24);

} // namespace kle
