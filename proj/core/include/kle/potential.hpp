#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "kle/geometry.hpp"

namespace kle {

/// (1/pi) log |(z - conj w)/(z - w)|. Throws on coincident points.
double green_h(Complex z, Complex w);

/// A mirror-symmetrized charge layer on the slits: per slit a Chebyshev
/// density rho(t) = sum_n alpha_n T_n(t)/sqrt(1-t^2), every charge paired
/// with its image below R with opposite sign, so the potential vanishes on
/// the real axis identically.
struct ChargeLayer {
    SlitConfig config;
    std::vector<Eigen::VectorXd> modal;     // per slit: alpha_0..alpha_{M-1}
    std::vector<std::vector<double>> nodes; // Chebyshev abscissas on each slit
    std::vector<std::vector<double>> densities; // sqrt-weighted density at nodes
    bool mirror_images = true;
    double residual = 0.0;

    double eval(Complex z) const;
    /// Net charge carried on slit j (= pi * alpha_{j,0}).
    double total_charge(int j) const { return kPi * modal[j](0); }
    /// Debug dump (nodes, densities, modal coefficients, residual).
    std::string to_json() const;
};

/// Shared collocation/QR backend for layer solves on one configuration.
class PotentialWorkspace {
  public:
    explicit PotentialWorkspace(SlitConfig config, int degree = 32,
                                int colloc_per_degree = 4);

    /// Solve for the layer matching data(j, x) on slit j at abscissa x.
    ChargeLayer solve(const std::function<double(int, double)>& data) const;

    const SlitConfig& config() const { return config_; }
    int degree() const { return degree_; }

  private:
    SlitConfig config_;
    int degree_;
    std::vector<double> colloc_x_;
    std::vector<int> colloc_slit_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::MatrixXd matrix_;
};

/// Layer whose potential matches G_H(., w) on the slits;
/// G_D(z, w) = green_h(z, w) - layer.eval(z).
ChargeLayer solve_green(const SlitConfig& s, Complex w, int degree = 32);

double green_d(const SlitConfig& s, Complex z, Complex w, const ChargeLayer& layer);

/// phi_j = hitting probability of slit j before dH; layers with boundary
/// data 1 on C_j and 0 on the other slits.
std::vector<ChargeLayer> harmonic_basis(const SlitConfig& s, int degree = 32);

/// Period matrix A_D: a_ij = 2 x (total charge of phi_j's layer on slit i,
/// image charge counted). Throws IllConditioned when singular.
Eigen::MatrixXd period_matrix(const SlitConfig& s,
                              const std::vector<ChargeLayer>& basis);

/// G*_D(z, w) = G_D(z, w) + 2 Phi(z) A^{-1} Phi(w)^T.
double green_star(const SlitConfig& s, Complex z, Complex w,
                  const std::vector<ChargeLayer>& basis,
                  const Eigen::MatrixXd& period);

/// Convenience bundle: harmonic basis, period matrix and a reusable
/// workspace for per-w Green solves.
class PotentialSystem {
  public:
    explicit PotentialSystem(SlitConfig config, int degree = 32);

    double green(Complex z, Complex w) const;      // G_D
    double green_star(Complex z, Complex w) const; // G*_D
    double phi(int j, Complex z) const;
    const Eigen::MatrixXd& period() const { return period_; }

    /// K*(z, xi) = -1/2 d G*/d n_xi via the h-ladder G*(z, xi+ih)/(2h)
    /// with two-stage Richardson in h^2. Throws NonConvergent.
    double kstar(Complex z, double xi, const std::vector<double>& h_ladder = {}) const;

    const SlitConfig& config() const { return ws_.config(); }

  private:
    PotentialWorkspace ws_;
    std::vector<ChargeLayer> basis_;
    Eigen::MatrixXd period_;
    Eigen::MatrixXd period_inv_;
};

/// One-shot convenience wrapper around PotentialSystem::kstar with the
/// ladder {h, h/2, h/4}.
double kstar_via_green(const SlitConfig& s, Complex z, double xi, double h);

} // namespace kle
