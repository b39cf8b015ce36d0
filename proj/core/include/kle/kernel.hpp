#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kle/geometry.hpp"

namespace kle {

/// Complex Poisson kernel of the half-plane, Psi_H(z, xi) = -1/(pi (z - xi)).
inline Complex psi_h(Complex z, double xi) {
    return -1.0 / (kPi * (z - xi));
}

/// K_H(z, xi) = Im Psi_H = (1/pi) y / ((x-xi)^2 + y^2).
inline double k_h(Complex z, double xi) { return psi_h(z, xi).imag(); }

/// Fitted expansion of the BMD complex Poisson kernel Psi_D(., xi):
///   Psi(z) = Psi_H(z, xi) + sum_{j,n} a_{jn} B_{jn}(z)
/// with the bounded slit modes of slit_basis.hpp. Im Psi vanishes on R by
/// construction and equals the fitted constant slit_levels[j] on slit j up
/// to `residual`. Immutable after construction; safe to share across threads.
struct KernelModel {
    SlitConfig config;
    double xi = 0.0;
    int degree = 0;            // modes per slit
    Eigen::MatrixXd coeffs;    // N x degree, real
    Eigen::VectorXd slit_levels;
    double residual = 0.0;     // max boundary defect at verification points
    int collocation_count = 0;

    std::string to_json() const;
    static KernelModel from_json(const std::string& text);
};

/// Evaluation of the model at a sheet point. Reflected-sheet values use
/// Psi(p) = conj(Psi(Pi_{y_j} pr p)) + 2i Im Psi(z^l_j).
/// Throws PoleProximity when |pr(p) - xi| < 1e-12.
Complex eval_psi(const KernelModel& m, const SheetPoint& p);
inline Complex eval_psi(const KernelModel& m, Complex z) {
    return eval_psi(m, SheetPoint::base(z));
}

/// K*_D(z, xi) = Im eval_psi.
double eval_kstar(const KernelModel& m, Complex z);

/// Collocation system for one configuration, factorized once and reused for
/// every pole location xi (only the right-hand side depends on xi).
class KernelWorkspace {
  public:
    explicit KernelWorkspace(SlitConfig config, int degree = 24,
                             int colloc_per_degree = 8);

    /// Solve for the coefficients at pole xi; verifies the boundary defect
    /// on a disjoint endpoint-clustered point set. Throws ResidualExceeded
    /// when the defect exceeds tol (pass tol <= 0 to skip the check).
    KernelModel build(double xi, double tol = 1e-8) const;

    const SlitConfig& config() const { return config_; }
    int degree() const { return degree_; }
    int collocation_count() const { return static_cast<int>(colloc_.size()); }

  private:
    SlitConfig config_;
    int degree_;
    std::vector<Complex> colloc_;
    std::vector<int> colloc_slit_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    std::vector<Complex> verify_;
    std::vector<int> verify_slit_;
    Eigen::MatrixXd verify_modes_; // Im-trace of modes at verification points
};

KernelModel build_kernel(const SlitConfig& s, double xi, int degree = 24,
                         double tol = 1e-8);

struct ResidueEstimate {
    Complex value;
    double error = 0.0; // extrapolation error bar
};

/// Richardson-extrapolated estimate of lim z Psi(z, xi) along z = iy for the
/// given radius ladder (ascending). Throws NonConvergent when the ladder
/// does not contract.
ResidueEstimate residue_at_infinity(const KernelModel& m,
                                    const std::vector<double>& radius_ladder);

struct KoebeReport {
    double worst_ratio = 0.0; // max |Psi| (|z-xi| ^ dist(xi, slits)) pi/4
    Complex witness_z;
    int samples = 0;
    bool violated = false; // worst_ratio > 1 + slack
};

/// Empirical check of the Koebe-type bound over random sample points in D.
KoebeReport koebe_bound_check(const KernelModel& m, int samples,
                              std::uint64_t seed = 1,
                              double slack = 1e-6);

/// Cache of workspaces and solved models keyed by (config, xi, degree).
class KernelCache {
  public:
    std::shared_ptr<const KernelWorkspace> workspace(const SlitConfig& s,
                                                     int degree);
    const KernelModel& model(const SlitConfig& s, double xi, int degree = 24,
                             double tol = 1e-8);
    void clear();

  private:
    struct Entry {
        std::shared_ptr<const KernelWorkspace> ws;
        std::unordered_map<double, KernelModel> models;
    };
    std::unordered_map<std::string, Entry> entries_;
};

} // namespace kle
