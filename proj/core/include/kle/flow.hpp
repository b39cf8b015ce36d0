#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kle/drivers.hpp"
#include "kle/geometry.hpp"
#include "kle/kernel.hpp"
#include "kle/measure.hpp"

namespace kle {

struct SolveOptions {
    double dt_init = 1e-3;
    double dt_min = 1e-12;
    double rtol = 1e-8;
    double atol = 1e-10;
    double max_dt = 0.0; // 0: uncapped
    int kernel_degree = 24;
    /// Endpoint chart switch radius in the plane; < 0 selects
    /// min(l_D/4, 0.1) from the initial configuration.
    double guard_radius = -1.0;
    /// Reversed-flow absorption floor for slit heights.
    double y_floor = 1e-3;
    /// Height below which a tracked point counts as hitting dH.
    double boundary_floor = 1e-6;
    /// Kernel factorization is reused while the configuration stays within
    /// this slit distance of the last build; 0 refactors at every stage.
    double rebuild_tol = 1e-3;
    int max_steps = 2000000;
};

enum class Direction { forward, reversed };
enum class PointFate { alive, boundary_hit, slit_contact };

struct Absorption {
    int slit;
    double time;
};

struct TrackedSample {
    Complex z;    // plane position, pr(p)
    int sheet;    // kBaseSheet or reflected slit index
    bool alive;
};

/// Time series of a measure-driven Komatu-Loewner run: configurations s(t),
/// tracked sheet points, lambda(t) = 2t, plus the driver for replay.
/// Immutable once produced by a solver.
class FlowTrajectory {
  public:
    const std::vector<double>& times() const { return times_; }
    std::size_t steps() const { return times_.size(); }
    double horizon() const { return times_.empty() ? 0.0 : times_.back(); }
    double start_time() const { return times_.empty() ? 0.0 : times_.front(); }

    Direction direction() const { return direction_; }
    const DrivingProcess& driver() const { return driver_; }
    const std::string& driver_id() const { return driver_.id(); }
    double lambda(double t) const { return 2.0 * t; }

    const SlitConfig& initial_config() const { return configs_.front(); }
    const SlitConfig& config(std::size_t k) const { return configs_[k]; }
    const SlitConfig& final_config() const { return configs_.back(); }
    /// Cubic-Hermite interpolation of the slit vector between records.
    SlitConfig config_at(double t) const;

    int tracked_count() const { return static_cast<int>(points_.size()); }
    const std::vector<TrackedSample>& track(int i) const { return points_[i]; }
    TrackedSample final_sample(int i) const { return points_[i].back(); }
    PointFate fate(int i) const { return fates_[i]; }
    bool alive(int i) const { return fates_[i] == PointFate::alive; }

    std::optional<Absorption> absorption() const { return absorption_; }

    std::string to_json() const;
    /// One row per time per tracked point: t, re, im, sheet, alive.
    void write_csv(std::ostream& os) const;

  private:
    friend class FlowStepper;
    std::vector<double> times_;
    std::vector<SlitConfig> configs_;
    std::vector<Eigen::VectorXd> config_deriv_; // ds/dt at each record
    std::vector<std::vector<TrackedSample>> points_;
    std::vector<PointFate> fates_;
    Direction direction_ = Direction::forward;
    DrivingProcess driver_;
    std::optional<Absorption> absorption_;
};

/// b(nu, s): heights pi int Im Psi(z^l_k, xi) nu(dxi), then left/right
/// abscissa components pi int Re Psi at the endpoints. First N entries >= 0.
Eigen::VectorXd slit_ode_rhs(const BoundaryMeasure& nu, const SlitConfig& s,
                             int degree = 24);

/// Chart vector field dw/dt for a tracked point in the sq-chart of the given
/// endpoint: +/- pi H^{e,j}(t, w) with H from the Cauchy integral of the
/// endpoint-normalized kernel average. Exposed for the overlap tests.
Complex chart_vector_field(const SlitConfig& s, const BoundaryMeasure& nu,
                           int degree, int slit, SlitEnd end, Complex w,
                           Direction dir);

/// One-step driver around the coupled adaptive RK step; operations
/// advance() and near_endpoint_step() of the flow act through this object.
class FlowStepper {
  public:
    FlowStepper(const SlitConfig& s0, DrivingProcess driver,
                const std::vector<SheetPoint>& tracked, Direction dir,
                const SolveOptions& opts, double t_start = 0.0);
    ~FlowStepper();
    FlowStepper(FlowStepper&&) noexcept;

    /// One accepted adaptive step (slits and all live points together).
    /// Returns false when the run has finished (horizon or absorption).
    bool advance(double t_end);

    double time() const;
    const SlitConfig& config() const;
    std::vector<SheetPoint> points() const;
    FlowTrajectory finish() &&;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

FlowTrajectory solve_forward(const SlitConfig& s0, const DrivingProcess& driver,
                             const std::vector<SheetPoint>& tracked, double T,
                             const SolveOptions& opts = {});

/// Forward solve on the window [t0, t1] (driver consumed at absolute time).
FlowTrajectory solve_forward_window(const SlitConfig& s_at_t0,
                                    const DrivingProcess& driver,
                                    const std::vector<SheetPoint>& tracked,
                                    double t0, double t1,
                                    const SolveOptions& opts = {});

/// Mapping-out style flow: dg/dt = -2 pi int Psi dnu, ds/dt = -2b. Tracked
/// points may die at dH; stops with Absorption when a height reaches y_floor.
FlowTrajectory solve_reversed(const SlitConfig& s0, const DrivingProcess& driver,
                              const std::vector<SheetPoint>& tracked, double T,
                              const SolveOptions& opts = {});

struct BackwardResult {
    Complex value;            // w(t0) when the path survives
    bool boundary_hit = false;
    double hit_time = 0.0;    // tilde tau when boundary_hit
};

/// Integrate the backward equation dw/dt = -2 pi int Psi_{s(t0-t)}(w, xi)
/// nu_{t0-t}(dxi) from w(0) = z0 over [0, t0], reading s(.) and the driver
/// from a forward trajectory.
BackwardResult solve_backward(const FlowTrajectory& traj, Complex z0, double t0,
                              const SolveOptions& opts = {});

/// Batch form sharing one adaptive integration.
std::vector<BackwardResult> solve_backward(const FlowTrajectory& traj,
                                           const std::vector<Complex>& z0,
                                           double t0,
                                           const SolveOptions& opts = {});

struct TraceEstimate {
    Complex tip;
    double error;
};

/// Tip of the hull of a reversed (Dirac-driven) run at time t: the inverse
/// map evaluated at xi(t) + i eps, extrapolated down the eps ladder.
TraceEstimate trace_point(const FlowTrajectory& traj, double t,
                          const std::vector<double>& eps_ladder,
                          const SolveOptions& opts = {});

struct EvolutionFamilyReport {
    double semigroup_defect = 0.0;    // worst |phi_{u,s} - phi_{u,t} o phi_{t,s}|
    double lipschitz_margin = 0.0;    // worst ratio * eta / 12 (<= 1 passes)
    bool heights_monotone = true;
    bool tracked_im_monotone = true;
    double worst_height_backstep = 0.0;
    double worst_im_backstep = 0.0;
    bool pass(double semigroup_tol = 1e-5) const {
        return semigroup_defect <= semigroup_tol && lipschitz_margin <= 1.0 + 1e-9 &&
               heights_monotone && tracked_im_monotone;
    }
};

/// Measured evolution-family structure of a forward trajectory: semigroup
/// defect on random triples, the 12/eta Lipschitz ratio, monotonicity.
EvolutionFamilyReport evolution_family_report(const FlowTrajectory& traj,
                                              int n_triples = 6,
                                              std::uint64_t seed = 7,
                                              const SolveOptions& opts = {});

} // namespace kle
