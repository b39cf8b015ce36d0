#include "kle/flow.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "kle/errors.hpp"
#include "kle/rng.hpp"
#include "kle/slit_basis.hpp"

namespace kle {

namespace {

// Dormand-Prince 5(4) pair.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
constexpr double kB5[7] = {35.0 / 384,      0.0,          500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84,    0.0};
constexpr double kB4[7] = {5179.0 / 57600,   0.0,        7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

struct NuNode {
    double xi;
    double mass;
};

std::vector<NuNode> measure_nodes(const BoundaryMeasure& nu) {
    std::vector<NuNode> nodes;
    nu.for_each_node([&](double xi, double mass) {
        if (mass != 0.0) nodes.push_back({xi, mass});
    });
    return nodes;
}

// Endpoint-normalized kernel average in the chart: Psi^{e,j}[nu](zeta) with
// zeta a chart coordinate, evaluated through the sheet structure.
Complex chart_numerator(const SlitConfig& s, const std::vector<KernelModel>& models,
                        const std::vector<NuNode>& nodes, int j, SlitEnd end,
                        Complex zeta) {
    const SheetPoint p = sq_inverse(s, j, end, zeta);
    const Complex ze = (end == SlitEnd::left) ? s.left_end(j) : s.right_end(j);
    Complex acc = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const Complex a = eval_psi(models[k], p);
        const Complex b = eval_psi(models[k], SheetPoint::base(ze));
        acc += nodes[k].mass * (a - b);
    }
    return acc;
}

// H^{e,j}(w) by the Cauchy integral over a chart circle of radius rc.
// Nodes are shifted half a step so none lands exactly on a slit edge, where
// the square-root branch of the plain evaluation is ambiguous.
Complex chart_h(const SlitConfig& s, const std::vector<KernelModel>& models,
                const std::vector<NuNode>& nodes, int j, SlitEnd end, Complex w,
                double rc) {
    constexpr int K = 64;
    Complex acc = 0.0;
    for (int m = 0; m < K; ++m) {
        const double th = 2.0 * kPi * (m + 0.5) / K;
        const Complex zeta = rc * std::exp(Complex(0.0, th));
        acc += chart_numerator(s, models, nodes, j, end, zeta) / (zeta - w);
    }
    return acc / static_cast<double>(K);
}

struct PointRep {
    bool chart = false;
    int slit = -1;
    SlitEnd end = SlitEnd::left;
    int sheet = kBaseSheet; // plane-mode sheet
    PointFate fate = PointFate::alive;
    double death_time = 0.0;
};

} // namespace

Eigen::VectorXd slit_ode_rhs(const BoundaryMeasure& nu, const SlitConfig& s,
                             int degree) {
    const int N = s.slit_count();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(3 * N);
    if (N == 0 || nu.empty()) return b;
    KernelWorkspace ws(s, degree);
    nu.for_each_node([&](double xi, double mass) {
        if (mass == 0.0) return;
        const KernelModel m = ws.build(xi, -1.0);
        for (int j = 0; j < N; ++j) {
            b(j) += kPi * mass * m.slit_levels(j);
            b(N + j) += kPi * mass * eval_psi(m, SheetPoint::base(s.left_end(j))).real();
            b(2 * N + j) += kPi * mass * eval_psi(m, SheetPoint::base(s.right_end(j))).real();
        }
    });
    return b;
}

Complex chart_vector_field(const SlitConfig& s, const BoundaryMeasure& nu,
                           int degree, int slit, SlitEnd end, Complex w,
                           Direction dir) {
    const auto nodes = measure_nodes(nu);
    KernelWorkspace ws(s, degree);
    std::vector<KernelModel> models;
    models.reserve(nodes.size());
    for (const auto& n : nodes) models.push_back(ws.build(n.xi, -1.0));
    const double rc = std::sqrt(0.75 * std::min(s.l_half_gap(), 1.0));
    const Complex H = chart_h(s, models, nodes, slit, end, w, rc);
    const double sigma = (dir == Direction::forward) ? 1.0 : -1.0;
    const double endsign = (end == SlitEnd::left) ? 1.0 : -1.0;
    return sigma * endsign * kPi * H;
}

// ---------------------------------------------------------------------------

struct FlowStepper::Impl {
    SolveOptions opts;
    Direction dir;
    DrivingProcess driver;
    double t;
    double dt;
    int n_slits;
    Eigen::VectorXd svec;
    std::vector<PointRep> reps;
    std::vector<Complex> coords;
    FlowTrajectory traj;
    std::unique_ptr<KernelWorkspace> ws;
    SlitConfig ws_config;
    bool done = false;
    long long steps_taken = 0;
    // FSAL: derivative at the accepted state (stage 7 of the last attempt)
    bool have_fsal = false;
    Eigen::VectorXd fsal_ds;
    std::vector<Complex> fsal_dp;

    double sigma() const { return dir == Direction::forward ? 1.0 : -1.0; }

    SlitConfig make_config(const Eigen::VectorXd& s) const {
        std::vector<double> v(s.data(), s.data() + s.size());
        return SlitConfig::from_vector(v);
    }

    void ensure_workspace(const SlitConfig& cfg) {
        if (ws && ws_config.slit_count() == cfg.slit_count()) {
            if (opts.rebuild_tol > 0.0 &&
                slit_distance(cfg, ws_config) <= opts.rebuild_tol)
                return;
        }
        ws = std::make_unique<KernelWorkspace>(cfg, opts.kernel_degree);
        ws_config = cfg;
    }

    double guard(const SlitConfig& cfg) const {
        const double auto_g = std::min(cfg.l_half_gap() / 4.0, 0.1);
        return opts.guard_radius > 0.0 ? std::min(opts.guard_radius, auto_g)
                                       : auto_g;
    }

    // Derivative of the packed state. Returns false when the configuration
    // leaves the admissible set (caller treats the attempt as rejected).
    bool rhs(double tt, const Eigen::VectorXd& s,
             const std::vector<Complex>& pts, Eigen::VectorXd& ds,
             std::vector<Complex>& dp) {
        SlitConfig cfg;
        try {
            cfg = make_config(s);
        } catch (const ConfigError&) {
            return false;
        }
        ensure_workspace(cfg);
        const BoundaryMeasure nu = driver.measure_at(tt);
        const auto nodes = measure_nodes(nu);
        std::vector<KernelModel> models;
        models.reserve(nodes.size());
        for (const auto& n : nodes) models.push_back(ws->build(n.xi, -1.0));

        const int N = n_slits;
        ds.setZero(3 * N);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            for (int j = 0; j < N; ++j) {
                ds(j) += kPi * nodes[k].mass * models[k].slit_levels(j);
                ds(N + j) += kPi * nodes[k].mass *
                             eval_psi(models[k], SheetPoint::base(cfg.left_end(j))).real();
                ds(2 * N + j) += kPi * nodes[k].mass *
                                 eval_psi(models[k], SheetPoint::base(cfg.right_end(j))).real();
            }
        }
        ds *= 2.0 * sigma();

        dp.assign(pts.size(), Complex(0.0, 0.0));
        const double g = N > 0 ? guard(cfg) : 0.0;
        const double rc = N > 0 ? std::sqrt(std::min(3.0 * g, 0.75 * cfg.l_half_gap()))
                                : 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (reps[i].fate != PointFate::alive) continue;
            if (!reps[i].chart) {
                Complex v = 0.0;
                const SheetPoint p{pts[i], reps[i].sheet};
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                    try {
                        v += nodes[k].mass * eval_psi(models[k], p);
                    } catch (const PoleProximity&) {
                        return false;
                    }
                }
                dp[i] = 2.0 * kPi * sigma() * v;
            } else {
                // the Cauchy circle must stay inside the chart ball and
                // strictly enclose the point; a point racing past the exit
                // band mid-stage rejects the step instead
                const double cap = 0.95 * std::sqrt(cfg.l_half_gap());
                const double radius =
                    std::min(std::max(rc, 1.3 * std::abs(pts[i])), cap);
                if (std::abs(pts[i]) > 0.97 * radius) return false;
                const Complex H = chart_h(cfg, models, nodes, reps[i].slit,
                                          reps[i].end, pts[i], radius);
                const double endsign = (reps[i].end == SlitEnd::left) ? 1.0 : -1.0;
                dp[i] = sigma() * endsign * kPi * H;
            }
        }
        return true;
    }

    // Weighted max-norm of the embedded error over slits and live points.
    double error_norm(const Eigen::VectorXd& e_s, const std::vector<Complex>& e_p,
                      const Eigen::VectorXd& s_new,
                      const std::vector<Complex>& p_new) const {
        double m = 0.0;
        for (int i = 0; i < e_s.size(); ++i)
            m = std::max(m, std::abs(e_s(i)) /
                                (opts.atol + opts.rtol * std::abs(s_new(i))));
        for (std::size_t i = 0; i < e_p.size(); ++i) {
            if (reps[i].fate != PointFate::alive) continue;
            m = std::max(m, std::abs(e_p[i]) /
                                (opts.atol + opts.rtol * std::abs(p_new[i])));
        }
        return m;
    }

    // Switch representations based on the current position.
    void update_modes() {
        if (n_slits == 0) return;
        SlitConfig cfg = make_config(svec);
        const double g = guard(cfg);
        for (std::size_t i = 0; i < reps.size(); ++i) {
            auto& r = reps[i];
            if (r.fate != PointFate::alive) continue;
            if (r.chart) {
                if (std::norm(coords[i]) > 2.0 * g) {
                    const SheetPoint p = sq_inverse(cfg, r.slit, r.end, coords[i]);
                    r.chart = false;
                    r.sheet = p.sheet;
                    coords[i] = p.z;
                }
            } else {
                for (int j = 0; j < n_slits && !r.chart; ++j) {
                    for (SlitEnd e : {SlitEnd::left, SlitEnd::right}) {
                        const Complex ze = (e == SlitEnd::left) ? cfg.left_end(j)
                                                                : cfg.right_end(j);
                        if (std::abs(coords[i] - ze) < g) {
                            const SheetPoint p{coords[i], r.sheet};
                            const Complex w = sq_coordinate(cfg, j, e, p);
                            r.chart = true;
                            r.slit = j;
                            r.end = e;
                            coords[i] = w;
                            break;
                        }
                    }
                }
            }
        }
    }

    // Death / contact events after an accepted step.
    void scan_events(const SlitConfig& cfg) {
        for (std::size_t i = 0; i < reps.size(); ++i) {
            auto& r = reps[i];
            if (r.fate != PointFate::alive || r.chart) continue;
            // canonical base-plane position for boundary tests
            Complex zb = coords[i];
            if (r.sheet != kBaseSheet) zb = mirror(zb, cfg.height(r.sheet));
            if (zb.imag() < opts.boundary_floor) {
                r.fate = PointFate::boundary_hit;
                r.death_time = t;
                continue;
            }
            if (n_slits > 0 && r.sheet == kBaseSheet &&
                cfg.slit_distance_from(zb) < 1e-7) {
                const double g = guard(cfg);
                bool near_end = false;
                for (int j = 0; j < n_slits; ++j)
                    if (std::abs(zb - cfg.left_end(j)) < g ||
                        std::abs(zb - cfg.right_end(j)) < g)
                        near_end = true;
                if (!near_end) {
                    r.fate = PointFate::slit_contact;
                    r.death_time = t;
                }
            }
        }
    }

    void record() {
        traj.times_.push_back(t);
        SlitConfig cfg = make_config(svec);
        traj.configs_.push_back(cfg);
        Eigen::VectorXd ds;
        std::vector<Complex> dp;
        if (have_fsal) {
            traj.config_deriv_.push_back(fsal_ds);
        } else if (rhs(t, svec, coords, ds, dp)) {
            traj.config_deriv_.push_back(ds);
        } else {
            traj.config_deriv_.push_back(Eigen::VectorXd::Zero(svec.size()));
        }
        for (std::size_t i = 0; i < reps.size(); ++i) {
            TrackedSample ts;
            if (reps[i].chart) {
                const SheetPoint p = sq_inverse(cfg, reps[i].slit, reps[i].end, coords[i]);
                ts.z = p.z;
                ts.sheet = p.sheet;
            } else {
                ts.z = coords[i];
                ts.sheet = reps[i].sheet;
            }
            ts.alive = reps[i].fate == PointFate::alive;
            traj.points_[i].push_back(ts);
        }
    }

    bool attempt(double h, Eigen::VectorXd& s_out, std::vector<Complex>& p_out,
                 double& err) {
        const std::size_t np = coords.size();
        std::vector<Eigen::VectorXd> ks(7);
        std::vector<std::vector<Complex>> kp(7);
        Eigen::VectorXd stmp;
        std::vector<Complex> ptmp(np);
        for (int stg = 0; stg < 7; ++stg) {
            stmp = svec;
            ptmp = coords;
            for (int q = 0; q < stg; ++q) {
                if (kA[stg][q] == 0.0) continue;
                stmp += h * kA[stg][q] * ks[q];
                for (std::size_t i = 0; i < np; ++i)
                    ptmp[i] += h * kA[stg][q] * kp[q][i];
            }
            ks[stg].resize(svec.size());
            kp[stg].assign(np, Complex(0.0, 0.0));
            if (!rhs(t + kC[stg] * h, stmp, ptmp, ks[stg], kp[stg])) return false;
        }
        s_out = svec;
        p_out = coords;
        Eigen::VectorXd es = Eigen::VectorXd::Zero(svec.size());
        std::vector<Complex> ep(np, Complex(0.0, 0.0));
        for (int stg = 0; stg < 7; ++stg) {
            if (kB5[stg] != 0.0) {
                s_out += h * kB5[stg] * ks[stg];
                for (std::size_t i = 0; i < np; ++i)
                    p_out[i] += h * kB5[stg] * kp[stg][i];
            }
            const double db = kB5[stg] - kB4[stg];
            if (db != 0.0) {
                es += h * db * ks[stg];
                for (std::size_t i = 0; i < np; ++i) ep[i] += h * db * kp[stg][i];
            }
        }
        for (double v : s_out)
            if (!std::isfinite(v)) return false;
        for (std::size_t i = 0; i < np; ++i)
            if (!std::isfinite(p_out[i].real()) || !std::isfinite(p_out[i].imag()))
                return false;
        err = error_norm(es, ep, s_out, p_out);
        // stage 7 sits at (t + h, y_new): it is the derivative at the new state
        fsal_ds = ks[6];
        fsal_dp = kp[6];
        have_fsal = true;
        return std::isfinite(err);
    }

    // Returns false when the run has ended (horizon reached or absorbed).
    bool step(double t_end) {
        if (done) return false;
        if (t >= t_end) {
            done = true;
            return false;
        }
        update_modes();
        while (true) {
            if (++steps_taken > opts.max_steps)
                throw MinStepUnderflow("step budget exhausted");
            double h = std::min(dt, t_end - t);
            if (opts.max_dt > 0.0) h = std::min(h, opts.max_dt);
            Eigen::VectorXd s_new;
            std::vector<Complex> p_new;
            double err = 0.0;
            const bool ok = attempt(h, s_new, p_new, err);
            if (!ok || err > 1.0) {
                const double shrink = ok ? std::max(0.2, 0.9 * std::pow(err, -0.2))
                                         : 0.3;
                dt = h * shrink;
                if (dt < opts.dt_min)
                    throw MinStepUnderflow(diagnose());
                continue;
            }
            // guard band: a plane point may not cross into the inner band
            bool band_violation = false;
            if (n_slits > 0) {
                SlitConfig cfg_new;
                try {
                    cfg_new = make_config(s_new);
                } catch (const ConfigError&) {
                    dt = 0.3 * h;
                    if (dt < opts.dt_min) throw MinStepUnderflow(diagnose());
                    continue;
                }
                const double g = guard(cfg_new);
                for (std::size_t i = 0; i < reps.size() && !band_violation; ++i) {
                    if (reps[i].fate != PointFate::alive || reps[i].chart) continue;
                    for (int j = 0; j < n_slits; ++j) {
                        if (std::abs(p_new[i] - cfg_new.left_end(j)) < 0.7 * g ||
                            std::abs(p_new[i] - cfg_new.right_end(j)) < 0.7 * g)
                            band_violation = true;
                    }
                }
            }
            if (band_violation) {
                update_modes(); // switch any point already inside the outer band
                dt = 0.5 * h;
                if (dt < opts.dt_min) throw MinStepUnderflow(diagnose());
                continue;
            }
            // reversed flow: do not step across the absorption floor
            if (dir == Direction::reversed && n_slits > 0) {
                double ymin_new = std::numeric_limits<double>::infinity();
                int jmin = 0;
                for (int j = 0; j < n_slits; ++j)
                    if (s_new(j) < ymin_new) {
                        ymin_new = s_new(j);
                        jmin = j;
                    }
                if (ymin_new < opts.y_floor) {
                    const double ymin_old = svec.head(n_slits).minCoeff();
                    if (ymin_old - opts.y_floor > 1e-9) {
                        const double frac =
                            (ymin_old - opts.y_floor) / (ymin_old - ymin_new);
                        dt = h * std::clamp(0.95 * frac, 0.05, 0.95);
                        if (dt < opts.dt_min) throw MinStepUnderflow(diagnose());
                        continue;
                    }
                    // already at the floor: stop cleanly here
                    traj.absorption_ = Absorption{jmin, t};
                    done = true;
                    return false;
                }
            }
            // accept
            t += h;
            svec = s_new;
            coords = p_new;
            dt = h * std::clamp(0.9 * std::pow(std::max(err, 1e-12), -0.2), 0.2, 5.0);
            SlitConfig cfg = make_config(svec);
            scan_events(cfg);
            record();
            if (dir == Direction::reversed && n_slits > 0 &&
                svec.head(n_slits).minCoeff() <= opts.y_floor * (1.0 + 1e-9)) {
                int jmin = 0;
                svec.head(n_slits).minCoeff(&jmin);
                traj.absorption_ = Absorption{jmin, t};
                done = true;
                return false;
            }
            if (t >= t_end) done = true;
            return !done;
        }
    }

    std::string diagnose() const {
        std::ostringstream os;
        os << "minimum step size underflow at t=" << t;
        for (std::size_t i = 0; i < reps.size(); ++i)
            if (reps[i].fate == PointFate::alive)
                os << "; point " << i << (reps[i].chart ? " [chart] " : " ")
                   << coords[i].real() << "+" << coords[i].imag() << "i";
        return os.str();
    }
};

FlowStepper::FlowStepper(const SlitConfig& s0, DrivingProcess driver,
                         const std::vector<SheetPoint>& tracked, Direction dir,
                         const SolveOptions& opts, double t_start)
    : impl_(std::make_unique<Impl>()) {
    if (!(opts.y_floor > 0.0))
        throw ConfigError("y_floor must be positive");
    if (!(opts.dt_min > 0.0) || !(opts.rtol > 0.0))
        throw ConfigError("step controller tolerances must be positive");
    impl_->opts = opts;
    impl_->dir = dir;
    impl_->driver = std::move(driver);
    impl_->t = t_start;
    impl_->dt = opts.dt_init;
    impl_->n_slits = s0.slit_count();
    const auto v = s0.as_vector();
    impl_->svec = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    for (const auto& p : tracked) {
        PointRep r;
        r.sheet = p.sheet;
        impl_->reps.push_back(r);
        impl_->coords.push_back(p.z);
    }
    impl_->traj.direction_ = dir;
    impl_->traj.driver_ = impl_->driver;
    impl_->traj.points_.resize(tracked.size());
    impl_->traj.fates_.assign(tracked.size(), PointFate::alive);
    impl_->record();
}

FlowStepper::~FlowStepper() = default;
FlowStepper::FlowStepper(FlowStepper&&) noexcept = default;

bool FlowStepper::advance(double t_end) { return impl_->step(t_end); }

double FlowStepper::time() const { return impl_->t; }

const SlitConfig& FlowStepper::config() const {
    return impl_->traj.configs_.back();
}

std::vector<SheetPoint> FlowStepper::points() const {
    std::vector<SheetPoint> out;
    const auto cfg = impl_->make_config(impl_->svec);
    for (std::size_t i = 0; i < impl_->coords.size(); ++i) {
        if (impl_->reps[i].chart) {
            out.push_back(sq_inverse(cfg, impl_->reps[i].slit, impl_->reps[i].end,
                                     impl_->coords[i]));
        } else {
            out.push_back({impl_->coords[i], impl_->reps[i].sheet});
        }
    }
    return out;
}

FlowTrajectory FlowStepper::finish() && {
    for (std::size_t i = 0; i < impl_->reps.size(); ++i)
        impl_->traj.fates_[i] = impl_->reps[i].fate;
    return std::move(impl_->traj);
}

namespace {

FlowTrajectory run(const SlitConfig& s0, const DrivingProcess& driver,
                   const std::vector<SheetPoint>& tracked, Direction dir,
                   double t0, double t1, const SolveOptions& opts) {
    FlowStepper stepper(s0, driver, tracked, dir, opts, t0);
    while (stepper.advance(t1)) {
    }
    return std::move(stepper).finish();
}

} // namespace

FlowTrajectory solve_forward(const SlitConfig& s0, const DrivingProcess& driver,
                             const std::vector<SheetPoint>& tracked, double T,
                             const SolveOptions& opts) {
    return run(s0, driver, tracked, Direction::forward, 0.0, T, opts);
}

FlowTrajectory solve_forward_window(const SlitConfig& s_at_t0,
                                    const DrivingProcess& driver,
                                    const std::vector<SheetPoint>& tracked,
                                    double t0, double t1,
                                    const SolveOptions& opts) {
    return run(s_at_t0, driver, tracked, Direction::forward, t0, t1, opts);
}

FlowTrajectory solve_reversed(const SlitConfig& s0, const DrivingProcess& driver,
                              const std::vector<SheetPoint>& tracked, double T,
                              const SolveOptions& opts) {
    return run(s0, driver, tracked, Direction::reversed, 0.0, T, opts);
}

SlitConfig FlowTrajectory::config_at(double t) const {
    if (times_.empty()) throw Error("empty trajectory");
    if (t <= times_.front()) return configs_.front();
    if (t >= times_.back()) return configs_.back();
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t k = it - times_.begin();
    const double t0 = times_[k - 1], t1 = times_[k];
    const double h = t1 - t0, u = (t - t0) / h;
    const auto v0 = configs_[k - 1].as_vector();
    const auto v1 = configs_[k].as_vector();
    const auto& d0 = config_deriv_[k - 1];
    const auto& d1 = config_deriv_[k];
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
    const double h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u);
    const double h11 = u * u * (u - 1);
    std::vector<double> v(v0.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = h00 * v0[i] + h10 * h * d0(i) + h01 * v1[i] + h11 * h * d1(i);
    return SlitConfig::from_vector(v);
}

// --- point transport along a stored trajectory ------------------------------

namespace {

// Integrate dw/dtau = sign * 2 pi int Psi_{s(t0 - tau)}(w, xi) nu_{t0-tau}(dxi)
// for tau in [0, t0]. Shared adaptive step for the whole batch.
std::vector<BackwardResult> transport(const FlowTrajectory& traj,
                                      const std::vector<Complex>& z0, double t0,
                                      double sign, const SolveOptions& opts) {
    std::vector<BackwardResult> out(z0.size());
    std::vector<Complex> w = z0;
    std::vector<bool> live(z0.size(), true);

    std::unique_ptr<KernelWorkspace> ws;
    SlitConfig ws_cfg;
    auto ensure = [&](const SlitConfig& cfg) {
        if (ws && (opts.rebuild_tol > 0.0 &&
                   slit_distance(cfg, ws_cfg) <= opts.rebuild_tol))
            return;
        ws = std::make_unique<KernelWorkspace>(cfg, opts.kernel_degree);
        ws_cfg = cfg;
    };

    auto rhs = [&](double tau, const std::vector<Complex>& p,
                   std::vector<Complex>& dp) -> bool {
        const double tt = t0 - tau;
        const SlitConfig cfg = traj.config_at(tt);
        const BoundaryMeasure nu = traj.driver().measure_at(tt);
        const auto nodes = measure_nodes(nu);
        std::vector<KernelModel> models;
        if (cfg.slit_count() > 0) {
            ensure(cfg);
            for (const auto& n : nodes) models.push_back(ws->build(n.xi, -1.0));
        } else {
            KernelWorkspace w0(cfg, opts.kernel_degree);
            for (const auto& n : nodes) models.push_back(w0.build(n.xi, -1.0));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            dp[i] = 0.0;
            if (!live[i]) continue;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                try {
                    dp[i] += nodes[k].mass * eval_psi(models[k], SheetPoint::base(p[i]));
                } catch (const PoleProximity&) {
                    return false;
                }
            }
            dp[i] *= sign * 2.0 * kPi;
        }
        return true;
    };

    double tau = 0.0, dt = opts.dt_init;
    const std::size_t np = z0.size();
    long long iterations = 0;
    while (tau < t0) {
        if (++iterations > opts.max_steps)
            throw MinStepUnderflow("transport step budget exhausted");
        const double h = std::min(dt, t0 - tau);
        std::vector<std::vector<Complex>> kp(7, std::vector<Complex>(np));
        std::vector<Complex> ptmp(np);
        bool ok = true;
        for (int stg = 0; stg < 7 && ok; ++stg) {
            ptmp = w;
            for (int q = 0; q < stg; ++q)
                for (std::size_t i = 0; i < np; ++i)
                    ptmp[i] += h * kA[stg][q] * kp[q][i];
            ok = rhs(tau + kC[stg] * h, ptmp, kp[stg]);
        }
        double err = 0.0;
        std::vector<Complex> wnew = w;
        if (ok) {
            std::vector<Complex> ep(np, Complex(0.0, 0.0));
            for (int stg = 0; stg < 7; ++stg) {
                for (std::size_t i = 0; i < np; ++i) {
                    wnew[i] += h * kB5[stg] * kp[stg][i];
                    ep[i] += h * (kB5[stg] - kB4[stg]) * kp[stg][i];
                }
            }
            for (std::size_t i = 0; i < np; ++i) {
                if (!live[i]) continue;
                if (!std::isfinite(wnew[i].real()) || !std::isfinite(wnew[i].imag()))
                    ok = false;
                else
                    err = std::max(err, std::abs(ep[i]) /
                                            (opts.atol + opts.rtol * std::abs(wnew[i])));
            }
        }
        if (!ok || err > 1.0) {
            dt = h * (ok ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.3);
            if (dt < opts.dt_min) {
                // a point diving toward the boundary stalls the step:
                // mark the lowest live point as a boundary hit and resume
                std::size_t worst = np;
                double ymin = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < np; ++i)
                    if (live[i] && w[i].imag() < ymin) {
                        ymin = w[i].imag();
                        worst = i;
                    }
                if (worst == np) throw MinStepUnderflow("transport underflow");
                live[worst] = false;
                out[worst].boundary_hit = true;
                out[worst].hit_time = tau;
                out[worst].value = w[worst];
                dt = opts.dt_init;
            }
            continue;
        }
        tau += h;
        w = wnew;
        dt = h * std::clamp(0.9 * std::pow(std::max(err, 1e-12), -0.2), 0.2, 5.0);
        for (std::size_t i = 0; i < np; ++i) {
            if (!live[i]) continue;
            if (w[i].imag() < opts.boundary_floor) {
                live[i] = false;
                out[i].boundary_hit = true;
                out[i].hit_time = tau;
                out[i].value = w[i];
            }
        }
    }
    for (std::size_t i = 0; i < np; ++i)
        if (live[i]) out[i].value = w[i];
    return out;
}

} // namespace

std::vector<BackwardResult> solve_backward(const FlowTrajectory& traj,
                                           const std::vector<Complex>& z0,
                                           double t0, const SolveOptions& opts) {
    if (traj.direction() != Direction::forward)
        throw Error("solve_backward expects a forward trajectory");
    if (t0 < traj.start_time() - 1e-12 || t0 > traj.horizon() + 1e-12)
        throw Error("t0 outside the stored trajectory window");
    return transport(traj, z0, t0, -1.0, opts);
}

BackwardResult solve_backward(const FlowTrajectory& traj, Complex z0, double t0,
                              const SolveOptions& opts) {
    return solve_backward(traj, std::vector<Complex>{z0}, t0, opts)[0];
}

TraceEstimate trace_point(const FlowTrajectory& traj, double t,
                          const std::vector<double>& eps_ladder,
                          const SolveOptions& opts) {
    if (traj.direction() != Direction::reversed)
        throw Error("trace_point expects a reversed trajectory");
    if (traj.driver().atom_count() != 1)
        throw Error("trace_point needs a Dirac-type driver");
    if (eps_ladder.size() < 2) throw Error("trace_point needs an eps ladder");
    const BoundaryMeasure nu = traj.driver().measure_at(t);
    const double xi_t = nu.atom_list().at(0).xi;
    std::vector<Complex> starts;
    for (double e : eps_ladder) starts.push_back(Complex(xi_t, e));
    const auto res = transport(traj, starts, t, +1.0, opts);
    std::vector<Complex> tab;
    std::vector<double> h;
    for (std::size_t k = 0; k < res.size(); ++k) {
        if (res[k].boundary_hit)
            throw NonConvergent("trace start absorbed before reaching t");
        tab.push_back(res[k].value);
        h.push_back(eps_ladder[k]);
    }
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t lvl = 1; lvl < tab.size(); ++lvl) {
        for (std::size_t k = 0; k + lvl < tab.size(); ++k)
            tab[k] = tab[k + 1] + (tab[k + 1] - tab[k]) * h[k + lvl] /
                                      (h[k] - h[k + lvl]);
        err = std::abs(tab[0] - tab[1]);
    }
    return {tab[0], err};
}

EvolutionFamilyReport evolution_family_report(const FlowTrajectory& traj,
                                              int n_triples, std::uint64_t seed,
                                              const SolveOptions& opts_in) {
    if (traj.direction() != Direction::forward)
        throw Error("evolution_family_report expects a forward trajectory");
    EvolutionFamilyReport rep;
    const auto& times = traj.times();
    const std::size_t K = times.size();

    // monotonicity of heights and tracked base-point heights
    for (std::size_t k = 1; k < K; ++k) {
        const auto& y0 = traj.config(k - 1).heights();
        const auto& y1 = traj.config(k).heights();
        for (std::size_t j = 0; j < y0.size(); ++j) {
            const double drop = y0[j] - y1[j];
            rep.worst_height_backstep = std::max(rep.worst_height_backstep, drop);
            if (drop > 1e-12) rep.heights_monotone = false;
        }
    }
    for (int i = 0; i < traj.tracked_count(); ++i) {
        const auto& tr = traj.track(i);
        for (std::size_t k = 1; k < tr.size(); ++k) {
            if (!tr[k].alive || !tr[k - 1].alive) continue;
            if (tr[k].sheet != kBaseSheet || tr[k - 1].sheet != kBaseSheet) continue;
            const double drop = tr[k - 1].z.imag() - tr[k].z.imag();
            rep.worst_im_backstep = std::max(rep.worst_im_backstep, drop);
            if (drop > 1e-10) rep.tracked_im_monotone = false;
        }
    }

    // Lipschitz ratio |phi_u(p) - phi_s(p)| <= (12/eta)(lambda(u) - lambda(s))
    for (int i = 0; i < traj.tracked_count(); ++i) {
        const auto& tr = traj.track(i);
        if (tr.front().sheet != kBaseSheet) continue;
        const double eta_p =
            std::min(tr.front().z.imag(), traj.initial_config().eta() * 0.999);
        if (!(eta_p > 0.0)) continue;
        const std::size_t stride = std::max<std::size_t>(1, K / 64);
        for (std::size_t a = 0; a < K; a += stride) {
            for (std::size_t b = a + 1; b < K; b += stride) {
                if (!tr[a].alive || !tr[b].alive) continue;
                const double dl = traj.lambda(times[b]) - traj.lambda(times[a]);
                if (dl <= 0.0) continue;
                const double ratio = std::abs(tr[b].z - tr[a].z) / dl;
                rep.lipschitz_margin =
                    std::max(rep.lipschitz_margin, ratio * eta_p / 12.0);
            }
        }
    }

    // semigroup defect via dual integration on random triples
    SolveOptions opts = opts_in;
    opts.rebuild_tol = 0.0;
    CounterRng rng(seed);
    std::vector<SheetPoint> pts;
    for (int i = 0; i < traj.tracked_count(); ++i)
        if (traj.track(i).front().sheet == kBaseSheet && traj.alive(i))
            pts.push_back(SheetPoint::base(traj.track(i).front().z));
    if (!pts.empty() && K >= 3) {
        for (int trial = 0; trial < n_triples; ++trial) {
            std::size_t a = static_cast<std::size_t>(rng.uniform(0, K - 2));
            std::size_t b = a + 1 + static_cast<std::size_t>(
                                        rng.uniform(0, K - a - 1));
            std::size_t c = b + static_cast<std::size_t>(
                                    rng.uniform(0, K - b));
            a = std::min(a, K - 3);
            b = std::clamp(b, a + 1, K - 2);
            c = std::clamp(c, b + 1, K - 1);
            const double ts = times[a], tm = times[b], tu = times[c];
            auto direct = solve_forward_window(traj.config(a), traj.driver(), pts,
                                               ts, tu, opts);
            auto leg1 = solve_forward_window(traj.config(a), traj.driver(), pts,
                                             ts, tm, opts);
            std::vector<SheetPoint> mid;
            for (int i = 0; i < leg1.tracked_count(); ++i)
                mid.push_back({leg1.final_sample(i).z, leg1.final_sample(i).sheet});
            auto leg2 = solve_forward_window(leg1.final_config(), traj.driver(),
                                             mid, tm, tu, opts);
            for (int i = 0; i < direct.tracked_count(); ++i) {
                const double d =
                    std::abs(direct.final_sample(i).z - leg2.final_sample(i).z);
                rep.semigroup_defect = std::max(rep.semigroup_defect, d);
            }
        }
    }
    return rep;
}

std::string FlowTrajectory::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["direction"] = direction_ == Direction::forward ? "forward" : "reversed";
    j["driver_id"] = driver_.id();
    j["times"] = times_;
    auto cfgs = nlohmann::json::array();
    for (const auto& c : configs_) cfgs.push_back(nlohmann::json::parse(c.to_json()));
    j["configs"] = cfgs;
    auto pts = nlohmann::json::array();
    for (const auto& track : points_) {
        auto tr = nlohmann::json::array();
        for (const auto& s : track)
            tr.push_back({s.z.real(), s.z.imag(), s.sheet, s.alive});
        pts.push_back(tr);
    }
    j["tracked"] = pts;
    j["lambda"] = "2t";
    if (absorption_)
        j["absorption"] = {{"slit", absorption_->slit}, {"time", absorption_->time}};
    return j.dump();
}

void FlowTrajectory::write_csv(std::ostream& os) const {
    os << "t,point,re,im,sheet,alive\n";
    char buf[128];
    for (std::size_t k = 0; k < times_.size(); ++k) {
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& s = points_[i][k];
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g,%d,%d",
                          times_[k], i, s.z.real(), s.z.imag(), s.sheet,
                          s.alive ? 1 : 0);
            os << buf << "\n";
        }
    }
}

} // namespace kle
