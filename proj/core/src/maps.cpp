#include "kle/maps.hpp"

#include <algorithm>
#include <cmath>

#include "kle/errors.hpp"

namespace kle {

namespace {

// Psi_H continued to the sheet of p the same way eval_psi continues the
// full kernel (the constant-slit-level shift is part of the remainder).
Complex psi_h_sheet(const SlitConfig& s, const SheetPoint& p, double xi) {
    if (p.on_base()) return psi_h(p.z, xi);
    return std::conj(psi_h(mirror(p.z, s.height(p.sheet)), xi));
}

// Exact integral of Psi_H(z, t) against the piecewise-linear interpolant of
// the density: int (c + d t)/(z - t) dt = (c + d z) log((z-a)/(z-b)) - d (b-a).
Complex cauchy_linear_panels(Complex z, const std::vector<double>& grid,
                             const std::vector<double>& rho) {
    Complex acc = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double a = grid[i], b = grid[i + 1];
        if (rho[i] == 0.0 && rho[i + 1] == 0.0) continue;
        const double d = (rho[i + 1] - rho[i]) / (b - a);
        const double c = rho[i] - d * a;
        acc += (c + d * z) * std::log((z - a) / (z - b)) - d * (b - a);
    }
    return -acc / kPi; // Psi_H carries the factor -1/pi
}

} // namespace

Complex apply_integral_rep(const SlitConfig& s, const BoundaryMeasure& mu,
                           const SheetPoint& p, KernelCache& cache, int degree) {
    Complex acc = project(p);
    for (const auto& a : mu.atom_list()) {
        if (a.mass == 0.0) continue;
        const KernelModel& m = cache.model(s, a.xi, degree);
        acc += kPi * a.mass * eval_psi(m, p);
    }
    if (!mu.grid().empty()) {
        // Psi_H part exactly against the piecewise-linear density; the slit
        // correction (smooth on the scale eta_D) by the measure's own nodes
        const Complex base = p.on_base()
                                 ? cauchy_linear_panels(p.z, mu.grid(),
                                                        mu.density_values())
                                 : std::conj(cauchy_linear_panels(
                                       mirror(p.z, s.height(p.sheet)), mu.grid(),
                                       mu.density_values()));
        acc += kPi * base;
        if (s.slit_count() > 0) {
            const auto& grid = mu.grid();
            const auto& w = mu.weights();
            const auto& rho = mu.density_values();
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (w[i] * rho[i] == 0.0) continue;
                const KernelModel& m = cache.model(s, grid[i], degree);
                acc += kPi * w[i] * rho[i] *
                       (eval_psi(m, p) - psi_h_sheet(s, p, grid[i]));
            }
        }
    }
    return acc;
}

MapEvaluator integral_rep_map(const SlitConfig& s, BoundaryMeasure mu,
                              KernelCache& cache, int degree) {
    return [&cache, s, mu = std::move(mu), degree](Complex z) {
        return apply_integral_rep(s, mu, SheetPoint::base(z), cache, degree);
    };
}

namespace {

Complex neville_in(const std::vector<double>& h, std::vector<Complex> tab,
                   double* err_out) {
    const std::size_t K = tab.size();
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t lvl = 1; lvl < K; ++lvl) {
        for (std::size_t k = 0; k + lvl < K; ++k)
            tab[k] = tab[k + 1] + (tab[k + 1] - tab[k]) * h[k + lvl] /
                                      (h[k] - h[k + lvl]);
        err = std::abs(tab[0] - tab[1]);
    }
    if (err_out) *err_out = err;
    return tab[0];
}

} // namespace

ResidueEstimate angular_residue(const MapEvaluator& f, double theta,
                                const std::vector<double>& radius_ladder) {
    if (radius_ladder.size() < 2)
        throw Error("angular_residue needs at least two radii");
    const double margin = 0.05 * (kPi / 2.0 - theta);
    const double angles[3] = {theta + margin, kPi / 2.0, kPi - theta - margin};
    Complex values[3];
    double errs[3];
    for (int a = 0; a < 3; ++a) {
        std::vector<double> h;
        std::vector<Complex> tab;
        for (double r : radius_ladder) {
            const Complex z = r * std::exp(Complex(0.0, angles[a]));
            tab.push_back(-z * (f(z) - z));
            h.push_back(1.0 / r);
        }
        values[a] = neville_in(h, tab, &errs[a]);
    }
    const Complex mean = (values[0] + values[1] + values[2]) / 3.0;
    double spread = 0.0;
    for (int a = 0; a < 3; ++a)
        spread = std::max(spread, std::abs(values[a] - mean) + errs[a]);
    if (spread > 0.05 * std::max(1.0, std::abs(mean)))
        throw NonConvergent("angular residue rays disagree");
    return {mean, std::max(spread, 1e-15)};
}

RecoveredMeasure recover_measure(const MapEvaluator& f, const SlitConfig& s,
                                 const std::vector<double>& grid,
                                 const RecoverOptions& opts) {
    (void)s; // the grid lies on dH; slits are interior and need no exclusion
    RecoveredMeasure out;
    out.converged.resize(grid.size(), true);
    std::vector<double> density(grid.size(), 0.0);
    const auto& eps = opts.eps_ladder;
    if (eps.size() < 2) throw Error("recover_measure needs an eps ladder");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<Complex> tab;
        for (double e : eps)
            tab.push_back(f(Complex(grid[i], e)).imag() / kPi);
        double err = 0.0;
        const double v = neville_in(eps, tab, &err).real();
        if (err > 1e-4 + 0.05 * std::abs(v)) out.converged[i] = false;
        out.max_correction = std::max(out.max_correction, err);
        if (v < -opts.clip_negative)
            out.converged[i] = false;
        density[i] = std::max(v, 0.0);
    }
    out.measure = BoundaryMeasure::density(grid, density);
    return out;
}

namespace {

// int_a^b [K*(x+iy, xi) - K_H(x+iy, xi)] dx by composite Gauss-Legendre.
double correction_integral(const KernelModel& m, double y, double a, double b) {
    static const double gl_x[8] = {-0.9602898564975363, -0.7966664774136267,
                                   -0.5255324099163290, -0.1834346424956498,
                                   0.1834346424956498,  0.5255324099163290,
                                   0.7966664774136267,  0.9602898564975363};
    static const double gl_w[8] = {0.1012285362903763, 0.2223810344533745,
                                   0.3137066458778873, 0.3626837833783620,
                                   0.3626837833783620, 0.3137066458778873,
                                   0.2223810344533745, 0.1012285362903763};
    const double eta = m.config.eta();
    const int panels = std::max(4, static_cast<int>(std::ceil((b - a) / (0.5 * eta))));
    double acc = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double pa = a + (b - a) * p / panels;
        const double pb = a + (b - a) * (p + 1) / panels;
        const double mid = 0.5 * (pa + pb), half = 0.5 * (pb - pa);
        for (int q = 0; q < 8; ++q) {
            const Complex z(mid + half * gl_x[q], y);
            acc += half * gl_w[q] * (eval_kstar(m, z) - k_h(z, m.xi));
        }
    }
    return acc;
}

} // namespace

double stieltjes_inversion(const SlitConfig& s, const BoundaryMeasure& mu,
                           double a, double b,
                           const std::vector<double>& y_ladder,
                           KernelCache& cache, int degree) {
    if (!(a < b)) throw ConfigError("stieltjes_inversion needs a < b");
    if (y_ladder.size() < 2) throw Error("stieltjes_inversion needs a y ladder");
    std::vector<Complex> tab;
    for (double y : y_ladder) {
        double val = 0.0;
        mu.for_each_node([&](double xi, double mass) {
            if (mass == 0.0) return;
            // K_H part in closed form
            const double kh = (std::atan((b - xi) / y) - std::atan((a - xi) / y)) / kPi;
            double corr = 0.0;
            if (s.slit_count() > 0) {
                const KernelModel& m = cache.model(s, xi, degree);
                corr = correction_integral(m, y, a, b);
            }
            val += mass * (kh + corr);
        });
        tab.push_back(Complex(val, 0.0));
    }
    double err = 0.0;
    const double out = neville_in(y_ladder, tab, &err).real();
    if (err > 0.02 * std::max(1.0, std::abs(out)))
        throw NonConvergent("stieltjes y-ladder does not contract");
    return out;
}

} // namespace kle
