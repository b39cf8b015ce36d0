#include "kle/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "kle/errors.hpp"
#include "kle/rng.hpp"

namespace kle {

DriverSpec DriverSpec::dirac_const(double xi) {
    DriverSpec d;
    d.kind = Kind::dirac;
    d.xi0 = {xi};
    return d;
}

DriverSpec DriverSpec::dirac_path(std::vector<double> times, std::vector<double> xis) {
    DriverSpec d;
    d.kind = Kind::dirac;
    d.path_times = std::move(times);
    d.path_values.resize(d.path_times.size());
    for (std::size_t i = 0; i < xis.size(); ++i) d.path_values[i] = {xis[i]};
    d.xi0 = {xis.empty() ? 0.0 : xis.front()};
    return d;
}

DriverSpec DriverSpec::multi_dirac(std::vector<double> xis, std::vector<double> ws) {
    DriverSpec d;
    d.kind = Kind::multi_dirac;
    d.xi0 = std::move(xis);
    d.weights = std::move(ws);
    return d;
}

DriverSpec DriverSpec::density_const(std::vector<double> grid,
                                     std::vector<double> values) {
    DriverSpec d;
    d.kind = Kind::density;
    d.density_grid = std::move(grid);
    d.density_values = {std::move(values)};
    d.total_mass = BoundaryMeasure::density(d.density_grid, d.density_values[0]).total_mass();
    return d;
}

DriverSpec DriverSpec::brownian(double kappa, std::uint64_t seed, double xi0) {
    DriverSpec d;
    d.kind = Kind::brownian;
    d.kappa = kappa;
    d.seed = seed;
    d.xi0 = {xi0};
    return d;
}

DriverSpec DriverSpec::dyson(int n, std::uint64_t seed, double spread) {
    DriverSpec d;
    d.kind = Kind::dyson;
    d.seed = seed;
    d.spread = spread;
    d.xi0.resize(n);
    for (int k = 0; k < n; ++k) d.xi0[k] = spread * (k - 0.5 * (n - 1));
    return d;
}

namespace {

std::vector<double> interp_path(const std::vector<double>& knots,
                                const std::vector<std::vector<double>>& rows,
                                int atom, const std::vector<double>& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        if (knots.empty()) {
            out[i] = rows.empty() ? 0.0 : rows[0][atom];
            continue;
        }
        auto it = std::upper_bound(knots.begin(), knots.end(), t);
        if (it == knots.begin()) {
            out[i] = rows.front()[atom];
        } else if (it == knots.end()) {
            out[i] = rows.back()[atom];
        } else {
            const std::size_t k = it - knots.begin();
            const double f = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
            out[i] = (1 - f) * rows[k - 1][atom] + f * rows[k][atom];
        }
    }
    return out;
}

} // namespace

DrivingProcess sample(const DriverSpec& spec, const std::vector<double>& grid) {
    if (grid.size() < 2) throw ConfigError("driver grid needs at least two knots");
    if (spec.total_mass > 1.0 + 1e-12)
        throw ConfigError("driving measure mass must be <= 1");
    DrivingProcess p;
    p.times_ = grid;
    const int K = static_cast<int>(grid.size());

    switch (spec.kind) {
    case DriverSpec::Kind::zero:
        p.id_ = "zero";
        break;
    case DriverSpec::Kind::dirac: {
        p.id_ = "dirac";
        if (!spec.path_times.empty()) {
            p.paths_ = {interp_path(spec.path_times, spec.path_values, 0, grid)};
        } else {
            p.paths_ = {std::vector<double>(K, spec.xi0.at(0))};
        }
        p.weights_ = {std::vector<double>(K, spec.total_mass)};
        break;
    }
    case DriverSpec::Kind::multi_dirac: {
        p.id_ = "multi_dirac";
        const int n = static_cast<int>(spec.xi0.size());
        std::vector<double> w = spec.weights;
        if (w.empty()) w.assign(n, spec.total_mass / n);
        double sum = 0.0;
        for (double v : w) {
            if (v < 0.0) throw ConfigError("multi_dirac weights must be >= 0");
            sum += v;
        }
        if (std::abs(sum - spec.total_mass) > 1e-12)
            throw ConfigError("multi_dirac weights must sum to the total mass");
        for (int a = 0; a < n; ++a) {
            if (!spec.path_times.empty())
                p.paths_.push_back(interp_path(spec.path_times, spec.path_values, a, grid));
            else
                p.paths_.push_back(std::vector<double>(K, spec.xi0[a]));
            p.weights_.push_back(std::vector<double>(K, w[a]));
        }
        break;
    }
    case DriverSpec::Kind::density: {
        p.id_ = "density";
        p.density_grid_ = spec.density_grid;
        p.density_values_ = spec.density_values;
        if (p.density_values_.empty())
            throw ConfigError("density driver needs values");
        break;
    }
    case DriverSpec::Kind::brownian: {
        p.id_ = "brownian";
        std::vector<double> path(K);
        path[0] = spec.xi0.at(0);
        for (int i = 1; i < K; ++i) {
            const double dt = grid[i] - grid[i - 1];
            // one Gaussian per (seed, path, step), counter-indexed
            const std::uint64_t h1 = CounterRng::mix(spec.seed, 1, 2 * i);
            const std::uint64_t h2 = CounterRng::mix(spec.seed, 1, 2 * i + 1);
            double u1 = CounterRng::to_unit(h1);
            if (u1 <= 0.0) u1 = 1e-300;
            const double u2 = CounterRng::to_unit(h2);
            const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
            path[i] = path[i - 1] + std::sqrt(spec.kappa * dt) * g;
        }
        p.paths_ = {std::move(path)};
        p.weights_ = {std::vector<double>(K, spec.total_mass)};
        break;
    }
    case DriverSpec::Kind::dyson: {
        p.id_ = "dyson";
        const int n = static_cast<int>(spec.xi0.size());
        std::vector<std::vector<double>> paths(n, std::vector<double>(K));
        std::vector<double> cur = spec.xi0;
        for (int a = 0; a < n; ++a) paths[a][0] = cur[a];
        for (int i = 1; i < K; ++i) {
            double remaining = grid[i] - grid[i - 1];
            int substep = 0;
            double dt_cap = remaining;
            while (remaining > 0.0) {
                // collision-guarded substep
                double gap = std::numeric_limits<double>::infinity();
                for (int a = 1; a < n; ++a) gap = std::min(gap, cur[a] - cur[a - 1]);
                if (gap < 1e-9)
                    throw CollisionUnderflow("dyson paths collided");
                const double dt = std::min({remaining, 0.1 * gap * gap, dt_cap});
                std::vector<double> next(n);
                for (int a = 0; a < n; ++a) {
                    double drift = 0.0;
                    for (int b = 0; b < n; ++b)
                        if (b != a) drift += 1.0 / (cur[a] - cur[b]);
                    const std::uint64_t c =
                        (static_cast<std::uint64_t>(i) << 24) ^
                        (static_cast<std::uint64_t>(substep) << 1);
                    const double u1v = CounterRng::to_unit(
                        CounterRng::mix(spec.seed, 100 + a, 2 * c));
                    const double u2v = CounterRng::to_unit(
                        CounterRng::mix(spec.seed, 100 + a, 2 * c + 1));
                    const double g = std::sqrt(-2.0 * std::log(std::max(u1v, 1e-300))) *
                                     std::cos(2.0 * kPi * u2v);
                    next[a] = cur[a] + drift * dt + std::sqrt(dt) * g;
                }
                ++substep;
                if (!std::is_sorted(next.begin(), next.end())) {
                    dt_cap = 0.5 * dt; // halve and retry deterministically
                    if (substep > 200 || dt_cap < 1e-15)
                        throw CollisionUnderflow("dyson substep underflow");
                    continue;
                }
                cur = std::move(next);
                remaining -= dt;
                dt_cap = std::min(2.0 * dt_cap, grid[i] - grid[i - 1]);
            }
            for (int a = 0; a < n; ++a) paths[a][i] = cur[a];
        }
        p.paths_ = std::move(paths);
        p.weights_.assign(n, std::vector<double>(K, spec.total_mass / n));
        break;
    }
    }

    p.support_bound_ = 0.0;
    for (const auto& path : p.paths_)
        for (double x : path) p.support_bound_ = std::max(p.support_bound_, std::abs(x));
    for (std::size_t i = 0; i < p.density_grid_.size(); ++i) {
        bool charged = false;
        for (const auto& row : p.density_values_)
            if (row[i] > 0.0) charged = true;
        if (charged)
            p.support_bound_ = std::max(p.support_bound_, std::abs(p.density_grid_[i]));
    }
    return p;
}

BoundaryMeasure DrivingProcess::measure_at(double t) const {
    std::vector<BoundaryMeasure::Atom> atoms;
    const int K = static_cast<int>(times_.size());
    if (!paths_.empty()) {
        // clamp, locate knot interval
        double tt = std::clamp(t, times_.front(), times_.back());
        auto it = std::upper_bound(times_.begin(), times_.end(), tt);
        int k = static_cast<int>(it - times_.begin());
        if (k == 0) k = 1;
        if (k >= K) k = K - 1;
        const double f = (tt - times_[k - 1]) / (times_[k] - times_[k - 1]);
        for (std::size_t a = 0; a < paths_.size(); ++a) {
            const double xi = (1 - f) * paths_[a][k - 1] + f * paths_[a][k];
            const double w = weights_[a][k - 1]; // piecewise constant
            atoms.push_back({xi, w});
        }
    }
    std::vector<double> density;
    if (!density_grid_.empty()) {
        if (density_values_.size() == 1) {
            density = density_values_[0];
        } else {
            double tt = std::clamp(t, times_.front(), times_.back());
            auto it = std::upper_bound(times_.begin(), times_.end(), tt);
            int k = static_cast<int>(it - times_.begin());
            if (k == 0) k = 1;
            if (k >= K) k = K - 1;
            const double f = (tt - times_[k - 1]) / (times_[k] - times_[k - 1]);
            density.resize(density_grid_.size());
            for (std::size_t i = 0; i < density.size(); ++i)
                density[i] = (1 - f) * density_values_[k - 1][i] + f * density_values_[k][i];
        }
    }
    if (density.empty()) return BoundaryMeasure::atoms(std::move(atoms));
    return BoundaryMeasure::mixed(std::move(atoms), density_grid_, std::move(density));
}

std::vector<double> uniform_grid(double T, int n) {
    std::vector<double> g(n + 1);
    for (int i = 0; i <= n; ++i) g[i] = T * i / n;
    return g;
}

double support_bound(const DrivingProcess& p) { return p.support_bound(); }

std::string DriverSpec::to_json() const {
    nlohmann::json j;
    const char* names[] = {"zero", "dirac", "multi_dirac", "density", "brownian", "dyson"};
    j["kind"] = names[static_cast<int>(kind)];
    j["xi0"] = xi0;
    j["weights"] = weights;
    j["path_times"] = path_times;
    j["path_values"] = path_values;
    j["density_grid"] = density_grid;
    j["density_values"] = density_values;
    j["kappa"] = kappa;
    j["seed"] = seed;
    j["spread"] = spread;
    j["total_mass"] = total_mass;
    return j.dump();
}

DriverSpec DriverSpec::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DriverSpec d;
    const std::string k = j.at("kind").get<std::string>();
    if (k == "zero") d.kind = Kind::zero;
    else if (k == "dirac") d.kind = Kind::dirac;
    else if (k == "multi_dirac") d.kind = Kind::multi_dirac;
    else if (k == "density") d.kind = Kind::density;
    else if (k == "brownian") d.kind = Kind::brownian;
    else if (k == "dyson") d.kind = Kind::dyson;
    else throw ConfigError("unknown driver kind: " + k);
    if (j.contains("xi0")) d.xi0 = j["xi0"].get<std::vector<double>>();
    if (j.contains("weights")) d.weights = j["weights"].get<std::vector<double>>();
    if (j.contains("path_times")) d.path_times = j["path_times"].get<std::vector<double>>();
    if (j.contains("path_values"))
        d.path_values = j["path_values"].get<std::vector<std::vector<double>>>();
    if (j.contains("density_grid"))
        d.density_grid = j["density_grid"].get<std::vector<double>>();
    if (j.contains("density_values"))
        d.density_values = j["density_values"].get<std::vector<std::vector<double>>>();
    if (j.contains("kappa")) d.kappa = j["kappa"].get<double>();
    if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("spread")) d.spread = j["spread"].get<double>();
    if (j.contains("total_mass")) d.total_mass = j["total_mass"].get<double>();
    return d;
}

std::string DrivingProcess::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["id"] = id_;
    j["times"] = times_;
    j["atom_paths"] = paths_;
    j["atom_weights"] = weights_;
    j["density_grid"] = density_grid_;
    j["density_values"] = density_values_;
    j["support_bound"] = support_bound_;
    return j.dump();
}

void DrivingProcess::write_csv(std::ostream& os) const {
    os << "t";
    for (std::size_t a = 0; a < paths_.size(); ++a) os << ",xi" << a;
    os << "\n";
    char buf[32];
    for (std::size_t i = 0; i < times_.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", times_[i]);
        os << buf;
        for (const auto& path : paths_) {
            std::snprintf(buf, sizeof buf, "%.17g", path[i]);
            os << ',' << buf;
        }
        os << "\n";
    }
}

} // namespace kle
