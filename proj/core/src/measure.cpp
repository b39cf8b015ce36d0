#include "kle/measure.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "kle/errors.hpp"

namespace kle {

BoundaryMeasure BoundaryMeasure::atoms(std::vector<Atom> atoms) {
    BoundaryMeasure m;
    m.atoms_ = std::move(atoms);
    m.finalize();
    return m;
}

BoundaryMeasure BoundaryMeasure::density(std::vector<double> grid,
                                         std::vector<double> values) {
    BoundaryMeasure m;
    m.grid_ = std::move(grid);
    m.values_ = std::move(values);
    m.finalize();
    return m;
}

BoundaryMeasure BoundaryMeasure::mixed(std::vector<Atom> atoms,
                                       std::vector<double> grid,
                                       std::vector<double> values) {
    BoundaryMeasure m;
    m.atoms_ = std::move(atoms);
    m.grid_ = std::move(grid);
    m.values_ = std::move(values);
    m.finalize();
    return m;
}

void BoundaryMeasure::finalize() {
    if (grid_.size() != values_.size())
        throw ConfigError("measure grid/density size mismatch");
    if (!grid_.empty() && grid_.size() < 2)
        throw ConfigError("density grid needs at least two nodes");
    for (std::size_t i = 1; i < grid_.size(); ++i)
        if (!(grid_[i] > grid_[i - 1]))
            throw ConfigError("density grid must be strictly increasing");
    for (const auto& a : atoms_)
        if (a.mass < 0.0) throw ConfigError("atom mass must be nonnegative");
    for (double v : values_)
        if (v < 0.0) throw ConfigError("density must be nonnegative");

    weights_.assign(grid_.size(), 0.0);
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i) {
        const double h = grid_[i + 1] - grid_[i];
        weights_[i] += 0.5 * h;
        weights_[i + 1] += 0.5 * h;
    }

    total_mass_ = 0.0;
    support_bound_ = 0.0;
    for (const auto& a : atoms_) {
        total_mass_ += a.mass;
        if (a.mass > 0.0) support_bound_ = std::max(support_bound_, std::abs(a.xi));
    }
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        total_mass_ += weights_[i] * values_[i];
        if (values_[i] > 0.0)
            support_bound_ = std::max(support_bound_, std::abs(grid_[i]));
    }
}

void BoundaryMeasure::for_each_node(
    const std::function<void(double, double)>& f) const {
    for (const auto& a : atoms_) f(a.xi, a.mass);
    for (std::size_t i = 0; i < grid_.size(); ++i)
        f(grid_[i], weights_[i] * values_[i]);
}

double BoundaryMeasure::stieltjes_mass(double a, double b) const {
    double v = 0.0;
    for (const auto& at : atoms_) {
        if (at.xi > a && at.xi < b) v += at.mass;
        if (at.xi == a || at.xi == b) v += 0.5 * at.mass;
    }
    for (std::size_t i = 0; i < grid_.size(); ++i)
        if (grid_[i] > a && grid_[i] < b) v += weights_[i] * values_[i];
    return v;
}

std::string BoundaryMeasure::to_json() const {
    nlohmann::json j;
    auto arr = nlohmann::json::array();
    for (const auto& a : atoms_) arr.push_back({a.xi, a.mass});
    j["atoms"] = arr;
    j["grid"] = grid_;
    j["density"] = values_;
    return j.dump();
}

BoundaryMeasure BoundaryMeasure::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    std::vector<Atom> atoms;
    for (const auto& a : j.at("atoms"))
        atoms.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    return mixed(std::move(atoms), j.at("grid").get<std::vector<double>>(),
                 j.at("density").get<std::vector<double>>());
}

} // namespace kle
