#include "kle/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace kle {

namespace {

double point_segment_distance(Complex z, double xl, double xr, double y) {
    const double x = std::clamp(z.real(), xl, xr);
    return std::abs(z - Complex(x, y));
}

// Distance between two horizontal closed segments.
double segment_gap(double xl1, double xr1, double y1, double xl2, double xr2,
                   double y2) {
    const double dy = y1 - y2;
    const double dx = std::max({0.0, xl1 - xr2, xl2 - xr1});
    return std::hypot(dx, dy);
}

} // namespace

SlitConfig::SlitConfig(std::vector<double> y, std::vector<double> x_left,
                       std::vector<double> x_right)
    : y_(std::move(y)), xl_(std::move(x_left)), xr_(std::move(x_right)) {
    const std::size_t n = y_.size();
    if (xl_.size() != n || xr_.size() != n)
        throw ConfigError("slit coordinate vectors must have equal length");
    for (std::size_t j = 0; j < n; ++j) {
        if (!(y_[j] > 0.0))
            throw ConfigError("slit height must be positive");
        if (!(xl_[j] < xr_[j]))
            throw ConfigError("slit must have x_left < x_right");
        if (!std::isfinite(y_[j]) || !std::isfinite(xl_[j]) || !std::isfinite(xr_[j]))
            throw ConfigError("slit coordinates must be finite");
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k)
            if (y_[j] == y_[k] && !(xr_[j] < xl_[k] || xr_[k] < xl_[j]))
                throw ConfigError("slits at equal height must be disjoint");
}

bool SlitConfig::contains(Complex z) const {
    if (!(z.imag() > 0.0)) return false;
    for (int j = 0; j < slit_count(); ++j)
        if (z.imag() == y_[j] && z.real() >= xl_[j] && z.real() <= xr_[j])
            return false;
    return true;
}

double SlitConfig::eta() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : y_) m = std::min(m, v);
    return m;
}

double SlitConfig::r_out() const {
    double m = 0.0;
    for (int j = 0; j < slit_count(); ++j)
        m = std::max({m, std::abs(left_end(j)), std::abs(right_end(j))});
    return m;
}

double SlitConfig::l_half_gap() const {
    double m = std::numeric_limits<double>::infinity();
    for (int j = 0; j < slit_count(); ++j) {
        double gap = y_[j]; // distance to the outer boundary dH
        for (int k = 0; k < slit_count(); ++k) {
            if (k == j) continue;
            gap = std::min(gap, segment_gap(xl_[j], xr_[j], y_[j], xl_[k], xr_[k], y_[k]));
        }
        m = std::min(m, std::min(xr_[j] - xl_[j], gap));
    }
    return 0.5 * m;
}

double SlitConfig::slit_distance_from(Complex z) const {
    double d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < slit_count(); ++j)
        d = std::min(d, point_segment_distance(z, xl_[j], xr_[j], y_[j]));
    return d;
}

double SlitConfig::distance_to_slit(Complex z, int j) const {
    return point_segment_distance(z, xl_[j], xr_[j], y_[j]);
}

std::vector<double> SlitConfig::as_vector() const {
    std::vector<double> s;
    s.reserve(3 * y_.size());
    s.insert(s.end(), y_.begin(), y_.end());
    s.insert(s.end(), xl_.begin(), xl_.end());
    s.insert(s.end(), xr_.begin(), xr_.end());
    return s;
}

SlitConfig SlitConfig::from_vector(const std::vector<double>& s) {
    if (s.size() % 3 != 0)
        throw ConfigError("slit vector length must be a multiple of 3");
    const std::size_t n = s.size() / 3;
    return SlitConfig(std::vector<double>(s.begin(), s.begin() + n),
                      std::vector<double>(s.begin() + n, s.begin() + 2 * n),
                      std::vector<double>(s.begin() + 2 * n, s.end()));
}

std::string SlitConfig::to_json() const {
    nlohmann::json j;
    j["y"] = y_;
    j["x_left"] = xl_;
    j["x_right"] = xr_;
    return j.dump();
}

SlitConfig SlitConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    return SlitConfig(j.at("y").get<std::vector<double>>(),
                      j.at("x_left").get<std::vector<double>>(),
                      j.at("x_right").get<std::vector<double>>());
}

double slit_distance(const SlitConfig& a, const SlitConfig& b) {
    if (a.slit_count() != b.slit_count())
        throw ConfigError("slit_distance requires equal slit counts");
    double d = 0.0;
    for (int j = 0; j < a.slit_count(); ++j)
        d = std::max(d, std::abs(a.left_end(j) - b.left_end(j)) +
                            std::abs(a.right_end(j) - b.right_end(j)));
    return d;
}

Complex reflect(const SheetPoint& p, const SlitConfig& s) {
    if (p.on_base()) return p.z;
    if (p.sheet < 0 || p.sheet >= s.slit_count())
        throw Error("invalid sheet index " + std::to_string(p.sheet));
    return mirror(p.z, s.height(p.sheet));
}

Complex sq_coordinate(const SlitConfig& s, int j, SlitEnd end, const SheetPoint& p) {
    if (j < 0 || j >= s.slit_count()) throw Error("invalid slit index");
    if (!p.on_base() && p.sheet != j)
        throw Error("sheet point belongs to a different slit's chart");
    const Complex zeta = (end == SlitEnd::left) ? p.z - s.left_end(j)
                                                : s.right_end(j) - p.z;
    const double r = std::abs(zeta);
    if (r == 0.0) return {0.0, 0.0};
    if (r >= s.l_half_gap())
        throw Error("point outside the endpoint chart radius");
    double th = std::arg(zeta); // principal, (-pi, pi]
    if (p.on_base()) {
        if (th <= 0.0) th += 2.0 * kPi; // (0, 2pi]
    } else {
        if (th > 0.0) th -= 2.0 * kPi; // (-2pi, 0]
    }
    return std::sqrt(r) * std::exp(Complex(0.0, 0.5 * th));
}

SheetPoint sq_inverse(const SlitConfig& s, int j, SlitEnd end, Complex w) {
    if (j < 0 || j >= s.slit_count()) throw Error("invalid slit index");
    const Complex zeta = w * w;
    const Complex z = (end == SlitEnd::left) ? s.left_end(j) + zeta
                                             : s.right_end(j) - zeta;
    // upper half of the chart disk (and its real boundary) is the base sheet
    return (w.imag() >= 0.0) ? SheetPoint::base(z) : SheetPoint::reflected(z, j);
}

} // namespace kle
