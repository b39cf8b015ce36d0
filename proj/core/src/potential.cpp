#include "kle/potential.hpp"

#include <cmath>

#include <json.hpp>

#include "kle/errors.hpp"
#include "kle/slit_basis.hpp"

namespace kle {

double green_h(Complex z, Complex w) {
    if (z == w) throw Error("green_h at coincident points");
    return (1.0 / kPi) * std::log(std::abs((z - std::conj(w)) / (z - w)));
}

double ChargeLayer::eval(Complex z) const {
    double v = 0.0;
    const int N = config.slit_count();
    std::vector<double> modes;
    for (int j = 0; j < N; ++j) {
        const int M = static_cast<int>(modal[j].size());
        modes.resize(M);
        layer_modes(SlitFrame(config, j), M, z, modes.data());
        for (int n = 0; n < M; ++n) v += modal[j](n) * modes[n];
    }
    return v;
}

namespace {

// Trace rows of all layer modes at points on slit `at`.
Eigen::MatrixXd layer_trace_rows(const SlitConfig& s, int M, int at,
                                 const std::vector<double>& th) {
    const int N = s.slit_count();
    Eigen::MatrixXd B(th.size(), N * M);
    std::vector<double> vals(M);
    const SlitFrame fat(s, at);
    for (std::size_t r = 0; r < th.size(); ++r) {
        const double x = fat.c.real() + fat.rho * std::cos(th[r]);
        const Complex z(x, s.height(at));
        for (int j = 0; j < N; ++j) {
            const SlitFrame f(s, j);
            if (j == at) {
                layer_own_trace(th[r], M, vals.data());
                // mirror contribution of the own slit
                const Complex v = inverse_joukowski(f.local_mirror(z));
                B(r, j * M + 0) = vals[0] - std::log(std::abs(v));
                Complex pv = 1.0;
                for (int n = 1; n < M; ++n) {
                    pv *= v;
                    B(r, j * M + n) = vals[n] - pv.real() / n;
                }
            } else {
                layer_modes(f, M, z, vals.data());
                for (int n = 0; n < M; ++n) B(r, j * M + n) = vals[n];
            }
        }
    }
    return B;
}

} // namespace

PotentialWorkspace::PotentialWorkspace(SlitConfig config, int degree,
                                       int colloc_per_degree)
    : config_(std::move(config)), degree_(degree) {
    const int N = config_.slit_count();
    if (N == 0) return;
    const int ncol = colloc_per_degree * degree_;
    matrix_.resize(N * ncol, N * degree_);
    for (int j = 0; j < N; ++j) {
        const auto th = chebyshev_angles(ncol);
        matrix_.block(j * ncol, 0, ncol, N * degree_) =
            layer_trace_rows(config_, degree_, j, th);
        const SlitFrame f(config_, j);
        for (double t : th) {
            colloc_x_.push_back(f.c.real() + f.rho * std::cos(t));
            colloc_slit_.push_back(j);
        }
    }
    qr_.compute(matrix_);
    if (qr_.rank() < matrix_.cols())
        throw IllConditioned("layer collocation system is rank deficient");
}

ChargeLayer PotentialWorkspace::solve(
    const std::function<double(int, double)>& data) const {
    ChargeLayer layer;
    layer.config = config_;
    const int N = config_.slit_count();
    layer.modal.resize(N);
    layer.nodes.resize(N);
    layer.densities.resize(N);
    if (N == 0) return layer;

    Eigen::VectorXd rhs(colloc_x_.size());
    for (std::size_t r = 0; r < colloc_x_.size(); ++r)
        rhs(r) = data(colloc_slit_[r], colloc_x_[r]);
    const Eigen::VectorXd sol = qr_.solve(rhs);
    layer.residual = (matrix_ * sol - rhs).cwiseAbs().maxCoeff();

    for (int j = 0; j < N; ++j) {
        layer.modal[j] = sol.segment(j * degree_, degree_);
        const SlitFrame f(config_, j);
        const auto th = chebyshev_angles(degree_);
        for (double t : th) {
            layer.nodes[j].push_back(f.c.real() + f.rho * std::cos(t));
            double sigma = 0.0; // sqrt-weighted density sum alpha_n T_n(t)
            for (int n = 0; n < degree_; ++n)
                sigma += layer.modal[j](n) * std::cos(n * t);
            layer.densities[j].push_back(sigma);
        }
    }
    return layer;
}

ChargeLayer solve_green(const SlitConfig& s, Complex w, int degree) {
    if (!s.contains(w)) throw ConfigError("source point must lie in D(s)");
    PotentialWorkspace ws(s, degree);
    return ws.solve([&](int j, double x) {
        return green_h(Complex(x, s.height(j)), w);
    });
}

double green_d(const SlitConfig& s, Complex z, Complex w, const ChargeLayer& layer) {
    (void)s;
    return green_h(z, w) - layer.eval(z);
}

std::vector<ChargeLayer> harmonic_basis(const SlitConfig& s, int degree) {
    PotentialWorkspace ws(s, degree);
    std::vector<ChargeLayer> basis;
    for (int j = 0; j < s.slit_count(); ++j)
        basis.push_back(ws.solve(
            [j](int k, double) { return k == j ? 1.0 : 0.0; }));
    return basis;
}

Eigen::MatrixXd period_matrix(const SlitConfig& s,
                              const std::vector<ChargeLayer>& basis) {
    const int N = s.slit_count();
    Eigen::MatrixXd A(N, N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) A(i, j) = 2.0 * basis[j].total_charge(i);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
        throw IllConditioned("period matrix is singular");
    return A;
}

double green_star(const SlitConfig& s, Complex z, Complex w,
                  const std::vector<ChargeLayer>& basis,
                  const Eigen::MatrixXd& period) {
    const int N = s.slit_count();
    Eigen::VectorXd pz(N), pw(N);
    for (int j = 0; j < N; ++j) {
        pz(j) = basis[j].eval(z);
        pw(j) = basis[j].eval(w);
    }
    ChargeLayer gl = solve_green(s, w, basis.empty() ? 32 : static_cast<int>(basis[0].modal[0].size()));
    return green_d(s, z, w, gl) + 2.0 * pz.dot(period.fullPivLu().solve(pw));
}

PotentialSystem::PotentialSystem(SlitConfig config, int degree)
    : ws_(std::move(config), degree) {
    const int N = ws_.config().slit_count();
    for (int j = 0; j < N; ++j)
        basis_.push_back(ws_.solve(
            [j](int k, double) { return k == j ? 1.0 : 0.0; }));
    if (N > 0) {
        period_ = period_matrix(ws_.config(), basis_);
        period_inv_ = period_.inverse();
    }
}

double PotentialSystem::green(Complex z, Complex w) const {
    if (ws_.config().slit_count() == 0) return green_h(z, w);
    const ChargeLayer layer = ws_.solve([&](int j, double x) {
        return green_h(Complex(x, ws_.config().height(j)), w);
    });
    return green_h(z, w) - layer.eval(z);
}

double PotentialSystem::phi(int j, Complex z) const { return basis_[j].eval(z); }

double PotentialSystem::green_star(Complex z, Complex w) const {
    double g = green(z, w);
    const int N = ws_.config().slit_count();
    if (N == 0) return g;
    Eigen::VectorXd pz(N), pw(N);
    for (int j = 0; j < N; ++j) {
        pz(j) = basis_[j].eval(z);
        pw(j) = basis_[j].eval(w);
    }
    return g + 2.0 * pz.dot(period_inv_ * pw);
}

double PotentialSystem::kstar(Complex z, double xi,
                              const std::vector<double>& h_ladder) const {
    std::vector<double> hs = h_ladder;
    if (hs.empty()) {
        const double eta = std::min(ws_.config().eta(), 1.0);
        hs = {eta / 8.0, eta / 16.0, eta / 32.0};
    }
    if (hs.size() < 3) throw Error("kstar h-ladder needs at least 3 rungs");
    std::vector<double> v(hs.size());
    for (std::size_t k = 0; k < hs.size(); ++k)
        v[k] = green_star(z, Complex(xi, hs[k])) / (2.0 * hs[k]);
    // G*(z, xi + ih) is odd in h: ratio = K* + c h^2 + ...
    const double r01 = (4.0 * v[1] - v[0]) / 3.0;
    const double r12 = (4.0 * v[2] - v[1]) / 3.0;
    const double out = (16.0 * r12 - r01) / 15.0;
    if (!std::isfinite(out) || std::abs(r12 - r01) > 1e-2 * std::max(1.0, std::abs(out)))
        throw NonConvergent("kstar h-ladder does not contract");
    return out;
}

double kstar_via_green(const SlitConfig& s, Complex z, double xi, double h) {
    PotentialSystem sys(s);
    return sys.kstar(z, xi, {h, h / 2.0, h / 4.0});
}

std::string ChargeLayer::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = nlohmann::json::parse(config.to_json());
    j["mirror_images"] = mirror_images;
    j["residual"] = residual;
    j["nodes"] = nodes;
    j["densities"] = densities;
    std::vector<std::vector<double>> coeffs;
    for (const auto& m : modal)
        coeffs.emplace_back(m.data(), m.data() + m.size());
    j["modal"] = coeffs;
    return j.dump();
}

} // namespace kle
