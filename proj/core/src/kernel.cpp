#include "kle/kernel.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "kle/rng.hpp"
#include "kle/slit_basis.hpp"

namespace kle {

namespace {

// Assemble Im-trace rows of all slit modes at points on slit `at` (abscissa
// angles th). Column layout: slit-major, degree-minor.
Eigen::MatrixXd trace_rows(const SlitConfig& s, int M, int at,
                           const std::vector<double>& th) {
    const int N = s.slit_count();
    Eigen::MatrixXd B(th.size(), N * M);
    std::vector<Complex> vals(M);
    std::vector<double> own(M);
    const SlitFrame fat(s, at);
    for (std::size_t r = 0; r < th.size(); ++r) {
        const double x = fat.c.real() + fat.rho * std::cos(th[r]);
        const Complex z(x, s.height(at));
        for (int j = 0; j < N; ++j) {
            const SlitFrame f(s, j);
            if (j == at) {
                kernel_own_trace_im(th[r], M, own.data());
                // mirror part of the own slit, evaluated in closed form
                const Complex v = inverse_joukowski(f.local_mirror(z));
                Complex pv = v;
                const Complex I(0.0, 1.0);
                for (int n = 0; n < M; ++n) {
                    B(r, j * M + n) = own[n] + (I * (-pv)).imag();
                    pv *= v;
                }
            } else {
                kernel_modes(f, M, z, vals.data());
                for (int n = 0; n < M; ++n) B(r, j * M + n) = vals[n].imag();
            }
        }
    }
    return B;
}

} // namespace

KernelWorkspace::KernelWorkspace(SlitConfig config, int degree,
                                 int colloc_per_degree)
    : config_(std::move(config)), degree_(degree) {
    if (degree_ < 1) throw ConfigError("kernel degree must be >= 1");
    const int N = config_.slit_count();
    if (N == 0) return;

    const int ncol = colloc_per_degree * degree_;
    Eigen::MatrixXd A(N * ncol, N * degree_ + N);
    for (int j = 0; j < N; ++j) {
        const auto th = chebyshev_angles(ncol);
        const SlitFrame f(config_, j);
        Eigen::MatrixXd B = trace_rows(config_, degree_, j, th);
        A.block(j * ncol, 0, ncol, N * degree_) = B;
        for (int k = 0; k < N; ++k)
            A.block(j * ncol, N * degree_ + k, ncol, 1)
                .setConstant(k == j ? -1.0 : 0.0);
        for (int r = 0; r < ncol; ++r) {
            colloc_.push_back(Complex(f.c.real() + f.rho * std::cos(th[r]),
                                      config_.height(j)));
            colloc_slit_.push_back(j);
        }
    }
    qr_.compute(A);
    if (qr_.rank() < A.cols())
        throw IllConditioned("kernel collocation system is rank deficient");

    // disjoint verification set: uniform in angle, clustered at endpoints
    const int nver = 3 * ncol;
    for (int j = 0; j < N; ++j) {
        const SlitFrame f(config_, j);
        for (int r = 0; r < nver; ++r) {
            const double th = 1e-4 + (kPi - 2e-4) * r / (nver - 1.0);
            verify_.push_back(Complex(f.c.real() + f.rho * std::cos(th),
                                      config_.height(j)));
            verify_slit_.push_back(j);
        }
    }
    verify_modes_.resize(verify_.size(), N * degree_);
    for (int j = 0; j < N; ++j) {
        std::vector<double> th(nver);
        for (int r = 0; r < nver; ++r) th[r] = 1e-4 + (kPi - 2e-4) * r / (nver - 1.0);
        verify_modes_.block(j * nver, 0, nver, N * degree_) =
            trace_rows(config_, degree_, j, th);
    }
}

KernelModel KernelWorkspace::build(double xi, double tol) const {
    KernelModel m;
    m.config = config_;
    m.xi = xi;
    m.degree = degree_;
    const int N = config_.slit_count();
    m.coeffs.resize(N, degree_);
    m.slit_levels.resize(N);
    m.collocation_count = collocation_count();
    if (N == 0) {
        m.residual = 0.0;
        return m;
    }

    Eigen::VectorXd rhs(colloc_.size());
    for (std::size_t r = 0; r < colloc_.size(); ++r)
        rhs(r) = -k_h(colloc_[r], xi);
    const Eigen::VectorXd sol = qr_.solve(rhs);
    for (int j = 0; j < N; ++j)
        for (int n = 0; n < degree_; ++n) m.coeffs(j, n) = sol(j * degree_ + n);
    for (int j = 0; j < N; ++j) m.slit_levels(j) = sol(N * degree_ + j);

    // verification on the disjoint set; skipped entirely for tol < 0
    // (per-stage solves inside the flow integrator)
    if (tol < 0.0) {
        m.residual = -1.0;
        return m;
    }
    Eigen::VectorXd im = verify_modes_ * sol.head(N * degree_);
    double worst = 0.0;
    for (std::size_t r = 0; r < verify_.size(); ++r) {
        const double defect =
            std::abs(im(r) + k_h(verify_[r], xi) - m.slit_levels(verify_slit_[r]));
        worst = std::max(worst, defect);
    }
    m.residual = worst;
    if (tol > 0.0 && worst > tol) throw ResidualExceeded(worst, tol);
    return m;
}

KernelModel build_kernel(const SlitConfig& s, double xi, int degree, double tol) {
    return KernelWorkspace(s, degree).build(xi, tol);
}

Complex eval_psi(const KernelModel& m, const SheetPoint& p) {
    const int N = m.config.slit_count();
    if (!p.on_base()) {
        if (p.sheet < 0 || p.sheet >= N) throw Error("invalid sheet index");
        const Complex base = mirror(p.z, m.config.height(p.sheet));
        const Complex v = eval_psi(m, SheetPoint::base(base));
        return std::conj(v) + Complex(0.0, 2.0 * m.slit_levels(p.sheet));
    }
    if (std::abs(p.z - m.xi) < 1e-12)
        throw PoleProximity("evaluation point within machine guard of the pole");
    Complex val = psi_h(p.z, m.xi);
    std::vector<Complex> modes(m.degree);
    for (int j = 0; j < N; ++j) {
        kernel_modes(SlitFrame(m.config, j), m.degree, p.z, modes.data());
        for (int n = 0; n < m.degree; ++n) val += m.coeffs(j, n) * modes[n];
    }
    return val;
}

double eval_kstar(const KernelModel& m, Complex z) {
    return eval_psi(m, SheetPoint::base(z)).imag();
}

ResidueEstimate residue_at_infinity(const KernelModel& m,
                                    const std::vector<double>& radius_ladder) {
    if (radius_ladder.size() < 2)
        throw Error("residue_at_infinity needs at least two radii");
    const std::size_t K = radius_ladder.size();
    std::vector<Complex> tab(K);
    std::vector<double> h(K);
    for (std::size_t k = 0; k < K; ++k) {
        const Complex z(0.0, radius_ladder[k]);
        tab[k] = z * eval_psi(m, SheetPoint::base(z));
        h[k] = 1.0 / radius_ladder[k];
    }
    // Neville extrapolation in 1/y
    double prev_err = std::numeric_limits<double>::infinity();
    for (std::size_t lvl = 1; lvl < K; ++lvl) {
        for (std::size_t k = 0; k + lvl < K; ++k)
            tab[k] = tab[k + 1] + (tab[k + 1] - tab[k]) * h[k + lvl] /
                                      (h[k] - h[k + lvl]);
        const double err = std::abs(tab[0] - tab[1]);
        if (lvl >= 2 && err > 4.0 * prev_err + 1e-14)
            throw NonConvergent("residue ladder does not contract");
        prev_err = err;
    }
    return {tab[0], std::max(prev_err, 1e-15)};
}

KoebeReport koebe_bound_check(const KernelModel& m, int samples,
                              std::uint64_t seed, double slack) {
    KoebeReport rep;
    rep.samples = samples;
    CounterRng rng(seed);
    const double dist_xi =
        m.config.slit_count() == 0
            ? std::numeric_limits<double>::infinity()
            : m.config.slit_distance_from(Complex(m.xi, 0.0));
    const double R = std::max({3.0, 2.0 * m.config.r_out(), std::abs(m.xi) + 2.0});
    int accepted = 0;
    while (accepted < samples) {
        const Complex z(rng.uniform(-R, R), rng.uniform(1e-3, R));
        if (!m.config.contains(z)) continue;
        if (std::abs(z - m.xi) < 1e-9) continue;
        ++accepted;
        const double denom = std::min(std::abs(z - m.xi), dist_xi);
        const double ratio = std::abs(eval_psi(m, SheetPoint::base(z))) * denom * kPi / 4.0;
        if (ratio > rep.worst_ratio) {
            rep.worst_ratio = ratio;
            rep.witness_z = z;
        }
    }
    rep.violated = rep.worst_ratio > 1.0 + slack;
    return rep;
}

std::string KernelModel::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = nlohmann::json::parse(config.to_json());
    j["xi"] = xi;
    j["degree"] = degree;
    std::vector<std::vector<double>> cs(config.slit_count());
    for (int r = 0; r < coeffs.rows(); ++r) {
        cs[r].resize(degree);
        for (int n = 0; n < degree; ++n) cs[r][n] = coeffs(r, n);
    }
    j["coeffs"] = cs;
    std::vector<double> lv(slit_levels.data(), slit_levels.data() + slit_levels.size());
    j["slit_levels"] = lv;
    j["residual"] = residual;
    j["collocation_count"] = collocation_count;
    return j.dump();
}

KernelModel KernelModel::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    KernelModel m;
    m.config = SlitConfig::from_json(j.at("config").dump());
    m.xi = j.at("xi").get<double>();
    m.degree = j.at("degree").get<int>();
    const auto cs = j.at("coeffs").get<std::vector<std::vector<double>>>();
    m.coeffs.resize(m.config.slit_count(), m.degree);
    for (int r = 0; r < m.coeffs.rows(); ++r)
        for (int n = 0; n < m.degree; ++n) m.coeffs(r, n) = cs[r][n];
    const auto lv = j.at("slit_levels").get<std::vector<double>>();
    m.slit_levels = Eigen::Map<const Eigen::VectorXd>(lv.data(), lv.size());
    m.residual = j.at("residual").get<double>();
    m.collocation_count = j.at("collocation_count").get<int>();
    return m;
}

namespace {
std::string cache_key(const SlitConfig& s, int degree) {
    std::ostringstream os;
    os.precision(17);
    for (double v : s.as_vector()) os << v << ',';
    os << '|' << degree;
    return os.str();
}
} // namespace

std::shared_ptr<const KernelWorkspace> KernelCache::workspace(const SlitConfig& s,
                                                              int degree) {
    auto& e = entries_[cache_key(s, degree)];
    if (!e.ws) e.ws = std::make_shared<KernelWorkspace>(s, degree);
    return e.ws;
}

const KernelModel& KernelCache::model(const SlitConfig& s, double xi, int degree,
                                      double tol) {
    auto& e = entries_[cache_key(s, degree)];
    if (!e.ws) e.ws = std::make_shared<KernelWorkspace>(s, degree);
    auto it = e.models.find(xi);
    if (it == e.models.end())
        it = e.models.emplace(xi, e.ws->build(xi, tol)).first;
    return it->second;
}

void KernelCache::clear() { entries_.clear(); }

} // namespace kle
