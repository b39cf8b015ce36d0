#include "kle/slit_basis.hpp"

#include <cmath>

namespace kle {

Complex sqrt_outside(Complex w) {
    // product of principal square roots: cuts on (-inf, 1) and (-inf, -1)
    // cancel outside [-1, 1], leaving the cut on the segment; ~ w at infinity.
    return std::sqrt(w - 1.0) * std::sqrt(w + 1.0);
}

Complex inverse_joukowski(Complex w) {
    const Complex s = sqrt_outside(w);
    Complex u = w - s;
    // guard against rounding pushing |u| slightly above 1 for huge |w|
    const double au = std::abs(u);
    if (au > 1.0 && std::abs(w) > 4.0) u = (w + s == 0.0 ? u : 1.0 / (w + s));
    return u;
}

void joukowski_powers(Complex u, int M, Complex* out) {
    Complex p = u;
    for (int n = 0; n < M; ++n) {
        out[n] = p;
        p *= u;
    }
}

void kernel_modes(const SlitFrame& f, int M, Complex z, Complex* out) {
    const Complex u = inverse_joukowski(f.local(z));
    const Complex v = inverse_joukowski(f.local_mirror(z));
    Complex pu = u, pv = v;
    const Complex I(0.0, 1.0);
    for (int n = 0; n < M; ++n) {
        out[n] = I * (pu - pv);
        pu *= u;
        pv *= v;
    }
}

void kernel_own_trace_im(double theta, int M, double* out) {
    for (int n = 1; n <= M; ++n) out[n - 1] = std::cos(n * theta);
}

void layer_modes(const SlitFrame& f, int M, Complex z, double* out) {
    const Complex u = inverse_joukowski(f.local(z));
    const Complex v = inverse_joukowski(f.local_mirror(z));
    out[0] = std::log(std::abs(u)) - std::log(std::abs(v));
    Complex pu = 1.0, pv = 1.0;
    for (int n = 1; n < M; ++n) {
        pu *= u;
        pv *= v;
        out[n] = (pu.real() - pv.real()) / static_cast<double>(n);
    }
}

void layer_own_trace(double theta, int M, double* out) {
    out[0] = 0.0;
    for (int n = 1; n < M; ++n) out[n] = std::cos(n * theta) / n;
}

std::vector<double> chebyshev_angles(int n) {
    std::vector<double> th(n);
    for (int k = 0; k < n; ++k) th[k] = (2 * k + 1) * kPi / (2 * n);
    return th;
}

} // namespace kle
