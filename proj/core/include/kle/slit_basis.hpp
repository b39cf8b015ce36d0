#pragma once

#include <vector>

#include "kle/geometry.hpp"

namespace kle {

// Closed-form fields of Chebyshev layer densities on horizontal slits.
//
// For a slit with midpoint c and half-length rho, let w = (z - c)/rho and
//   u(w) = w - sqrt(w^2 - 1),   |u| <= 1,  branch cut on [-1, 1], sqrt ~ w.
// Powers of u(w) and of its mirror-image counterpart u((z - conj c)/rho)
// generate two families used throughout:
//
//  * kernel modes   B_n(z) = i [ u^n - u_mirror^n ]          (n >= 1)
//      Im B_n = 0 on R exactly, B_n = O(z^-2), bounded at the slit tips,
//      Im-trace on the carrying slit is the Chebyshev polynomial T_n.
//      These are the fields of the densities sqrt(1-t^2) U_{n-1}(t).
//
//  * layer modes    L_0(z) = log|u| - log|u_mirror|
//                   L_n(z) = (Re u^n - Re u_mirror^n)/n      (n >= 1)
//      the G_H-potentials of the densities T_n(t)/sqrt(1-t^2); only the
//      n = 0 mode carries net charge (total pi per unit coefficient).

/// sqrt(w^2 - 1) with branch cut on [-1, 1], asymptotic to w at infinity.
Complex sqrt_outside(Complex w);

/// u = w - sqrt_outside(w); |u| <= 1 off the cut, |u| = 1 on it.
Complex inverse_joukowski(Complex w);

/// Fill out[0..M-1] with u^1 .. u^M.
void joukowski_powers(Complex u, int M, Complex* out);

struct SlitFrame {
    Complex c;  // midpoint
    double rho; // half-length

    explicit SlitFrame(const SlitConfig& s, int j)
        : c(s.center(j)), rho(s.half_length(j)) {}

    Complex local(Complex z) const { return (z - c) / rho; }
    Complex local_mirror(Complex z) const { return (z - std::conj(c)) / rho; }
};

/// Kernel modes B_1..B_M of one slit at a point z (anywhere off the slit's
/// open interior; tips and edges included via the branch of sqrt).
void kernel_modes(const SlitFrame& f, int M, Complex z, Complex* out);

/// Im-trace of this slit's own kernel modes at abscissa parameter
/// t = cos(theta) in [-1,1]: simply T_n(t). Mirror contribution excluded.
void kernel_own_trace_im(double theta, int M, double* out);

/// Layer modes L_0..L_{M-1} of one slit at z.
void layer_modes(const SlitFrame& f, int M, Complex z, double* out);

/// Trace of this slit's own layer modes at parameter t = cos(theta):
/// L_0 own-part is 0 (|u| = 1), L_n own-part is cos(n theta)/n.
/// Mirror contribution excluded.
void layer_own_trace(double theta, int M, double* out);

/// Chebyshev-Gauss parameters t_k = cos((2k+1) pi / (2n)), k = 0..n-1.
std::vector<double> chebyshev_angles(int n);

} // namespace kle
