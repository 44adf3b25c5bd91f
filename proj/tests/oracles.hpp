#pragma once

// Reference computations written independently of the library, used to pin
// expected values in the tests.

#include <array>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Mat2 = std::array<cplx, 4>; // row-major

inline Mat2 mul(Mat2 const& a, Mat2 const& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}

inline Mat2 dagger(Mat2 const& a) { return {std::conj(a[0]), std::conj(a[2]), std::conj(a[1]), std::conj(a[3])}; }

/// exp(-i H t) by scaling and squaring of a Taylor series, for a 2x2 matrix H.
inline Mat2 propagator(Mat2 const& h, double t) {
    Mat2 a;
    for (int i = 0; i < 4; ++i)
        a[i] = cplx(0, -t) * h[i];
    double norm = 0;
    for (auto const& x : a)
        norm = std::max(norm, std::abs(x));
    int squarings = 0;
    while (norm > 0.05) {
        norm /= 2;
        ++squarings;
    }
    double const scale = std::ldexp(1.0, -squarings);
    for (auto& x : a)
        x *= scale;
    Mat2 result{1, 0, 0, 1};
    Mat2 term{1, 0, 0, 1};
    for (int k = 1; k <= 20; ++k) {
        term = mul(term, a);
        for (auto& x : term)
            x /= static_cast<double>(k);
        for (int i = 0; i < 4; ++i)
            result[i] += term[i];
    }
    for (int i = 0; i < squarings; ++i)
        result = mul(result, result);
    return result;
}

/// Nuclear Hamiltonians for electron in |0> (bare Larmor) and |1> (Larmor plus hyperfine), rad/ms.
inline Mat2 bare_hamiltonian(double omega_l) { return {0.5 * omega_l, 0, 0, -0.5 * omega_l}; }
inline Mat2 coupled_hamiltonian(double omega_l, double a_par, double a_perp) {
    double const z = 0.5 * (omega_l + a_par);
    double const x = 0.5 * a_perp;
    return {z, x, x, -z};
}

/// Single-spin CPMG modulation by conditional evolution: free segments
/// tau, 2tau, ..., 2tau, tau with the electron flipped at every pulse.
inline double modulation(double a_par, double a_perp, double tau, int n_pulses, double omega_l) {
    Mat2 const h0 = bare_hamiltonian(omega_l);
    Mat2 const h1 = coupled_hamiltonian(omega_l, a_par, a_perp);
    Mat2 ua{1, 0, 0, 1}, ub{1, 0, 0, 1};
    for (int seg = 0; seg <= n_pulses; ++seg) {
        double const t = (seg == 0 || seg == n_pulses) ? tau : 2 * tau;
        bool const first = seg % 2 == 0;
        ua = mul(propagator(first ? h0 : h1, t), ua);
        ub = mul(propagator(first ? h1 : h0, t), ub);
    }
    Mat2 const overlap = mul(ua, dagger(ub));
    return 0.5 * (overlap[0] + overlap[3]).real();
}

struct Spin {
    double a_par_khz;
    double a_perp_khz;
};

/// 1/2 (1 + prod M) exp(-tau / lambda) with couplings in kHz and tau in ms.
inline double coherence(std::vector<Spin> const& spins, double tau, int n_pulses, double b_gauss, double gamma_khz_per_g,
                        double lambda) {
    double const two_pi = 2 * std::acos(-1.0);
    double const omega_l = two_pi * gamma_khz_per_g * b_gauss;
    double product = 1;
    for (auto const& s : spins)
        product *= modulation(two_pi * s.a_par_khz, two_pi * s.a_perp_khz, tau, n_pulses, omega_l);
    return 0.5 * (1 + product) * std::exp(-tau / lambda);
}

/// mu0/(4 pi) gamma_e gamma_n hbar / r^3 in kHz, from SI constants, r in angstrom.
inline double dipole_prefactor_khz(double r_angstrom) {
    double const mu0_over_4pi = 1e-7;
    double const gamma_e = 1.76085963023e11; // rad s^-1 T^-1
    double const gamma_c = 6.728284e7;       // rad s^-1 T^-1
    double const hbar = 1.054571817e-34;
    double const r = r_angstrom * 1e-10;
    double const omega = mu0_over_4pi * gamma_e * gamma_c * hbar / (r * r * r); // rad/s
    return omega / (2 * std::acos(-1.0)) / 1e3;
}

} // namespace oracle
