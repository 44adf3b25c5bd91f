#include "spinbath/forward_model.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace spinbath {
namespace {

using Quaternion = std::array<double, 4>; // (w, x, y, z)

Quaternion multiply(Quaternion const& a, Quaternion const& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

/// exp(-i angle n.sigma / 2) for a unit axis n in the x-z plane.
Quaternion rotation(double angle, double nx, double nz) {
    double const s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), s * nx, 0.0, s * nz};
}

double odd_modulation(double omega_tilde, double mx, double mz, double tau, int n_pulses, double omega_larmor) {
    Quaternion branch_a{1, 0, 0, 0};
    Quaternion branch_b{1, 0, 0, 0};
    for (int segment = 0; segment <= n_pulses; ++segment) {
        double const duration = (segment == 0 || segment == n_pulses) ? tau : 2.0 * tau;
        Quaternion const bare = rotation(omega_larmor * duration, 0.0, 1.0);
        Quaternion const coupled = rotation(omega_tilde * duration, mx, mz);
        bool const even = segment % 2 == 0;
        branch_a = multiply(even ? bare : coupled, branch_a);
        branch_b = multiply(even ? coupled : bare, branch_b);
    }
    double m = 0;
    for (int i = 0; i < 4; ++i)
        m += branch_a[i] * branch_b[i];
    return std::clamp(m, -1.0, 1.0);
}

} // namespace

void PulseProtocol::validate() const {
    if (n_pulses < 1)
        throw ValidationError("pulse protocol needs at least one pulse");
    if (!(b_field >= 0))
        throw ValidationError("pulse protocol magnetic field must be non-negative");
    if (tau_grid.empty())
        throw ValidationError("pulse protocol tau grid is empty");
    if (!(tau_grid.front() > 0))
        throw ValidationError("pulse protocol tau values must be positive");
    for (std::size_t i = 1; i < tau_grid.size(); ++i)
        if (!(tau_grid[i] > tau_grid[i - 1]))
            throw ValidationError("pulse protocol tau grid must be strictly ascending (index " + std::to_string(i) +
                                  ")");
}

std::vector<double> uniform_tau_grid(std::size_t n_samples, double tau_max) {
    if (n_samples == 0 || !(tau_max > 0))
        throw DomainError("uniform_tau_grid: need n_samples >= 1 and tau_max > 0");
    std::vector<double> grid(n_samples);
    for (std::size_t j = 0; j < n_samples; ++j)
        grid[j] = tau_max * static_cast<double>(j + 1) / static_cast<double>(n_samples);
    grid.back() = tau_max;
    return grid;
}

bool SpinConfiguration::contains(SiteIndex s) const {
    return std::binary_search(occupied.begin(), occupied.end(), s);
}

bool SpinConfiguration::insert(SiteIndex s) {
    auto it = std::lower_bound(occupied.begin(), occupied.end(), s);
    if (it != occupied.end() && *it == s)
        return false;
    occupied.insert(it, s);
    return true;
}

bool SpinConfiguration::erase(SiteIndex s) {
    auto it = std::lower_bound(occupied.begin(), occupied.end(), s);
    if (it == occupied.end() || *it != s)
        return false;
    occupied.erase(it);
    return true;
}

double single_spin_modulation(double a_par, double a_perp, double tau, int n_pulses, double omega_larmor) {
    double const shifted = a_par + omega_larmor;
    double const omega_tilde = std::hypot(shifted, a_perp);
    if (omega_tilde == 0.0)
        return 1.0;
    double const mz = shifted / omega_tilde;
    double const mx = a_perp / omega_tilde;
    if (n_pulses % 2 != 0)
        return odd_modulation(omega_tilde, mx, mz, tau, n_pulses, omega_larmor);

    double const alpha = omega_tilde * tau;
    double const beta = omega_larmor * tau;
    double const ca = std::cos(alpha), sa = std::sin(alpha);
    double const cb = std::cos(beta), sb = std::sin(beta);

    // cos(phi) and the norm of the composite rotation's vector part give phi
    // without an arccosine, which loses accuracy where 1 + cos(phi) -> 0.
    double const cos_phi = std::clamp(ca * cb - mz * sa * sb, -1.0, 1.0);
    double const sin_phi_sq = sa * sa * cb * cb + ca * ca * sb * sb + sa * sa * sb * sb * mx * mx +
                              2.0 * sa * ca * sb * cb * mz;
    double const phi = std::atan2(std::sqrt(std::max(0.0, sin_phi_sq)), cos_phi);

    double const half_cos = std::cos(0.5 * phi);
    double const denominator = 2.0 * half_cos * half_cos; // 1 + cos(phi)
    double ratio;
    if (denominator < 1e-30) {
        double const n = static_cast<double>(n_pulses);
        ratio = 0.5 * n * n; // limit of sin^2(N phi / 2) / (1 + cos phi) as phi -> pi, N even
    } else {
        double const s = std::sin(0.5 * n_pulses * phi);
        ratio = s * s / denominator;
    }
    double const m = 1.0 - mx * mx * (1.0 - ca) * (1.0 - cb) * ratio;
    return std::clamp(m, -1.0, 1.0);
}

void modulation_series(double a_par, double a_perp, PulseProtocol const& protocol, std::span<double> out) {
    double const omega_l = protocol.omega_larmor();
    for (std::size_t j = 0; j < protocol.tau_grid.size(); ++j)
        out[j] = single_spin_modulation(a_par, a_perp, protocol.tau_grid[j], protocol.n_pulses, omega_l);
}

std::vector<double> bath_product(std::span<SiteIndex const> occupied, SiteTable const& table,
                                 PulseProtocol const& protocol) {
    std::size_t const n = protocol.tau_grid.size();
    std::vector<double> product(n, 1.0);
    std::vector<double> m(n);
    for (SiteIndex s : occupied) {
        if (s >= table.size())
            throw DomainError("site index " + std::to_string(s) + " outside the table");
        modulation_series(constants::to_angular(table.a_par(s)), constants::to_angular(table.a_perp(s)), protocol, m);
        for (std::size_t j = 0; j < n; ++j)
            product[j] *= m[j];
    }
    return product;
}

CoherenceSeries coherence(SpinConfiguration const& config, SiteTable const& table, PulseProtocol const& protocol) {
    CoherenceSeries series;
    series.protocol = protocol;
    series.values = bath_product(config.occupied, table, protocol);
    series.sigmas.assign(series.values.size(), 0.0);
    double const lambda = config.lambda;
    for (std::size_t j = 0; j < series.values.size(); ++j)
        series.values[j] = 0.5 * (1.0 + series.values[j]) * std::exp(-protocol.tau_grid[j] / lambda);
    return series;
}

CoherenceSeries simulate_measurement(CoherenceSeries const& series, double epsilon, std::uint64_t seed) {
    if (!(epsilon >= 0))
        throw DomainError("simulate_measurement: epsilon must be non-negative");
    CoherenceSeries noisy = series;
    noisy.sigmas.assign(series.values.size(), epsilon);
    if (epsilon == 0)
        return noisy;
    Rng rng = make_stream(seed, {0x6e6f6973u});
    std::normal_distribution<double> noise(0.0, epsilon);
    for (double& v : noisy.values)
        v += noise(rng);
    return noisy;
}

} // namespace spinbath
