#pragma once

#include "spinbath/constants.hpp"
#include "spinbath/lattice.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace spinbath {

/// CPMG-N experiment descriptor. tau is the half interpulse spacing in ms
/// (pulses are separated by 2 tau), b_field in gauss, gyromagnetic_ratio in kHz/G.
struct PulseProtocol {
    int n_pulses = 16;
    std::vector<double> tau_grid;
    double b_field = 311.0;
    double gyromagnetic_ratio = constants::gamma_c13_khz_per_gauss;

    /// Nuclear Larmor frequency, rad/ms.
    double omega_larmor() const { return constants::two_pi * gyromagnetic_ratio * b_field; }
    double tau_max() const { return tau_grid.empty() ? 0.0 : tau_grid.back(); }

    /// Throws ValidationError when N < 1, B < 0 or the grid is not strictly ascending and positive.
    void validate() const;
};

/// tau_j = tau_max * j / n_samples for j = 1..n_samples.
std::vector<double> uniform_tau_grid(std::size_t n_samples, double tau_max);

inline constexpr double no_decay = std::numeric_limits<double>::infinity();

/// The trans-dimensional state: occupied sites (ascending, unique) plus the decay scale.
struct SpinConfiguration {
    std::vector<SiteIndex> occupied;
    double lambda = no_decay; ///< ms; infinity means no envelope decay
    /// Optional per-dataset decay scales. Empty means `lambda` is shared by all datasets.
    std::vector<double> dataset_lambdas;

    std::size_t k() const noexcept { return occupied.size(); }
    double lambda_for(std::size_t dataset) const {
        return dataset_lambdas.empty() ? lambda : dataset_lambdas.at(dataset);
    }
    bool contains(SiteIndex s) const;
    /// Inserts keeping order. Returns false when already present.
    bool insert(SiteIndex s);
    /// Returns false when absent.
    bool erase(SiteIndex s);

    friend bool operator==(SpinConfiguration const&, SpinConfiguration const&) = default;
};

/// Coherence values on a protocol's tau grid with per-point standard deviations.
/// Model output carries zero sigmas; measured data must carry positive ones.
struct CoherenceSeries {
    PulseProtocol protocol;
    std::vector<double> values;
    std::vector<double> sigmas;
};

/// Single-spin CPMG modulation factor M. All frequencies angular (rad/ms), tau in ms.
/// Even N uses the closed form with the composite rotation angle recovered by
/// atan2; odd N composes the two conditional SU(2) propagators exactly.
double single_spin_modulation(double a_par, double a_perp, double tau, int n_pulses, double omega_larmor);

/// M for one spin over a whole tau grid, written into `out` (size of the grid).
void modulation_series(double a_par, double a_perp, PulseProtocol const& protocol, std::span<double> out);

/// Bath-only signal prod_i M_i on the protocol grid (no envelope).
std::vector<double> bath_product(std::span<SiteIndex const> occupied, SiteTable const& table,
                                 PulseProtocol const& protocol);

/// Coherence 1/2 (1 + prod_i M_i) exp(-tau / lambda). Throws DomainError on an invalid index.
CoherenceSeries coherence(SpinConfiguration const& config, SiteTable const& table, PulseProtocol const& protocol);

/// Adds N(0, epsilon^2) noise to every point; sigmas become epsilon.
CoherenceSeries simulate_measurement(CoherenceSeries const& series, double epsilon, std::uint64_t seed);

} // namespace spinbath
