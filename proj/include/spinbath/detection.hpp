#pragma once

#include "spinbath/forward_model.hpp"
#include "spinbath/lattice.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spinbath {

/// Sampling-limited frequency window of a CPMG experiment, kHz.
struct DetectionWindow {
    double f_min = 0;       ///< 1 / (N * 2 * tau_max)
    double f_max = 0;       ///< n_samples / (4 * tau_max)
    std::size_t n_samples = 0;
    double tau_max = 0;     ///< ms
    int n_pulses = 0;
};

DetectionWindow detection_window(std::size_t n_samples, double tau_max, int n_pulses);
DetectionWindow detection_window(PulseProtocol const& protocol);

/// How a joint fit over several protocols combines their f_min floors.
enum class FloorConvention { Max, Min };

/// Combined window of a joint fit: f_min per `convention`, f_max as the smallest Nyquist bound.
DetectionWindow joint_window(std::span<PulseProtocol const> protocols, FloorConvention convention = FloorConvention::Max);

/**
 L2 distance between the full-bath coherence and the coherence with every spin
 weaker than f_cut removed, for n_configs random isotopic baths. Coherence is the
 pure bath signal (no decay envelope) concatenated over all protocols.

 The result has one row per entry of f_cut_grid and one column per bath draw;
 draws are generated from per-draw random streams so the matrix does not depend
 on `jobs`.
 */
std::vector<std::vector<double>> threshold_error_grid(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                                      double concentration, std::span<double const> f_cut_grid,
                                                      std::size_t n_configs, std::uint64_t seed, unsigned jobs = 0);

/// Single-threshold form of threshold_error_grid.
std::vector<double> threshold_error(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                    double concentration, double f_cut, std::size_t n_configs, std::uint64_t seed,
                                    unsigned jobs = 0);

/// Linear-interpolation quantile (Hyndman-Fan type 7) of an unsorted sample.
double quantile(std::vector<double> sample, double q);

/// Averages the `confidence` quantile over n_boot resamples (with replacement) of
/// `errors` and divides by n_points. Throws DomainError on n_boot < 1, fewer than
/// two errors or confidence outside (0, 1).
double bootstrap_confidence(std::span<double const> errors, std::size_t n_boot, double confidence,
                            std::size_t n_points, Rng& rng);

/// bootstrap_confidence applied to every row of an error grid, reusing the same
/// resample indices for every row.
std::vector<double> bootstrap_confidence_grid(std::vector<std::vector<double>> const& errors, std::size_t n_boot,
                                              double confidence, std::size_t n_points, Rng& rng);

/// Minimum detectable hyperfine magnitude versus per-point noise.
struct ThresholdCurve {
    std::vector<double> epsilons;     ///< descending
    std::vector<double> f_thresholds; ///< kHz, one per epsilon
    double confidence = 0.95;
    double floor = 0;                 ///< kHz
    std::vector<double> f_cut_grid;   ///< kHz
    std::vector<double> normalized_errors; ///< bootstrap level at each f_cut
};

struct ThresholdSettings {
    double concentration = constants::c13_natural_abundance;
    std::size_t n_configs = 10000;
    std::size_t n_boot = 10000;
    double confidence = 0.95;
    FloorConvention floor_convention = FloorConvention::Max;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
};

/// For each epsilon, the smallest f_cut whose bootstrap-normalized error exceeds it,
/// interpolated linearly between bracketing grid points and clamped below at the
/// protocols' joint f_min. Epsilons above every error map to max(f_cut_grid).
ThresholdCurve min_detectable_curve(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                    std::vector<double> f_cut_grid, std::vector<double> epsilon_grid,
                                    ThresholdSettings const& settings);

/// Threshold lookup on an existing normalized-error profile.
double threshold_for_epsilon(std::span<double const> f_cut_grid, std::span<double const> normalized_errors,
                             double epsilon, double floor);

} // namespace spinbath
