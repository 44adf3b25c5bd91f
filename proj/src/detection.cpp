#include "spinbath/detection.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spinbath {

DetectionWindow detection_window(std::size_t n_samples, double tau_max, int n_pulses) {
    if (n_samples < 1 || !(tau_max > 0) || n_pulses < 1)
        throw DomainError("detection_window: need n_samples >= 1, tau_max > 0, n_pulses >= 1");
    DetectionWindow w;
    w.n_samples = n_samples;
    w.tau_max = tau_max;
    w.n_pulses = n_pulses;
    w.f_min = 1.0 / (static_cast<double>(n_pulses) * 2.0 * tau_max);
    w.f_max = static_cast<double>(n_samples) / (4.0 * tau_max);
    return w;
}

DetectionWindow detection_window(PulseProtocol const& protocol) {
    return detection_window(protocol.tau_grid.size(), protocol.tau_max(), protocol.n_pulses);
}

DetectionWindow joint_window(std::span<PulseProtocol const> protocols, FloorConvention convention) {
    if (protocols.empty())
        throw DomainError("joint_window: no protocols");
    DetectionWindow joint = detection_window(protocols.front());
    for (auto const& p : protocols.subspan(1)) {
        auto w = detection_window(p);
        joint.f_min = convention == FloorConvention::Max ? std::max(joint.f_min, w.f_min) : std::min(joint.f_min, w.f_min);
        if (w.f_max < joint.f_max) {
            joint.f_max = w.f_max;
            joint.n_samples = w.n_samples;
            joint.tau_max = w.tau_max;
        }
        joint.n_pulses = std::max(joint.n_pulses, w.n_pulses);
    }
    return joint;
}

std::vector<std::vector<double>> threshold_error_grid(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                                      double concentration, std::span<double const> f_cut_grid,
                                                      std::size_t n_configs, std::uint64_t seed, unsigned jobs) {
    if (n_configs < 1)
        throw DomainError("threshold_error: n_configs must be at least 1");
    if (protocols.empty())
        throw DomainError("threshold_error: no protocols");

    std::size_t n_points = 0;
    for (auto const& p : protocols)
        n_points += p.tau_grid.size();

    std::vector<std::vector<double>> errors(f_cut_grid.size(), std::vector<double>(n_configs, 0.0));

    parallel_for(n_configs, jobs, [&](std::size_t draw_index) {
        Rng rng = make_stream(seed, {0x746872u, draw_index});
        BathDraw draw = draw_bath(table, concentration, rng);

        // Spins sorted by ascending magnitude; suffix products give the signal of
        // every spin at or above a threshold.
        std::vector<SiteIndex> spins = draw.occupied;
        std::stable_sort(spins.begin(), spins.end(),
                         [&](SiteIndex a, SiteIndex b) { return table.magnitude(a) < table.magnitude(b); });
        std::size_t const m = spins.size();
        std::vector<double> suffix((m + 1) * n_points, 1.0);
        std::vector<double> series;
        for (std::size_t i = m; i-- > 0;) {
            std::size_t offset = 0;
            for (auto const& p : protocols) {
                series.resize(p.tau_grid.size());
                modulation_series(constants::to_angular(table.a_par(spins[i])),
                                  constants::to_angular(table.a_perp(spins[i])), p, series);
                for (std::size_t j = 0; j < series.size(); ++j)
                    suffix[i * n_points + offset + j] = suffix[(i + 1) * n_points + offset + j] * series[j];
                offset += series.size();
            }
        }

        for (std::size_t g = 0; g < f_cut_grid.size(); ++g) {
            double const f_cut = f_cut_grid[g];
            std::size_t first_kept = 0;
            while (first_kept < m && table.magnitude(spins[first_kept]) < f_cut)
                ++first_kept;
            double sum = 0;
            for (std::size_t j = 0; j < n_points; ++j) {
                // L - L' with L = (1 + prod)/2
                double const d = 0.5 * (suffix[j] - suffix[first_kept * n_points + j]);
                sum += d * d;
            }
            errors[g][draw_index] = std::sqrt(sum);
        }
    });
    return errors;
}

std::vector<double> threshold_error(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                    double concentration, double f_cut, std::size_t n_configs, std::uint64_t seed,
                                    unsigned jobs) {
    double const grid[] = {f_cut};
    return threshold_error_grid(table, protocols, concentration, grid, n_configs, seed, jobs).front();
}

double quantile(std::vector<double> sample, double q) {
    if (sample.empty())
        throw DomainError("quantile of an empty sample");
    double const h = q * static_cast<double>(sample.size() - 1);
    auto const lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(lo), sample.end());
    double const below = sample[lo];
    if (lo + 1 >= sample.size())
        return below;
    double const above = *std::min_element(sample.begin() + static_cast<std::ptrdiff_t>(lo) + 1, sample.end());
    return below + (h - static_cast<double>(lo)) * (above - below);
}

namespace {

void check_bootstrap_args(std::size_t n_errors, std::size_t n_boot, double confidence, std::size_t n_points) {
    if (n_boot < 1)
        throw DomainError("bootstrap_confidence: n_boot must be at least 1");
    if (n_errors < 2)
        throw DomainError("bootstrap_confidence: need at least two errors");
    if (!(confidence > 0 && confidence < 1))
        throw DomainError("bootstrap_confidence: confidence must lie in (0, 1)");
    if (n_points < 1)
        throw DomainError("bootstrap_confidence: n_points must be at least 1");
}

} // namespace

double bootstrap_confidence(std::span<double const> errors, std::size_t n_boot, double confidence,
                            std::size_t n_points, Rng& rng) {
    std::vector<std::vector<double>> grid{std::vector<double>(errors.begin(), errors.end())};
    return bootstrap_confidence_grid(grid, n_boot, confidence, n_points, rng).front();
}

std::vector<double> bootstrap_confidence_grid(std::vector<std::vector<double>> const& errors, std::size_t n_boot,
                                              double confidence, std::size_t n_points, Rng& rng) {
    if (errors.empty())
        return {};
    std::size_t const n = errors.front().size();
    check_bootstrap_args(n, n_boot, confidence, n_points);

    std::vector<double> sums(errors.size(), 0.0);
    std::vector<std::size_t> picks(n);
    std::vector<double> resample(n);
    for (std::size_t b = 0; b < n_boot; ++b) {
        for (auto& p : picks)
            p = uniform_index(rng, n);
        for (std::size_t row = 0; row < errors.size(); ++row) {
            for (std::size_t i = 0; i < n; ++i)
                resample[i] = errors[row][picks[i]];
            sums[row] += quantile(resample, confidence);
        }
    }
    for (auto& s : sums)
        s = s / static_cast<double>(n_boot) / static_cast<double>(n_points);
    return sums;
}

double threshold_for_epsilon(std::span<double const> f_cut_grid, std::span<double const> normalized_errors,
                             double epsilon, double floor) {
    std::size_t j = 0;
    while (j < normalized_errors.size() && !(normalized_errors[j] > epsilon))
        ++j;
    double threshold;
    if (j == normalized_errors.size()) {
        threshold = f_cut_grid.back();
    } else if (j == 0) {
        threshold = f_cut_grid.front();
    } else {
        double const e0 = normalized_errors[j - 1], e1 = normalized_errors[j];
        double const t = (epsilon - e0) / (e1 - e0);
        threshold = f_cut_grid[j - 1] + std::clamp(t, 0.0, 1.0) * (f_cut_grid[j] - f_cut_grid[j - 1]);
    }
    return std::max(threshold, floor);
}

ThresholdCurve min_detectable_curve(SiteTable const& table, std::span<PulseProtocol const> protocols,
                                    std::vector<double> f_cut_grid, std::vector<double> epsilon_grid,
                                    ThresholdSettings const& settings) {
    if (f_cut_grid.empty() || epsilon_grid.empty())
        throw DomainError("min_detectable_curve: grids must be non-empty");
    if (!std::is_sorted(f_cut_grid.begin(), f_cut_grid.end()))
        throw DomainError("min_detectable_curve: f_cut grid must be ascending");

    std::size_t n_points = 0;
    for (auto const& p : protocols)
        n_points += p.tau_grid.size();

    auto errors = threshold_error_grid(table, protocols, settings.concentration, f_cut_grid, settings.n_configs,
                                       settings.seed, settings.jobs);
    Rng boot_rng = make_stream(settings.seed, {0x626f6f74u});

    ThresholdCurve curve;
    curve.confidence = settings.confidence;
    curve.floor = joint_window(protocols, settings.floor_convention).f_min;
    curve.normalized_errors =
        bootstrap_confidence_grid(errors, settings.n_boot, settings.confidence, n_points, boot_rng);
    curve.f_cut_grid = std::move(f_cut_grid);

    std::sort(epsilon_grid.begin(), epsilon_grid.end(), std::greater<>());
    curve.epsilons = std::move(epsilon_grid);
    for (double eps : curve.epsilons)
        curve.f_thresholds.push_back(
            threshold_for_epsilon(curve.f_cut_grid, curve.normalized_errors, eps, curve.floor));
    return curve;
}

} // namespace spinbath
