#pragma once

#include "spinbath/forward_model.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/lattice.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace spinbath {

/// Hyperfine couplings of one spin, kHz.
struct Coupling {
    double a_par = 0;
    double a_perp = 0;
    double magnitude() const;
};

std::vector<Coupling> couplings_of(SpinConfiguration const& config, SiteTable const& table);

/// Most frequent exact site set. Ties go to the higher mean log-likelihood, then to
/// the lexicographically smaller site list. lambda is the median among samples
/// sharing the set. Throws DomainError on an empty posterior.
SpinConfiguration modal_configuration(PosteriorEnsemble const& posterior);

/// A pair matches when its hyperfine distance is at most max(relative * |truth|, absolute).
struct MatchRule {
    double relative = 0.10;
    double absolute = 2.0; ///< kHz
};

struct Matching {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; ///< (candidate, truth)
    std::vector<std::size_t> misses;                        ///< unmatched truth indices
    std::vector<std::size_t> extras;                        ///< unmatched candidate indices
};

/// Greedy one-to-one matching by ascending Euclidean distance in (a_par, a_perp).
Matching match_spins(std::span<Coupling const> candidate, std::span<Coupling const> truth, MatchRule rule = {});

/// Default magnitude bin edges, kHz: [0,25), [25,100), [100,200), [200, inf).
std::vector<double> default_magnitude_bins();

/// Index of the bin holding `magnitude` for ascending edges starting at 0; the last bin is open.
std::size_t bin_of(double magnitude, std::span<double const> edges);

struct RecoveryReport {
    SpinConfiguration modal_config;
    std::map<std::size_t, double> k_histogram;  ///< k -> posterior frequency
    std::vector<double> bin_edges;
    std::vector<double> hyperfine_hist;         ///< posterior spin mass per magnitude bin, sums to 1
    std::size_t modal_k = 0;                    ///< mode of k_histogram
    bool modal_k_disagrees = false;             ///< modal k differs from |modal_config|

    // Simulation mode only (empty without truth).
    std::vector<Coupling> truth;
    std::vector<double> detection_rate;         ///< per truth spin
    long k_discrepancy = 0;                     ///< |modal_config| - |truth|
    double false_positive_rate = 0;             ///< unmatched modal spins / |modal_config|
    std::vector<double> detection_by_bin;       ///< mean detection rate of truth spins per bin (NaN if none)
    std::vector<std::size_t> truth_count_by_bin;
    std::vector<long> k_discrepancy_by_bin;     ///< modal spins minus truth spins per bin
    std::vector<double> false_positive_by_bin;  ///< per bin, fraction of modal spins unmatched (NaN if none)
};

/// Posterior summaries without ground truth.
RecoveryReport summarize_posterior(PosteriorEnsemble const& posterior, SiteTable const& table,
                                   std::vector<double> bins = default_magnitude_bins());

/// Summaries plus detection, discrepancy and false-positive metrics against a known bath.
RecoveryReport recovery_metrics(PosteriorEnsemble const& posterior, SiteTable const& table,
                                std::span<Coupling const> truth, std::vector<double> bins = default_magnitude_bins(),
                                MatchRule rule = {});

struct Overlay {
    CoherenceSeries modal;    ///< model curve of the modal configuration
    std::vector<double> lower; ///< pointwise 5% posterior-predictive quantile
    std::vector<double> upper; ///< pointwise 95% quantile
};

/// Modal-configuration model curves plus a 5-95% band over at most `max_band_samples`
/// evenly spaced posterior samples, one per protocol. Dataset index d selects lambda_for(d).
std::vector<Overlay> reconstruct_overlay(PosteriorEnsemble const& posterior, SiteTable const& table,
                                         std::span<PulseProtocol const> protocols,
                                         std::size_t max_band_samples = 500);

/// Modal spins above a magnitude threshold (25 kHz by default), for spatial plots.
std::vector<SiteIndex> strong_spins(SpinConfiguration const& config, SiteTable const& table, double min_magnitude = 25.0);

} // namespace spinbath
