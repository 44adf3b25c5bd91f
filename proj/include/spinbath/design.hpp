#pragma once

#include "spinbath/forward_model.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/lattice.hpp"
#include "spinbath/posterior.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spinbath {

/// One swept parameter: tau_max (ms), n_pulses, b_field (G), n_samples or epsilon.
struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

struct SweepSpec {
    PulseProtocol base;          ///< n_pulses, b_field and gyromagnetic ratio; the grid is rebuilt per point
    double tau_max = 0.008;      ///< ms
    std::size_t n_samples = 250;
    double epsilon = 0.001;
    std::vector<SweepAxis> axes;

    std::vector<std::size_t> bath_counts = default_bath_counts();
    /// Bath spins are drawn uniformly from sites with magnitude in this band (kHz).
    /// Inference candidates are the detection window intersected with the same band.
    double band_lo = 10.0;
    double band_hi = 500.0;
    double true_lambda = 0.02; ///< ms, decay scale of the synthetic data

    SamplerSchedule schedule = SamplerSchedule::desk();
    SpinCountPrior prior;
    /// Replace the prior concentration by mean(bath_counts) / |candidates| at each grid point.
    bool match_prior = true;
    LambdaPrior lambda_prior;
    MatchRule match_rule;
    std::vector<double> bins = default_magnitude_bins();
    std::uint64_t seed = 0;
    unsigned jobs = 0;

    static std::vector<std::size_t> default_bath_counts(); ///< 5..20

    /// Throws ConfigError on unknown axes, empty axes or zero bath counts.
    void validate() const;
};

/// Recovery numbers of one synthetic bath at one grid point.
struct BathReport {
    std::size_t bath = 0;
    std::size_t k_true = 0;
    std::size_t n_candidates = 0;
    std::size_t modal_k = 0;
    long k_discrepancy = 0;
    double false_positive_rate = 0;
    std::vector<double> detection_by_bin; ///< NaN where the bath has no spin in the bin
    std::vector<std::size_t> truth_count_by_bin;
    std::vector<double> detection_rate;   ///< per truth spin
    std::vector<double> truth_magnitude;  ///< kHz, per truth spin
};

struct SweepAggregate {
    std::vector<double> detection_by_bin; ///< mean over baths with spins in the bin (NaN if none)
    double mean_abs_k_discrepancy = 0;
    double mean_false_positive_rate = 0;
};

struct GridPoint {
    std::size_t index = 0;
    std::map<std::string, double> values; ///< swept values only
    PulseProtocol protocol;
    double epsilon = 0;
    std::vector<BathReport> baths;
    SweepAggregate aggregate;
};

struct SweepResult {
    std::vector<double> bins;
    std::vector<GridPoint> points;
};

/// Cartesian product of the axes, first axis slowest. Baths are the same draws
/// at every grid point.
std::vector<GridPoint> sweep_grid(SweepSpec const& spec);

SweepAggregate aggregate_reports(std::vector<BathReport> const& reports, std::size_t n_bins);

/**
 Runs synthetic inference over every grid point and bath. With a checkpoint
 directory, each finished grid point is written to point_<index>.json and
 reloaded instead of recomputed on the next call. A checkpoint that fails to
 parse or belongs to a different spec raises an error naming the grid point.
 */
SweepResult run_sweep(SweepSpec const& spec, SiteTable const& table,
                      std::optional<std::filesystem::path> const& checkpoint_dir = std::nullopt);

/// Synthetic recovery of one bath at one grid point (exposed for tests).
BathReport run_bath(SweepSpec const& spec, SiteTable const& table, GridPoint const& point, std::size_t bath);

struct ProtocolConstraints {
    std::optional<int> max_pulses;
    std::optional<double> b_field;               ///< G, required value
    std::optional<double> max_acquisition_time;  ///< ms
    double averaging = 1;                        ///< repetitions per tau point
};

/// n_samples * averaging * 2 N tau_max, ms.
double acquisition_time(PulseProtocol const& protocol, double averaging);

struct RankedProtocol {
    std::size_t index = 0;
    std::map<std::string, double> values;
    PulseProtocol protocol;
    double epsilon = 0;
    double detection_rate = 0; ///< pooled over truth spins inside the target band
    double false_positive_rate = 0;
    double acquisition_time = 0;
};

struct Recommendation {
    bool feasible = false;
    std::string binding_constraint; ///< set when infeasible
    std::vector<RankedProtocol> ranked;
};

/// Ranks feasible grid points by detection rate in [band_lo, band_hi) kHz, then
/// lower false-positive rate, then shorter acquisition time.
Recommendation recommend_protocol(SweepResult const& result, double band_lo, double band_hi,
                                  ProtocolConstraints const& constraints);

SweepSpec sweep_spec_from_json(nlohmann::json const& j);
nlohmann::json to_json(SweepSpec const& spec);
nlohmann::json to_json(BathReport const& r);
BathReport bath_report_from_json(nlohmann::json const& j);
nlohmann::json to_json(GridPoint const& p);
nlohmann::json to_json(SweepResult const& r);
nlohmann::json to_json(Recommendation const& r);

} // namespace spinbath
