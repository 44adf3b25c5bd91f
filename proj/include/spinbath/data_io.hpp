#pragma once

#include "spinbath/detection.hpp"
#include "spinbath/forward_model.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/posterior.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinbath {

inline constexpr int schema_version = 1;

/// Raw bright/dark photon counts per tau.
struct PhotonCountSeries {
    PulseProtocol protocol; ///< tau grid plus N and B from the file header
    std::vector<double> bright; ///< p_z
    std::vector<double> dark;   ///< m_z
    std::size_t repetitions = 0;
};

struct NormalizeOptions {
    enum class Map { Affine, Identity };
    Map map = Map::Affine;
    /// Contrast kappa in C = (1 + I / kappa) / 2. Calibrated from the shortest-tau points when unset.
    std::optional<double> contrast;
    std::size_t calibration_points = 5;
};

struct NormalizedSeries {
    CoherenceSeries series;
    double contrast = 1;                    ///< kappa actually used (1 for the identity map)
    std::string map = "affine";
    std::vector<std::size_t> dropped;       ///< input indices removed because p + m = 0
};

/// I = (p - m) / (p + m) with sigma_I = 2 sqrt(m^2 p + p^2 m) / (p + m)^2.
double normalized_intensity(double bright, double dark);
double normalized_intensity_sigma(double bright, double dark);

/// Normalized coherence with first-order propagated uncertainties.
NormalizedSeries normalize(PhotonCountSeries const& counts, NormalizeOptions const& options = {});

/// Mean per-point uncertainty of a series.
double average_noise(CoherenceSeries const& series);

// Text formats. Metadata lives in '# key = value [unit]' header lines.

CoherenceSeries load_coherence(std::filesystem::path const& file);
void save_coherence(CoherenceSeries const& series, std::filesystem::path const& file,
                    std::vector<std::string> const& extra_header = {});

PhotonCountSeries load_photon_counts(std::filesystem::path const& file);
void save_photon_counts(PhotonCountSeries const& counts, std::filesystem::path const& file);

/// Delimited (epsilon, f_threshold_khz) rows plus a JSON metadata sidecar.
void save_threshold_curve(ThresholdCurve const& curve, nlohmann::json const& metadata,
                          std::filesystem::path const& table_file, std::filesystem::path const& metadata_file);

/// Everything an `infer` run needs.
struct RunConfig {
    std::filesystem::path site_table;  ///< empty: generated NV diamond table
    double cutoff = constants::default_cutoff;
    std::vector<std::filesystem::path> datasets;
    std::uint64_t seed = 0;
    SamplerSchedule schedule;
    SpinCountPrior prior;
    LambdaPrior lambda_prior;
    std::string noise_mode = "auto"; ///< auto | global | per_point
    double sigma2 = 0.1;
    bool filter_detectable = true;
    FloorConvention floor_convention = FloorConvention::Max;
    std::optional<double> f_min; ///< kHz; overrides the sampling floor
    std::optional<double> f_max; ///< kHz; overrides the Nyquist bound
    unsigned jobs = 0;
};

/// Relative paths are resolved against the config file's directory.
RunConfig load_run_config(std::filesystem::path const& file);
RunConfig run_config_from_json(nlohmann::json const& j, std::filesystem::path const& base_dir = {});
nlohmann::json to_json(RunConfig const& config);

nlohmann::json to_json(SamplerSchedule const& s);
SamplerSchedule schedule_from_json(nlohmann::json const& j, SamplerSchedule defaults = {});
nlohmann::json to_json(SpinCountPrior const& p);
SpinCountPrior prior_from_json(nlohmann::json const& j);
nlohmann::json to_json(LambdaPrior const& p);
LambdaPrior lambda_prior_from_json(nlohmann::json const& j);
nlohmann::json to_json(PulseProtocol const& p);

/// One NDJSON record per sample (step, ensemble, k, sites, couplings, lambda, logL).
void save_posterior(PosteriorEnsemble const& posterior, SiteTable const& table, std::filesystem::path const& ndjson);
PosteriorEnsemble load_posterior(std::filesystem::path const& ndjson);

/// Summary document written next to a posterior.
nlohmann::json posterior_summary(PosteriorEnsemble const& posterior, SiteTable const& table);

nlohmann::json to_json(RecoveryReport const& report);

/// Writes `content` to a temporary sibling then renames it over `file`.
void write_atomically(std::filesystem::path const& file, std::string const& content);

} // namespace spinbath
