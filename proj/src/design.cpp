#include "spinbath/design.hpp"

#include "spinbath/data_io.hpp"
#include "spinbath/detection.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/parallel.hpp"
#include "spinbath/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace spinbath {
namespace {

using nlohmann::json;

constexpr char const* axis_names[] = {"tau_max", "n_pulses", "b_field", "n_samples", "epsilon"};

bool known_axis(std::string const& name) {
    return std::find(std::begin(axis_names), std::end(axis_names), name) != std::end(axis_names);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json nan_to_null(std::vector<double> const& v) {
    json a = json::array();
    for (double x : v)
        a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
}

std::vector<double> null_to_nan(json const& a) {
    std::vector<double> v;
    for (auto const& x : a)
        v.push_back(x.is_null() ? nan() : x.get<double>());
    return v;
}

std::vector<SiteIndex> bath_pool(SweepSpec const& spec, SiteTable const& table) {
    std::vector<SiteIndex> pool;
    for (SiteIndex i = 0; i < table.size(); ++i)
        if (table.magnitude(i) >= spec.band_lo && table.magnitude(i) <= spec.band_hi)
            pool.push_back(i);
    return pool;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label, std::uint64_t bath) {
    return make_stream(seed, {label, bath})();
}

} // namespace

std::vector<std::size_t> SweepSpec::default_bath_counts() {
    std::vector<std::size_t> counts(16);
    std::iota(counts.begin(), counts.end(), std::size_t{5});
    return counts;
}

void SweepSpec::validate() const {
    if (axes.empty())
        throw ConfigError("sweep needs at least one axis");
    for (auto const& a : axes) {
        if (!known_axis(a.name))
            throw ConfigError("unknown sweep axis '" + a.name + "'");
        if (a.values.empty())
            throw ConfigError("sweep axis '" + a.name + "' has no values");
    }
    if (bath_counts.empty())
        throw ConfigError("sweep needs at least one bath");
    for (auto k : bath_counts)
        if (k == 0)
            throw ConfigError("bath spin counts must be at least 1");
    if (!(band_lo >= 0 && band_lo < band_hi))
        throw ConfigError("sweep band needs 0 <= lo < hi");
    if (!(true_lambda > 0))
        throw ConfigError("true_lambda must be positive");
    schedule.validate();
}

std::vector<GridPoint> sweep_grid(SweepSpec const& spec) {
    std::size_t total = 1;
    for (auto const& a : spec.axes)
        total *= a.values.size();

    std::vector<GridPoint> points(total);
    for (std::size_t g = 0; g < total; ++g) {
        auto& p = points[g];
        p.index = g;
        double tau_max = spec.tau_max;
        double n_samples = static_cast<double>(spec.n_samples);
        p.protocol = spec.base;
        p.epsilon = spec.epsilon;

        std::size_t rest = g;
        for (std::size_t a = spec.axes.size(); a-- > 0;) {
            auto const& axis = spec.axes[a];
            double const v = axis.values[rest % axis.values.size()];
            rest /= axis.values.size();
            p.values[axis.name] = v;
            if (axis.name == "tau_max")
                tau_max = v;
            else if (axis.name == "n_pulses")
                p.protocol.n_pulses = static_cast<int>(std::lround(v));
            else if (axis.name == "b_field")
                p.protocol.b_field = v;
            else if (axis.name == "n_samples")
                n_samples = v;
            else
                p.epsilon = v;
        }
        p.protocol.tau_grid = uniform_tau_grid(static_cast<std::size_t>(std::llround(n_samples)), tau_max);
        p.protocol.validate();
    }
    return points;
}

SweepAggregate aggregate_reports(std::vector<BathReport> const& reports, std::size_t n_bins) {
    SweepAggregate agg;
    agg.detection_by_bin.assign(n_bins, nan());
    for (std::size_t b = 0; b < n_bins; ++b) {
        double sum = 0;
        std::size_t n = 0;
        for (auto const& r : reports)
            if (b < r.detection_by_bin.size() && std::isfinite(r.detection_by_bin[b])) {
                sum += r.detection_by_bin[b];
                ++n;
            }
        if (n > 0)
            agg.detection_by_bin[b] = sum / static_cast<double>(n);
    }
    if (!reports.empty()) {
        double k_sum = 0, fp_sum = 0;
        for (auto const& r : reports) {
            k_sum += static_cast<double>(std::labs(r.k_discrepancy));
            fp_sum += r.false_positive_rate;
        }
        agg.mean_abs_k_discrepancy = k_sum / static_cast<double>(reports.size());
        agg.mean_false_positive_rate = fp_sum / static_cast<double>(reports.size());
    }
    return agg;
}

BathReport run_bath(SweepSpec const& spec, SiteTable const& table, GridPoint const& point, std::size_t bath) {
    auto const pool = bath_pool(spec, table);
    std::size_t const k_true = spec.bath_counts.at(bath);
    if (pool.size() < k_true)
        throw ConfigError("sweep band holds fewer sites than the requested bath size");

    // The same bath at every grid point, so grid points are compared on paired draws.
    Rng bath_rng = make_stream(spec.seed, {0x62617468u, bath});
    SpinConfiguration truth;
    truth.occupied = draw_exact_subset(pool, k_true, bath_rng);
    std::sort(truth.occupied.begin(), truth.occupied.end());
    truth.lambda = spec.true_lambda;

    auto const clean = coherence(truth, table, point.protocol);
    auto const data = simulate_measurement(clean, point.epsilon, derive_seed(spec.seed, 0x6e6f6973u, bath));

    auto const window = detection_window(point.protocol);
    double const lo = std::max(window.f_min, spec.band_lo);
    double const hi = std::min(window.f_max, spec.band_hi);

    BathReport report;
    report.bath = bath;
    report.k_true = k_true;
    auto const truth_couplings = couplings_of(truth, table);
    for (auto const& c : truth_couplings)
        report.truth_magnitude.push_back(c.magnitude());

    FilteredTable candidates;
    if (lo < hi)
        candidates = filter_detectable_sites(table, lo, hi);
    report.n_candidates = candidates.table.size();

    PosteriorEnsemble posterior;
    if (candidates.table.empty()) {
        // Nothing resolvable: the posterior is the empty configuration.
        posterior.samples.push_back({0, 0, SpinConfiguration{}, 0.0});
    } else {
        std::vector<CoherenceSeries> datasets{data};
        NoiseModel const noise = automatic_noise_model(datasets);
        Likelihood const lk(std::move(datasets), candidates.table, noise, 1);
        HybridOptions options;
        options.schedule = spec.schedule;
        options.prior = spec.prior;
        if (spec.match_prior && options.prior.kind == SpinCountPrior::Kind::Binomial) {
            double const mean_k = std::accumulate(spec.bath_counts.begin(), spec.bath_counts.end(), 0.0) /
                                  static_cast<double>(spec.bath_counts.size());
            options.prior.concentration = std::clamp(mean_k / static_cast<double>(candidates.table.size()), 1e-9, 0.5);
        }
        options.lambda_prior = spec.lambda_prior;
        options.seed = derive_seed(spec.seed, 0x6d636d63u, bath);
        options.jobs = 1;
        posterior = run_hybrid(lk, candidates.table, options);
    }

    auto const metrics = recovery_metrics(posterior, candidates.table, truth_couplings, spec.bins, spec.match_rule);
    report.modal_k = metrics.modal_config.k();
    report.k_discrepancy = metrics.k_discrepancy;
    report.false_positive_rate = metrics.false_positive_rate;
    report.detection_by_bin = metrics.detection_by_bin;
    report.truth_count_by_bin = metrics.truth_count_by_bin;
    report.detection_rate = metrics.detection_rate;
    return report;
}

namespace {

json checkpoint_identity(SweepSpec const& spec, GridPoint const& p) {
    return {{"spec", to_json(spec)}, {"index", p.index}, {"values", p.values}};
}

std::optional<GridPoint> load_checkpoint(std::filesystem::path const& file, SweepSpec const& spec,
                                         GridPoint const& point) {
    if (!std::filesystem::exists(file))
        return std::nullopt;
    std::string const where = "checkpoint for grid point " + std::to_string(point.index) + " (" + file.string() + ")";
    try {
        std::ifstream in(file);
        auto const j = json::parse(in);
        if (j.at("schema_version").get<int>() != schema_version)
            throw SchemaError(SchemaError::Kind::VersionMismatch, where + ": unsupported schema_version");
        if (j.at("identity") != checkpoint_identity(spec, point))
            throw ConfigError(where + " was written by a different sweep spec");
        GridPoint loaded = point;
        for (auto const& b : j.at("baths"))
            loaded.baths.push_back(bath_report_from_json(b));
        if (loaded.baths.size() != spec.bath_counts.size())
            throw ValidationError(where + ": expected " + std::to_string(spec.bath_counts.size()) + " bath reports");
        loaded.aggregate = aggregate_reports(loaded.baths, spec.bins.size());
        return loaded;
    } catch (json::exception const& e) {
        throw ValidationError(where + " is corrupted: " + e.what());
    }
}

} // namespace

SweepResult run_sweep(SweepSpec const& spec, SiteTable const& table,
                      std::optional<std::filesystem::path> const& checkpoint_dir) {
    spec.validate();
    if (checkpoint_dir)
        std::filesystem::create_directories(*checkpoint_dir);

    SweepResult result;
    result.bins = spec.bins;
    for (auto& point : sweep_grid(spec)) {
        std::filesystem::path file;
        if (checkpoint_dir) {
            file = *checkpoint_dir / ("point_" + std::to_string(point.index) + ".json");
            if (auto loaded = load_checkpoint(file, spec, point)) {
                result.points.push_back(std::move(*loaded));
                continue;
            }
        }

        point.baths.resize(spec.bath_counts.size());
        parallel_for(spec.bath_counts.size(), spec.jobs,
                     [&](std::size_t b) { point.baths[b] = run_bath(spec, table, point, b); });
        point.aggregate = aggregate_reports(point.baths, spec.bins.size());

        if (checkpoint_dir) {
            json j = to_json(point);
            j["schema_version"] = schema_version;
            j["identity"] = checkpoint_identity(spec, point);
            write_atomically(file, j.dump(1) + "\n");
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

double acquisition_time(PulseProtocol const& protocol, double averaging) {
    return static_cast<double>(protocol.tau_grid.size()) * averaging * 2.0 * protocol.n_pulses * protocol.tau_max();
}

Recommendation recommend_protocol(SweepResult const& result, double band_lo, double band_hi,
                                  ProtocolConstraints const& constraints) {
    if (result.points.empty())
        throw DomainError("recommend_protocol: empty sweep result");
    if (!(band_lo < band_hi))
        throw DomainError("recommend_protocol: empty target band");

    std::map<std::string, std::size_t> eliminated;
    Recommendation rec;
    for (auto const& p : result.points) {
        double const t = acquisition_time(p.protocol, constraints.averaging);
        bool ok = true;
        if (constraints.max_pulses && p.protocol.n_pulses > *constraints.max_pulses) {
            ++eliminated["max_pulses"];
            ok = false;
        }
        if (constraints.b_field && std::abs(p.protocol.b_field - *constraints.b_field) > 1e-9) {
            ++eliminated["b_field"];
            ok = false;
        }
        if (constraints.max_acquisition_time && t > *constraints.max_acquisition_time) {
            ++eliminated["max_acquisition_time"];
            ok = false;
        }
        if (!ok)
            continue;

        RankedProtocol r;
        r.index = p.index;
        r.values = p.values;
        r.protocol = p.protocol;
        r.epsilon = p.epsilon;
        r.acquisition_time = t;
        r.false_positive_rate = p.aggregate.mean_false_positive_rate;
        double hit = 0;
        std::size_t spins = 0;
        for (auto const& b : p.baths)
            for (std::size_t s = 0; s < b.truth_magnitude.size(); ++s)
                if (b.truth_magnitude[s] >= band_lo && b.truth_magnitude[s] < band_hi) {
                    hit += b.detection_rate[s];
                    ++spins;
                }
        r.detection_rate = spins ? hit / static_cast<double>(spins) : 0.0;
        rec.ranked.push_back(std::move(r));
    }

    if (rec.ranked.empty()) {
        auto it = std::max_element(eliminated.begin(), eliminated.end(),
                                   [](auto const& a, auto const& b) { return a.second < b.second; });
        rec.binding_constraint = it->first;
        return rec;
    }
    rec.feasible = true;
    std::stable_sort(rec.ranked.begin(), rec.ranked.end(), [](RankedProtocol const& a, RankedProtocol const& b) {
        if (a.detection_rate != b.detection_rate)
            return a.detection_rate > b.detection_rate;
        if (a.false_positive_rate != b.false_positive_rate)
            return a.false_positive_rate < b.false_positive_rate;
        return a.acquisition_time < b.acquisition_time;
    });
    return rec;
}

SweepSpec sweep_spec_from_json(json const& j) {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != schema_version)
        throw SchemaError(SchemaError::Kind::VersionMismatch, "sweep spec: unsupported schema_version");
    SweepSpec s;
    if (j.contains("base")) {
        auto const& b = j.at("base");
        s.base.n_pulses = b.value("n_pulses", s.base.n_pulses);
        s.base.b_field = b.value("b_field_gauss", s.base.b_field);
        s.base.gyromagnetic_ratio = b.value("gyromagnetic_ratio_khz_per_gauss", s.base.gyromagnetic_ratio);
        s.tau_max = b.value("tau_max_ms", s.tau_max);
        s.n_samples = b.value("n_samples", s.n_samples);
        s.epsilon = b.value("epsilon", s.epsilon);
    }
    if (!j.contains("axes"))
        throw SchemaError(SchemaError::Kind::MissingField, "sweep spec: missing axes");
    for (auto const& [name, values] : j.at("axes").items())
        s.axes.push_back({name, values.get<std::vector<double>>()});
    s.bath_counts = j.value("bath_counts", s.bath_counts);
    if (j.contains("band_khz")) {
        s.band_lo = j.at("band_khz").at(0).get<double>();
        s.band_hi = j.at("band_khz").at(1).get<double>();
    }
    s.true_lambda = j.value("true_lambda_ms", s.true_lambda);
    if (j.contains("schedule"))
        s.schedule = schedule_from_json(j.at("schedule"), SamplerSchedule::desk());
    if (j.contains("prior"))
        s.prior = prior_from_json(j.at("prior"));
    s.match_prior = j.value("match_prior", s.match_prior);
    if (j.contains("lambda_prior"))
        s.lambda_prior = lambda_prior_from_json(j.at("lambda_prior"));
    if (j.contains("match_rule")) {
        s.match_rule.relative = j.at("match_rule").value("relative", s.match_rule.relative);
        s.match_rule.absolute = j.at("match_rule").value("absolute_khz", s.match_rule.absolute);
    }
    s.bins = j.value("bins_khz", s.bins);
    s.seed = j.value("seed", s.seed);
    s.jobs = j.value("jobs", s.jobs);
    return s;
}

json to_json(SweepSpec const& s) {
    json axes = json::object();
    for (auto const& a : s.axes)
        axes[a.name] = a.values;
    // jobs is deliberately absent: results do not depend on it.
    return {{"schema_version", schema_version},
            {"base",
             {{"n_pulses", s.base.n_pulses},
              {"b_field_gauss", s.base.b_field},
              {"gyromagnetic_ratio_khz_per_gauss", s.base.gyromagnetic_ratio},
              {"tau_max_ms", s.tau_max},
              {"n_samples", s.n_samples},
              {"epsilon", s.epsilon}}},
            {"axes", axes},
            {"bath_counts", s.bath_counts},
            {"band_khz", {s.band_lo, s.band_hi}},
            {"true_lambda_ms", s.true_lambda},
            {"schedule", to_json(s.schedule)},
            {"prior", to_json(s.prior)},
            {"match_prior", s.match_prior},
            {"lambda_prior", to_json(s.lambda_prior)},
            {"match_rule", {{"relative", s.match_rule.relative}, {"absolute_khz", s.match_rule.absolute}}},
            {"bins_khz", s.bins},
            {"seed", s.seed}};
}

json to_json(BathReport const& r) {
    return {{"bath", r.bath},
            {"k_true", r.k_true},
            {"n_candidates", r.n_candidates},
            {"modal_k", r.modal_k},
            {"k_discrepancy", r.k_discrepancy},
            {"false_positive_rate", r.false_positive_rate},
            {"detection_by_bin", nan_to_null(r.detection_by_bin)},
            {"truth_count_by_bin", r.truth_count_by_bin},
            {"detection_rate", r.detection_rate},
            {"truth_magnitude_khz", r.truth_magnitude}};
}

BathReport bath_report_from_json(json const& j) {
    BathReport r;
    r.bath = j.at("bath").get<std::size_t>();
    r.k_true = j.at("k_true").get<std::size_t>();
    r.n_candidates = j.at("n_candidates").get<std::size_t>();
    r.modal_k = j.at("modal_k").get<std::size_t>();
    r.k_discrepancy = j.at("k_discrepancy").get<long>();
    r.false_positive_rate = j.at("false_positive_rate").get<double>();
    r.detection_by_bin = null_to_nan(j.at("detection_by_bin"));
    r.truth_count_by_bin = j.at("truth_count_by_bin").get<std::vector<std::size_t>>();
    r.detection_rate = j.at("detection_rate").get<std::vector<double>>();
    r.truth_magnitude = j.at("truth_magnitude_khz").get<std::vector<double>>();
    return r;
}

json to_json(GridPoint const& p) {
    json baths = json::array();
    for (auto const& b : p.baths)
        baths.push_back(to_json(b));
    return {{"index", p.index},
            {"values", p.values},
            {"protocol", to_json(p.protocol)},
            {"epsilon", p.epsilon},
            {"baths", baths},
            {"aggregate",
             {{"detection_by_bin", nan_to_null(p.aggregate.detection_by_bin)},
              {"mean_abs_k_discrepancy", p.aggregate.mean_abs_k_discrepancy},
              {"mean_false_positive_rate", p.aggregate.mean_false_positive_rate}}}};
}

json to_json(SweepResult const& r) {
    json points = json::array();
    for (auto const& p : r.points)
        points.push_back(to_json(p));
    return {{"schema_version", schema_version}, {"bins_khz", r.bins}, {"points", points}};
}

json to_json(Recommendation const& r) {
    json ranked = json::array();
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        auto const& p = r.ranked[i];
        ranked.push_back({{"rank", i + 1},
                          {"grid_point", p.index},
                          {"values", p.values},
                          {"protocol", to_json(p.protocol)},
                          {"epsilon", p.epsilon},
                          {"detection_rate", p.detection_rate},
                          {"false_positive_rate", p.false_positive_rate},
                          {"acquisition_time_ms", p.acquisition_time}});
    }
    json j{{"schema_version", schema_version}, {"feasible", r.feasible}, {"ranked", ranked}};
    if (!r.feasible)
        j["binding_constraint"] = r.binding_constraint;
    return j;
}

} // namespace spinbath
