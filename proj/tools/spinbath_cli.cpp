// spinbath: command-line front end for the spin-bath recovery library.

#include "manifest.hpp"

#include "spinbath/data_io.hpp"
#include "spinbath/design.hpp"
#include "spinbath/detection.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/forward_model.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/lattice.hpp"
#include "spinbath/posterior.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace spinbath;
using spinbath::cli::RunManifest;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;

/// Missing input files are reported before any work, with the path in the message.
class MissingFile : public std::runtime_error {
public:
    explicit MissingFile(fs::path const& p) : std::runtime_error("file not found: " + p.string()) {}
};

void require_file(fs::path const& p) {
    if (!fs::exists(p))
        throw MissingFile(p);
}

json read_json(fs::path const& p) {
    require_file(p);
    std::ifstream in(p);
    try {
        return json::parse(in);
    } catch (json::parse_error const& e) {
        throw SchemaError(SchemaError::Kind::BadValue, p.string() + ": " + e.what());
    }
}

/// Applies a JSON object of option values over already-parsed flags.
/// Keys use underscores where the flags use dashes.
void apply_config_overrides(CLI::App& app, json const& j) {
    if (!j.is_object())
        throw SchemaError(SchemaError::Kind::BadValue, "--config must hold a JSON object");
    for (auto const& [key, value] : j.items()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        CLI::Option* opt = nullptr;
        try {
            opt = app.get_option("--" + flag);
        } catch (CLI::OptionNotFound const&) {
            throw SchemaError(SchemaError::Kind::BadValue, "--config: unknown key '" + key + "'");
        }
        auto as_string = [](json const& v) {
            if (v.is_string())
                return v.get<std::string>();
            if (v.is_boolean())
                return std::string(v.get<bool>() ? "true" : "false");
            return v.dump();
        };
        opt->clear();
        if (value.is_array())
            for (auto const& v : value)
                opt->add_result(as_string(v));
        else
            opt->add_result(as_string(value));
        opt->run_callback();
    }
}

SiteTable build_table(std::string const& path, double cutoff, double concentration, RunManifest* manifest) {
    if (path.empty())
        return generate_nv_diamond_table(cutoff, concentration);
    require_file(path);
    if (manifest)
        manifest->add_input(path);
    if (fs::path(path).extension() == ".json")
        return load_site_table_json(path);
    return load_site_table(path, nv_axis(), cutoff, concentration);
}

struct ProtocolFlags {
    int n_pulses = 16;
    double b_field = 311.0;
    double gyro = constants::gamma_c13_khz_per_gauss;
    double tau_max = 0.008;
    std::size_t n_samples = 250;

    void add(CLI::App* app) {
        app->add_option("--n-pulses", n_pulses, "Number of pi pulses N")->capture_default_str();
        app->add_option("--b-field", b_field, "Magnetic field, gauss")->capture_default_str();
        app->add_option("--gyromagnetic-ratio", gyro, "Bath gyromagnetic ratio, kHz/G")->capture_default_str();
        app->add_option("--tau-max-ms", tau_max, "Largest tau, ms")->capture_default_str();
        app->add_option("--n-samples", n_samples, "Number of tau points")->capture_default_str();
    }
    PulseProtocol protocol(int n) const {
        PulseProtocol p;
        p.n_pulses = n;
        p.b_field = b_field;
        p.gyromagnetic_ratio = gyro;
        p.tau_grid = uniform_tau_grid(n_samples, tau_max);
        p.validate();
        return p;
    }
    PulseProtocol protocol() const { return protocol(n_pulses); }
};

fs::path manifest_path(std::string const& flag, fs::path const& primary) {
    if (!flag.empty())
        return flag;
    if (primary.empty())
        return {};
    auto p = primary;
    p += ".manifest.json";
    return p;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    ProtocolFlags protocol;
    std::string site_table;
    double cutoff = constants::default_cutoff;
    std::vector<SiteIndex> sites;
    double concentration = -1;
    double band_lo = 0;
    double band_hi = 1e300;
    double lambda = no_decay;
    double epsilon = 0;
    std::uint64_t seed = 0;
    std::string out, truth_out, manifest;
};

int run_simulate(SimulateArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("simulate");
    manifest.set_arguments(argv);
    manifest.set_seed(a.seed);
    auto const table = build_table(a.site_table, a.cutoff, constants::c13_natural_abundance, &manifest);
    auto const protocol = a.protocol.protocol();

    SpinConfiguration config;
    config.lambda = a.lambda;
    if (a.concentration > 0) {
        auto const draw = draw_bath(table, a.concentration, make_stream(a.seed, {0x73696d75u})());
        for (SiteIndex s : draw.occupied)
            if (table.magnitude(s) >= a.band_lo && table.magnitude(s) <= a.band_hi)
                config.occupied.push_back(s);
    }
    for (SiteIndex s : a.sites) {
        if (s >= table.size())
            throw ValidationError("site index " + std::to_string(s) + " out of range");
        config.insert(s);
    }

    auto const clean = coherence(config, table, protocol);
    auto const data = simulate_measurement(clean, a.epsilon, a.seed);
    save_coherence(data, a.out, {"epsilon = " + std::to_string(a.epsilon), "seed = " + std::to_string(a.seed)});
    manifest.add_output(a.out);

    if (!a.truth_out.empty()) {
        json couplings = json::array();
        for (auto const& c : couplings_of(config, table))
            couplings.push_back({c.a_par, c.a_perp});
        json truth{{"schema_version", schema_version},
                   {"sites", config.occupied},
                   {"couplings_khz", couplings},
                   {"lambda_ms", std::isfinite(a.lambda) ? json(a.lambda) : json(nullptr)}};
        write_atomically(a.truth_out, truth.dump(2) + "\n");
        manifest.add_output(a.truth_out);
    }
    manifest.set_parameters({{"protocol", to_json(protocol)}, {"k", config.k()}, {"epsilon", a.epsilon}});
    manifest.emit(manifest_path(a.manifest, a.out));
    std::cout << "wrote " << a.out << " (" << config.k() << " spins, " << protocol.tau_grid.size() << " points)\n";
    return 0;
}

// ---------------------------------------------------------------- limits

struct LimitsArgs {
    ProtocolFlags protocol;
    std::string out, manifest;
};

int run_limits(LimitsArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("limits");
    manifest.set_arguments(argv);
    auto const w = detection_window(a.protocol.n_samples, a.protocol.tau_max, a.protocol.n_pulses);
    std::printf("f_min %.10g kHz\nf_max %.10g kHz\nn_samples %zu\ntau_max %.10g ms\nn_pulses %d\n", w.f_min, w.f_max,
                w.n_samples, w.tau_max, w.n_pulses);
    json j{{"f_min_khz", w.f_min}, {"f_max_khz", w.f_max}, {"n_samples", w.n_samples},
           {"tau_max_ms", w.tau_max}, {"n_pulses", w.n_pulses}};
    manifest.set_parameters(j);
    if (!a.out.empty()) {
        write_atomically(a.out, j.dump(2) + "\n");
        manifest.add_output(a.out);
    }
    manifest.emit(manifest_path(a.manifest, a.out));
    return 0;
}

// ---------------------------------------------------------------- threshold

struct ThresholdArgs {
    ProtocolFlags protocol;
    std::vector<int> joint_pulses;
    std::string site_table;
    double cutoff = constants::default_cutoff;
    double concentration = constants::c13_natural_abundance;
    std::size_t n_configs = 10000;
    std::size_t n_boot = 10000;
    double confidence = 0.95;
    std::string floor = "max";
    std::vector<double> f_cut_grid;
    std::vector<double> epsilons;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
    std::string out, metadata, manifest;
};

int run_threshold(ThresholdArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("threshold");
    manifest.set_arguments(argv);
    manifest.set_seed(a.seed);
    auto const table = build_table(a.site_table, a.cutoff, a.concentration, &manifest);

    std::vector<PulseProtocol> protocols;
    if (a.joint_pulses.empty())
        protocols.push_back(a.protocol.protocol());
    for (int n : a.joint_pulses)
        protocols.push_back(a.protocol.protocol(n));

    auto f_cut = a.f_cut_grid;
    if (f_cut.empty())
        for (double f = 0; f <= 200.0 + 1e-9; f += 2.5)
            f_cut.push_back(f);
    auto eps = a.epsilons;
    if (eps.empty())
        eps = {0.01, 0.005, 0.003, 0.002, 0.001, 0.0005, 0.0002, 0.0001, 0.0};

    ThresholdSettings settings;
    settings.concentration = a.concentration;
    settings.n_configs = a.n_configs;
    settings.n_boot = a.n_boot;
    settings.confidence = a.confidence;
    if (a.floor != "max" && a.floor != "min")
        throw ValidationError("--floor must be max or min");
    settings.floor_convention = a.floor == "max" ? FloorConvention::Max : FloorConvention::Min;
    settings.seed = a.seed;
    settings.jobs = a.jobs;

    auto const curve = min_detectable_curve(table, protocols, f_cut, eps, settings);
    json protocols_json = json::array();
    for (auto const& p : protocols)
        protocols_json.push_back(to_json(p));
    json meta{{"n_configs", a.n_configs}, {"n_boot", a.n_boot}, {"concentration", a.concentration},
              {"floor_convention", a.floor}, {"protocols", protocols_json}, {"seed", a.seed}};
    fs::path metadata = a.metadata;
    if (metadata.empty()) {
        metadata = a.out;
        metadata += ".json";
    }
    save_threshold_curve(curve, meta, a.out, metadata);
    manifest.add_output(a.out);
    manifest.add_output(metadata);
    manifest.set_parameters(meta);
    manifest.emit(manifest_path(a.manifest, a.out));

    for (std::size_t i = 0; i < curve.epsilons.size(); ++i)
        std::printf("epsilon %-10.4g f_threshold %.6g kHz\n", curve.epsilons[i], curve.f_thresholds[i]);
    return 0;
}

// ---------------------------------------------------------------- infer / analyze

struct Prepared {
    std::vector<CoherenceSeries> datasets;
    FilteredTable candidates;
    NoiseModel noise;
    DetectionWindow window;
};

Prepared prepare(RunConfig const& config, RunManifest* manifest) {
    if (config.datasets.empty())
        throw ConfigError("run config lists no datasets");
    Prepared p;
    std::vector<PulseProtocol> protocols;
    for (auto const& d : config.datasets) {
        require_file(d);
        if (manifest)
            manifest->add_input(d);
        p.datasets.push_back(load_coherence(d));
        protocols.push_back(p.datasets.back().protocol);
    }
    auto const table = build_table(config.site_table.string(), config.cutoff, config.prior.concentration, manifest);
    p.window = joint_window(protocols, config.floor_convention);
    if (config.f_min)
        p.window.f_min = *config.f_min;
    if (config.f_max)
        p.window.f_max = *config.f_max;
    if (config.filter_detectable) {
        p.candidates = filter_detectable_sites(table, p.window.f_min, p.window.f_max);
    } else {
        p.candidates.table = table;
        for (SiteIndex i = 0; i < table.size(); ++i)
            p.candidates.parent_index.push_back(i);
    }

    if (config.noise_mode == "auto") {
        p.noise = automatic_noise_model(p.datasets, config.sigma2);
    } else if (config.noise_mode == "global") {
        p.noise = {NoiseMode::GlobalSigma, config.sigma2};
    } else {
        for (auto const& d : p.datasets)
            for (double s : d.sigmas)
                if (!(s > 0))
                    throw ValidationError("per_point noise needs positive sigmas in every dataset");
        p.noise = {NoiseMode::PerPointSigma, config.sigma2};
    }
    return p;
}

struct InferArgs {
    std::string config, out, summary, manifest;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
};

int run_infer(InferArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("infer");
    manifest.set_arguments(argv);
    require_file(a.config);
    manifest.set_config(a.config);
    manifest.add_input(a.config);
    auto config = load_run_config(a.config);
    if (!read_json(a.config).contains("seed"))
        config.seed = a.seed;
    if (a.jobs)
        config.jobs = a.jobs;
    manifest.set_seed(config.seed);

    auto prepared = prepare(config, &manifest);
    if (prepared.candidates.empty_warning)
        std::cerr << "warning: no candidate sites inside the detection window; fitting lambda only\n";

    HybridOptions options;
    options.schedule = config.schedule;
    options.prior = config.prior;
    options.lambda_prior = config.lambda_prior;
    if (options.lambda_prior.per_dataset)
        options.lambda_prior.per_dataset = prepared.datasets.size();
    options.seed = config.seed;
    options.jobs = config.jobs;

    Likelihood const lk(prepared.datasets, prepared.candidates.table, prepared.noise, config.jobs);
    auto const posterior = run_hybrid(lk, prepared.candidates.table, options);
    save_posterior(posterior, prepared.candidates.table, a.out);
    manifest.add_output(a.out);

    fs::path summary = a.summary;
    if (summary.empty()) {
        summary = a.out;
        summary += ".summary.json";
    }
    auto s = posterior_summary(posterior, prepared.candidates.table);
    s["config"] = to_json(config);
    s["detection_window_khz"] = {prepared.window.f_min, prepared.window.f_max};
    s["noise_mode"] = prepared.noise.mode == NoiseMode::GlobalSigma ? "global" : "per_point";
    s["site_indices"] = "indices refer to the detection-filtered candidate table";
    write_atomically(summary, s.dump(2) + "\n");
    manifest.add_output(summary);
    manifest.set_parameters(to_json(config));
    manifest.emit(manifest_path(a.manifest, a.out));

    std::cout << "wrote " << posterior.samples.size() << " samples over " << prepared.candidates.table.size()
              << " candidate sites to " << a.out << '\n';
    return 0;
}

struct AnalyzeArgs {
    std::string config, posterior, truth, out, overlay_prefix, manifest;
    double strong_threshold = 25.0;
};

int run_analyze(AnalyzeArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("analyze");
    manifest.set_arguments(argv);
    require_file(a.config);
    require_file(a.posterior);
    manifest.set_config(a.config);
    manifest.add_input(a.config);
    manifest.add_input(a.posterior);
    auto const config = load_run_config(a.config);
    auto const prepared = prepare(config, &manifest);
    auto const& table = prepared.candidates.table;
    auto const posterior = load_posterior(a.posterior);
    for (auto const& s : posterior.samples)
        for (SiteIndex i : s.config.occupied)
            if (i >= table.size())
                throw ValidationError("posterior references site " + std::to_string(i) +
                                      " outside the candidate table rebuilt from the config");

    RecoveryReport report;
    if (!a.truth.empty()) {
        auto const t = read_json(a.truth);
        manifest.add_input(a.truth);
        std::vector<Coupling> truth;
        for (auto const& c : t.at("couplings_khz"))
            truth.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        report = recovery_metrics(posterior, table, truth);
    } else {
        report = summarize_posterior(posterior, table);
    }

    json j = to_json(report);
    j["schema_version"] = schema_version;
    json strong = json::array();
    for (SiteIndex s : strong_spins(report.modal_config, table, a.strong_threshold)) {
        auto const& p = table.position(s);
        strong.push_back({{"site", s}, {"position_angstrom", {p[0], p[1], p[2]}},
                          {"a_par_khz", table.a_par(s)}, {"a_perp_khz", table.a_perp(s)}});
    }
    j["strong_spins"] = strong;
    write_atomically(a.out, j.dump(2) + "\n");
    manifest.add_output(a.out);

    if (!a.overlay_prefix.empty()) {
        std::vector<PulseProtocol> protocols;
        for (auto const& d : prepared.datasets)
            protocols.push_back(d.protocol);
        auto const overlays = reconstruct_overlay(posterior, table, protocols);
        for (std::size_t d = 0; d < overlays.size(); ++d) {
            std::ostringstream out;
            out << "tau_ms,data,modal,lower,upper\n";
            char line[256];
            for (std::size_t i = 0; i < protocols[d].tau_grid.size(); ++i) {
                std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", protocols[d].tau_grid[i],
                              prepared.datasets[d].values[i], overlays[d].modal.values[i], overlays[d].lower[i],
                              overlays[d].upper[i]);
                out << line;
            }
            fs::path file = a.overlay_prefix + "_" + std::to_string(d) + ".csv";
            write_atomically(file, out.str());
            manifest.add_output(file);
        }
    }
    manifest.emit(manifest_path(a.manifest, a.out));
    std::cout << "modal configuration: " << report.modal_config.k() << " spins; modal k " << report.modal_k
              << (report.modal_k_disagrees ? " (differs from the modal set)" : "") << '\n';
    return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    std::string config, site_table, checkpoint_dir, out, recommend_out, manifest;
    double cutoff = constants::default_cutoff;
    unsigned jobs = 0;
    double band_lo = 25, band_hi = 100;
    int max_pulses = 0;
    double fixed_b = -1, max_time = -1, averaging = 1;
};

int run_sweep_cmd(SweepArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("sweep");
    manifest.set_arguments(argv);
    manifest.set_config(a.config);
    manifest.add_input(a.config);
    auto spec = sweep_spec_from_json(read_json(a.config));
    if (a.jobs)
        spec.jobs = a.jobs;
    manifest.set_seed(spec.seed);
    auto const table = build_table(a.site_table, a.cutoff, constants::c13_natural_abundance, &manifest);

    std::optional<fs::path> checkpoints;
    if (!a.checkpoint_dir.empty())
        checkpoints = a.checkpoint_dir;
    auto const result = run_sweep(spec, table, checkpoints);
    write_atomically(a.out, to_json(result).dump(1) + "\n");
    manifest.add_output(a.out);

    ProtocolConstraints constraints;
    if (a.max_pulses > 0)
        constraints.max_pulses = a.max_pulses;
    if (a.fixed_b >= 0)
        constraints.b_field = a.fixed_b;
    if (a.max_time > 0)
        constraints.max_acquisition_time = a.max_time;
    constraints.averaging = a.averaging;
    auto const rec = recommend_protocol(result, a.band_lo, a.band_hi, constraints);
    if (!a.recommend_out.empty()) {
        write_atomically(a.recommend_out, to_json(rec).dump(2) + "\n");
        manifest.add_output(a.recommend_out);
    }
    manifest.set_parameters(to_json(spec));
    manifest.emit(manifest_path(a.manifest, a.out));

    if (!rec.feasible) {
        std::cout << "infeasible under constraints (binding: " << rec.binding_constraint << ")\n";
    } else {
        auto const& best = rec.ranked.front();
        std::cout << "best grid point " << best.index << ": detection " << best.detection_rate << " in ["
                  << a.band_lo << ", " << a.band_hi << ") kHz\n";
    }
    return 0;
}

// ---------------------------------------------------------------- normalize

struct NormalizeArgs {
    std::string counts, out, manifest;
    double contrast = 0;
    bool identity = false;
    std::size_t calibration_points = 5;
};

int run_normalize(NormalizeArgs const& a, std::vector<std::string> const& argv) {
    RunManifest manifest("normalize");
    manifest.set_arguments(argv);
    require_file(a.counts);
    manifest.add_input(a.counts);
    auto const counts = load_photon_counts(a.counts);
    NormalizeOptions options;
    if (a.identity)
        options.map = NormalizeOptions::Map::Identity;
    if (a.contrast != 0)
        options.contrast = a.contrast;
    options.calibration_points = a.calibration_points;
    auto const n = normalize(counts, options);
    for (std::size_t i : n.dropped)
        std::cerr << "warning: dropped tau index " << i << " (zero total counts)\n";

    char kappa[64];
    std::snprintf(kappa, sizeof kappa, "%.17g", n.contrast);
    save_coherence(n.series, a.out, {"map = " + n.map, std::string("contrast = ") + kappa,
                                     "dropped_points = " + std::to_string(n.dropped.size())});
    manifest.add_output(a.out);
    double const eps = average_noise(n.series);
    manifest.set_parameters({{"map", n.map}, {"contrast", n.contrast}, {"dropped", n.dropped}, {"epsilon", eps}});
    manifest.emit(manifest_path(a.manifest, a.out));
    std::printf("contrast %.6g\naverage noise %.6g\n", n.contrast, eps);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nuclear spin bath recovery from CPMG coherence data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", spinbath::cli::version_string());
    std::vector<std::string> args(argv, argv + argc);

    std::string overrides;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", overrides, "JSON object whose keys override flags");
    };

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Synthesize a coherence series for a spin configuration");
    sim.protocol.add(simulate);
    simulate->add_option("--site-table", sim.site_table, "Site table (text or .json); default: generated NV table");
    simulate->add_option("--cutoff", sim.cutoff, "Cutoff radius, angstrom")->capture_default_str();
    simulate->add_option("--sites", sim.sites, "Occupied site indices");
    simulate->add_option("--concentration", sim.concentration, "Draw a random bath at this concentration");
    simulate->add_option("--band-lo", sim.band_lo, "Keep drawn spins with magnitude >= this, kHz");
    simulate->add_option("--band-hi", sim.band_hi, "Keep drawn spins with magnitude <= this, kHz");
    simulate->add_option("--lambda-ms", sim.lambda, "Decay scale, ms (default: no decay)");
    simulate->add_option("--epsilon", sim.epsilon, "Per-point Gaussian noise")->capture_default_str();
    simulate->add_option("--seed", sim.seed)->capture_default_str();
    simulate->add_option("--out", sim.out, "Coherence series file")->required();
    simulate->add_option("--truth-out", sim.truth_out, "Ground-truth JSON");
    simulate->add_option("--manifest", sim.manifest);
    add_config(simulate);

    LimitsArgs lim;
    auto* limits = app.add_subcommand("limits", "Print the detection window of a protocol");
    lim.protocol.add(limits);
    limits->add_option("--out", lim.out, "Also write the window as JSON");
    limits->add_option("--manifest", lim.manifest);
    add_config(limits);

    ThresholdArgs thr;
    auto* threshold = app.add_subcommand("threshold", "Bootstrap minimum detectable coupling versus noise");
    thr.protocol.add(threshold);
    threshold->add_option("--joint-pulses", thr.joint_pulses, "Pulse counts of a joint fit, e.g. 8 16");
    threshold->add_option("--site-table", thr.site_table);
    threshold->add_option("--cutoff", thr.cutoff)->capture_default_str();
    threshold->add_option("--concentration", thr.concentration)->capture_default_str();
    threshold->add_option("--n-configs", thr.n_configs)->capture_default_str();
    threshold->add_option("--n-boot", thr.n_boot)->capture_default_str();
    threshold->add_option("--confidence", thr.confidence)->capture_default_str();
    threshold->add_option("--floor", thr.floor, "Joint floor convention: max or min")->capture_default_str();
    threshold->add_option("--f-cut-grid", thr.f_cut_grid, "Ascending f_cut values, kHz");
    threshold->add_option("--epsilons", thr.epsilons, "Per-point noise levels");
    threshold->add_option("--seed", thr.seed)->capture_default_str();
    threshold->add_option("--jobs", thr.jobs, "Worker threads (0: all cores)");
    threshold->add_option("--out", thr.out, "Curve table")->required();
    threshold->add_option("--metadata", thr.metadata, "Metadata JSON (default: <out>.json)");
    threshold->add_option("--manifest", thr.manifest);
    add_config(threshold);

    InferArgs inf;
    auto* infer = app.add_subcommand("infer", "Run the hybrid sampler on coherence data");
    infer->add_option("--config", inf.config, "Run configuration JSON")->required();
    infer->add_option("--out", inf.out, "Posterior NDJSON")->required();
    infer->add_option("--summary", inf.summary, "Summary JSON (default: <out>.summary.json)");
    infer->add_option("--seed", inf.seed, "Seed when the config has none");
    infer->add_option("--jobs", inf.jobs, "Worker threads (0: config or all cores)");
    infer->add_option("--manifest", inf.manifest);

    AnalyzeArgs ana;
    auto* analyze = app.add_subcommand("analyze", "Summarize a posterior");
    analyze->add_option("--config", ana.config, "Run configuration used for inference")->required();
    analyze->add_option("--posterior", ana.posterior, "Posterior NDJSON")->required();
    analyze->add_option("--truth", ana.truth, "Ground-truth JSON from simulate");
    analyze->add_option("--out", ana.out, "Report JSON")->required();
    analyze->add_option("--overlay-prefix", ana.overlay_prefix, "Write <prefix>_<dataset>.csv overlays");
    analyze->add_option("--strong-threshold", ana.strong_threshold, "kHz")->capture_default_str();
    analyze->add_option("--manifest", ana.manifest);

    SweepArgs swp;
    auto* sweep = app.add_subcommand("sweep", "Synthetic recovery sweep over protocol parameters");
    sweep->add_option("--config", swp.config, "Sweep spec JSON")->required();
    sweep->add_option("--site-table", swp.site_table);
    sweep->add_option("--cutoff", swp.cutoff)->capture_default_str();
    sweep->add_option("--checkpoint-dir", swp.checkpoint_dir, "Resume directory");
    sweep->add_option("--jobs", swp.jobs);
    sweep->add_option("--out", swp.out, "Sweep result JSON")->required();
    sweep->add_option("--recommend-out", swp.recommend_out, "Ranked protocols JSON");
    sweep->add_option("--band-lo", swp.band_lo, "Target band, kHz")->capture_default_str();
    sweep->add_option("--band-hi", swp.band_hi, "Target band, kHz")->capture_default_str();
    sweep->add_option("--max-pulses", swp.max_pulses);
    sweep->add_option("--fixed-b", swp.fixed_b, "Required field, gauss");
    sweep->add_option("--max-time-ms", swp.max_time, "Acquisition time budget, ms");
    sweep->add_option("--averaging", swp.averaging)->capture_default_str();
    sweep->add_option("--manifest", swp.manifest);

    NormalizeArgs nrm;
    auto* norm = app.add_subcommand("normalize", "Photon counts to coherence with propagated sigmas");
    norm->add_option("--counts", nrm.counts, "Photon count file")->required();
    norm->add_option("--out", nrm.out, "Coherence series file")->required();
    norm->add_option("--contrast", nrm.contrast, "Fixed contrast kappa (default: calibrated)");
    norm->add_flag("--identity", nrm.identity, "Use C = I_norm");
    norm->add_option("--calibration-points", nrm.calibration_points)->capture_default_str();
    norm->add_option("--manifest", nrm.manifest);
    add_config(norm);

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        if (code == 0)
            return 0;
        auto const parsed = app.get_subcommands();
        std::cerr << (parsed.empty() ? app.help() : parsed.front()->help());
        return exit_validation;
    }

    try {
        if (!overrides.empty()) {
            auto* sub = app.get_subcommands().front();
            apply_config_overrides(*sub, read_json(overrides));
        }
        if (simulate->parsed())
            return run_simulate(sim, args);
        if (limits->parsed())
            return run_limits(lim, args);
        if (threshold->parsed())
            return run_threshold(thr, args);
        if (infer->parsed())
            return run_infer(inf, args);
        if (analyze->parsed())
            return run_analyze(ana, args);
        if (sweep->parsed())
            return run_sweep_cmd(swp, args);
        if (norm->parsed())
            return run_normalize(nrm, args);
    } catch (MissingFile const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (ValidationError const& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    } catch (ParseError const& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return exit_validation;
    } catch (SchemaError const& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return exit_validation;
    } catch (ConfigError const& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_validation;
    } catch (DomainError const& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return exit_validation;
    } catch (CLI::Error const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (std::exception const& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_runtime;
}
