#include "spinbath/data_io.hpp"

#include "spinbath/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace spinbath {
namespace {

using nlohmann::json;

std::string format17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(std::string s) {
    auto const first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    auto const last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_row(std::string const& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',' || ch == '\t' || ch == ';') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    fields.push_back(trim(current));
    if (fields.size() == 1) { // whitespace-delimited fallback
        fields.clear();
        std::istringstream in(line);
        for (std::string f; in >> f;)
            fields.push_back(f);
    }
    return fields;
}

double parse_number(std::string const& source, std::size_t line, std::string const& token) {
    char const* begin = token.c_str();
    char* end = nullptr;
    double const v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || std::isnan(v))
        throw ParseError(source, line, "not a number: '" + token + "'");
    return v;
}

struct HeaderValue {
    std::string value;
    std::string unit;
    std::size_t line = 0;
};

/// Delimited table with '# key = value [unit]' metadata.
struct TextTable {
    std::map<std::string, HeaderValue> header;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> row_lines;
};

TextTable read_text_table(std::filesystem::path const& file) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("cannot open " + file.string());
    std::string const name = file.string();
    TextTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string const t = trim(line);
        if (t.empty())
            continue;
        if (t[0] == '#') {
            auto const eq = t.find('=');
            if (eq == std::string::npos)
                continue; // plain comment
            std::string key = trim(t.substr(1, eq - 1));
            std::istringstream rest(t.substr(eq + 1));
            HeaderValue hv;
            rest >> hv.value;
            std::getline(rest, hv.unit);
            hv.unit = trim(hv.unit);
            hv.line = line_no;
            table.header[key] = hv;
            continue;
        }
        auto fields = split_row(t);
        if (table.columns.empty()) {
            table.columns = fields;
            continue;
        }
        if (fields.size() != table.columns.size())
            throw ParseError(name, line_no,
                             "expected " + std::to_string(table.columns.size()) + " columns, found " +
                                 std::to_string(fields.size()));
        std::vector<double> row;
        for (auto const& f : fields)
            row.push_back(parse_number(name, line_no, f));
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(line_no);
    }
    return table;
}

void expect_columns(TextTable const& t, std::vector<std::string> const& expected, std::string const& name) {
    if (t.columns != expected) {
        std::string want;
        for (auto const& c : expected)
            want += (want.empty() ? "" : ",") + c;
        throw SchemaError(SchemaError::Kind::MissingField, name + ": expected columns " + want);
    }
}

double header_number(TextTable const& t, std::string const& key, std::string const& unit, std::string const& name,
                     std::optional<double> fallback = std::nullopt) {
    auto it = t.header.find(key);
    if (it == t.header.end()) {
        if (fallback)
            return *fallback;
        throw SchemaError(SchemaError::Kind::MissingField, name + ": missing header field '" + key + "'");
    }
    if (it->second.unit != unit)
        throw SchemaError(SchemaError::Kind::BadUnitTag, name + ":" + std::to_string(it->second.line) + ": field '" +
                                                             key + "' expects unit '" + unit + "', found '" +
                                                             it->second.unit + "'");
    return parse_number(name, it->second.line, it->second.value);
}

void check_ascending(std::vector<double> const& tau, TextTable const& t, std::string const& name) {
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (!(tau[i] > 0) || (i > 0 && !(tau[i] > tau[i - 1])))
            throw SchemaError(SchemaError::Kind::NonMonotoneGrid,
                              name + ":" + std::to_string(t.row_lines[i]) + ": tau grid must be positive and strictly ascending");
    }
}

PulseProtocol protocol_from_header(TextTable const& t, std::string const& name) {
    PulseProtocol p;
    double const n = header_number(t, "n_pulses", "", name);
    if (n < 1 || n != std::floor(n))
        throw SchemaError(SchemaError::Kind::BadValue, name + ": n_pulses must be a positive integer");
    p.n_pulses = static_cast<int>(n);
    p.b_field = header_number(t, "b_field", "G", name);
    p.gyromagnetic_ratio = header_number(t, "gyromagnetic_ratio", "kHz/G", name, constants::gamma_c13_khz_per_gauss);
    return p;
}

void write_protocol_header(std::ostream& out, PulseProtocol const& p) {
    out << "# n_pulses = " << p.n_pulses << '\n';
    out << "# b_field = " << format17(p.b_field) << " G\n";
    out << "# gyromagnetic_ratio = " << format17(p.gyromagnetic_ratio) << " kHz/G\n";
}

json lambda_json(double lambda) { return std::isfinite(lambda) ? json(lambda) : json(nullptr); }
double lambda_from(json const& j) { return j.is_null() ? no_decay : j.get<double>(); }

} // namespace

double normalized_intensity(double bright, double dark) { return (bright - dark) / (bright + dark); }

double normalized_intensity_sigma(double bright, double dark) {
    double const total = bright + dark;
    return 2.0 / (total * total) * std::sqrt(dark * dark * bright + bright * bright * dark);
}

NormalizedSeries normalize(PhotonCountSeries const& counts, NormalizeOptions const& options) {
    std::size_t const n = counts.protocol.tau_grid.size();
    if (counts.bright.size() != n || counts.dark.size() != n)
        throw ValidationError("photon counts do not match the tau grid");

    NormalizedSeries out;
    out.series.protocol = counts.protocol;
    out.series.protocol.tau_grid.clear();
    std::vector<double> intensity, sigma;
    for (std::size_t i = 0; i < n; ++i) {
        double const p = counts.bright[i], m = counts.dark[i];
        if (p < 0 || m < 0)
            throw ValidationError("negative photon count at index " + std::to_string(i));
        if (p + m == 0) {
            out.dropped.push_back(i);
            continue;
        }
        out.series.protocol.tau_grid.push_back(counts.protocol.tau_grid[i]);
        intensity.push_back(normalized_intensity(p, m));
        sigma.push_back(normalized_intensity_sigma(p, m));
    }
    if (intensity.empty())
        throw ValidationError("every point has zero total counts");

    if (options.map == NormalizeOptions::Map::Identity) {
        out.map = "identity";
        out.contrast = 1.0;
        out.series.values = intensity;
        out.series.sigmas = sigma;
        return out;
    }

    double kappa;
    if (options.contrast) {
        kappa = *options.contrast;
    } else {
        std::size_t const m = std::max<std::size_t>(1, std::min(options.calibration_points, intensity.size()));
        double sum = 0;
        for (std::size_t i = 0; i < m; ++i)
            sum += intensity[i];
        kappa = sum / static_cast<double>(m);
    }
    if (kappa == 0 || !std::isfinite(kappa))
        throw ValidationError("contrast calibration failed: shortest-tau points average to zero");
    out.contrast = kappa;
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        out.series.values.push_back(0.5 * (1.0 + intensity[i] / kappa));
        out.series.sigmas.push_back(sigma[i] / (2.0 * std::abs(kappa)));
    }
    return out;
}

double average_noise(CoherenceSeries const& series) {
    if (series.sigmas.empty())
        throw DomainError("average_noise: empty series");
    double sum = 0;
    for (double s : series.sigmas)
        sum += s;
    return sum / static_cast<double>(series.sigmas.size());
}

CoherenceSeries load_coherence(std::filesystem::path const& file) {
    std::string const name = file.string();
    auto t = read_text_table(file);
    expect_columns(t, {"tau_ms", "value", "sigma"}, name);
    CoherenceSeries s;
    s.protocol = protocol_from_header(t, name);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        s.protocol.tau_grid.push_back(t.rows[i][0]);
        s.values.push_back(t.rows[i][1]);
        if (t.rows[i][2] < 0)
            throw ParseError(name, t.row_lines[i], "sigma must be non-negative");
        s.sigmas.push_back(t.rows[i][2]);
    }
    if (s.values.empty())
        throw ValidationError(name + ": no data rows");
    check_ascending(s.protocol.tau_grid, t, name);
    return s;
}

void save_coherence(CoherenceSeries const& series, std::filesystem::path const& file,
                    std::vector<std::string> const& extra_header) {
    std::ostringstream out;
    write_protocol_header(out, series.protocol);
    for (auto const& h : extra_header)
        out << "# " << h << '\n';
    out << "tau_ms,value,sigma\n";
    for (std::size_t i = 0; i < series.values.size(); ++i)
        out << format17(series.protocol.tau_grid[i]) << ',' << format17(series.values[i]) << ','
            << format17(series.sigmas.empty() ? 0.0 : series.sigmas[i]) << '\n';
    write_atomically(file, out.str());
}

PhotonCountSeries load_photon_counts(std::filesystem::path const& file) {
    std::string const name = file.string();
    auto t = read_text_table(file);
    expect_columns(t, {"tau_ms", "p_z", "m_z"}, name);
    PhotonCountSeries c;
    c.protocol = protocol_from_header(t, name);
    c.repetitions = static_cast<std::size_t>(header_number(t, "repetitions", "", name, 0.0));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (t.rows[i][1] < 0 || t.rows[i][2] < 0)
            throw ParseError(name, t.row_lines[i], "photon counts must be non-negative");
        c.protocol.tau_grid.push_back(t.rows[i][0]);
        c.bright.push_back(t.rows[i][1]);
        c.dark.push_back(t.rows[i][2]);
    }
    if (c.bright.empty())
        throw ValidationError(name + ": no data rows");
    check_ascending(c.protocol.tau_grid, t, name);
    return c;
}

void save_photon_counts(PhotonCountSeries const& counts, std::filesystem::path const& file) {
    std::ostringstream out;
    write_protocol_header(out, counts.protocol);
    out << "# repetitions = " << counts.repetitions << '\n';
    out << "tau_ms,p_z,m_z\n";
    for (std::size_t i = 0; i < counts.bright.size(); ++i)
        out << format17(counts.protocol.tau_grid[i]) << ',' << format17(counts.bright[i]) << ','
            << format17(counts.dark[i]) << '\n';
    write_atomically(file, out.str());
}

void save_threshold_curve(ThresholdCurve const& curve, json const& metadata, std::filesystem::path const& table_file,
                          std::filesystem::path const& metadata_file) {
    std::ostringstream out;
    out << "epsilon,f_threshold_khz\n";
    for (std::size_t i = 0; i < curve.epsilons.size(); ++i)
        out << format17(curve.epsilons[i]) << ',' << format17(curve.f_thresholds[i]) << '\n';
    write_atomically(table_file, out.str());

    json meta = metadata;
    meta["schema_version"] = schema_version;
    meta["confidence"] = curve.confidence;
    meta["floor_khz"] = curve.floor;
    meta["f_cut_grid_khz"] = curve.f_cut_grid;
    meta["normalized_errors"] = curve.normalized_errors;
    write_atomically(metadata_file, meta.dump(2) + "\n");
}

json to_json(SamplerSchedule const& s) {
    return {{"n_total", s.n_total},
            {"burn_in", s.burn_in},
            {"cycle", {{"rjmcmc", s.rjmcmc_steps}, {"pt", s.pt_steps}, {"rwmh", s.rwmh_steps}}},
            {"n_ensembles", s.n_ensembles},
            {"n_strands", s.n_strands},
            {"r_spin", s.r_spin},
            {"r_lambda", s.r_lambda},
            {"s_max", s.s_max},
            {"rjmcmc_all_strands", s.rjmcmc_all_strands},
            {"cache_check_interval", s.cache_check_interval},
            {"weighted_birth", s.weighted_birth}};
}

SamplerSchedule schedule_from_json(json const& j, SamplerSchedule s) {
    if (j.is_string()) {
        auto const name = j.get<std::string>();
        if (name == "desk")
            return SamplerSchedule::desk();
        if (name == "paper")
            return SamplerSchedule{};
        throw SchemaError(SchemaError::Kind::BadValue, "unknown schedule preset '" + name + "'");
    }
    if (j.contains("preset"))
        s = schedule_from_json(j.at("preset"));
    s.n_total = j.value("n_total", s.n_total);
    s.burn_in = j.value("burn_in", s.burn_in);
    if (j.contains("cycle")) {
        auto const& c = j.at("cycle");
        s.rjmcmc_steps = c.value("rjmcmc", s.rjmcmc_steps);
        s.pt_steps = c.value("pt", s.pt_steps);
        s.rwmh_steps = c.value("rwmh", s.rwmh_steps);
    }
    s.n_ensembles = j.value("n_ensembles", s.n_ensembles);
    s.n_strands = j.value("n_strands", s.n_strands);
    s.r_spin = j.value("r_spin", s.r_spin);
    s.r_lambda = j.value("r_lambda", s.r_lambda);
    s.s_max = j.value("s_max", s.s_max);
    s.rjmcmc_all_strands = j.value("rjmcmc_all_strands", s.rjmcmc_all_strands);
    s.cache_check_interval = j.value("cache_check_interval", s.cache_check_interval);
    s.weighted_birth = j.value("weighted_birth", s.weighted_birth);
    return s;
}

json to_json(SpinCountPrior const& p) {
    std::string kind = "binomial";
    if (p.kind == SpinCountPrior::Kind::FlatConfiguration)
        kind = "flat";
    else if (p.kind == SpinCountPrior::Kind::UniformCount)
        kind = "uniform_count";
    return {{"kind", kind}, {"concentration", p.concentration}};
}

SpinCountPrior prior_from_json(json const& j) {
    SpinCountPrior p;
    auto const kind = j.value("kind", std::string("binomial"));
    if (kind == "binomial")
        p.kind = SpinCountPrior::Kind::Binomial;
    else if (kind == "flat")
        p.kind = SpinCountPrior::Kind::FlatConfiguration;
    else if (kind == "uniform_count")
        p.kind = SpinCountPrior::Kind::UniformCount;
    else
        throw SchemaError(SchemaError::Kind::BadValue, "unknown prior kind '" + kind + "'");
    p.concentration = j.value("concentration", p.concentration);
    return p;
}

json to_json(LambdaPrior const& p) {
    json j{{"lo_ms", p.lo}, {"hi_ms", p.hi}, {"per_dataset", p.per_dataset > 0}};
    j["fixed_ms"] = p.fixed ? lambda_json(*p.fixed) : json(nullptr);
    if (p.fixed && !std::isfinite(*p.fixed))
        j["fixed_ms"] = "infinity";
    return j;
}

LambdaPrior lambda_prior_from_json(json const& j) {
    LambdaPrior p;
    p.lo = j.value("lo_ms", p.lo);
    p.hi = j.value("hi_ms", p.hi);
    if (j.contains("fixed_ms") && !j.at("fixed_ms").is_null()) {
        auto const& f = j.at("fixed_ms");
        p.fixed = f.is_string() && f.get<std::string>() == "infinity" ? no_decay : f.get<double>();
    }
    if (j.value("per_dataset", false))
        p.per_dataset = 1; // resolved to the dataset count by the caller
    return p;
}

json to_json(PulseProtocol const& p) {
    return {{"n_pulses", p.n_pulses},
            {"b_field_gauss", p.b_field},
            {"gyromagnetic_ratio_khz_per_gauss", p.gyromagnetic_ratio},
            {"n_samples", p.tau_grid.size()},
            {"tau_max_ms", p.tau_max()}};
}

RunConfig run_config_from_json(json const& j, std::filesystem::path const& base_dir) {
    if (!j.contains("schema_version"))
        throw SchemaError(SchemaError::Kind::MissingField, "run config: missing schema_version");
    if (j.at("schema_version").get<int>() != schema_version)
        throw SchemaError(SchemaError::Kind::VersionMismatch, "run config: unsupported schema_version");
    auto resolve = [&](std::string const& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };

    RunConfig c;
    if (j.contains("site_table") && !j.at("site_table").is_null())
        c.site_table = resolve(j.at("site_table").get<std::string>());
    c.cutoff = j.value("cutoff_angstrom", c.cutoff);
    if (!j.contains("datasets"))
        throw SchemaError(SchemaError::Kind::MissingField, "run config: missing datasets");
    for (auto const& d : j.at("datasets"))
        c.datasets.push_back(resolve(d.get<std::string>()));
    c.seed = j.value("seed", c.seed);
    if (j.contains("schedule"))
        c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("prior"))
        c.prior = prior_from_json(j.at("prior"));
    if (j.contains("lambda_prior"))
        c.lambda_prior = lambda_prior_from_json(j.at("lambda_prior"));
    if (j.contains("noise")) {
        auto const& n = j.at("noise");
        c.noise_mode = n.value("mode", c.noise_mode);
        c.sigma2 = n.value("sigma2", c.sigma2);
        if (c.noise_mode != "auto" && c.noise_mode != "global" && c.noise_mode != "per_point")
            throw SchemaError(SchemaError::Kind::BadValue, "run config: unknown noise mode '" + c.noise_mode + "'");
    }
    if (j.contains("detection")) {
        auto const& d = j.at("detection");
        c.filter_detectable = d.value("filter", c.filter_detectable);
        auto const conv = d.value("floor_convention", std::string("max"));
        if (conv != "max" && conv != "min")
            throw SchemaError(SchemaError::Kind::BadValue, "run config: floor_convention must be max or min");
        c.floor_convention = conv == "max" ? FloorConvention::Max : FloorConvention::Min;
        if (d.contains("f_min_khz") && !d.at("f_min_khz").is_null())
            c.f_min = d.at("f_min_khz").get<double>();
        if (d.contains("f_max_khz") && !d.at("f_max_khz").is_null())
            c.f_max = d.at("f_max_khz").get<double>();
    }
    c.jobs = j.value("jobs", c.jobs);
    return c;
}

RunConfig load_run_config(std::filesystem::path const& file) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("cannot open run config: " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (json::parse_error const& e) {
        throw SchemaError(SchemaError::Kind::BadValue, file.string() + ": " + e.what());
    }
    return run_config_from_json(j, file.parent_path());
}

json to_json(RunConfig const& c) {
    json j;
    j["schema_version"] = schema_version;
    j["site_table"] = c.site_table.empty() ? json(nullptr) : json(c.site_table.string());
    j["cutoff_angstrom"] = c.cutoff;
    j["datasets"] = json::array();
    for (auto const& d : c.datasets)
        j["datasets"].push_back(d.string());
    j["seed"] = c.seed;
    j["schedule"] = to_json(c.schedule);
    j["prior"] = to_json(c.prior);
    j["lambda_prior"] = to_json(c.lambda_prior);
    j["noise"] = {{"mode", c.noise_mode}, {"sigma2", c.sigma2}};
    j["detection"] = {{"filter", c.filter_detectable},
                      {"floor_convention", c.floor_convention == FloorConvention::Max ? "max" : "min"},
                      {"f_min_khz", c.f_min ? json(*c.f_min) : json(nullptr)},
                      {"f_max_khz", c.f_max ? json(*c.f_max) : json(nullptr)}};
    return j;
}

void save_posterior(PosteriorEnsemble const& posterior, SiteTable const& table, std::filesystem::path const& ndjson) {
    std::ostringstream out;
    for (auto const& s : posterior.samples) {
        json r;
        r["step"] = s.step;
        r["ensemble"] = s.ensemble;
        r["k"] = s.config.k();
        r["sites"] = s.config.occupied;
        json a_par = json::array(), a_perp = json::array();
        for (SiteIndex site : s.config.occupied) {
            a_par.push_back(table.a_par(site));
            a_perp.push_back(table.a_perp(site));
        }
        r["a_par_khz"] = std::move(a_par);
        r["a_perp_khz"] = std::move(a_perp);
        r["lambda_ms"] = lambda_json(s.config.lambda);
        if (!s.config.dataset_lambdas.empty())
            r["dataset_lambdas_ms"] = s.config.dataset_lambdas;
        r["log_likelihood"] = s.log_likelihood;
        out << r.dump() << '\n';
    }
    write_atomically(ndjson, out.str());
}

PosteriorEnsemble load_posterior(std::filesystem::path const& ndjson) {
    std::ifstream in(ndjson);
    if (!in)
        throw std::runtime_error("cannot open posterior: " + ndjson.string());
    PosteriorEnsemble posterior;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            auto const r = json::parse(line);
            PosteriorSample s;
            s.step = r.at("step").get<std::uint64_t>();
            s.ensemble = r.at("ensemble").get<std::uint32_t>();
            s.config.occupied = r.at("sites").get<std::vector<SiteIndex>>();
            s.config.lambda = lambda_from(r.at("lambda_ms"));
            if (r.contains("dataset_lambdas_ms"))
                s.config.dataset_lambdas = r.at("dataset_lambdas_ms").get<std::vector<double>>();
            s.log_likelihood = r.at("log_likelihood").get<double>();
            posterior.samples.push_back(std::move(s));
        } catch (json::exception const& e) {
            throw ParseError(ndjson.string(), line_no, e.what());
        }
    }
    return posterior;
}

json posterior_summary(PosteriorEnsemble const& posterior, SiteTable const& table) {
    json j;
    j["schema_version"] = schema_version;
    j["seed"] = posterior.seed;
    j["schedule"] = to_json(posterior.schedule);
    j["n_samples"] = posterior.samples.size();
    j["n_candidate_sites"] = table.size();
    if (!posterior.samples.empty())
        j["report"] = to_json(summarize_posterior(posterior, table));
    json stats = json::array();
    for (auto const& s : posterior.stats) {
        auto rate = [](MoveCounts const& m) {
            return json{{"proposed", m.proposed}, {"accepted", m.accepted}};
        };
        stats.push_back({{"rjmcmc", rate(s.rjmcmc)}, {"site", rate(s.site)}, {"lambda", rate(s.lambda)},
                         {"swaps", rate(s.swaps)}});
    }
    j["acceptance"] = stats;
    return j;
}

json to_json(RecoveryReport const& r) {
    auto nan_safe = [](std::vector<double> const& v) {
        json a = json::array();
        for (double x : v)
            a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
        return a;
    };
    json j;
    j["modal_config"] = {{"sites", r.modal_config.occupied}, {"lambda_ms", lambda_json(r.modal_config.lambda)}};
    json hist = json::object();
    for (auto const& [k, f] : r.k_histogram)
        hist[std::to_string(k)] = f;
    j["k_histogram"] = hist;
    j["modal_k"] = r.modal_k;
    j["modal_k_disagrees"] = r.modal_k_disagrees;
    j["bin_edges_khz"] = r.bin_edges;
    j["hyperfine_hist"] = r.hyperfine_hist;
    if (!r.truth.empty()) {
        json truth = json::array();
        for (auto const& c : r.truth)
            truth.push_back({c.a_par, c.a_perp});
        j["truth_khz"] = truth;
        j["detection_rate"] = r.detection_rate;
        j["k_discrepancy"] = r.k_discrepancy;
        j["false_positive_rate"] = r.false_positive_rate;
        j["detection_by_bin"] = nan_safe(r.detection_by_bin);
        j["truth_count_by_bin"] = r.truth_count_by_bin;
        j["k_discrepancy_by_bin"] = r.k_discrepancy_by_bin;
        j["false_positive_by_bin"] = nan_safe(r.false_positive_by_bin);
    }
    return j;
}

void write_atomically(std::filesystem::path const& file, std::string const& content) {
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out)
            throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

} // namespace spinbath
