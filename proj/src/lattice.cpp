#include "spinbath/lattice.hpp"

#include "spinbath/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace spinbath {
namespace {

double norm(Vec3 const& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

bool parse_double(std::string const& token, double& out) {
    char const* begin = token.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin)
        return false;
    while (*end == ' ' || *end == '\t' || *end == '\r')
        ++end;
    return *end == '\0' && std::isfinite(out);
}

std::vector<std::string> split_fields(std::string const& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',' || ch == ' ' || ch == '\t' || ch == ';' || ch == '\r') {
            if (!current.empty())
                fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    if (!current.empty())
        fields.push_back(std::move(current));
    return fields;
}

std::string format17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

SiteTable::SiteTable(std::vector<LatticeSite> sites, double cutoff_radius, double concentration)
    : cutoff_(cutoff_radius), concentration_(concentration) {
    if (!(cutoff_radius > 0))
        throw ValidationError("site table cutoff radius must be positive");

    std::vector<double> radii(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        radii[i] = norm(sites[i].position);
        if (radii[i] > cutoff_radius)
            throw ValidationError("site " + std::to_string(i) + " lies beyond the cutoff radius");
        if (sites[i].a_perp < 0)
            throw ValidationError("site " + std::to_string(i) + " has negative a_perp");
    }

    std::vector<std::size_t> order(sites.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (radii[a] != radii[b])
            return radii[a] < radii[b];
        return sites[a].position < sites[b].position;
    });

    constexpr double same_position = 1e-6;
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (radii[order[j]] - radii[order[i]] > same_position)
                break;
            Vec3 const& p = sites[order[i]].position;
            Vec3 const& q = sites[order[j]].position;
            if (norm({p[0] - q[0], p[1] - q[1], p[2] - q[2]}) <= same_position)
                throw ValidationError("duplicate site position (" + format17(p[0]) + ", " + format17(p[1]) +
                                      ", " + format17(p[2]) + ")");
        }
    }

    positions_.reserve(sites.size());
    for (std::size_t idx : order) {
        auto const& s = sites[idx];
        positions_.push_back(s.position);
        a_par_.push_back(s.a_par);
        a_perp_.push_back(s.a_perp);
        magnitude_.push_back(std::hypot(s.a_par, s.a_perp));
        radius_.push_back(radii[idx]);
        source_.push_back(s.source);
    }
}

LatticeSite SiteTable::site(SiteIndex i) const { return {positions_[i], a_par_[i], a_perp_[i], source_[i]}; }

DipoleCouplings dipole_couplings(Vec3 const& position, Vec3 const& defect_axis) {
    double const r = norm(position);
    double const axis_norm = norm(defect_axis);
    if (!(r > 0))
        throw DomainError("dipole_couplings: zero-length position");
    if (!(axis_norm > 0))
        throw DomainError("dipole_couplings: zero-length defect axis");
    double cos_theta = (position[0] * defect_axis[0] + position[1] * defect_axis[1] + position[2] * defect_axis[2]) /
                       (r * axis_norm);
    cos_theta = std::clamp(cos_theta, -1.0, 1.0);
    double const sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    double const prefactor = constants::dipole_prefactor_khz_a3 / (r * r * r);
    return {prefactor * (3.0 * cos_theta * cos_theta - 1.0), 3.0 * prefactor * std::abs(sin_theta * cos_theta)};
}

SiteTable load_site_table(std::filesystem::path const& file, Vec3 const& defect_axis, double cutoff,
                          double concentration) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("cannot open site table: " + file.string());

    std::vector<LatticeSite> sites;
    std::string line;
    std::size_t line_no = 0;
    std::string const name = file.string();
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        auto fields = split_fields(line);
        if (fields.size() != 3 && fields.size() != 5)
            throw ParseError(name, line_no, "expected 3 or 5 columns, found " + std::to_string(fields.size()));
        double values[5] = {};
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (!parse_double(fields[i], values[i]))
                throw ParseError(name, line_no, "not a number: '" + fields[i] + "'");

        LatticeSite site;
        site.position = {values[0], values[1], values[2]};
        double const r = norm(site.position);
        if (!(r > 0))
            throw ParseError(name, line_no, "site at the defect position");
        if (r > cutoff)
            continue;
        site.source = r <= constants::dft_radius ? CouplingSource::DFT : CouplingSource::DIPOLE;
        if (fields.size() == 5) {
            site.a_par = values[3];
            site.a_perp = values[4];
            if (site.a_perp < 0)
                throw ParseError(name, line_no, "a_perp must be non-negative");
        } else {
            if (site.source == CouplingSource::DFT)
                throw ParseError(name, line_no, "couplings are required within 30 angstrom");
            auto d = dipole_couplings(site.position, defect_axis);
            site.a_par = d.a_par;
            site.a_perp = d.a_perp;
        }
        sites.push_back(site);
    }
    if (sites.empty())
        throw ValidationError("site table " + name + " holds no sites within the cutoff");
    return SiteTable(std::move(sites), cutoff, concentration);
}

void save_site_table(SiteTable const& table, std::filesystem::path const& file) {
    std::ofstream out(file);
    if (!out)
        throw std::runtime_error("cannot write site table: " + file.string());
    out << "# x_angstrom, y_angstrom, z_angstrom, a_par_khz, a_perp_khz\n";
    for (SiteIndex i = 0; i < table.size(); ++i) {
        auto const& p = table.position(i);
        out << format17(p[0]) << ',' << format17(p[1]) << ',' << format17(p[2]) << ',' << format17(table.a_par(i))
            << ',' << format17(table.a_perp(i)) << '\n';
    }
}

void save_site_table_json(SiteTable const& table, std::filesystem::path const& file) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["cutoff_radius"] = table.cutoff_radius();
    j["concentration"] = table.concentration();
    auto& sites = j["sites"] = nlohmann::json::array();
    for (SiteIndex i = 0; i < table.size(); ++i) {
        auto const& p = table.position(i);
        sites.push_back({{"position", {p[0], p[1], p[2]}},
                         {"a_par", table.a_par(i)},
                         {"a_perp", table.a_perp(i)},
                         {"source", table.source(i) == CouplingSource::DFT ? "DFT" : "DIPOLE"}});
    }
    std::ofstream out(file);
    if (!out)
        throw std::runtime_error("cannot write site table: " + file.string());
    out << j.dump() << '\n';
}

SiteTable load_site_table_json(std::filesystem::path const& file) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("cannot open site table: " + file.string());
    auto j = nlohmann::json::parse(in);
    if (j.value("schema_version", 0) != 1)
        throw SchemaError(SchemaError::Kind::VersionMismatch, file.string() + ": unsupported schema_version");
    std::vector<LatticeSite> sites;
    for (auto const& s : j.at("sites")) {
        LatticeSite site;
        auto const& p = s.at("position");
        site.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
        site.a_par = s.at("a_par").get<double>();
        site.a_perp = s.at("a_perp").get<double>();
        site.source = s.at("source").get<std::string>() == "DFT" ? CouplingSource::DFT : CouplingSource::DIPOLE;
        sites.push_back(site);
    }
    if (sites.empty())
        throw ValidationError("site table " + file.string() + " holds no sites");
    return SiteTable(std::move(sites), j.at("cutoff_radius").get<double>(), j.at("concentration").get<double>());
}

Vec3 nv_axis() {
    double const s = 1.0 / std::sqrt(3.0);
    return {s, s, s};
}

SiteTable generate_nv_diamond_table(double cutoff, double concentration) {
    // Integer coordinates in units of a/4: fcc sites are all-even with sum = 0 mod 4,
    // the second basis atom is all-odd with sum = 3 mod 4.
    double const unit = constants::diamond_lattice_constant / 4.0;
    int const n = static_cast<int>(std::ceil(cutoff / unit)) + 1;
    Vec3 const axis = nv_axis();
    std::vector<LatticeSite> sites;
    for (int x = -n; x <= n; ++x)
        for (int y = -n; y <= n; ++y)
            for (int z = -n; z <= n; ++z) {
                bool const even = (x % 2 == 0) && (y % 2 == 0) && (z % 2 == 0);
                bool const odd = (x % 2 != 0) && (y % 2 != 0) && (z % 2 != 0);
                int const sum = ((x + y + z) % 4 + 4) % 4;
                if (!((even && sum == 0) || (odd && sum == 3)))
                    continue;
                if (x == 0 && y == 0 && z == 0)
                    continue; // vacancy
                if (x == 1 && y == 1 && z == 1)
                    continue; // nitrogen
                Vec3 p{x * unit, y * unit, z * unit};
                if (norm(p) > cutoff)
                    continue;
                auto d = dipole_couplings(p, axis);
                sites.push_back({p, d.a_par, d.a_perp, CouplingSource::DIPOLE});
            }
    return SiteTable(std::move(sites), cutoff, concentration);
}

BathDraw draw_bath(SiteTable const& table, double concentration, Rng& rng) {
    if (!(concentration > 0 && concentration < 1))
        throw DomainError("draw_bath: concentration must lie in (0, 1)");
    BathDraw draw;
    // Geometric skipping: the gap to the next occupied site is Geometric(c).
    std::geometric_distribution<std::size_t> gap(concentration);
    std::size_t i = gap(rng);
    while (i < table.size()) {
        draw.occupied.push_back(static_cast<SiteIndex>(i));
        i += 1 + gap(rng);
    }
    return draw;
}

BathDraw draw_bath(SiteTable const& table, double concentration, std::uint64_t seed) {
    Rng rng = make_stream(seed, {0x6261u});
    auto draw = draw_bath(table, concentration, rng);
    draw.seed = seed;
    return draw;
}

std::vector<SiteIndex> draw_exact_subset(std::vector<SiteIndex> const& pool, std::size_t count, Rng& rng) {
    if (count > pool.size())
        throw DomainError("draw_exact_subset: requested more sites than the pool holds");
    std::vector<SiteIndex> picked;
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), count, rng);
    std::sort(picked.begin(), picked.end());
    return picked;
}

FilteredTable filter_detectable_sites(SiteTable const& table, double f_min, double f_max) {
    if (!(f_min >= 0 && f_min < f_max))
        throw DomainError("filter_detectable_sites: need 0 <= f_min < f_max");
    FilteredTable result;
    std::vector<LatticeSite> kept;
    for (SiteIndex i = 0; i < table.size(); ++i) {
        double const m = table.magnitude(i);
        if (m >= f_min && m <= f_max) {
            kept.push_back(table.site(i));
            result.parent_index.push_back(i);
        }
    }
    // Input order is already the canonical order, so the rebuilt table keeps it.
    result.table = SiteTable(std::move(kept), table.cutoff_radius(), table.concentration());
    result.empty_warning = result.table.empty();
    return result;
}

} // namespace spinbath
