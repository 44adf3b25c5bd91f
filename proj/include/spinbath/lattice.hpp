#pragma once

#include "spinbath/constants.hpp"
#include "spinbath/random.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spinbath {

using Vec3 = std::array<double, 3>;
using SiteIndex = std::uint32_t;

enum class CouplingSource : std::uint8_t { DFT, DIPOLE };

/// One candidate nuclear-spin site. Couplings are ordinary frequencies in kHz.
struct LatticeSite {
    Vec3 position{};   ///< angstrom, defect at the origin
    double a_par = 0;  ///< parallel hyperfine component, kHz
    double a_perp = 0; ///< perpendicular hyperfine magnitude, kHz (>= 0)
    CouplingSource source = CouplingSource::DFT;
};

/// Secular components of the point-dipole coupling, kHz.
struct DipoleCouplings {
    double a_par;
    double a_perp;
};

/**
 Candidate nuclear-spin sites around a defect.

 Stored as flat arrays indexed by SiteIndex. Sites are ordered by radius
 (ties broken lexicographically on position) and the ordering never changes
 after construction, so configurations can refer to sites by index.
 Immutable once built; share freely between threads.
 */
class SiteTable {
public:
    SiteTable() = default;

    /// Validates and sorts. Throws ValidationError on duplicate positions
    /// (closer than 1e-6 angstrom), sites beyond the cutoff or negative a_perp.
    /// An empty site list is allowed here; loaders reject it separately.
    SiteTable(std::vector<LatticeSite> sites, double cutoff_radius = constants::default_cutoff,
              double concentration = constants::c13_natural_abundance);

    std::size_t size() const noexcept { return positions_.size(); }
    bool empty() const noexcept { return positions_.empty(); }

    Vec3 const& position(SiteIndex i) const { return positions_[i]; }
    double a_par(SiteIndex i) const { return a_par_[i]; }
    double a_perp(SiteIndex i) const { return a_perp_[i]; }
    double magnitude(SiteIndex i) const { return magnitude_[i]; }
    double radius(SiteIndex i) const { return radius_[i]; }
    CouplingSource source(SiteIndex i) const { return source_[i]; }
    LatticeSite site(SiteIndex i) const;

    double cutoff_radius() const noexcept { return cutoff_; }
    double concentration() const noexcept { return concentration_; }

private:
    std::vector<Vec3> positions_;
    std::vector<double> a_par_;
    std::vector<double> a_perp_;
    std::vector<double> magnitude_;
    std::vector<double> radius_;
    std::vector<CouplingSource> source_;
    double cutoff_ = constants::default_cutoff;
    double concentration_ = constants::c13_natural_abundance;
};

/// Point-dipole secular couplings for a nuclear spin at `position` relative to a
/// defect whose quantization axis is `defect_axis` (normalized internally).
/// Throws DomainError for a zero-length position or axis.
DipoleCouplings dipole_couplings(Vec3 const& position, Vec3 const& defect_axis);

/// Reads a site table from delimited text (x, y, z [, a_par, a_perp] per row).
/// Rows within 30 angstrom must carry couplings and are tagged DFT; rows beyond
/// it may omit them and receive dipole values, and are tagged DIPOLE. Rows
/// beyond `cutoff` are dropped.
SiteTable load_site_table(std::filesystem::path const& file, Vec3 const& defect_axis,
                          double cutoff = constants::default_cutoff,
                          double concentration = constants::c13_natural_abundance);

/// Writes the text format read by load_site_table, 17 significant digits.
void save_site_table(SiteTable const& table, std::filesystem::path const& file);

/// JSON cache of a full table (positions, couplings, sources, metadata).
void save_site_table_json(SiteTable const& table, std::filesystem::path const& file);
SiteTable load_site_table_json(std::filesystem::path const& file);

/// Carbon sites of an NV center in diamond within `cutoff`, vacancy at the
/// origin and nitrogen at a/4 (1,1,1), defect axis along [111]. All couplings
/// are point-dipole values and every site is tagged DIPOLE; this is the
/// stand-in used when no ab initio table is available.
SiteTable generate_nv_diamond_table(double cutoff = constants::default_cutoff,
                                    double concentration = constants::c13_natural_abundance);

/// Unit vector along [111].
Vec3 nv_axis();

/// Random isotopic occupation of a table.
struct BathDraw {
    std::vector<SiteIndex> occupied; ///< ascending, unique
    std::uint64_t seed = 0;
};

/// Occupies each site independently with probability `concentration`.
/// Throws DomainError unless 0 < concentration < 1.
BathDraw draw_bath(SiteTable const& table, double concentration, std::uint64_t seed);
BathDraw draw_bath(SiteTable const& table, double concentration, Rng& rng);

/// Uniform subset of exactly `count` sites from `pool` (indices into some table).
std::vector<SiteIndex> draw_exact_subset(std::vector<SiteIndex> const& pool, std::size_t count, Rng& rng);

/// Result of restricting a table to a magnitude window.
struct FilteredTable {
    SiteTable table;
    std::vector<SiteIndex> parent_index; ///< parent_index[i] is the parent index of filtered site i
    bool empty_warning = false;          ///< set when nothing survived the filter
};

/// Keeps sites with f_min <= sqrt(a_par^2 + a_perp^2) <= f_max (closed interval).
FilteredTable filter_detectable_sites(SiteTable const& table, double f_min, double f_max);

} // namespace spinbath
