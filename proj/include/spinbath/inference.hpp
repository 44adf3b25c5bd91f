#pragma once

#include "spinbath/forward_model.hpp"
#include "spinbath/lattice.hpp"
#include "spinbath/random.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spinbath {

/// Log-likelihood of a spin configuration. Implementations must be pure and
/// reentrant; samplers call them concurrently from independent chains.
class LogDensity {
public:
    virtual ~LogDensity() = default;
    virtual double log_likelihood(SpinConfiguration const& config) const = 0;
};

enum class NoiseMode { PerPointSigma, GlobalSigma };

struct NoiseModel {
    NoiseMode mode = NoiseMode::GlobalSigma;
    double sigma2 = 0.1; ///< variance used under GlobalSigma
};

/// Per-point sigmas when every dataset carries positive uncertainties, else GlobalSigma(sigma2).
NoiseModel automatic_noise_model(std::span<CoherenceSeries const> datasets, double sigma2 = 0.1);

/**
 Gaussian likelihood of one or more coherence datasets (joint CP-N fits) under
 the analytical coherence model.

 The per-site modulation factors on every dataset's tau grid are computed once
 at construction, so evaluation costs k * n_points multiplications.
 */
class Likelihood final : public LogDensity {
public:
    Likelihood(std::vector<CoherenceSeries> datasets, SiteTable table, NoiseModel noise, unsigned jobs = 0);

    double log_likelihood(SpinConfiguration const& config) const override;

    /// Model coherence of `config` on dataset `d`'s grid.
    std::vector<double> model(SpinConfiguration const& config, std::size_t d) const;

    SiteTable const& table() const noexcept { return table_; }
    std::vector<CoherenceSeries> const& datasets() const noexcept { return datasets_; }
    NoiseModel noise() const noexcept { return noise_; }

private:
    std::vector<CoherenceSeries> datasets_;
    SiteTable table_;
    NoiseModel noise_;
    std::vector<std::vector<double>> modulation_;   ///< [dataset][site * n_points + j]
    std::vector<std::vector<double>> inv_two_var_;  ///< [dataset][j] = 1 / (2 sigma_j^2)
    std::vector<double> normalizer_;                ///< [dataset] sum_j -log(2 pi sigma_j^2) / 2
};

/// Prior over configurations, which depends only on the spin count k.
struct SpinCountPrior {
    enum class Kind {
        Binomial,          ///< each candidate site independently occupied with probability c
        FlatConfiguration, ///< every configuration with k <= s_max equally likely
        UniformCount,      ///< k uniform on {0..s_max}, configurations uniform given k
    };
    Kind kind = Kind::Binomial;
    double concentration = constants::c13_natural_abundance;
    std::size_t s_max = 50;

    /// Log prior mass of a single configuration with k spins over n_sites candidates
    /// (up to a constant); -infinity for k > s_max.
    double log_config_prior(std::size_t k, std::size_t n_sites) const;
};

/// Log-uniform prior on the decay scale, or a fixed value when `fixed` is set.
struct LambdaPrior {
    double lo = 1e-3; ///< ms
    double hi = 1e3;  ///< ms
    std::optional<double> fixed;
    std::size_t per_dataset = 0; ///< 0: one shared lambda; n: one lambda per dataset

    bool contains(double lambda) const { return lambda >= lo && lambda <= hi; }
    double sample(Rng& rng) const;
};

struct SamplerSchedule {
    std::size_t n_total = 25000;
    std::size_t burn_in = 5000;
    std::size_t rjmcmc_steps = 50;
    std::size_t pt_steps = 100;
    std::size_t rwmh_steps = 25;
    std::size_t n_ensembles = 5;
    std::size_t n_strands = 10;
    double r_spin = 5.0;      ///< angstrom
    double r_lambda = 0.05;   ///< relative step of the log-space lambda walk
    std::size_t s_max = 50;
    bool rjmcmc_all_strands = false;
    std::size_t cache_check_interval = 1000;
    /// Fraction of birth proposals drawn in proportion to coupling magnitude
    /// instead of uniformly. 0 keeps the plain uniform kernel.
    double weighted_birth = 0;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    /// 5,000 steps, 2 ensembles, 4 strands.
    static SamplerSchedule desk();
};

/// Sites within a radius of each site (excluding itself), compressed rows.
class NeighborIndex {
public:
    NeighborIndex() = default;
    NeighborIndex(SiteTable const& table, double radius);

    std::span<SiteIndex const> of(SiteIndex s) const {
        return {neighbors_.data() + offsets_[s], neighbors_.data() + offsets_[s + 1]};
    }
    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }

private:
    std::vector<std::size_t> offsets_;
    std::vector<SiteIndex> neighbors_;
};

/**
 Birth-site proposal: a mixture of uniform choice over unoccupied sites and a
 choice weighted by per-site weights (coupling magnitudes by default). The
 acceptance ratio uses log_probability, so any mixture keeps detailed balance.
 */
class BirthProposal {
public:
    BirthProposal() = default;
    BirthProposal(std::vector<double> weights, double weighted_fraction);

    /// Weights are the coupling magnitudes of the table.
    static BirthProposal magnitude_weighted(SiteTable const& table, double weighted_fraction);

    /// Draws an unoccupied site; requires config.k() < n_sites.
    SiteIndex sample(SpinConfiguration const& config, std::size_t n_sites, Rng& rng) const;
    /// Log probability that sample() returns `s` (unoccupied in `config`).
    double log_probability(SiteIndex s, SpinConfiguration const& config, std::size_t n_sites) const;

private:
    double unoccupied_weight(SpinConfiguration const& config) const;

    std::vector<double> weights_;
    std::vector<double> cumulative_;
    double total_ = 0;
    double fraction_ = 0;
};

struct ChainState {
    SpinConfiguration config;
    double log_likelihood = 0;
    double beta = 1.0; ///< tempering exponent on the likelihood
};

/// Everything a move kernel needs besides the chain and its RNG.
struct SamplerContext {
    LogDensity const& density;
    NeighborIndex const& neighbors;
    SpinCountPrior prior;
    LambdaPrior lambda_prior;
    std::size_t n_sites;
    double r_lambda = 0.05;
    BirthProposal const* birth = nullptr; ///< uniform births when null
};

enum class MoveOutcome { NotProposed, Rejected, Accepted };

/// Relocates one occupied spin to an unoccupied neighbor within the context's radius.
MoveOutcome rwmh_site_move(ChainState& state, SamplerContext const& ctx, Rng& rng);

/// Birth or death of one spin with the reversible-jump acceptance ratio.
MoveOutcome rjmcmc_birth_death(ChainState& state, SamplerContext const& ctx, Rng& rng);

/// Log-space random walk on lambda (one lambda, chosen uniformly, when per-dataset).
MoveOutcome lambda_update(ChainState& state, SamplerContext const& ctx, Rng& rng);

/// Swap acceptance probability between strands i and j.
double swap_acceptance(ChainState const& a, ChainState const& b);

/// n_inner site moves per strand, then adjacent swaps over even pairs and odd pairs.
/// `strands` are ordered by descending beta; returns the number of accepted swaps.
std::size_t pt_sweep(std::vector<ChainState>& strands, SamplerContext const& ctx, std::size_t n_inner,
                     std::span<Rng> strand_rngs, Rng& swap_rng);

struct PosteriorSample {
    std::uint64_t step = 0;
    std::uint32_t ensemble = 0;
    SpinConfiguration config;
    double log_likelihood = 0;
};

struct MoveCounts {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    void add(MoveOutcome o) {
        proposed += o != MoveOutcome::NotProposed;
        accepted += o == MoveOutcome::Accepted;
    }
};

struct EnsembleStats {
    MoveCounts rjmcmc, site, lambda, swaps;
};

/// Pooled post-burn-in samples of the beta = 1 strand of every ensemble.
struct PosteriorEnsemble {
    std::vector<PosteriorSample> samples;
    SamplerSchedule schedule;
    std::uint64_t seed = 0;
    std::vector<EnsembleStats> stats;
};

struct HybridOptions {
    SamplerSchedule schedule;
    SpinCountPrior prior;
    LambdaPrior lambda_prior;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
};

/// The full hybrid sampler: per ensemble, cycles of RJMCMC / PT / RWMH+lambda
/// proposals counted on the beta = 1 strand. Deterministic for a fixed seed,
/// independent of `jobs`.
PosteriorEnsemble run_hybrid(LogDensity const& density, SiteTable const& table, HybridOptions const& options);

} // namespace spinbath
