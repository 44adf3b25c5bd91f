#include "spinbath/inference.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace spinbath {
namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

bool accept(double log_ratio, Rng& rng) {
    if (log_ratio >= 0)
        return true;
    if (std::isnan(log_ratio) || log_ratio == neg_inf)
        return false;
    return std::log(uniform01(rng)) < log_ratio;
}

std::size_t unoccupied_neighbors(SiteIndex s, SpinConfiguration const& config, NeighborIndex const& nbrs) {
    std::size_t count = 0;
    for (SiteIndex t : nbrs.of(s))
        count += !config.contains(t);
    return count;
}

} // namespace

NoiseModel automatic_noise_model(std::span<CoherenceSeries const> datasets, double sigma2) {
    bool per_point = !datasets.empty();
    for (auto const& d : datasets)
        for (double s : d.sigmas)
            per_point = per_point && s > 0;
    return per_point ? NoiseModel{NoiseMode::PerPointSigma, sigma2} : NoiseModel{NoiseMode::GlobalSigma, sigma2};
}

Likelihood::Likelihood(std::vector<CoherenceSeries> datasets, SiteTable table, NoiseModel noise, unsigned jobs)
    : datasets_(std::move(datasets)), table_(std::move(table)), noise_(noise) {
    if (datasets_.empty())
        throw ConfigError("likelihood needs at least one dataset");
    if (noise_.mode == NoiseMode::GlobalSigma && !(noise_.sigma2 > 0))
        throw ConfigError("global noise variance must be positive");

    for (std::size_t d = 0; d < datasets_.size(); ++d) {
        auto const& ds = datasets_[d];
        ds.protocol.validate();
        std::size_t const n = ds.protocol.tau_grid.size();
        if (ds.values.size() != n || ds.sigmas.size() != n)
            throw ConfigError("dataset " + std::to_string(d) + ": values/sigmas do not match the tau grid");
        std::vector<double> inv(n);
        double norm = 0;
        for (std::size_t j = 0; j < n; ++j) {
            double const var = noise_.mode == NoiseMode::GlobalSigma ? noise_.sigma2 : ds.sigmas[j] * ds.sigmas[j];
            if (!(var > 0))
                throw ConfigError("dataset " + std::to_string(d) + ": non-positive sigma at point " +
                                  std::to_string(j));
            inv[j] = 0.5 / var;
            norm -= 0.5 * std::log(2.0 * std::numbers::pi * var);
        }
        inv_two_var_.push_back(std::move(inv));
        normalizer_.push_back(norm);

        std::vector<double> cache(table_.size() * n);
        parallel_for(table_.size(), jobs, [&](std::size_t s) {
            modulation_series(constants::to_angular(table_.a_par(static_cast<SiteIndex>(s))),
                              constants::to_angular(table_.a_perp(static_cast<SiteIndex>(s))), ds.protocol,
                              std::span<double>(cache.data() + s * n, n));
        });
        modulation_.push_back(std::move(cache));
    }
}

std::vector<double> Likelihood::model(SpinConfiguration const& config, std::size_t d) const {
    auto const& ds = datasets_.at(d);
    std::size_t const n = ds.protocol.tau_grid.size();
    std::vector<double> product(n, 1.0);
    for (SiteIndex s : config.occupied) {
        if (s >= table_.size())
            throw DomainError("site index " + std::to_string(s) + " outside the likelihood's table");
        double const* row = modulation_[d].data() + static_cast<std::size_t>(s) * n;
        for (std::size_t j = 0; j < n; ++j)
            product[j] *= row[j];
    }
    double const lambda = config.lambda_for(d);
    for (std::size_t j = 0; j < n; ++j)
        product[j] = 0.5 * (1.0 + product[j]) * std::exp(-ds.protocol.tau_grid[j] / lambda);
    return product;
}

double Likelihood::log_likelihood(SpinConfiguration const& config) const {
    double total = 0;
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
        auto const m = model(config, d);
        auto const& y = datasets_[d].values;
        auto const& inv = inv_two_var_[d];
        double sum = normalizer_[d];
        for (std::size_t j = 0; j < m.size(); ++j) {
            double const r = y[j] - m[j];
            sum -= r * r * inv[j];
        }
        total += sum;
    }
    return total;
}

double SpinCountPrior::log_config_prior(std::size_t k, std::size_t n_sites) const {
    if (k > s_max || k > n_sites)
        return neg_inf;
    switch (kind) {
    case Kind::Binomial:
        return static_cast<double>(k) * std::log(concentration) +
               static_cast<double>(n_sites - k) * std::log1p(-concentration);
    case Kind::FlatConfiguration:
        return 0.0;
    case Kind::UniformCount:
        return -(std::lgamma(static_cast<double>(n_sites) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                 std::lgamma(static_cast<double>(n_sites - k) + 1));
    }
    return neg_inf;
}

double LambdaPrior::sample(Rng& rng) const {
    if (fixed)
        return *fixed;
    double const u = uniform01(rng);
    return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
}

void SamplerSchedule::validate() const {
    if (n_total == 0)
        throw ConfigError("schedule: n_total must be positive");
    if (burn_in >= n_total)
        throw ConfigError("schedule: burn_in must be smaller than n_total");
    if (rjmcmc_steps + pt_steps + rwmh_steps == 0)
        throw ConfigError("schedule: the move cycle is empty");
    if (n_ensembles == 0 || n_strands == 0)
        throw ConfigError("schedule: ensembles and strands must be positive");
    if (n_strands > 60)
        throw ConfigError("schedule: at most 60 strands (beta = 2^-n underflows beyond)");
    if (!(r_spin > 0))
        throw ConfigError("schedule: r_spin must be positive");
    if (!(r_lambda >= 0))
        throw ConfigError("schedule: r_lambda must be non-negative");
    if (s_max == 0)
        throw ConfigError("schedule: s_max must be positive");
    if (!(weighted_birth >= 0 && weighted_birth <= 1))
        throw ConfigError("schedule: weighted_birth must lie in [0, 1]");
    if (cache_check_interval == 0)
        throw ConfigError("schedule: cache_check_interval must be positive");
}

SamplerSchedule SamplerSchedule::desk() {
    SamplerSchedule s;
    s.n_total = 5000;
    s.burn_in = 1000;
    s.n_ensembles = 2;
    s.n_strands = 4;
    return s;
}

NeighborIndex::NeighborIndex(SiteTable const& table, double radius) {
    constexpr double tolerance = 1e-9;
    double const reach = radius + tolerance;
    std::size_t const n = table.size();
    offsets_.assign(n + 1, 0);
    if (n == 0)
        return;

    // Bucket sites into cubic cells of side `reach`; neighbors live in the 27 adjacent cells.
    auto cell_of = [&](Vec3 const& p) {
        return std::array<long, 3>{static_cast<long>(std::floor(p[0] / reach)),
                                   static_cast<long>(std::floor(p[1] / reach)),
                                   static_cast<long>(std::floor(p[2] / reach))};
    };
    auto key = [](std::array<long, 3> const& c) {
        return (static_cast<std::uint64_t>(c[0] + (1 << 20)) << 42) ^
               (static_cast<std::uint64_t>(c[1] + (1 << 20)) << 21) ^ static_cast<std::uint64_t>(c[2] + (1 << 20));
    };
    std::unordered_map<std::uint64_t, std::vector<SiteIndex>> cells;
    for (SiteIndex i = 0; i < n; ++i)
        cells[key(cell_of(table.position(i)))].push_back(i);

    std::vector<SiteIndex> found;
    for (SiteIndex i = 0; i < n; ++i) {
        auto const& p = table.position(i);
        auto const c = cell_of(p);
        found.clear();
        for (long dx = -1; dx <= 1; ++dx)
            for (long dy = -1; dy <= 1; ++dy)
                for (long dz = -1; dz <= 1; ++dz) {
                    auto it = cells.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
                    if (it == cells.end())
                        continue;
                    for (SiteIndex j : it->second) {
                        if (j == i)
                            continue;
                        auto const& q = table.position(j);
                        double const d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                          (p[2] - q[2]) * (p[2] - q[2]);
                        if (d2 <= reach * reach)
                            found.push_back(j);
                    }
                }
        std::sort(found.begin(), found.end());
        neighbors_.insert(neighbors_.end(), found.begin(), found.end());
        offsets_[i + 1] = neighbors_.size();
    }
}

BirthProposal::BirthProposal(std::vector<double> weights, double weighted_fraction)
    : weights_(std::move(weights)), fraction_(weighted_fraction) {
    if (!(fraction_ >= 0 && fraction_ <= 1))
        throw ConfigError("weighted birth fraction must lie in [0, 1]");
    cumulative_.reserve(weights_.size());
    for (double w : weights_) {
        if (!(w >= 0) || !std::isfinite(w))
            throw ConfigError("birth weights must be finite and non-negative");
        total_ += w;
        cumulative_.push_back(total_);
    }
}

BirthProposal BirthProposal::magnitude_weighted(SiteTable const& table, double weighted_fraction) {
    std::vector<double> w(table.size());
    for (SiteIndex i = 0; i < table.size(); ++i)
        w[i] = table.magnitude(i);
    return BirthProposal(std::move(w), weighted_fraction);
}

double BirthProposal::unoccupied_weight(SpinConfiguration const& config) const {
    double w = total_;
    for (SiteIndex s : config.occupied)
        w -= weights_[s];
    return std::max(w, 0.0);
}

SiteIndex BirthProposal::sample(SpinConfiguration const& config, std::size_t n_sites, Rng& rng) const {
    double const free_weight = unoccupied_weight(config);
    if (fraction_ > 0 && free_weight > 0 && uniform01(rng) < fraction_) {
        if (free_weight > 0.5 * total_) {
            for (;;) {
                double const u = uniform01(rng) * total_;
                auto const it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
                auto const s = static_cast<SiteIndex>(std::min<std::size_t>(it - cumulative_.begin(), n_sites - 1));
                if (!config.contains(s) && weights_[s] > 0)
                    return s;
            }
        }
        // Most weight sits on occupied sites: walk the unoccupied ones directly.
        double u = uniform01(rng) * free_weight;
        SiteIndex last = 0;
        for (SiteIndex s = 0; s < n_sites; ++s) {
            if (config.contains(s) || weights_[s] <= 0)
                continue;
            last = s;
            if ((u -= weights_[s]) < 0)
                return s;
        }
        return last;
    }
    SiteIndex s;
    do {
        s = static_cast<SiteIndex>(uniform_index(rng, n_sites));
    } while (config.contains(s));
    return s;
}

double BirthProposal::log_probability(SiteIndex s, SpinConfiguration const& config, std::size_t n_sites) const {
    double const uniform = 1.0 / static_cast<double>(n_sites - config.k());
    double const free_weight = unoccupied_weight(config);
    if (fraction_ == 0 || free_weight <= 0)
        return std::log(uniform);
    return std::log((1 - fraction_) * uniform + fraction_ * weights_[s] / free_weight);
}

MoveOutcome rwmh_site_move(ChainState& state, SamplerContext const& ctx, Rng& rng) {
    auto& config = state.config;
    if (config.k() == 0)
        return MoveOutcome::NotProposed;

    SiteIndex const from = config.occupied[uniform_index(rng, config.k())];
    std::size_t const forward_choices = unoccupied_neighbors(from, config, ctx.neighbors);
    if (forward_choices == 0)
        return MoveOutcome::Rejected;

    std::size_t pick = uniform_index(rng, forward_choices);
    SiteIndex to = from;
    for (SiteIndex t : ctx.neighbors.of(from)) {
        if (config.contains(t))
            continue;
        if (pick-- == 0) {
            to = t;
            break;
        }
    }

    SpinConfiguration proposal = config;
    proposal.erase(from);
    proposal.insert(to);
    std::size_t const reverse_choices = unoccupied_neighbors(to, proposal, ctx.neighbors);
    double const proposed_ll = ctx.density.log_likelihood(proposal);
    double const log_ratio = state.beta * (proposed_ll - state.log_likelihood) +
                             std::log(static_cast<double>(forward_choices)) -
                             std::log(static_cast<double>(reverse_choices));
    if (!accept(log_ratio, rng))
        return MoveOutcome::Rejected;
    config = std::move(proposal);
    state.log_likelihood = proposed_ll;
    return MoveOutcome::Accepted;
}

MoveOutcome rjmcmc_birth_death(ChainState& state, SamplerContext const& ctx, Rng& rng) {
    auto& config = state.config;
    std::size_t const k = config.k();
    std::size_t const n = ctx.n_sites;
    bool const birth = uniform01(rng) < 0.5;

    SpinConfiguration proposal = config;
    double log_q_ratio; // log q(reverse) - log q(forward)
    if (birth) {
        if (k >= n || k + 1 > ctx.prior.s_max)
            return MoveOutcome::Rejected;
        SiteIndex s;
        if (ctx.birth) {
            s = ctx.birth->sample(config, n, rng);
            log_q_ratio = -std::log(static_cast<double>(k + 1)) - ctx.birth->log_probability(s, config, n);
        } else {
            do {
                s = static_cast<SiteIndex>(uniform_index(rng, n));
            } while (config.contains(s));
            log_q_ratio = std::log(static_cast<double>(n - k)) - std::log(static_cast<double>(k + 1));
        }
        proposal.insert(s);
    } else {
        if (k == 0)
            return MoveOutcome::Rejected;
        SiteIndex const s = config.occupied[uniform_index(rng, k)];
        proposal.erase(s);
        if (ctx.birth)
            log_q_ratio = std::log(static_cast<double>(k)) + ctx.birth->log_probability(s, proposal, n);
        else
            log_q_ratio = std::log(static_cast<double>(k)) - std::log(static_cast<double>(n - k + 1));
    }

    double const log_prior_ratio =
        ctx.prior.log_config_prior(proposal.k(), n) - ctx.prior.log_config_prior(k, n);
    if (log_prior_ratio == neg_inf)
        return MoveOutcome::Rejected;
    double const proposed_ll = ctx.density.log_likelihood(proposal);
    double const log_ratio = state.beta * (proposed_ll - state.log_likelihood) + log_prior_ratio + log_q_ratio;
    if (!accept(log_ratio, rng))
        return MoveOutcome::Rejected;
    config = std::move(proposal);
    state.log_likelihood = proposed_ll;
    return MoveOutcome::Accepted;
}

MoveOutcome lambda_update(ChainState& state, SamplerContext const& ctx, Rng& rng) {
    if (ctx.lambda_prior.fixed)
        return MoveOutcome::NotProposed;
    auto& config = state.config;
    double* target = &config.lambda;
    if (!config.dataset_lambdas.empty())
        target = &config.dataset_lambdas[uniform_index(rng, config.dataset_lambdas.size())];

    double const z = std::normal_distribution<double>(0.0, 1.0)(rng);
    double const current = *target;
    double const candidate = current * std::exp(ctx.r_lambda * z);
    if (!ctx.lambda_prior.contains(candidate))
        return MoveOutcome::Rejected;

    *target = candidate;
    double const proposed_ll = ctx.density.log_likelihood(config);
    // Log-uniform prior ratio (current / candidate) cancels the log-walk Jacobian (candidate / current).
    double const log_ratio = state.beta * (proposed_ll - state.log_likelihood);
    if (!accept(log_ratio, rng)) {
        *target = current;
        return MoveOutcome::Rejected;
    }
    state.log_likelihood = proposed_ll;
    return MoveOutcome::Accepted;
}

double swap_acceptance(ChainState const& a, ChainState const& b) {
    double const log_ratio = (a.beta - b.beta) * (b.log_likelihood - a.log_likelihood);
    return log_ratio >= 0 ? 1.0 : std::exp(log_ratio);
}

std::size_t pt_sweep(std::vector<ChainState>& strands, SamplerContext const& ctx, std::size_t n_inner,
                     std::span<Rng> strand_rngs, Rng& swap_rng) {
    for (std::size_t s = 0; s < strands.size(); ++s)
        for (std::size_t i = 0; i < n_inner; ++i)
            rwmh_site_move(strands[s], ctx, strand_rngs[s]);

    std::size_t accepted = 0;
    for (std::size_t parity = 0; parity < 2; ++parity) {
        for (std::size_t i = parity; i + 1 < strands.size(); i += 2) {
            auto& a = strands[i];
            auto& b = strands[i + 1];
            if (uniform01(swap_rng) < swap_acceptance(a, b)) {
                std::swap(a.config, b.config);
                std::swap(a.log_likelihood, b.log_likelihood);
                ++accepted;
            }
        }
    }
    return accepted;
}

namespace {

SpinConfiguration initial_configuration(std::size_t n_sites, SamplerSchedule const& schedule,
                                        LambdaPrior const& lambda_prior, Rng& rng) {
    SpinConfiguration config;
    std::size_t const k_max = std::min(schedule.s_max, n_sites);
    if (k_max > 0) {
        std::size_t const k = 1 + uniform_index(rng, k_max);
        while (config.k() < k)
            config.insert(static_cast<SiteIndex>(uniform_index(rng, n_sites)));
    }
    config.lambda = lambda_prior.sample(rng);
    for (std::size_t d = 0; d < lambda_prior.per_dataset; ++d)
        config.dataset_lambdas.push_back(lambda_prior.sample(rng));
    return config;
}

struct EnsembleRun {
    std::vector<PosteriorSample> samples;
    EnsembleStats stats;
};

EnsembleRun run_ensemble(LogDensity const& density, NeighborIndex const& neighbors, BirthProposal const* birth,
                         std::size_t n_sites, HybridOptions const& options, SpinCountPrior const& prior,
                         std::uint32_t ensemble) {
    auto const& schedule = options.schedule;
    SamplerContext const ctx{density, neighbors, prior, options.lambda_prior, n_sites, schedule.r_lambda, birth};

    std::vector<Rng> rngs;
    std::vector<ChainState> strands;
    for (std::size_t s = 0; s < schedule.n_strands; ++s) {
        rngs.push_back(make_stream(options.seed, {ensemble, s}));
        ChainState state;
        state.beta = std::ldexp(1.0, -static_cast<int>(s));
        state.config = initial_configuration(n_sites, schedule, options.lambda_prior, rngs.back());
        state.log_likelihood = density.log_likelihood(state.config);
        strands.push_back(std::move(state));
    }
    Rng swap_rng = make_stream(options.seed, {ensemble, 0x73776170u});

    EnsembleRun run;
    run.samples.reserve(schedule.n_total - schedule.burn_in);
    std::size_t step = 0;

    auto record = [&] {
        if (step % schedule.cache_check_interval == 0) {
            double const fresh = density.log_likelihood(strands[0].config);
            if (std::abs(fresh - strands[0].log_likelihood) > 1e-9)
                throw std::logic_error("cached log-likelihood drifted at step " + std::to_string(step));
        }
        if (step >= schedule.burn_in)
            run.samples.push_back({step, ensemble, strands[0].config, strands[0].log_likelihood});
        ++step;
    };

    while (step < schedule.n_total) {
        for (std::size_t i = 0; i < schedule.rjmcmc_steps && step < schedule.n_total; ++i) {
            std::size_t const hot = schedule.rjmcmc_all_strands ? strands.size() : 1;
            for (std::size_t s = 0; s < hot; ++s) {
                auto outcome = rjmcmc_birth_death(strands[s], ctx, rngs[s]);
                if (s == 0)
                    run.stats.rjmcmc.add(outcome);
            }
            record();
        }
        for (std::size_t i = 0; i < schedule.pt_steps && step < schedule.n_total; ++i) {
            std::size_t const swaps = pt_sweep(strands, ctx, 1, rngs, swap_rng);
            run.stats.swaps.proposed += strands.size() - 1;
            run.stats.swaps.accepted += swaps;
            record();
        }
        for (std::size_t i = 0; i < schedule.rwmh_steps && step < schedule.n_total; ++i) {
            run.stats.site.add(rwmh_site_move(strands[0], ctx, rngs[0]));
            run.stats.lambda.add(lambda_update(strands[0], ctx, rngs[0]));
            record();
        }
    }
    return run;
}

} // namespace

PosteriorEnsemble run_hybrid(LogDensity const& density, SiteTable const& table, HybridOptions const& options) {
    options.schedule.validate();
    auto const& lp = options.lambda_prior;
    if (!lp.fixed && !(lp.lo > 0 && lp.lo < lp.hi))
        throw ConfigError("lambda prior needs 0 < lo < hi");
    if (lp.fixed && !(*lp.fixed > 0))
        throw ConfigError("fixed lambda must be positive");
    if (options.prior.kind == SpinCountPrior::Kind::Binomial &&
        !(options.prior.concentration > 0 && options.prior.concentration < 1))
        throw ConfigError("binomial prior concentration must lie in (0, 1)");

    SpinCountPrior prior = options.prior;
    prior.s_max = options.schedule.s_max;
    NeighborIndex const neighbors(table, options.schedule.r_spin);
    std::optional<BirthProposal> birth;
    if (options.schedule.weighted_birth > 0)
        birth = BirthProposal::magnitude_weighted(table, options.schedule.weighted_birth);

    std::vector<EnsembleRun> runs(options.schedule.n_ensembles);
    parallel_for(runs.size(), options.jobs, [&](std::size_t e) {
        runs[e] = run_ensemble(density, neighbors, birth ? &*birth : nullptr, table.size(), options, prior, static_cast<std::uint32_t>(e));
    });

    PosteriorEnsemble posterior;
    posterior.schedule = options.schedule;
    posterior.seed = options.seed;
    for (auto& r : runs) {
        posterior.samples.insert(posterior.samples.end(), std::make_move_iterator(r.samples.begin()),
                                 std::make_move_iterator(r.samples.end()));
        posterior.stats.push_back(r.stats);
    }
    return posterior;
}

} // namespace spinbath
