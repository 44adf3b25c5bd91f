#include "stats.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/inference.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

using namespace spinbath;

namespace {

/// Sites on a line, one angstrom apart.
SiteTable line_table(std::size_t n, std::vector<double> magnitudes = {}, double spacing = 1.0) {
    std::vector<LatticeSite> sites;
    for (std::size_t i = 0; i < n; ++i) {
        LatticeSite s;
        s.position = {1.0 + spacing * static_cast<double>(i), 0, 0};
        s.a_par = magnitudes.empty() ? 1.0 : magnitudes[i];
        sites.push_back(s);
    }
    return SiteTable(sites, 40);
}

class FunctionDensity final : public LogDensity {
public:
    explicit FunctionDensity(std::function<double(SpinConfiguration const&)> f) : f_(std::move(f)) {}
    double log_likelihood(SpinConfiguration const& c) const override { return f_(c); }

private:
    std::function<double(SpinConfiguration const&)> f_;
};

double flat(SpinConfiguration const&) { return 0.0; }

/// Bitmask of a configuration over a small table.
std::size_t mask_of(SpinConfiguration const& c) {
    std::size_t m = 0;
    for (auto s : c.occupied)
        m |= std::size_t{1} << s;
    return m;
}

ChainState start(LogDensity const& d, std::vector<SiteIndex> occupied, double beta = 1.0) {
    ChainState st;
    st.config.occupied = std::move(occupied);
    st.config.lambda = 1.0;
    st.beta = beta;
    st.log_likelihood = d.log_likelihood(st.config);
    return st;
}

SpinCountPrior flat_prior(std::size_t s_max) {
    SpinCountPrior p;
    p.kind = SpinCountPrior::Kind::FlatConfiguration;
    p.s_max = s_max;
    return p;
}

/// Occupancy of the single spin on the beta = 1 strand of a PT run, thinned.
std::vector<double> pt_occupancy(LogDensity const& d, SiteTable const& table, std::size_t n_strands,
                                 std::size_t steps, std::size_t thin, std::uint64_t seed) {
    NeighborIndex nb(table, 1.5);
    SamplerContext ctx{d, nb, flat_prior(1), LambdaPrior{}, table.size()};
    std::vector<ChainState> strands;
    std::vector<Rng> rngs;
    for (std::size_t s = 0; s < n_strands; ++s) {
        strands.push_back(start(d, {0}, std::ldexp(1.0, -static_cast<int>(s))));
        rngs.push_back(make_stream(seed, {s}));
    }
    Rng swap = make_stream(seed, {99});
    std::vector<double> counts(table.size(), 0);
    for (std::size_t i = 0; i < steps; ++i) {
        pt_sweep(strands, ctx, 1, rngs, swap);
        if (i % thin == 0)
            counts[strands[0].config.occupied.at(0)] += 1;
    }
    return counts;
}

} // namespace

TEST_CASE("spin-count prior mass") {
    SpinCountPrior b;
    b.concentration = 0.1;
    CHECK(b.log_config_prior(2, 10) == doctest::Approx(2 * std::log(0.1) + 8 * std::log(0.9)));
    b.s_max = 1;
    CHECK(b.log_config_prior(2, 10) == -std::numeric_limits<double>::infinity());
    auto u = flat_prior(5);
    u.kind = SpinCountPrior::Kind::UniformCount;
    CHECK(u.log_config_prior(2, 10) == doctest::Approx(-std::log(45.0)));
    CHECK(flat_prior(5).log_config_prior(3, 10) == 0);
}

TEST_CASE("schedule validation") {
    auto s = SamplerSchedule::desk();
    CHECK(s.n_total == 5000);
    CHECK(s.n_ensembles == 2);
    CHECK(s.n_strands == 4);
    CHECK_NOTHROW(s.validate());
    s.burn_in = s.n_total;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SamplerSchedule{};
    s.n_strands = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SamplerSchedule{};
    s.weighted_birth = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("neighbor index") {
    auto t = line_table(4);
    NeighborIndex nb(t, 1.5);
    CHECK(nb.of(0).size() == 1);
    CHECK(nb.of(1).size() == 2);
    CHECK(nb.of(3).size() == 1);
    CHECK(nb.of(1)[0] == 0);
    CHECK(nb.of(1)[1] == 2);
}

TEST_CASE("site move leaves an empty configuration alone") {
    auto t = line_table(3);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 1.5);
    SamplerContext ctx{d, nb, flat_prior(3), LambdaPrior{}, t.size()};
    auto st = start(d, {});
    Rng rng = make_stream(1, {});
    CHECK(rwmh_site_move(st, ctx, rng) == MoveOutcome::NotProposed);
    CHECK(st.config.occupied.empty());
    // no unoccupied neighbor
    st = start(d, {0, 1, 2});
    CHECK(rwmh_site_move(st, ctx, rng) == MoveOutcome::Rejected);
}

TEST_CASE("site moves with flat likelihood accept everything on symmetric neighborhoods") {
    std::vector<LatticeSite> ring;
    for (int i = 0; i < 3; ++i) {
        LatticeSite s;
        double const a = 2 * std::acos(-1.0) * i / 3;
        s.position = {std::cos(a), std::sin(a), 0};
        ring.push_back(s);
    }
    SiteTable t(ring, 40);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 5);
    SamplerContext ctx{d, nb, flat_prior(1), LambdaPrior{}, t.size()};
    auto st = start(d, {0});
    Rng rng = make_stream(2, {});
    MoveCounts counts;
    for (int i = 0; i < 1000; ++i)
        counts.add(rwmh_site_move(st, ctx, rng));
    CHECK(counts.accepted == counts.proposed);
}

TEST_CASE("site moves reach the uniform law despite asymmetric neighborhoods") {
    auto t = line_table(3);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 1.5);
    SamplerContext ctx{d, nb, flat_prior(1), LambdaPrior{}, t.size()};
    auto st = start(d, {0});
    Rng rng = make_stream(3, {});
    std::vector<double> counts(3, 0);
    for (int i = 0; i < 100000; ++i) {
        rwmh_site_move(st, ctx, rng);
        if (i % 5 == 0)
            counts[st.config.occupied[0]] += 1;
    }
    CHECK(teststats::chi_square_p(counts, {1.0 / 3, 1.0 / 3, 1.0 / 3}) > 0.01);
}

TEST_CASE("site moves sample a tilted fixed-dimension target") {
    auto t = line_table(5);
    std::vector<double> w{0.0, 0.7, -0.4, 1.1, 0.2};
    FunctionDensity d([&](SpinConfiguration const& c) {
        double s = 0;
        for (auto i : c.occupied)
            s += w[i];
        return s;
    });
    NeighborIndex nb(t, 2.5);
    SamplerContext ctx{d, nb, flat_prior(2), LambdaPrior{}, t.size()};
    auto st = start(d, {0, 1});
    Rng rng = make_stream(4, {});
    std::map<std::size_t, double> counts;
    for (int i = 0; i < 100000; ++i) {
        rwmh_site_move(st, ctx, rng);
        if (i % 20 == 0)
            counts[mask_of(st.config)] += 1;
    }
    // exact: all pairs weighted by exp(w_i + w_j)
    std::vector<double> obs, probs;
    double z = 0;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j)
            z += std::exp(w[i] + w[j]);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j) {
            obs.push_back(counts[(std::size_t{1} << i) | (std::size_t{1} << j)]);
            probs.push_back(std::exp(w[i] + w[j]) / z);
        }
    CHECK(teststats::chi_square_p(obs, probs) > 0.01);
}

TEST_CASE("birth and death over two sites with a flat prior") {
    auto t = line_table(2);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 1.5);
    SamplerContext ctx{d, nb, flat_prior(2), LambdaPrior{}, t.size()};
    auto st = start(d, {});
    Rng rng = make_stream(5, {});
    std::vector<double> counts(4, 0);
    for (int i = 0; i < 100000; ++i) {
        rjmcmc_birth_death(st, ctx, rng);
        if (i % 4 == 0)
            counts[mask_of(st.config)] += 1;
    }
    CHECK(teststats::chi_square_p(counts, {0.25, 0.25, 0.25, 0.25}) > 0.01);
}

TEST_CASE("flat-likelihood birth and death recovers the binomial count prior") {
    std::size_t const n = 1000;
    double const c = 0.011;
    auto t = line_table(n, {}, 0.01);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 0.015);
    SpinCountPrior prior;
    prior.concentration = c;
    prior.s_max = n;
    SamplerContext ctx{d, nb, prior, LambdaPrior{}, n};
    auto st = start(d, {});
    Rng rng = make_stream(6, {});
    std::size_t const k_cap = 30;
    std::vector<double> counts(k_cap + 1, 0);
    for (int i = 0; i < 400000; ++i) {
        rjmcmc_birth_death(st, ctx, rng);
        if (i >= 1000 && i % 40 == 0)
            counts[std::min(st.config.k(), k_cap)] += 1;
    }
    std::vector<double> pmf(k_cap + 1, 0);
    double tail = 1;
    for (std::size_t k = 0; k < k_cap; ++k) {
        pmf[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                          k * std::log(c) + (n - k) * std::log1p(-c));
        tail -= pmf[k];
    }
    pmf[k_cap] = tail;
    // merge sparse cells at both ends
    std::vector<double> obs, probs;
    double o_acc = 0, p_acc = 0;
    for (std::size_t k = 0; k <= k_cap; ++k) {
        o_acc += counts[k];
        p_acc += pmf[k];
        if (p_acc * 9000 >= 5 || k == k_cap) {
            obs.push_back(o_acc);
            probs.push_back(p_acc);
            o_acc = p_acc = 0;
        }
    }
    CHECK(teststats::chi_square_p(obs, probs) > 0.01);
}

TEST_CASE("birth proposal probabilities sum to one over unoccupied sites") {
    std::vector<double> w{5, 1, 0.5, 3, 0.25, 8};
    BirthProposal bp(w, 0.6);
    SpinConfiguration c;
    c.occupied = {1, 4};
    double total = 0;
    for (SiteIndex s = 0; s < w.size(); ++s)
        if (!c.contains(s))
            total += std::exp(bp.log_probability(s, c, w.size()));
    CHECK(total == doctest::Approx(1).epsilon(1e-12));

    Rng rng = make_stream(7, {});
    std::vector<double> counts(w.size(), 0);
    for (int i = 0; i < 30000; ++i) {
        auto s = bp.sample(c, w.size(), rng);
        REQUIRE_FALSE(c.contains(s));
        counts[s] += 1;
    }
    std::vector<double> probs(w.size(), 0);
    for (SiteIndex s = 0; s < w.size(); ++s)
        if (!c.contains(s))
            probs[s] = std::exp(bp.log_probability(s, c, w.size()));
    CHECK(teststats::chi_square_p(counts, probs) > 0.01);
}

TEST_CASE("magnitude-weighted births keep the exact posterior") {
    auto t = line_table(4, {400, 5, 60, 120});
    std::vector<double> w{0.3, -0.5, 0.8, 0.0};
    FunctionDensity d([&](SpinConfiguration const& c) {
        double s = c.k() == 2 ? -0.6 : 0.0;
        for (auto i : c.occupied)
            s += w[i];
        return s;
    });
    NeighborIndex nb(t, 1.5);
    auto bp = BirthProposal::magnitude_weighted(t, 0.8);
    SamplerContext ctx{d, nb, flat_prior(4), LambdaPrior{}, t.size(), 0.05, &bp};
    auto st = start(d, {});
    Rng rng = make_stream(8, {});
    std::vector<double> counts(16, 0);
    for (int i = 0; i < 100000; ++i) {
        rjmcmc_birth_death(st, ctx, rng);
        if (i % 5 == 0)
            counts[mask_of(st.config)] += 1;
    }
    std::vector<double> probs(16);
    double z = 0;
    for (std::size_t m = 0; m < 16; ++m) {
        SpinConfiguration c;
        for (SiteIndex s = 0; s < 4; ++s)
            if (m >> s & 1)
                c.insert(s);
        probs[m] = std::exp(d.log_likelihood(c));
        z += probs[m];
    }
    for (auto& p : probs)
        p /= z;
    CHECK(teststats::chi_square_p(counts, probs) > 0.01);
}

TEST_CASE("lambda walk samples the log-uniform prior") {
    auto t = line_table(1);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 1.5);
    LambdaPrior lp;
    lp.lo = 1.0;
    lp.hi = std::exp(1.0);
    SamplerContext ctx{d, nb, flat_prior(1), lp, t.size(), 0.3};
    auto st = start(d, {});
    st.config.lambda = 1.5;
    Rng rng = make_stream(9, {});
    std::vector<double> u;
    for (int i = 0; i < 100000; ++i) {
        lambda_update(st, ctx, rng);
        REQUIRE(lp.contains(st.config.lambda));
        if (i % 20 == 0)
            u.push_back(std::log(st.config.lambda));
    }
    std::sort(u.begin(), u.end());
    double dmax = 0;
    double const n = static_cast<double>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        dmax = std::max({dmax, std::abs((i + 1) / n - u[i]), std::abs(u[i] - i / n)});
    CHECK(dmax < 1.63 / std::sqrt(n)); // Kolmogorov-Smirnov at the 1% level

    lp.fixed = 0.5;
    SamplerContext fixed_ctx{d, nb, flat_prior(1), lp, t.size(), 0.3};
    CHECK(lambda_update(st, fixed_ctx, rng) == MoveOutcome::NotProposed);
}

TEST_CASE("swap acceptance") {
    ChainState a, b;
    a.beta = 1;
    b.beta = 0.5;
    a.log_likelihood = b.log_likelihood = -3;
    CHECK(swap_acceptance(a, b) == 1);
    b.log_likelihood = -5;
    CHECK(swap_acceptance(a, b) == doctest::Approx(std::exp(-1.0)));
    b.beta = 1;
    CHECK(swap_acceptance(a, b) == 1);
}

TEST_CASE("tempering crosses a barrier that a single chain cannot") {
    auto t = line_table(4);
    double const barrier = 16;
    std::vector<double> ll{0, -barrier, -barrier, std::log(2.0)};
    FunctionDensity d([&](SpinConfiguration const& c) { return ll[c.occupied.at(0)]; });
    // pool each barrier site with its neighboring mode
    auto pooled = [](std::vector<double> const& c) { return std::vector<double>{c[0] + c[1], c[2] + c[3]}; };
    std::vector<double> const exact{1.0 / 3, 2.0 / 3};

    auto multi = pooled(pt_occupancy(d, t, 4, 100000, 100, 10));
    CHECK(teststats::chi_square_p(multi, exact) > 0.01);
    auto single = pooled(pt_occupancy(d, t, 1, 100000, 100, 10));
    CHECK(teststats::chi_square_p(single, exact) < 0.01);
}

TEST_CASE("beta = 1 marginal does not depend on the strand count") {
    auto t = line_table(4);
    std::vector<double> ll{0, -1.5, -2.0, 0.5};
    FunctionDensity d([&](SpinConfiguration const& c) { return ll[c.occupied.at(0)]; });
    std::vector<double> exact(4);
    double z = 0;
    for (double v : ll)
        z += std::exp(v);
    for (std::size_t i = 0; i < 4; ++i)
        exact[i] = std::exp(ll[i]) / z;
    for (std::size_t strands : {1, 2, 4, 8}) {
        CAPTURE(strands);
        CHECK(teststats::chi_square_p(pt_occupancy(d, t, strands, 100000, 10, 20 + strands), exact) > 0.01);
    }
}

TEST_CASE("hybrid sampler is deterministic and independent of the worker count") {
    auto t = line_table(6, {50, 80, 120, 30, 200, 10});
    PulseProtocol p;
    p.n_pulses = 8;
    p.tau_grid = uniform_tau_grid(40, 0.008);
    SpinConfiguration truth;
    truth.occupied = {1, 4};
    truth.lambda = 0.02;
    std::vector<CoherenceSeries> data{simulate_measurement(coherence(truth, t, p), 0.01, 3)};
    Likelihood lk(data, t, automatic_noise_model(data), 1);

    HybridOptions o;
    o.schedule = SamplerSchedule::desk();
    o.schedule.n_total = 600;
    o.schedule.burn_in = 100;
    o.schedule.s_max = 6;
    o.schedule.n_ensembles = 3;
    o.seed = 17;
    o.jobs = 1;
    auto a = run_hybrid(lk, t, o);
    o.jobs = 4;
    auto b = run_hybrid(lk, t, o);
    REQUIRE(a.samples.size() == 3 * 500);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].config == b.samples[i].config);
        CHECK(a.samples[i].log_likelihood == b.samples[i].log_likelihood);
        CHECK(a.samples[i].log_likelihood == doctest::Approx(lk.log_likelihood(a.samples[i].config)));
    }
    o.seed = 18;
    auto c = run_hybrid(lk, t, o);
    bool differ = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        differ |= !(a.samples[i].config == c.samples[i].config);
    CHECK(differ);
}

TEST_CASE("likelihood agrees with a direct Gaussian sum") {
    auto t = line_table(3, {50, 80, 120});
    PulseProtocol p;
    p.n_pulses = 8;
    p.tau_grid = uniform_tau_grid(30, 0.008);
    SpinConfiguration truth;
    truth.occupied = {0, 2};
    truth.lambda = 0.03;
    auto data = simulate_measurement(coherence(truth, t, p), 0.02, 5);
    SpinConfiguration probe;
    probe.occupied = {1};
    probe.lambda = 0.05;
    auto model = coherence(probe, t, p).values;

    Likelihood per_point({data}, t, NoiseModel{NoiseMode::PerPointSigma, 0}, 1);
    double expected = 0;
    for (std::size_t j = 0; j < model.size(); ++j) {
        double const r = data.values[j] - model[j];
        expected += -0.5 * std::log(2 * std::acos(-1.0) * 0.02 * 0.02) - r * r / (2 * 0.02 * 0.02);
    }
    CHECK(per_point.log_likelihood(probe) == doctest::Approx(expected).epsilon(1e-12));

    Likelihood global({data}, t, NoiseModel{NoiseMode::GlobalSigma, 0.1}, 1);
    double g = 0;
    for (std::size_t j = 0; j < model.size(); ++j) {
        double const r = data.values[j] - model[j];
        g += -0.5 * std::log(2 * std::acos(-1.0) * 0.1) - r * r / (2 * 0.1);
    }
    CHECK(global.log_likelihood(probe) == doctest::Approx(g).epsilon(1e-12));
    auto m = per_point.model(probe, 0);
    for (std::size_t j = 0; j < m.size(); ++j)
        CHECK(m[j] == doctest::Approx(model[j]).epsilon(1e-13));

    CHECK(automatic_noise_model(std::vector<CoherenceSeries>{data}).mode == NoiseMode::PerPointSigma);
    auto bare = coherence(truth, t, p);
    CHECK(automatic_noise_model(std::vector<CoherenceSeries>{bare}).mode == NoiseMode::GlobalSigma);
}

TEST_CASE("zero-coupling spins and exact data") {
    auto t = line_table(3, {0, 80, 120});
    PulseProtocol p;
    p.n_pulses = 16;
    p.tau_grid = uniform_tau_grid(50, 0.008);
    SpinConfiguration truth;
    truth.occupied = {1};
    truth.lambda = 0.02;
    auto exact = coherence(truth, t, p);
    exact.sigmas.assign(exact.values.size(), 0);
    Likelihood lk({exact}, t, NoiseModel{NoiseMode::GlobalSigma, 0.1}, 1);
    double const constant = -0.5 * 50 * std::log(2 * std::acos(-1.0) * 0.1);
    CHECK(lk.log_likelihood(truth) == doctest::Approx(constant).epsilon(1e-14));
    auto with_zero = truth;
    with_zero.insert(0);
    CHECK(lk.log_likelihood(with_zero) == lk.log_likelihood(truth));
}

TEST_CASE("a zero lambda step never moves") {
    auto t = line_table(1);
    FunctionDensity d(flat);
    NeighborIndex nb(t, 1.5);
    SamplerContext ctx{d, nb, flat_prior(1), LambdaPrior{}, t.size(), 0.0};
    auto st = start(d, {});
    st.config.lambda = 0.7;
    Rng rng = make_stream(1, {});
    for (int i = 0; i < 100; ++i)
        lambda_update(st, ctx, rng);
    CHECK(st.config.lambda == 0.7);
}

TEST_CASE("envelope-only data gives an empty modal set and the true lambda") {
    auto full = generate_nv_diamond_table(12.0);
    auto cand = filter_detectable_sites(full, 3.90625, 7812.5).table;
    PulseProtocol p;
    p.n_pulses = 16;
    p.tau_grid = uniform_tau_grid(250, 0.008);
    SpinConfiguration none;
    none.lambda = 0.02;
    std::vector<CoherenceSeries> data{simulate_measurement(coherence(none, cand, p), 0.001, 4)};
    Likelihood lk(data, cand, automatic_noise_model(data), 1);
    HybridOptions o;
    o.schedule = SamplerSchedule::desk();
    o.schedule.s_max = 5;
    o.prior.concentration = 1e-4;
    o.lambda_prior.hi = 1.0;
    o.seed = 2;
    auto post = run_hybrid(lk, cand, o);
    PosteriorEnsemble const& pe = post;
    std::map<std::vector<SiteIndex>, std::size_t> freq;
    std::vector<double> lambdas;
    for (auto const& s : pe.samples) {
        ++freq[s.config.occupied];
        if (s.config.k() == 0)
            lambdas.push_back(s.config.lambda);
    }
    std::size_t empty_count = freq[{}];
    for (auto const& [set, c] : freq)
        CHECK(c <= empty_count);
    REQUIRE_FALSE(lambdas.empty());
    std::nth_element(lambdas.begin(), lambdas.begin() + lambdas.size() / 2, lambdas.end());
    CHECK(lambdas[lambdas.size() / 2] == doctest::Approx(0.02).epsilon(0.05));
}
