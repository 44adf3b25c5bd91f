#include "oracles.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/forward_model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spinbath;

namespace {

double const omega_l = constants::to_angular(constants::gamma_c13_khz_per_gauss * 311.0);

SiteTable table_of(std::vector<std::pair<double, double>> const& couplings) {
    std::vector<LatticeSite> sites;
    double x = 1;
    for (auto [par, perp] : couplings) {
        LatticeSite s;
        s.position = {x, 0, 0};
        s.a_par = par;
        s.a_perp = perp;
        sites.push_back(s);
        x += 1;
    }
    return SiteTable(sites, 40);
}

} // namespace

TEST_CASE("uniform tau grid") {
    auto g = uniform_tau_grid(250, 0.008);
    REQUIRE(g.size() == 250);
    CHECK(g.front() == doctest::Approx(0.008 / 250));
    CHECK(g.back() == 0.008);
}

TEST_CASE("single-spin modulation matches conditional evolution") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coupling(-500, 500);
    std::uniform_real_distribution<double> perp(0, 500);
    std::uniform_real_distribution<double> tau(1e-4, 0.02);
    for (int n : {1, 2, 3, 7, 8, 16, 32}) {
        for (int trial = 0; trial < 40; ++trial) {
            double const a = constants::to_angular(coupling(rng));
            double const b = constants::to_angular(perp(rng));
            double const t = tau(rng);
            CHECK(std::abs(single_spin_modulation(a, b, t, n, omega_l) - oracle::modulation(a, b, t, n, omega_l)) <
                  1e-10);
        }
    }
}

TEST_CASE("modulation properties") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-300, 300);
    for (int trial = 0; trial < 200; ++trial) {
        double const a = constants::to_angular(u(rng));
        double const t = 1e-3 * (1 + trial % 17);
        int const n = 1 + trial % 20;
        // bounded
        double const m = single_spin_modulation(a, constants::to_angular(std::abs(u(rng))), t, n, omega_l);
        CHECK(m <= 1 + 1e-12);
        CHECK(m >= -1 - 1e-12);
        // zero perpendicular coupling never dephases
        CHECK(single_spin_modulation(a, 0, t, n, omega_l) == doctest::Approx(1).epsilon(1e-12));
    }
    // tau -> 0 gives no modulation
    CHECK(single_spin_modulation(1000, 800, 1e-12, 16, omega_l) == doctest::Approx(1).epsilon(1e-9));
}

TEST_CASE("coherence matches the oracle for small baths") {
    auto table = table_of({{120.0, 80.0}, {-45.5, 210.0}, {300.0, 15.0}});
    PulseProtocol p;
    p.n_pulses = 16;
    p.tau_grid = uniform_tau_grid(250, 0.008);
    SpinConfiguration c;
    c.occupied = {0, 1, 2};
    c.lambda = 0.02;
    auto series = coherence(c, table, p);
    REQUIRE(series.values.size() == 250);
    std::vector<oracle::Spin> spins;
    for (SiteIndex i = 0; i < 3; ++i)
        spins.push_back({table.a_par(i), table.a_perp(i)});
    for (std::size_t j = 0; j < 250; ++j)
        CHECK(std::abs(series.values[j] -
                       oracle::coherence(spins, p.tau_grid[j], 16, 311, constants::gamma_c13_khz_per_gauss, 0.02)) <
              1e-10);
}

TEST_CASE("coherence of the empty bath is the envelope") {
    SiteTable table = table_of({{1, 1}});
    PulseProtocol p;
    p.tau_grid = uniform_tau_grid(10, 0.01);
    SpinConfiguration c;
    c.lambda = 0.05;
    auto s = coherence(c, table, p);
    for (std::size_t j = 0; j < 10; ++j)
        CHECK(s.values[j] == doctest::Approx(std::exp(-p.tau_grid[j] / 0.05)));
    c.lambda = no_decay;
    for (double v : coherence(c, table, p).values)
        CHECK(v == 1.0);
}

TEST_CASE("bath product is order independent and multiplicative") {
    auto table = table_of({{120.0, 80.0}, {-45.5, 210.0}, {30.0, 15.0}});
    PulseProtocol p;
    p.tau_grid = uniform_tau_grid(50, 0.008);
    std::vector<SiteIndex> all{0, 1, 2}, rev{2, 1, 0};
    auto a = bath_product(all, table, p);
    auto b = bath_product(rev, table, p);
    for (std::size_t j = 0; j < a.size(); ++j) {
        double single = 1;
        for (SiteIndex s : all)
            single *= single_spin_modulation(constants::to_angular(table.a_par(s)),
                                             constants::to_angular(table.a_perp(s)), p.tau_grid[j], p.n_pulses,
                                             p.omega_larmor());
        CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-14));
        CHECK(a[j] == doctest::Approx(single).epsilon(1e-12));
    }
}

TEST_CASE("invalid input") {
    auto table = table_of({{1, 1}});
    PulseProtocol p;
    p.tau_grid = {0.001, 0.001};
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.tau_grid = {0.001, 0.002};
    p.n_pulses = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.n_pulses = 4;
    SpinConfiguration c;
    c.occupied = {5};
    CHECK_THROWS_AS(coherence(c, table, p), DomainError);
}

TEST_CASE("simulated measurement noise") {
    auto table = table_of({{1, 1}});
    PulseProtocol p;
    p.tau_grid = uniform_tau_grid(4000, 0.01);
    SpinConfiguration c;
    auto clean = coherence(c, table, p);
    auto noisy = simulate_measurement(clean, 0.01, 42);
    double sum = 0, sum2 = 0;
    for (std::size_t j = 0; j < clean.values.size(); ++j) {
        double const d = noisy.values[j] - clean.values[j];
        sum += d;
        sum2 += d * d;
        CHECK(noisy.sigmas[j] == 0.01);
    }
    double const n = static_cast<double>(clean.values.size());
    CHECK(std::abs(sum / n) < 5 * 0.01 / std::sqrt(n));
    CHECK(std::sqrt(sum2 / n) == doctest::Approx(0.01).epsilon(0.05));
    CHECK(simulate_measurement(clean, 0.01, 42).values == noisy.values);
}

TEST_CASE("closed-form special cases") {
    double const w = constants::to_angular(50), x = constants::to_angular(30);
    CHECK(std::abs(single_spin_modulation(w, x, 0.002, 16, omega_l) - oracle::modulation(w, x, 0.002, 16, omega_l)) <
          1e-12);
    CHECK(single_spin_modulation(0, 0, 0.004, 16, omega_l) == doctest::Approx(1).epsilon(1e-14));
    CHECK(single_spin_modulation(w, x, 0, 16, omega_l) == doctest::Approx(1).epsilon(1e-14));

    SiteTable table = table_of({{1, 1}});
    PulseProtocol p;
    p.tau_grid = uniform_tau_grid(250, 0.008);
    SpinConfiguration empty;
    empty.lambda = 0.008;
    CHECK(coherence(empty, table, p).values.back() == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    auto clean = coherence(empty, table, p);
    CHECK(simulate_measurement(clean, 0, 3).values == clean.values);
}
