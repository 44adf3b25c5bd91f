#include "spinbath/design.hpp"
#include "spinbath/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace spinbath;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(std::string const& name) {
    auto dir = fs::temp_directory_path() / "spinbath_test_design" / name;
    fs::remove_all(dir);
    return dir;
}

SiteTable const& small_table() {
    static SiteTable const t = generate_nv_diamond_table(10.0);
    return t;
}

SweepSpec tiny_spec() {
    SweepSpec s;
    s.axes = {{"n_pulses", {8, 16}}};
    s.bath_counts = {2, 3};
    s.band_lo = 20;
    s.band_hi = 400;
    s.schedule = SamplerSchedule::desk();
    s.schedule.n_total = 300;
    s.schedule.burn_in = 100;
    s.schedule.s_max = 6;
    s.n_samples = 60;
    s.seed = 5;
    s.jobs = 2;
    return s;
}

BathReport report(std::vector<double> by_bin, long k_disc, double fp) {
    BathReport r;
    r.detection_by_bin = std::move(by_bin);
    r.k_discrepancy = k_disc;
    r.false_positive_rate = fp;
    return r;
}

GridPoint point_with(std::size_t index, int n_pulses, double b, double detection, double fp) {
    GridPoint p;
    p.index = index;
    p.protocol.n_pulses = n_pulses;
    p.protocol.b_field = b;
    p.protocol.tau_grid = uniform_tau_grid(100, 0.008);
    p.values = {{"n_pulses", n_pulses}, {"b_field", b}};
    BathReport r;
    r.truth_magnitude = {50, 300};
    r.detection_rate = {detection, 0.0};
    r.false_positive_rate = fp;
    p.baths = {r};
    p.aggregate = aggregate_reports(p.baths, 4);
    return p;
}

} // namespace

TEST_CASE("default bath counts") {
    auto c = SweepSpec::default_bath_counts();
    REQUIRE(c.size() == 16);
    CHECK(c.front() == 5);
    CHECK(c.back() == 20);
}

TEST_CASE("spec validation") {
    auto s = tiny_spec();
    CHECK_NOTHROW(s.validate());
    s.axes.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = tiny_spec();
    s.axes = {{"temperature", {1}}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = tiny_spec();
    s.bath_counts = {3, 0};
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("grid is the cartesian product with the first axis slowest") {
    SweepSpec s;
    s.axes = {{"b_field", {100, 311}}, {"n_pulses", {8, 16, 32}}, {"epsilon", {0.01}}};
    s.tau_max = 0.004;
    s.n_samples = 50;
    auto g = sweep_grid(s);
    REQUIRE(g.size() == 6);
    CHECK(g[0].protocol.b_field == 100);
    CHECK(g[0].protocol.n_pulses == 8);
    CHECK(g[2].protocol.n_pulses == 32);
    CHECK(g[3].protocol.b_field == 311);
    CHECK(g[3].protocol.n_pulses == 8);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i].index == i);
        CHECK(g[i].epsilon == 0.01);
        CHECK(g[i].protocol.tau_grid.size() == 50);
        CHECK(g[i].protocol.tau_max() == 0.004);
        CHECK(g[i].values.size() == 3);
    }
}

TEST_CASE("aggregates are means of the raw reports") {
    double const nan = std::nan("");
    std::vector<BathReport> rs{report({1.0, nan, 0.5}, -2, 0.25), report({0.0, nan, 1.0}, 1, 0.0),
                               report({nan, nan, 0.0}, 0, 0.5)};
    auto a = aggregate_reports(rs, 3);
    CHECK(a.detection_by_bin[0] == doctest::Approx(0.5));
    CHECK(std::isnan(a.detection_by_bin[1]));
    CHECK(a.detection_by_bin[2] == doctest::Approx(0.5));
    CHECK(a.mean_abs_k_discrepancy == doctest::Approx(1.0));
    CHECK(a.mean_false_positive_rate == doctest::Approx(0.25));
}

TEST_CASE("sweep is deterministic, checkpointed and idempotent") {
    auto spec = tiny_spec();
    auto dir = fresh_dir("idempotent");
    auto first = run_sweep(spec, small_table(), dir);
    REQUIRE(first.points.size() == 2);
    for (auto const& p : first.points) {
        CHECK(p.baths.size() == 2);
        auto again = aggregate_reports(p.baths, spec.bins.size());
        CHECK(again.mean_abs_k_discrepancy == p.aggregate.mean_abs_k_discrepancy);
        CHECK(fs::exists(dir / ("point_" + std::to_string(p.index) + ".json")));
        CHECK(p.baths[0].k_true == 2);
        CHECK(p.baths[0].truth_magnitude.size() == 2);
    }
    // paired baths: identical truth at every grid point
    CHECK(first.points[0].baths[1].truth_magnitude == first.points[1].baths[1].truth_magnitude);

    auto stamp = fs::last_write_time(dir / "point_0.json");
    auto second = run_sweep(spec, small_table(), dir);
    CHECK(fs::last_write_time(dir / "point_0.json") == stamp);
    CHECK(nlohmann::json(to_json(second)) == nlohmann::json(to_json(first)));

    spec.jobs = 1;
    auto serial = run_sweep(spec, small_table());
    CHECK(to_json(serial) == to_json(first));
}

TEST_CASE("corrupted or foreign checkpoints are reported") {
    auto spec = tiny_spec();
    spec.axes = {{"n_pulses", {8}}};
    spec.bath_counts = {2};
    auto dir = fresh_dir("corrupt");
    run_sweep(spec, small_table(), dir);
    std::ofstream(dir / "point_0.json") << "{ not json";
    try {
        run_sweep(spec, small_table(), dir);
        FAIL("expected an error");
    } catch (ValidationError const& e) {
        CHECK(std::string(e.what()).find("grid point 0") != std::string::npos);
    }

    auto dir2 = fresh_dir("foreign");
    run_sweep(spec, small_table(), dir2);
    spec.seed = 6;
    CHECK_THROWS_AS(run_sweep(spec, small_table(), dir2), ConfigError);
}

TEST_CASE("sweep spec json round trip") {
    auto spec = tiny_spec();
    spec.prior.kind = SpinCountPrior::Kind::UniformCount;
    spec.lambda_prior.hi = 2;
    auto j = to_json(spec);
    auto back = sweep_spec_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.axes.size() == 1);
    CHECK(back.schedule.n_total == 300);

    auto partial = nlohmann::json::parse(R"({"axes": {"epsilon": [0.01, 0.001]}, "schedule": {"n_total": 1000, "burn_in": 200}})");
    auto p = sweep_spec_from_json(partial);
    CHECK(p.schedule.n_ensembles == 2);
    CHECK(p.schedule.n_strands == 4);
    CHECK(p.bath_counts.size() == 16);
    CHECK_THROWS_AS(sweep_spec_from_json(nlohmann::json::object()), SchemaError);
}

TEST_CASE("acquisition time") {
    PulseProtocol p;
    p.n_pulses = 16;
    p.tau_grid = uniform_tau_grid(250, 0.008);
    CHECK(acquisition_time(p, 3) == doctest::Approx(250 * 3 * 2 * 16 * 0.008));
}

TEST_CASE("recommendation ranking and filters") {
    SweepResult single;
    single.points = {point_with(0, 8, 311, 0.5, 0.1)};
    auto one = recommend_protocol(single, 25, 100, {});
    REQUIRE(one.feasible);
    REQUIRE(one.ranked.size() == 1);
    CHECK(one.ranked[0].detection_rate == 0.5);

    SweepResult tie;
    tie.points = {point_with(0, 8, 311, 0.5, 0.3), point_with(1, 8, 311, 0.5, 0.1)};
    auto t = recommend_protocol(tie, 25, 100, {});
    CHECK(t.ranked[0].index == 1);

    SweepResult time;
    time.points = {point_with(0, 32, 311, 0.5, 0.1), point_with(1, 8, 311, 0.5, 0.1)};
    CHECK(recommend_protocol(time, 25, 100, {}).ranked[0].index == 1);

    SweepResult fields;
    fields.points = {point_with(0, 8, 100, 0.9, 0), point_with(1, 8, 311, 0.2, 0), point_with(2, 8, 500, 0.8, 0)};
    ProtocolConstraints fixed_b;
    fixed_b.b_field = 311;
    auto f = recommend_protocol(fields, 25, 100, fixed_b);
    REQUIRE(f.ranked.size() == 1);
    CHECK(f.ranked[0].protocol.b_field == 311);
    CHECK(recommend_protocol(fields, 25, 100, {}).ranked[0].index == 0);

    ProtocolConstraints impossible;
    impossible.max_pulses = 4;
    impossible.b_field = 311;
    auto none = recommend_protocol(fields, 25, 100, impossible);
    CHECK_FALSE(none.feasible);
    CHECK(none.ranked.empty());
    CHECK(none.binding_constraint == "max_pulses");

    ProtocolConstraints slow;
    slow.max_acquisition_time = 1.0;
    CHECK(recommend_protocol(fields, 25, 100, slow).binding_constraint == "max_acquisition_time");
    CHECK_THROWS_AS(recommend_protocol(SweepResult{}, 25, 100, {}), DomainError);
}

TEST_CASE("lower noise does not reduce detection") {
    // Spins above ~200 kHz stay resolvable even at epsilon = 0.1, so the band
    // reaches down to 25 kHz where the noise level matters.
    SweepSpec s;
    s.axes = {{"epsilon", {0.001, 0.1}}};
    s.bath_counts = {2, 2, 3, 3, 4, 4, 5, 5};
    s.band_lo = 25;
    s.band_hi = 200;
    s.seed = 12;
    s.jobs = 4;
    s.lambda_prior.hi = 1;
    s.schedule = SamplerSchedule::desk();
    s.schedule.s_max = 10;
    auto r = run_sweep(s, generate_nv_diamond_table(12.0));
    REQUIRE(r.points.size() == 2);
    auto pooled = [](GridPoint const& p) {
        double sum = 0;
        std::size_t n = 0;
        for (auto const& b : p.baths)
            for (double d : b.detection_rate) {
                sum += d;
                ++n;
            }
        return sum / static_cast<double>(n);
    };
    CHECK(pooled(r.points[0]) >= pooled(r.points[1]));
}
