#include "spinbath/detection.hpp"
#include "spinbath/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace spinbath;

namespace {

PulseProtocol cpmg(int n, std::size_t samples, double tau_max) {
    PulseProtocol p;
    p.n_pulses = n;
    p.tau_grid = uniform_tau_grid(samples, tau_max);
    return p;
}

} // namespace

TEST_CASE("detection window numbers") {
    auto w8 = detection_window(250, 0.008, 8);
    CHECK(w8.f_min == 7.8125);
    CHECK(w8.f_max == 7812.5);
    CHECK(detection_window(250, 0.008, 16).f_min == 3.90625);
    auto w = detection_window(cpmg(32, 100, 0.004));
    CHECK(w.f_min == doctest::Approx(1.0 / (32 * 2 * 0.004)));
    CHECK(w.f_max == doctest::Approx(100 / (4 * 0.004)));
    CHECK_THROWS_AS(detection_window(0, 0.008, 8), DomainError);
    CHECK_THROWS_AS(detection_window(10, 0, 8), DomainError);
}

TEST_CASE("joint window floor conventions") {
    std::vector<PulseProtocol> ps{cpmg(8, 250, 0.008), cpmg(16, 200, 0.008)};
    auto mx = joint_window(ps, FloorConvention::Max);
    auto mn = joint_window(ps, FloorConvention::Min);
    CHECK(mx.f_min == 7.8125);
    CHECK(mn.f_min == 3.90625);
    CHECK(mx.f_max == 200 / (4 * 0.008));
    CHECK(mn.f_max == mx.f_max);
}

TEST_CASE("type 7 quantile") {
    CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile({4, 1, 3, 2}, 0.95) == doctest::Approx(3.85));
    CHECK(quantile({4, 1, 3, 2}, 0.0) == 1);
    CHECK(quantile({4, 1, 3, 2}, 1.0) == 4);
    CHECK(quantile({7}, 0.3) == 7);
}

TEST_CASE("bootstrap of a constant sample") {
    std::vector<double> errors(20, 0.6);
    Rng rng = make_stream(1, {});
    CHECK(bootstrap_confidence(errors, 50, 0.95, 3, rng) == doctest::Approx(0.2));
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(bootstrap_confidence(one, 50, 0.95, 3, rng), DomainError);
    CHECK_THROWS_AS(bootstrap_confidence(errors, 0, 0.95, 3, rng), DomainError);
    CHECK_THROWS_AS(bootstrap_confidence(errors, 10, 1.0, 3, rng), DomainError);
}

TEST_CASE("bootstrap stays within the sample range") {
    std::vector<double> errors;
    for (int i = 0; i < 40; ++i)
        errors.push_back(0.1 * i);
    Rng rng = make_stream(2, {});
    double const b = bootstrap_confidence(errors, 400, 0.95, 1, rng);
    CHECK(b <= 3.9);
    CHECK(b >= quantile(errors, 0.5));
}

TEST_CASE("threshold lookup interpolates and clamps") {
    std::vector<double> f{0, 10, 20, 30};
    std::vector<double> e{0, 0.001, 0.004, 0.01};
    CHECK(threshold_for_epsilon(f, e, 0.0025, 0) == doctest::Approx(15));
    CHECK(threshold_for_epsilon(f, e, 0.0025, 17) == doctest::Approx(17));
    CHECK(threshold_for_epsilon(f, e, 0.05, 0) == 30);
    CHECK(threshold_for_epsilon(f, e, 0.0005, 0) == doctest::Approx(5));
}

TEST_CASE("truncation error vanishes at zero cut and grows with it on average") {
    auto table = generate_nv_diamond_table(12.0);
    std::vector<PulseProtocol> ps{cpmg(8, 100, 0.008)};
    std::vector<double> grid{0, 5, 20, 80, 1e6};
    auto errors = threshold_error_grid(table, ps, 0.011, grid, 60, 4, 2);
    REQUIRE(errors.size() == grid.size());
    for (double v : errors[0])
        CHECK(v == 0);
    auto mean = [](std::vector<double> const& v) {
        double s = 0;
        for (double x : v)
            s += x;
        return s / static_cast<double>(v.size());
    };
    CHECK(mean(errors[4]) >= mean(errors[2]));
    CHECK(mean(errors[2]) >= mean(errors[1]));

    auto serial = threshold_error_grid(table, ps, 0.011, grid, 60, 4, 1);
    CHECK(serial == errors);
    CHECK(threshold_error(table, ps, 0.011, 20, 60, 4, 3) == errors[2]);
}

TEST_CASE("threshold curve is non-increasing as noise falls and respects the floor") {
    auto table = generate_nv_diamond_table(15.0);
    std::vector<PulseProtocol> ps{cpmg(8, 250, 0.008)};
    std::vector<double> fcut;
    for (double f = 0; f <= 200; f += 5)
        fcut.push_back(f);
    ThresholdSettings s;
    s.n_configs = 120;
    s.n_boot = 100;
    s.seed = 8;
    s.jobs = 2;
    auto curve = min_detectable_curve(table, ps, fcut, {0.0001, 0.01, 0.001, 0}, s);
    REQUIRE(curve.epsilons.size() == 4);
    CHECK(std::is_sorted(curve.epsilons.rbegin(), curve.epsilons.rend()));
    CHECK(curve.floor == 7.8125);
    for (std::size_t i = 1; i < curve.f_thresholds.size(); ++i)
        CHECK(curve.f_thresholds[i] <= curve.f_thresholds[i - 1]);
    for (double f : curve.f_thresholds)
        CHECK(f >= curve.floor);
    CHECK(curve.f_thresholds.back() == curve.floor);
}

TEST_CASE("bootstrap quantile of a uniform ladder") {
    std::vector<double> errors;
    for (int i = 1; i <= 1000; ++i)
        errors.push_back(i);
    Rng rng = make_stream(5, {});
    CHECK(bootstrap_confidence(errors, 2000, 0.95, 10, rng) == doctest::Approx(95.0).epsilon(0.02));
    std::vector<double> symmetric{1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng rng2 = make_stream(6, {});
    CHECK(bootstrap_confidence(symmetric, 4000, 0.5, 1, rng2) == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("epsilon above every error maps to the largest cut") {
    std::vector<double> f{0, 10, 20};
    std::vector<double> e{0, 0.001, 0.002};
    CHECK(threshold_for_epsilon(f, e, 1.0, 3.9) == 20);
    CHECK(threshold_for_epsilon(f, e, 0.0, 3.9) == 3.9);
}
