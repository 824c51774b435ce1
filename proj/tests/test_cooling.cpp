#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <colddamp/cooling.hpp>

using namespace colddamp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
OscillatorParams unit_osc(double gamma = 1e-3) {
    OscillatorParams osc;
    osc.omega_m = 1.0;
    osc.gamma_m = gamma;
    return osc;
}

NoiseBudget simple_budget(double n_th, double n_imp, double n_fb = 0.0, double gamma = 1e-3) {
    return assemble_budget(n_th, 0.0, 0.0, n_imp, 0.0, n_fb, gamma);
}
}  // namespace

TEST_CASE("closed-loop spectra: resonance and wing values", "[cooling]") {
    const auto osc = unit_osc();
    const auto b = simple_budget(1e3, 1e-3);
    const double big_n = b.n_tot + b.n_fb;

    for (double gain : {0.0, 10.0, 300.0}) {
        const double g_eff = (1.0 + gain) * osc.gamma_m;
        const std::vector<double> grid = {osc.omega_m, 30.0 * osc.omega_m};
        const auto s = closed_loop_spectra(osc, b, gain, grid);

        // In-loop record at resonance: (N + 1/2 + n_imp) (Gamma_m/Gamma_eff)^2.
        const double ratio2 = std::pow(osc.gamma_m / g_eff, 2);
        CHECK_THAT(s.s_y[0], WithinRel((big_n + 0.5 + b.n_imp) * ratio2, 1e-12));

        // Physical peak: (n_m + 1/2) Gamma_m / Gamma_eff.
        const double n_m = phonon_occupancy(b, gain);
        CHECK_THAT(s.s_x[0], WithinRel((n_m + 0.5) * osc.gamma_m / g_eff, 1e-12));

        // Far wing of the record: the imprecision floor.
        CHECK_THAT(s.s_y[1], WithinRel(b.n_imp, 1e-3));
    }
}

TEST_CASE("open loop: record peak exceeds physical peak by the floor", "[cooling]") {
    const auto osc = unit_osc();
    const auto b = simple_budget(50.0, 0.02);
    const std::vector<double> grid = {osc.omega_m};
    const auto s = closed_loop_spectra(osc, b, 0.0, grid);
    CHECK_THAT(s.s_x[0], WithinRel(b.n_tot + 0.5, 1e-12));
    CHECK_THAT(s.s_y[0] - s.s_x[0], WithinRel(b.n_imp, 1e-9));
}

TEST_CASE("high gain squashes the in-loop record below its own floor", "[cooling]") {
    const auto osc = unit_osc(1e-6);
    const auto b = simple_budget(100.0, 1e-4, 0.0, 1e-6);
    const std::vector<double> grid = {osc.omega_m};
    const auto s = closed_loop_spectra(osc, b, 2000.0, grid);
    CHECK(s.s_y[0] < b.n_imp);
    // Dip depth (N + 1/2 + n_imp)/(n_imp (1+g)^2) of the floor.
    const double expected = (b.n_tot + 0.5 + b.n_imp) / std::pow(2001.0, 2);
    CHECK_THAT(s.s_y[0], WithinRel(expected, 1e-12));
    CHECK_THAT(s.s_y[0] / b.n_imp, WithinAbs(0.251, 0.002));

    // The physical spectrum never drops below what the fed-back noise drives.
    const auto sx = closed_loop_spectra(osc, b, 2000.0, grid).s_x[0];
    CHECK(sx > 0.0);
}

TEST_CASE("position variance equals the closed form", "[cooling]") {
    // Integral of s_x over positive frequencies is (pi/2) Gamma_m (n_m + 1/2)
    // in these zero-point-normalized units.
    const auto osc = unit_osc();
    const auto b = simple_budget(100.0, 1e-3);
    const double gain = 30.0;

    const double d_omega = 2e-5;
    std::vector<double> grid;
    grid.reserve(1000001);
    for (std::size_t i = 0; i <= 1000000; ++i) grid.push_back(static_cast<double>(i) * d_omega);
    const auto s = closed_loop_spectra(osc, b, gain, grid);
    double integral = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        integral += 0.5 * (s.s_x[i] + s.s_x[i - 1]) * d_omega;

    const double expected = 0.5 * pi * osc.gamma_m * (phonon_occupancy(b, gain) + 0.5);
    CHECK_THAT(integral, WithinRel(expected, 5e-4));
}

TEST_CASE("phonon occupancy: limits and monotonic heating at large gain", "[cooling]") {
    const auto b = simple_budget(1e3, 1e-3);
    // Zero gain leaves the open-loop occupancy.
    CHECK_THAT(phonon_occupancy(b, 0.0), WithinRel(b.n_tot + b.n_fb, 1e-12));
    // Gain far beyond optimum heats: n_m ~ n_imp g.
    CHECK_THAT(phonon_occupancy(b, 1e9), WithinRel(b.n_imp * 1e9, 1e-3));
    CHECK_THROWS_AS(phonon_occupancy(b, -1.0), std::invalid_argument);

    // Feedback-actuator noise enters exactly like bath occupancy.
    const auto noisy = simple_budget(900.0, 1e-3, 100.0);
    CHECK_THAT(phonon_occupancy(noisy, 50.0), WithinRel(phonon_occupancy(b, 50.0), 1e-12));
}

TEST_CASE("optimal gain is the exact stationary point", "[cooling]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const double n_th = std::pow(10.0, 2.0 + 4.0 * u(rng));
        const double n_imp = std::pow(10.0, -6.0 + 4.0 * u(rng));
        const auto b = simple_budget(n_th, n_imp);
        const auto m = minimum_occupancy(b);
        if (m.clamped) continue;
        const double at_opt = phonon_occupancy(b, m.g_fb_opt);
        CHECK_THAT(at_opt, WithinRel(m.n_m_min, 1e-9));
        // Strict local minimum.
        CHECK(at_opt < phonon_occupancy(b, m.g_fb_opt * 1.001));
        CHECK(at_opt < phonon_occupancy(b, m.g_fb_opt * 0.999));
    }
}

TEST_CASE("optimal gain approaches sqrt(n_tot/n_imp) for dominant baths", "[cooling]") {
    const auto b = simple_budget(1e6, 1e-2);
    const auto m = minimum_occupancy(b);
    const double asymptotic = std::sqrt(b.n_tot / b.n_imp);
    CHECK_THAT(m.g_fb_opt, WithinRel(asymptotic, 4e-4));
    CHECK_THAT(m.n_m_min, WithinRel(2.0 * std::sqrt(b.n_tot * b.n_imp) - 0.5, 1e-3));
}

TEST_CASE("cold-damping operating point of the sideband-resolved beam", "[cooling]") {
    const auto b = simple_budget(2.4e4, 2.9e-4, 0.0, two_pi * 5.7);
    const auto m = minimum_occupancy(b);
    CHECK_FALSE(m.clamped);
    CHECK_THAT(m.n_m_min, WithinRel(4.775839, 1e-5));
    // Optimal effective linewidth ~52 kHz.
    const double f_eff = (1.0 + m.g_fb_opt) * 5.7;
    CHECK_THAT(f_eff, WithinRel(51854.4, 1e-4));
}

TEST_CASE("too-ideal imprecision clamps the minimum at zero", "[cooling]") {
    const auto b = simple_budget(0.0, 1e-4);
    const auto m = minimum_occupancy(b);
    CHECK(m.clamped);
    CHECK(m.n_m_min == 0.0);
    REQUIRE_FALSE(m.warnings.empty());

    const auto no_floor = simple_budget(10.0, 0.0);
    CHECK_THROWS_AS(minimum_occupancy(no_floor), std::invalid_argument);
}

TEST_CASE("optimal filter: velocity response at resonance", "[cooling]") {
    const auto osc = unit_osc();
    const auto b = simple_budget(1e3, 1e-3);
    std::vector<double> grid;
    for (int i = -50; i <= 50; ++i) grid.push_back(osc.omega_m * (1.0 + 0.01 * i));
    const auto f = optimal_filter(osc, b, grid);
    REQUIRE(f.magnitude.size() == grid.size());

    // Phase passes through pi/2 exactly at resonance, monotonically rising.
    CHECK_THAT(f.phase[50], WithinRel(0.5 * pi, 1e-12));
    for (std::size_t i = 1; i < f.phase.size(); ++i) {
        CHECK(f.phase[i] > f.phase[i - 1]);
        CHECK(f.phase[i] > 0.0);
        CHECK(f.phase[i] < pi);
    }

    // Magnitude at resonance: |chi^-1| = Omega_m Gamma_m times the noise ratio.
    const double n_force = 2.0 * (b.n_tot + b.n_fb) + 1.0;
    const double ratio = (8.0 * b.n_imp / osc.gamma_m) / (4.0 * n_force * osc.gamma_m * osc.omega_m * osc.omega_m);
    CHECK_THAT(f.magnitude[50], WithinRel(osc.omega_m * osc.gamma_m * ratio, 1e-12));
    // Resonance is the soft point of the inverse susceptibility.
    CHECK(f.magnitude[50] < f.magnitude.front());
    CHECK(f.magnitude[50] < f.magnitude.back());
}

TEST_CASE("ground-state conditions at the demonstrated operating point", "[cooling]") {
    const auto b = simple_budget(2.1e4, 2.7e-5, 0.0, two_pi * 5.7);
    const auto r = ground_state_conditions(b);
    // Both margin forms are the same quantity: 1/(2 n_th n_imp) = 8 G_meas/G_th.
    CHECK_THAT(r.necessary_margin, WithinRel(0.8818342151675486, 1e-12));
    CHECK_THAT(r.rate_margin, WithinRel(r.necessary_margin, 1e-12));
    CHECK_FALSE(r.necessary_ok);
    CHECK_FALSE(r.rate_ok);
    CHECK_FALSE(r.reaches_ground_state);
    CHECK(r.n_m_min > 1.0);
    CHECK_THAT(r.gamma_meas / two_pi, WithinRel(13194.444, 1e-6));
    CHECK_THAT(r.gamma_th / two_pi, WithinRel(119700.0, 1e-12));

    // Halving the imprecision brings the readout across the threshold.
    const auto better = simple_budget(2.1e4, 1.18e-5, 0.0, two_pi * 5.7);
    const auto r2 = ground_state_conditions(better);
    CHECK(r2.necessary_ok);
    CHECK(r2.rate_ok);
    CHECK(r2.necessary_margin > 1.0);
}
