#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <colddamp/calibration.hpp>
#include <colddamp/rng.hpp>

using namespace colddamp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Frequency-noise spectrum holding a thermomechanical peak of band power
// 2 n_th g0^2 and a phase-reference tone of band power r^2 (beta w_cal)^2 / 2.
Psd tone_spectrum(double g0, double n_th, const CalibrationTone& tone, double noise = 0.0,
                  std::uint32_t stream = 0) {
    Psd psd;
    psd.resolution = 0.5;
    psd.n_averages = 100;
    psd.units = SpectrumUnits::frequency_noise;
    const double f_m = 2000.0, sig_m = 3.0;
    const double f_c = tone.omega_cal / two_pi, sig_c = 0.4;  // near-delta tone
    const double area_m = 2.0 * n_th * g0 * g0;
    const double area_c = tone.transfer_ratio * tone.transfer_ratio * 0.5 *
                          std::pow(tone.beta * tone.omega_cal, 2);
    // Imprecision-scale floor: far below the mechanical peak, well below the
    // narrowband tone, so both windows resolve their features.
    const double floor = 1e-10 * area_m;
    NormalStream rng(77, stream, 0);
    for (double f = 0.0; f <= 4000.0; f += psd.resolution) {
        const double gm = std::exp(-0.5 * std::pow((f - f_m) / sig_m, 2)) /
                          (sig_m * std::sqrt(two_pi));
        const double gc = std::exp(-0.5 * std::pow((f - f_c) / sig_c, 2)) /
                          (sig_c * std::sqrt(two_pi));
        double v = floor + area_m * gm + area_c * gc;
        if (noise > 0.0) v *= 1.0 + noise * rng.next();
        psd.freq.push_back(f);
        psd.value.push_back(std::max(v, 1e-12 * area_m));
    }
    return psd;
}

}  // namespace

TEST_CASE("coupling rate from a phase reference tone", "[calibration]") {
    const double g0 = two_pi * 2.0e4;
    const double n_th = 2.1e4;
    CalibrationTone tone;
    tone.beta = 0.3;
    tone.omega_cal = two_pi * 3000.0;

    const Psd clean = tone_spectrum(g0, n_th, tone);
    const FreqWindow peak_win{1900.0, 2100.0}, tone_win{2950.0, 3050.0};

    const auto est = calibrate_g0(clean, tone, n_th, peak_win, tone_win);
    CHECK_THAT(est.g0, WithinRel(g0, 1e-3));
    CHECK(est.area_peak > 0.0);
    CHECK(est.area_tone > 0.0);
    CHECK(est.sigma > 0.0);

    // With averaged-periodogram noise the estimate stays within 2%.
    const auto noisy = calibrate_g0(tone_spectrum(g0, n_th, tone, 0.1, 5), tone, n_th,
                                    peak_win, tone_win);
    CHECK_THAT(noisy.g0, WithinRel(g0, 0.02));

    // Automatic window placement finds the same answer.
    const auto automatic = calibrate_g0(clean, tone, n_th);
    CHECK_THAT(automatic.g0, WithinRel(g0, 0.02));

    // A detection chain that rolls off at the tone is compensated by the
    // measured transfer ratio.
    CalibrationTone rolled = tone;
    rolled.transfer_ratio = 0.8;
    const auto comp = calibrate_g0(tone_spectrum(g0, n_th, rolled), rolled, n_th, peak_win, tone_win);
    CHECK_THAT(comp.g0, WithinRel(g0, 1e-3));
}

TEST_CASE("tone calibration rejects bad inputs", "[calibration]") {
    const double g0 = two_pi * 2.0e4;
    CalibrationTone tone;
    tone.beta = 0.3;
    tone.omega_cal = two_pi * 3000.0;
    const Psd psd = tone_spectrum(g0, 2.1e4, tone);

    CHECK_THROWS_WITH(calibrate_g0(psd, tone, 2.1e4, FreqWindow{1900.0, 3000.0}, FreqWindow{2950.0, 3050.0}),
                      ContainsSubstring("windows overlap"));
    CHECK_THROWS_AS(calibrate_g0(psd, tone, 0.0, FreqWindow{1900.0, 2100.0}, FreqWindow{2950.0, 3050.0}),
                    std::invalid_argument);
    // No tone in the window: flat floor only.
    CHECK_THROWS_WITH(calibrate_g0(psd, tone, 2.1e4, FreqWindow{1900.0, 2100.0}, FreqWindow{3300.0, 3400.0}),
                      ContainsSubstring("tone not found above the floor"));

    CalibrationTone bad = tone;
    bad.beta = 0.0;
    CHECK_THROWS_AS(calibrate_g0(psd, bad, 2.1e4, FreqWindow{1900.0, 2100.0}, FreqWindow{2950.0, 3050.0}),
                    std::invalid_argument);
}

namespace {
CavityParams plain_cavity() {
    CavityParams cav;
    cav.kappa_0 = two_pi * 455e6;
    cav.kappa_ex = two_pi * 455e6;
    cav.wavelength = 775e-9;
    return cav;
}
}  // namespace

TEST_CASE("coupling rate from optical-spring shifts", "[calibration]") {
    const CavityParams cav = plain_cavity();
    const double g0 = two_pi * 2.0e4;
    const double power = 1e-6;

    std::vector<double> trans, shifts;
    NormalStream rng(13, 0, 0);
    for (double d : {0.2, 0.5, 0.9, 1.4, 2.0, 3.0}) {
        const double delta = -d * cav.kappa();
        trans.push_back(transmission(cav, delta));
        shifts.push_back(g0 * g0 * spring_shift_per_g0sq(cav, delta, power));
    }
    const auto clean = g0_from_spring(trans, shifts, cav, power);
    CHECK_THAT(clean.g0, WithinRel(g0, 1e-4));
    CHECK(clean.points_used == 6);
    // The transmission -> detuning bisection stops at 1e-6 kappa, which maps
    // through the shift curve's slope to a residual of a few 1e-6 of the
    // largest shift even on clean data.
    CHECK(clean.rms_residual < 1e-5 * std::abs(shifts.back()));

    // 1% scatter on the measured shifts: recovery within 3%.
    std::vector<double> noisy = shifts;
    for (auto& s : noisy) s *= 1.0 + 0.01 * rng.next();
    CHECK_THAT(g0_from_spring(trans, noisy, cav, power).g0, WithinRel(g0, 0.03));
}

TEST_CASE("spring calibration rejects degenerate data", "[calibration]") {
    const CavityParams cav = plain_cavity();
    std::vector<double> trans{0.2, 0.3, 0.4, 0.5, 0.6};
    std::vector<double> shifts{1.0, 2.0, 3.0, 4.0, 5.0};

    CHECK_THROWS_WITH(g0_from_spring(std::vector<double>{0.2, 0.3}, std::vector<double>{1.0, 2.0}, cav, 1e-6),
                      ContainsSubstring("at least 5 points"));
    CHECK_THROWS_AS(g0_from_spring(trans, std::vector<double>{1.0}, cav, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(g0_from_spring(trans, shifts, cav, 0.0), std::invalid_argument);

    // Transmission beyond the invertible branch.
    std::vector<double> outside{0.2, 0.3, 0.4, 0.5, 1.5};
    CHECK_THROWS_WITH(g0_from_spring(outside, shifts, cav, 1e-6),
                      ContainsSubstring("outside the invertible branch"));

    // A strongly split doublet has no monotone red branch to invert.
    CavityParams split = plain_cavity();
    split.gamma_split = 3.0 * split.kappa();
    CHECK_THROWS_WITH(g0_from_spring(trans, shifts, split, 1e-6),
                      ContainsSubstring("ambiguous branch"));

    // Zero measured shifts are inconsistent with any positive coupling.
    std::vector<double> zero(5, 0.0);
    CHECK_THROWS_WITH(g0_from_spring(trans, zero, cav, 1e-6), ContainsSubstring("g0^2 <= 0"));
}

TEST_CASE("mode splitting from resonant transmission vs linewidth", "[calibration]") {
    const double kappa_0 = two_pi * 0.44e9;
    const double gamma = two_pi * 0.36e9;
    const auto t0 = [&](double kappa) {
        const double r = (gamma * gamma - kappa * kappa + 2.0 * kappa * kappa_0) /
                         (kappa * kappa + gamma * gamma);
        return r * r;
    };

    std::vector<double> kappas, trans;
    for (int j = 0; j < 8; ++j) {
        const double kappa = two_pi * (0.88e9 + 0.12e9 * j);
        kappas.push_back(kappa);
        trans.push_back(t0(kappa));

        // The fit model is exactly the resonant point of the full lineshape.
        // Near kappa ~ 2 pi 1.0e9 the numerator nearly cancels, so the two
        // evaluation orders agree only to ~1e-12 relative.
        CavityParams cav;
        cav.kappa_0 = kappa_0;
        cav.kappa_ex = kappa - kappa_0;
        cav.gamma_split = gamma;
        cav.wavelength = 775e-9;
        CHECK_THAT(transmission(cav, 0.0), WithinRel(t0(kappa), 1e-10));
    }

    const auto clean = fit_mode_splitting(kappas, trans);
    CHECK_THAT(clean.kappa_0, WithinRel(kappa_0, 1e-6));
    CHECK_THAT(clean.gamma_split, WithinRel(gamma, 1e-6));
    CHECK(clean.rms_residual < 1e-9);

    // 0.003 absolute scatter on transmissions: both parameters within 2%.
    NormalStream rng(21, 0, 0);
    std::vector<double> noisy = trans;
    for (auto& t : noisy) t = std::max(0.0, t + 0.003 * rng.next());
    const auto fit = fit_mode_splitting(kappas, noisy);
    CHECK_THAT(fit.kappa_0, WithinRel(kappa_0, 0.02));
    CHECK_THAT(fit.gamma_split, WithinRel(gamma, 0.02));

    // An unsplit resonance fits to gamma ~ 0 without Jacobian trouble.
    std::vector<double> plain;
    for (double kappa : kappas) {
        const double r = (-kappa * kappa + 2.0 * kappa * kappa_0) / (kappa * kappa);
        plain.push_back(r * r);
    }
    const auto unsplit = fit_mode_splitting(kappas, plain);
    CHECK_THAT(unsplit.kappa_0, WithinRel(kappa_0, 1e-6));
    CHECK(unsplit.gamma_split < 1e-3 * kappa_0);
}

TEST_CASE("splitting fit rejects degenerate data", "[calibration]") {
    std::vector<double> kappas{1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_WITH(fit_mode_splitting(kappas, std::vector<double>{0.1, 0.2, 0.3}),
                      ContainsSubstring("differ in length"));
    CHECK_THROWS_WITH(fit_mode_splitting(std::vector<double>{1.0, 2.0, 3.0},
                                         std::vector<double>{0.1, 0.2, 0.3}),
                      ContainsSubstring("at least 4 points"));
    CHECK_THROWS_WITH(fit_mode_splitting(std::vector<double>(4, 2.0), std::vector<double>{0.1, 0.2, 0.3, 0.4}),
                      ContainsSubstring("coupling does not vary"));
    CHECK_THROWS_WITH(fit_mode_splitting(kappas, std::vector<double>(4, 0.25)),
                      ContainsSubstring("transmission does not vary"));
}

TEST_CASE("mechanical damping from a driven ringdown", "[calibration]") {
    SimConfig cfg;
    cfg.osc.omega_m = 1.0;
    cfg.osc.gamma_m = 0.02;
    cfg.budget = assemble_budget(2.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 0.02);
    cfg.dt = 0.05;
    cfg.duration = 800.0;
    cfg.noiseless = true;

    const double t_off = 300.0;
    const auto clean = simulate_ringdown(cfg, 1.0, 2.0, t_off).at(0);
    const auto fit = fit_ringdown(clean, 1.0, 0.03);
    CHECK_THAT(fit.gamma_m, WithinRel(cfg.osc.gamma_m, 0.01));
    CHECK(fit.t_start > t_off);
    CHECK(fit.t_end > fit.t_start);

    // Thermal noise on a 4-trajectory ensemble: 3% recovery.
    cfg.noiseless = false;
    cfg.n_trajectories = 4;
    cfg.seed = 17;
    const auto noisy = simulate_ringdown(cfg, 1.0, 2.0, t_off);
    const auto ens = fit_ringdown(noisy, 1.0, 0.03);
    CHECK_THAT(ens.gamma_m, WithinRel(cfg.osc.gamma_m, 0.03));
    CHECK(ens.sigma > 0.0);
}

TEST_CASE("ringdown fit input guards", "[calibration]") {
    SimConfig cfg;
    cfg.osc.omega_m = 1.0;
    cfg.osc.gamma_m = 0.02;
    cfg.budget = assemble_budget(2.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 0.02);
    cfg.dt = 0.05;
    cfg.duration = 400.0;
    cfg.noiseless = true;
    const auto traj = simulate_ringdown(cfg, 1.0, 2.0, 150.0).at(0);

    CHECK_THROWS_WITH(fit_ringdown(traj, 1.0, 0.6), ContainsSubstring("below the carrier"));
    CHECK_THROWS_AS(fit_ringdown(traj, 0.0, 0.03), std::invalid_argument);
    CHECK_THROWS_AS(fit_ringdown(std::span<const Trajectory>(), 1.0, 0.03), std::invalid_argument);

    // Trajectories on different grids cannot be ensemble-averaged.
    SimConfig other = cfg;
    other.dt = 0.04;
    const auto mismatched = simulate_ringdown(other, 1.0, 2.0, 150.0).at(0);
    std::vector<Trajectory> mixed{traj, mismatched};
    CHECK_THROWS_WITH(fit_ringdown(mixed, 1.0, 0.03), ContainsSubstring("share the sampling grid"));
}

TEST_CASE("ringdown fit detects an unshuttered drive", "[calibration]") {
    // Hand-built envelope that decays, re-rises and decays again: the chunked
    // monotonicity audit must refuse it.
    Trajectory traj;
    traj.dt = 0.05;
    for (double t = 0.0; t < 600.0; t += traj.dt) {
        const double envelope = std::exp(-0.005 * t) * (1.0 + 0.5 * std::cos(0.1 * t));
        traj.t.push_back(t);
        traj.u.push_back(envelope * std::cos(t));
        traj.y.push_back(traj.u.back());
        traj.f_fb.push_back(0.0);
    }
    CHECK_THROWS_WITH(fit_ringdown(traj, 1.0, 0.03),
                      ContainsSubstring("drive not shuttered"));
}
