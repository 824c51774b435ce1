#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <colddamp/readout.hpp>

using namespace colddamp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
CavityParams split_cavity() {
    CavityParams cav;
    cav.kappa_0 = two_pi * 440e6;
    cav.kappa_ex = two_pi * 440e6;
    cav.gamma_split = two_pi * 360e6;
    cav.wavelength = 775e-9;
    return cav;
}
}  // namespace

TEST_CASE("on-resonance transmission of the split doublet", "[readout]") {
    const CavityParams cav = split_cavity();
    // Closed form at delta = 0: ((g^2 - k^2 + 2 k k0)/(k^2 + g^2))^2.
    const double k = cav.kappa();
    const double g = cav.gamma_split;
    const double t0 = std::pow((g * g - k * k + 2.0 * k * cav.kappa_0) / (k * k + g * g), 2);
    CHECK_THAT(transmission(cav, 0.0), WithinRel(t0, 1e-12));
    CHECK_THAT(transmission(cav, 0.0), WithinRel(0.020552901558461904, 1e-12));
    // default-detuning overload agrees
    CHECK(transmission(cav) == transmission(cav, cav.detuning));
}

TEST_CASE("transmission limits", "[readout]") {
    // Critically coupled single resonance: full extinction on resonance.
    CavityParams cav = split_cavity();
    cav.gamma_split = 0.0;
    CHECK_THAT(transmission(cav, 0.0), WithinAbs(0.0, 1e-12));

    // No external coupling: nothing enters, transmission is unity everywhere.
    cav.kappa_ex = 0.0;
    for (double d : {0.0, 0.3, 1.0, 5.0}) CHECK(transmission(cav, d * cav.kappa()) == 1.0);

    // Far detuned: transmission returns to 1.
    const CavityParams far = split_cavity();
    CHECK_THAT(transmission(far, 100.0 * far.kappa()), WithinAbs(1.0, 1e-3));

    // Even in detuning.
    for (double d : {0.2, 0.5, 1.3}) {
        CHECK_THAT(transmission(far, d * far.kappa()),
                   WithinRel(transmission(far, -d * far.kappa()), 1e-12));
    }

    // With gamma_split ~ kappa the doublet is unresolved and the midpoint
    // stays the deepest point; once gamma_split >> kappa two minima near
    // +-gamma/2 emerge and the midpoint recovers toward unity.
    CHECK(transmission(far, 0.5 * far.gamma_split) > transmission(far, 0.0));
    CavityParams resolved = split_cavity();
    resolved.gamma_split = 6.0 * resolved.kappa();
    CHECK(transmission(resolved, 0.5 * resolved.gamma_split) < transmission(resolved, 0.0));
}

TEST_CASE("transmission scan preserves order", "[readout]") {
    const CavityParams cav = split_cavity();
    const std::vector<double> deltas = {-cav.kappa(), 0.0, cav.kappa()};
    const auto scan = transmission_scan(cav, deltas);
    REQUIRE(scan.size() == 3);
    CHECK(scan[0] == transmission(cav, deltas[0]));
    CHECK(scan[1] == transmission(cav, deltas[1]));
    CHECK(scan[2] == transmission(cav, deltas[2]));
}

namespace {
struct DetunedSetup {
    OscillatorParams osc;
    CavityParams cav;
    MeasurementChain chain;
};

DetunedSetup detuned_setup(double delta_over_kappa) {
    DetunedSetup s;
    s.osc.omega_m = two_pi * 4.3e6;
    s.osc.gamma_m = two_pi * 5.7;
    s.osc.x_zp_override = 29e-15;
    s.cav = split_cavity();
    s.cav.detuning = delta_over_kappa * s.cav.kappa();
    s.chain.g0 = two_pi * 2.0e4;
    s.chain.input_power = 1e-6;
    return s;
}
}  // namespace

TEST_CASE("dynamic back-action vanishes on resonance", "[readout]") {
    auto s = detuned_setup(0.0);
    const auto dba = dynamic_backaction(s.osc, s.cav, s.chain);
    CHECK(dba.spring_shift == 0.0);
    CHECK(dba.gamma_ba == 0.0);
    CHECK(dba.warnings.empty());

    // Also exactly zero with a split doublet (branch contributions cancel).
    s.cav.gamma_split = two_pi * 500e6;
    const auto split = dynamic_backaction(s.osc, s.cav, s.chain);
    CHECK_THAT(split.spring_shift, WithinAbs(0.0, 1e-30));
    CHECK_THAT(split.gamma_ba, WithinAbs(0.0, 1e-30));
}

TEST_CASE("dynamic back-action is odd in detuning", "[readout]") {
    for (double d : {0.05, 0.2, 0.6, 1.5}) {
        auto plus = detuned_setup(d);
        auto minus = detuned_setup(-d);
        const auto p = dynamic_backaction(plus.osc, plus.cav, plus.chain);
        const auto m = dynamic_backaction(minus.osc, minus.cav, minus.chain);
        CHECK_THAT(p.spring_shift, WithinRel(-m.spring_shift, 1e-10));
        CHECK_THAT(p.gamma_ba, WithinRel(-m.gamma_ba, 1e-10));
        // Blue side damps in this sign convention.
        CHECK(p.gamma_ba > 0.0);
    }
}

TEST_CASE("small-detuning spring slope", "[readout]") {
    // gamma_split = 0, |delta| << kappa: shift/g0^2 -> 8 flux delta / kappa^2.
    CavityParams cav = split_cavity();
    cav.gamma_split = 0.0;
    const double power = 1e-6;
    const double delta = 1e-6 * cav.kappa();
    const double flux = 4.0 * cav.eta_c() * power / (cav.kappa() * hbar * cav.omega_c());
    const double expected = 8.0 * flux * delta / (cav.kappa() * cav.kappa());
    CHECK_THAT(spring_shift_per_g0sq(cav, delta, power), WithinRel(expected, 1e-9));
}

TEST_CASE("dynamic back-action scales linearly with power and g0^2", "[readout]") {
    auto s = detuned_setup(0.3);
    const auto base = dynamic_backaction(s.osc, s.cav, s.chain);

    s.chain.input_power *= 2.0;
    const auto double_power = dynamic_backaction(s.osc, s.cav, s.chain);
    CHECK_THAT(double_power.spring_shift, WithinRel(2.0 * base.spring_shift, 1e-12));
    CHECK_THAT(double_power.gamma_ba, WithinRel(2.0 * base.gamma_ba, 1e-12));

    s.chain.input_power /= 2.0;
    s.chain.g0 *= 3.0;
    const auto triple_g0 = dynamic_backaction(s.osc, s.cav, s.chain);
    CHECK_THAT(triple_g0.spring_shift, WithinRel(9.0 * base.spring_shift, 1e-12));
    CHECK_THAT(triple_g0.gamma_ba, WithinRel(9.0 * base.gamma_ba, 1e-12));

    s.chain.g0 /= 3.0;
    s.chain.input_power = 0.0;
    const auto off = dynamic_backaction(s.osc, s.cav, s.chain);
    CHECK(off.spring_shift == 0.0);
    CHECK(off.gamma_ba == 0.0);
}

TEST_CASE("bad-cavity assumption is flagged", "[readout]") {
    auto s = detuned_setup(0.2);
    CHECK(dynamic_backaction(s.osc, s.cav, s.chain).warnings.empty());

    // kappa below 10 Omega_m: sideband corrections start to matter.
    s.cav.kappa_0 = two_pi * 20e6;
    s.cav.kappa_ex = two_pi * 20e6;
    s.cav.gamma_split = 0.0;
    s.cav.detuning = 0.2 * s.cav.kappa();
    const auto dba = dynamic_backaction(s.osc, s.cav, s.chain);
    REQUIRE_FALSE(dba.warnings.empty());
    CHECK(dba.warnings.front().find("kappa < 10 Omega_m") != std::string::npos);
}
