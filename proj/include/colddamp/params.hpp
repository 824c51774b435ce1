#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "colddamp/constants.hpp"

// Parameter records for the cooled oscillator, its cavity readout, the
// detection chain and the feedback loop.  Angular frequencies and rates are
// rad/s throughout; conversion from Hz belongs at the I/O boundary.
namespace colddamp {

struct OscillatorParams {
    double omega_m = 0.0;        // mechanical resonance, rad/s
    double gamma_m = 0.0;        // intrinsic energy damping rate, rad/s
    double mass = 0.0;           // effective mass, kg (unused if x_zp_override set)
    double temperature = 0.0;    // bath temperature, K
    double x_zp_override = 0.0;  // measured zero-point amplitude, m; 0 = derive

    double quality() const { return omega_m / gamma_m; }

    // Zero-point amplitude sqrt(hbar / (2 m Omega_m)) unless measured.  Only
    // position-unit conversions need it; normalized-unit work never does.
    double x_zp() const {
        if (x_zp_override > 0.0) return x_zp_override;
        if (!(mass > 0.0))
            throw std::invalid_argument(
                "OscillatorParams: x_zp requested but neither mass nor x_zp_override is set");
        return std::sqrt(hbar / (2.0 * mass * omega_m));
    }

    void validate() const {
        if (!(omega_m > 0.0)) throw std::invalid_argument("OscillatorParams: omega_m must be > 0");
        if (!(gamma_m > 0.0)) throw std::invalid_argument("OscillatorParams: gamma_m must be > 0");
        if (!(gamma_m < omega_m))
            throw std::invalid_argument("OscillatorParams: overdamped mode (gamma_m >= omega_m)");
        if (x_zp_override < 0.0) throw std::invalid_argument("OscillatorParams: x_zp_override must be >= 0");
        if (temperature < 0.0) throw std::invalid_argument("OscillatorParams: temperature must be >= 0");
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        if (quality() < 100.0)
            w.push_back("oscillator Q < 100: weak-damping approximations are marginal");
        return w;
    }
};

struct CavityParams {
    double kappa_0 = 0.0;      // intrinsic loss rate, rad/s
    double kappa_ex = 0.0;     // external (taper) coupling rate, rad/s
    double gamma_split = 0.0;  // resonance doublet splitting, rad/s
    double detuning = 0.0;     // probe detuning from resonance, rad/s
    double wavelength = 0.0;   // probe wavelength, m

    double kappa() const { return kappa_0 + kappa_ex; }
    double eta_c() const { return kappa_ex / kappa(); }
    double omega_c() const { return two_pi * speed_of_light / wavelength; }

    void validate() const {
        if (!(kappa_0 > 0.0)) throw std::invalid_argument("CavityParams: kappa_0 must be > 0");
        if (kappa_ex < 0.0) throw std::invalid_argument("CavityParams: kappa_ex must be >= 0");
        if (gamma_split < 0.0) throw std::invalid_argument("CavityParams: gamma_split must be >= 0");
        if (!(wavelength > 0.0)) throw std::invalid_argument("CavityParams: wavelength must be > 0");
        if (!std::isfinite(detuning)) throw std::invalid_argument("CavityParams: detuning must be finite");
    }
};

struct MeasurementChain {
    double g0 = 0.0;               // vacuum optomechanical coupling, rad/s
    double eta_d = 1.0;            // detection efficiency (homodyne + optical path)
    double input_power = 0.0;      // probe power at the coupler, W
    double c0_extraneous = 0.0;    // extraneous-backaction cooperativity per photon
    double n_imp_extraneous = 0.0; // extraneous imprecision, quanta
    double n_fb = 0.0;             // feedback actuator noise, quanta

    void validate() const {
        if (!(g0 > 0.0)) throw std::invalid_argument("MeasurementChain: g0 must be > 0");
        if (!(eta_d > 0.0 && eta_d <= 1.0))
            throw std::invalid_argument("MeasurementChain: eta_d must be in (0, 1]");
        if (input_power < 0.0) throw std::invalid_argument("MeasurementChain: input_power must be >= 0");
        if (c0_extraneous < 0.0) throw std::invalid_argument("MeasurementChain: c0_extraneous must be >= 0");
        if (n_imp_extraneous < 0.0)
            throw std::invalid_argument("MeasurementChain: n_imp_extraneous must be >= 0");
        if (n_fb < 0.0) throw std::invalid_argument("MeasurementChain: n_fb must be >= 0");
    }
};

enum class FeedbackMode {
    off,               // open loop
    velocity,          // ideal causal derivative of the measured record
    delayed_bandpass,  // realistic loop: pure delay + 2nd-order bandpass
};

struct FeedbackSettings {
    FeedbackMode mode = FeedbackMode::off;
    double gain = 0.0;             // dimensionless g_fb; Gamma_eff = (1 + g_fb) Gamma_m
    double delay = 0.0;            // loop latency, s (delayed_bandpass only)
    double bandpass_center = 0.0;  // rad/s (delayed_bandpass only)
    double bandpass_width = 0.0;   // FWHM, rad/s (delayed_bandpass only)

    void validate() const {
        if (gain < 0.0) throw std::invalid_argument("FeedbackSettings: gain must be >= 0");
        if (mode == FeedbackMode::delayed_bandpass) {
            if (!(delay > 0.0))
                throw std::invalid_argument("FeedbackSettings: delayed_bandpass needs delay > 0");
            if (!(bandpass_center > 0.0))
                throw std::invalid_argument("FeedbackSettings: bandpass_center must be > 0");
            if (!(bandpass_width > 0.0))
                throw std::invalid_argument("FeedbackSettings: bandpass_width must be > 0");
        }
    }
};

}  // namespace colddamp
