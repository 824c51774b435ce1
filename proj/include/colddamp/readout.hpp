#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "colddamp/budget.hpp"
#include "colddamp/params.hpp"

// Cavity readout beyond the resonant operating point: transmission lineshape
// of the split resonance and the dynamic back-action of a detuned probe.
namespace colddamp {

// Normalized steady-state transmission P_out/P_in of the doublet at probe
// detuning delta (rad/s).  Derived from the steady-state input-output relation
// of the two coupled (co/counter-propagating) modes:
//
//   T = 1 - eta_c kappa^2 [ (d^2 + (g/2)^2 + (k/2)^2) - eta_c (d^2 + (k/2)^2) ]
//       / [ (d^2 - (k/2)^2 - (g/2)^2)^2 + d^2 k^2 ]
//
// Even in delta; equals (1 - 2 eta_c/(1 + (g/k)^2))^2-style doublet shape with
// minima at the hybridized resonances.
inline double transmission(const CavityParams& cav, double delta) {
    const double k = cav.kappa();
    const double eta = cav.eta_c();
    const double d2 = delta * delta;
    const double hk2 = 0.25 * k * k;
    const double hg2 = 0.25 * cav.gamma_split * cav.gamma_split;
    const double num = eta * k * k * ((d2 + hg2 + hk2) - eta * (d2 + hk2));
    const double base = d2 - hk2 - hg2;
    const double den = base * base + d2 * k * k;
    return 1.0 - num / den;
}

inline double transmission(const CavityParams& cav) { return transmission(cav, cav.detuning); }

inline std::vector<double> transmission_scan(const CavityParams& cav, const std::vector<double>& deltas) {
    std::vector<double> out;
    out.reserve(deltas.size());
    for (double d : deltas) out.push_back(transmission(cav, d));
    return out;
}

struct DynamicBackaction {
    double spring_shift = 0.0;  // optical spring Delta Omega_ba, rad/s
    double gamma_ba = 0.0;      // dynamic back-action damping, rad/s
    std::vector<std::string> warnings;
};

// Spring shift per unit g0^2 at the given detuning: the doublet-branch sum
// without the coupling-rate prefactor.  Shared by dynamic_backaction and the
// spring-based coupling calibration (which fits g0^2 against this curve).
inline double spring_shift_per_g0sq(const CavityParams& cav, double delta, double input_power) {
    const double k = cav.kappa();
    const double flux = 4.0 * cav.eta_c() * input_power / (k * hbar * cav.omega_c());
    const double hk = 0.5 * k;
    double spring = 0.0;
    for (int j : {+1, -1}) {
        const double dj = delta + j * 0.5 * cav.gamma_split;
        const double lj = dj * dj + hk * hk;
        spring += hk * hk * hk * dj / (lj * lj);
    }
    return (2.0 / k) * flux * spring;
}

// Probe-induced spring shift and damping for a detuned probe, summing the two
// doublet branches j = +-1.  Both vanish identically at delta = 0.
inline DynamicBackaction dynamic_backaction(const OscillatorParams& osc, const CavityParams& cav,
                                            const MeasurementChain& chain) {
    osc.validate();
    cav.validate();
    chain.validate();
    DynamicBackaction out;
    if (cav.kappa() < 10.0 * osc.omega_m)
        out.warnings.push_back("bad-cavity assumption marginal: kappa < 10 Omega_m");
    if (chain.input_power == 0.0) return out;

    const double k = cav.kappa();
    const double flux = 4.0 * cav.eta_c() * chain.input_power / (k * hbar * cav.omega_c());
    const double amp = (2.0 * chain.g0 * chain.g0 / k) * flux;
    const double hk = 0.5 * k;
    double damping = 0.0;
    for (int j : {+1, -1}) {
        const double dj = cav.detuning + j * 0.5 * cav.gamma_split;
        const double lj = dj * dj + hk * hk;
        damping += k * k * k * k * k * (cav.detuning - j * 0.5 * cav.gamma_split) / (lj * lj * lj);
    }
    out.spring_shift =
        chain.g0 * chain.g0 * spring_shift_per_g0sq(cav, cav.detuning, chain.input_power);
    out.gamma_ba = (osc.omega_m / (4.0 * k)) * amp * damping;
    return out;
}

}  // namespace colddamp
