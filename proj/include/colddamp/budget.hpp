#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "colddamp/constants.hpp"
#include "colddamp/params.hpp"

// Closed-form noise budget of a continuously monitored oscillator: thermal,
// back-action and imprecision occupancies, the measurement/decoherence rates
// and the imprecision-back-action product.
//
// Occupancy convention: all n_* fields count quanta *above* the zero point
// (Bose numbers).  The half quantum enters every formula as an explicit +1/2,
// so budgets remain correct down to T = 0.
namespace colddamp {

// Symmetrized bath occupancy (1/2)coth(hbar Omega / 2 kB T); reduces to
// kB T / (hbar Omega) for kB T >> hbar Omega and to 1/2 at T = 0.
inline double thermal_occupancy(const OscillatorParams& osc) {
    osc.validate();
    if (osc.temperature == 0.0) return 0.5;
    const double x = hbar * osc.omega_m / (2.0 * k_boltzmann * osc.temperature);
    return 0.5 / std::tanh(x);
}

struct ZeroPointSpectra {
    double s_x_zp;      // peak position density of the ground state, m^2/Hz
    double s_omega_zp;  // same, as frequency noise via g0: (rad/s)^2/Hz
};

// Peak zero-point spectral densities 4 x_zp^2 / Gamma_m and 4 g0^2 / Gamma_m
// (single-sided).
inline ZeroPointSpectra zero_point_spectra(const OscillatorParams& osc, double g0) {
    osc.validate();
    if (!(g0 > 0.0)) throw std::invalid_argument("zero_point_spectra: g0 must be > 0");
    const double xzp = osc.x_zp();
    return {4.0 * xzp * xzp / osc.gamma_m, 4.0 * g0 * g0 / osc.gamma_m};
}

// Single-photon cooperativity C0 = 4 g0^2 / (kappa Gamma_m).
inline double cooperativity(const OscillatorParams& osc, const CavityParams& cav, double g0) {
    return 4.0 * g0 * g0 / (cav.kappa() * osc.gamma_m);
}

// Overall measurement ideality xi = eta_c eta_d ((1 - r^2)/(1 + r^2))^2 with
// r = gamma_split / kappa.  Losses beyond the cavity (taper, optical path) are
// folded into eta_d.
inline double measurement_ideality(const CavityParams& cav, double eta_d) {
    const double r2 = (cav.gamma_split / cav.kappa()) * (cav.gamma_split / cav.kappa());
    const double split = (1.0 - r2) / (1.0 + r2);
    return cav.eta_c() * eta_d * split * split;
}

struct IntracavityPhotons {
    double n_plus;   // co-propagating (probed) mode
    double n_minus;  // counter-propagating mode fed by the splitting
};

// Steady-state photon numbers for a resonantly locked probe.  The doublet
// splitting diverts a fraction (gamma/kappa)^2 into the counter-propagating
// mode and reduces the build-up by (1 + (gamma/kappa)^2)^-2.
inline IntracavityPhotons intracavity_photons(const CavityParams& cav, const MeasurementChain& chain) {
    cav.validate();
    chain.validate();
    if (cav.detuning != 0.0)
        throw std::invalid_argument("intracavity_photons: requires a resonant probe (detuning = 0)");
    const double kappa = cav.kappa();
    const double r2 = (cav.gamma_split / kappa) * (cav.gamma_split / kappa);
    const double flux = chain.input_power / (hbar * cav.omega_c());  // photons/s
    const double n_plus = (4.0 * cav.eta_c() / kappa) * flux / ((1.0 + r2) * (1.0 + r2));
    return {n_plus, r2 * n_plus};
}

struct BackactionOccupancy {
    double n_ba;     // quantum (shot-noise) back-action
    double n_ba_ex;  // extraneous back-action, modeled as C0_ex * n_c
};

inline BackactionOccupancy backaction_occupancy(const OscillatorParams& osc, const CavityParams& cav,
                                                const MeasurementChain& chain) {
    const double n_plus = intracavity_photons(cav, chain).n_plus;
    const double c0 = cooperativity(osc, cav, chain.g0);
    return {c0 * n_plus, chain.c0_extraneous * n_plus};
}

struct ImprecisionOccupancy {
    double n_imp_shot;   // homodyne shot-noise floor
    double n_imp_total;  // shot + extraneous
};

// Shot-noise imprecision 1/(16 eta_c eta_d C0 n_plus) with the mode-splitting
// penalty ((1+r^2)/(1-r^2))^2; the extraneous floor adds directly.
inline ImprecisionOccupancy imprecision_occupancy(const OscillatorParams& osc, const CavityParams& cav,
                                                  const MeasurementChain& chain) {
    const double kappa = cav.kappa();
    if (cav.gamma_split == kappa)
        throw std::invalid_argument("imprecision_occupancy: readout singular: split-mode transfer null");
    const double r2 = (cav.gamma_split / kappa) * (cav.gamma_split / kappa);
    const double penalty = (1.0 + r2) / (1.0 - r2);
    const double n_plus = intracavity_photons(cav, chain).n_plus;
    const double c0 = cooperativity(osc, cav, chain.g0);
    const double shot = penalty * penalty / (16.0 * cav.eta_c() * chain.eta_d * c0 * n_plus);
    return {shot, shot + chain.n_imp_extraneous};
}

struct NoiseBudget {
    double n_th = 0.0;        // thermal bath
    double n_ba = 0.0;        // quantum back-action
    double n_ba_ex = 0.0;     // extraneous back-action
    double n_tot = 0.0;       // n_th + n_ba + n_ba_ex
    double n_imp_shot = 0.0;  // shot-noise imprecision
    double n_imp_ex = 0.0;    // extraneous imprecision
    double n_imp = 0.0;       // n_imp_shot + n_imp_ex
    double n_fb = 0.0;        // feedback-actuator force noise
    double gamma_m = 0.0;     // mechanical damping carried along, rad/s
    double gamma_meas = 0.0;  // Gamma_m / (16 n_imp), rad/s
    double gamma_th = 0.0;    // n_th * Gamma_m, rad/s
    double product = 0.0;     // 4 sqrt(n_imp n_tot)
};

// Assemble a budget from already-known occupancies.
inline NoiseBudget assemble_budget(double n_th, double n_ba, double n_ba_ex, double n_imp_shot,
                                   double n_imp_ex, double n_fb, double gamma_m) {
    if (n_th < 0.0 || n_ba < 0.0 || n_ba_ex < 0.0 || n_imp_shot < 0.0 || n_imp_ex < 0.0 || n_fb < 0.0)
        throw std::invalid_argument("assemble_budget: occupancies must be >= 0");
    if (!(gamma_m > 0.0)) throw std::invalid_argument("assemble_budget: gamma_m must be > 0");
    NoiseBudget b;
    b.n_th = n_th;
    b.n_ba = n_ba;
    b.n_ba_ex = n_ba_ex;
    b.n_tot = n_th + n_ba + n_ba_ex;
    b.n_imp_shot = n_imp_shot;
    b.n_imp_ex = n_imp_ex;
    b.n_imp = n_imp_shot + n_imp_ex;
    b.n_fb = n_fb;
    b.gamma_m = gamma_m;
    b.gamma_meas = b.n_imp > 0.0 ? gamma_m / (16.0 * b.n_imp)
                                 : std::numeric_limits<double>::infinity();
    b.gamma_th = n_th * gamma_m;
    b.product = 4.0 * std::sqrt(b.n_imp * b.n_tot);
    return b;
}

// Full physical route: cavity + chain parameters at resonant probing.
inline NoiseBudget noise_budget(const OscillatorParams& osc, const CavityParams& cav,
                                const MeasurementChain& chain) {
    // thermal_occupancy carries the symmetrized half quantum; budgets store
    // quanta above the zero point.
    const double n_th = thermal_occupancy(osc) - 0.5;
    const auto ba = backaction_occupancy(osc, cav, chain);
    const auto imp = imprecision_occupancy(osc, cav, chain);
    return assemble_budget(n_th, ba.n_ba, ba.n_ba_ex, imp.n_imp_shot, chain.n_imp_extraneous,
                           chain.n_fb, osc.gamma_m);
}

// Effective parameterization: per-photon cooperativities and overall ideality,
// as used for budget sweeps over the photon number n_c.
struct EffectiveChain {
    double c0 = 0.0;        // single-photon cooperativity
    double c0_ex = 0.0;     // extraneous cooperativity
    double xi = 0.0;        // measurement ideality
    double n_c = 0.0;       // intracavity photon number
    double n_imp_ex = 0.0;  // extraneous imprecision
    double n_fb = 0.0;      // feedback-actuator noise
    double gamma_m = 0.0;   // rad/s

    void validate() const {
        if (!(c0 > 0.0)) throw std::invalid_argument("EffectiveChain: c0 must be > 0");
        if (c0_ex < 0.0) throw std::invalid_argument("EffectiveChain: c0_ex must be >= 0");
        if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("EffectiveChain: xi must be in (0, 1]");
        if (!(n_c > 0.0)) throw std::invalid_argument("EffectiveChain: n_c must be > 0");
        if (n_imp_ex < 0.0) throw std::invalid_argument("EffectiveChain: n_imp_ex must be >= 0");
        if (n_fb < 0.0) throw std::invalid_argument("EffectiveChain: n_fb must be >= 0");
        if (!(gamma_m > 0.0)) throw std::invalid_argument("EffectiveChain: gamma_m must be > 0");
    }
};

inline NoiseBudget noise_budget(double n_th, const EffectiveChain& eff) {
    eff.validate();
    if (n_th < 0.0) throw std::invalid_argument("noise_budget: n_th must be >= 0");
    const double n_imp_shot = 1.0 / (16.0 * eff.xi * eff.c0 * eff.n_c);
    return assemble_budget(n_th, eff.c0 * eff.n_c, eff.c0_ex * eff.n_c, n_imp_shot, eff.n_imp_ex,
                           eff.n_fb, eff.gamma_m);
}

// Closed form for 4 sqrt(n_imp n_tot) in the effective parameterization.
// Algebraically identical to assembling the budget and reading .product; both
// are computed so the identity can be checked to machine precision.
inline double product_closed_form(double n_th, const EffectiveChain& eff) {
    eff.validate();
    const double photon_term = 1.0 + n_th / (eff.c0 * eff.n_c) + eff.c0_ex / eff.c0;
    double extraneous_term = 1.0;
    if (eff.n_imp_ex > 0.0) {
        const double n_c_ex = 1.0 / (16.0 * eff.xi * eff.c0 * eff.n_imp_ex);
        extraneous_term += eff.n_c / n_c_ex;
    }
    return std::sqrt(photon_term * extraneous_term / eff.xi);
}

}  // namespace colddamp
