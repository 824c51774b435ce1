#pragma once

#include <cmath>
#include <stdexcept>

#include "colddamp/budget.hpp"
#include "colddamp/lorentz_fit.hpp"
#include "colddamp/params.hpp"
#include "colddamp/psd.hpp"

// Occupancy extraction from fitted spectra.  All relations reference the peak
// zero-point density of the matching units; fits on uncalibrated spectra
// (SpectrumUnits::arbitrary) are rejected.
namespace colddamp {

namespace detail {
inline double zp_peak_density(SpectrumUnits units, const OscillatorParams& osc, double g0) {
    switch (units) {
        case SpectrumUnits::normalized_position:
            return 4.0 / osc.gamma_m;
        case SpectrumUnits::position:
            return 4.0 * osc.x_zp() * osc.x_zp() / osc.gamma_m;
        case SpectrumUnits::frequency_noise:
            if (!(g0 > 0.0))
                throw std::invalid_argument("occupancy extraction: frequency-noise units need g0 > 0");
            return 4.0 * g0 * g0 / osc.gamma_m;
        case SpectrumUnits::arbitrary:
            break;
    }
    throw std::invalid_argument("occupancy extraction: spectrum units are not calibrated");
}
}  // namespace detail

struct OccupancyEstimate {
    double n_tot = 0.0;         // apparent bath occupancy from the peak
    double n_imp = 0.0;         // imprecision from the floor
    double n_imp_damped = 0.0;  // floor referred to the damped peak: n_imp * Gamma_eff/Gamma_m
    double n_tot_sigma = 0.0;
    double n_imp_sigma = 0.0;
};

// Inverts peak = 2 n_tot (Gamma_m/Gamma_eff)^2 * S_zp and floor = 2 n_imp S_zp
// using the fitted linewidth.  Apparent values: exact for the open-loop
// spectrum, approximate in-loop once fed-back noise contributes to the peak.
inline OccupancyEstimate extract_occupancies(const SpectrumFit& fit, const OscillatorParams& osc,
                                             double g0 = 0.0) {
    const double s_zp = detail::zp_peak_density(fit.units, osc, g0);
    const double ratio = fit.gamma_eff / osc.gamma_m;
    OccupancyEstimate est;
    est.n_tot = fit.peak * ratio * ratio / (2.0 * s_zp);
    est.n_imp = fit.floor / (2.0 * s_zp);
    est.n_imp_damped = est.n_imp * ratio;

    // First-order propagation through n_tot(peak, gamma_eff), n_imp(floor).
    const auto& c = fit.covariance;
    const double dn_dpeak = est.n_tot / (fit.peak != 0.0 ? fit.peak : 1.0);
    const double dn_dgamma = 2.0 * est.n_tot / fit.gamma_eff;
    const double var_ntot = dn_dpeak * dn_dpeak * c[2 * 4 + 2] +
                            dn_dgamma * dn_dgamma * c[1 * 4 + 1] +
                            2.0 * dn_dpeak * dn_dgamma * c[1 * 4 + 2];
    est.n_tot_sigma = var_ntot > 0.0 ? std::sqrt(var_ntot) : 0.0;
    est.n_imp_sigma = std::sqrt(std::max(0.0, c[3 * 4 + 3])) / (2.0 * s_zp);
    return est;
}

struct PhononEstimate {
    double n_m = 0.0;
    double sigma = 0.0;
    bool squashing_regime = false;  // in-loop artifacts detected in the fit
};

// Spectral phonon estimator for a cooling run:
//   n_m + 1/2 = (Gamma_eff/Gamma_m) * (S(Omega_m) + floor) / (2 S_zp)
// with S(Omega_m) = peak + floor from the fit.  Exceeds the true occupancy by
// exactly 2 n_imp for the ideal closed-loop spectrum (the fed-back record is
// not the physical position); in deep squashing the default clamped fit also
// biases the inputs, flagged via squashing_regime.
inline PhononEstimate phonon_from_spectrum(const SpectrumFit& fit, const OscillatorParams& osc,
                                           double g0 = 0.0) {
    const double s_zp = detail::zp_peak_density(fit.units, osc, g0);
    const double ratio = fit.gamma_eff / osc.gamma_m;
    PhononEstimate est;
    est.n_m = ratio * (fit.peak + 2.0 * fit.floor) / (2.0 * s_zp) - 0.5;
    est.squashing_regime = fit.negative_peak || fit.structured_residuals;

    const auto& c = fit.covariance;
    const double k = 1.0 / (2.0 * s_zp * osc.gamma_m);
    const std::array<double, 3> grad{k * (fit.peak + 2.0 * fit.floor),  // d/dgamma_eff
                                     k * fit.gamma_eff,                 // d/dpeak
                                     2.0 * k * fit.gamma_eff};          // d/dfloor
    double var = 0.0;
    const int idx[3] = {1, 2, 3};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) var += grad[a] * grad[b] * c[idx[a] * 4 + idx[b]];
    est.sigma = var > 0.0 ? std::sqrt(var) : 0.0;
    return est;
}

// Off-resonant-tail estimate of the bath occupancy for peaks buried in the
// imprecision floor: least squares of S(f) = floor + A / (f - f_m)^2 over the
// wings, excluding |f - f_m| < exclude_halfwidth.  Open-loop relation
// n_tot + 1/2 = 8 pi^2 A / (S_zp Gamma_m^2).
inline double tail_occupancy(const Psd& psd, const OscillatorParams& osc, double g0, double f_lo,
                             double f_hi, double exclude_halfwidth) {
    const double s_zp = detail::zp_peak_density(psd.units, osc, g0);
    const double f_m = osc.omega_m / two_pi;
    double s_ww = 0.0, s_w = 0.0, s_1 = 0.0, s_wy = 0.0, s_y = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < psd.freq.size(); ++k) {
        const double f = psd.freq[k];
        if (f < f_lo || f > f_hi || std::abs(f - f_m) < exclude_halfwidth) continue;
        const double d = f - f_m;
        const double w = 1.0 / (d * d);
        s_ww += w * w;
        s_w += w;
        s_1 += 1.0;
        s_wy += w * psd.value[k];
        s_y += psd.value[k];
        ++used;
    }
    if (used < 8) throw std::invalid_argument("tail_occupancy: fewer than 8 wing bins");
    const double det = s_ww * s_1 - s_w * s_w;
    if (std::abs(det) < 1e-300) throw std::invalid_argument("tail_occupancy: degenerate wing geometry");
    const double a = (s_wy * s_1 - s_y * s_w) / det;
    return 8.0 * pi * pi * a / (s_zp * osc.gamma_m * osc.gamma_m) - 0.5;
}

}  // namespace colddamp
