#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colddamp/feedback_filter.hpp"
#include "colddamp/lorentz_fit.hpp"
#include "colddamp/params.hpp"
#include "colddamp/psd.hpp"
#include "colddamp/readout.hpp"
#include "colddamp/sde.hpp"

// Parameter-extraction procedures: the vacuum coupling rate from a phase
// reference tone or from the optical spring, the mode splitting from resonant
// transmission, and the mechanical damping from ringdowns.
namespace colddamp {

struct CalibrationTone {
    double beta = 0.0;            // phase modulation depth, rad
    double omega_cal = 0.0;       // modulation frequency, rad/s
    double transfer_ratio = 1.0;  // |G(omega_cal) / G(omega_m)| of the detection chain

    void validate() const {
        if (!(beta > 0.0)) throw std::invalid_argument("CalibrationTone: beta must be > 0");
        if (!(omega_cal > 0.0)) throw std::invalid_argument("CalibrationTone: omega_cal must be > 0");
        if (!(transfer_ratio > 0.0 && transfer_ratio <= 1.5))
            throw std::invalid_argument("CalibrationTone: transfer_ratio must be in (0, 1.5]");
    }
};

struct FreqWindow {
    double lo = 0.0, hi = 0.0;  // Hz
};

struct G0Estimate {
    double g0 = 0.0;     // rad/s
    double sigma = 0.0;  // rad/s, from integration statistics
    double area_peak = 0.0, area_tone = 0.0;  // floor-subtracted band powers
};

namespace detail {

// Floor-subtracted trapezoidal band power; the floor is the mean of the
// window's lowest quartile (the wings, for any peaked feature).
inline double band_power_above_floor(const Psd& psd, const FreqWindow& win, double* sigma_out) {
    std::vector<double> f, s;
    for (std::size_t k = 0; k < psd.freq.size(); ++k) {
        if (psd.freq[k] < win.lo || psd.freq[k] > win.hi) continue;
        f.push_back(psd.freq[k]);
        s.push_back(psd.value[k]);
    }
    if (f.size() < 4) throw std::invalid_argument("calibrate_g0: window holds fewer than 4 bins");
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t quart = std::max<std::size_t>(1, sorted.size() / 4);
    double floor = 0.0;
    for (std::size_t k = 0; k < quart; ++k) floor += sorted[k];
    floor /= double(quart);

    double area = 0.0, var = 0.0;
    const double navg = std::max(1, psd.n_averages);
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        const double df = f[k + 1] - f[k];
        area += 0.5 * (s[k] + s[k + 1] - 2.0 * floor) * df;
        const double contrib = 0.5 * (s[k] + s[k + 1]) * df;
        var += contrib * contrib / navg;
    }
    if (sigma_out) *sigma_out = std::sqrt(var);
    return area;
}

}  // namespace detail

// Coupling rate from the ratio of the thermomechanical band power to a phase
// reference tone of known depth:
//   g0 = (beta omega_cal / 2) sqrt(<V^2>_m / (n_th <V^2>_cal)) * transfer_ratio
inline G0Estimate calibrate_g0(const Psd& psd, const CalibrationTone& tone, double n_th,
                               const FreqWindow& peak_window, const FreqWindow& tone_window) {
    tone.validate();
    if (!(n_th > 0.0)) throw std::invalid_argument("calibrate_g0: n_th must be > 0");
    if (peak_window.hi > tone_window.lo && tone_window.hi > peak_window.lo)
        throw std::invalid_argument("calibrate_g0: peak and tone windows overlap");

    // The tone must actually stand above its local floor.
    double tone_max = 0.0, tone_median = 0.0;
    {
        std::vector<double> s;
        for (std::size_t k = 0; k < psd.freq.size(); ++k)
            if (psd.freq[k] >= tone_window.lo && psd.freq[k] <= tone_window.hi)
                s.push_back(psd.value[k]);
        if (s.size() < 3) throw std::invalid_argument("calibrate_g0: tone window holds fewer than 3 bins");
        tone_max = *std::max_element(s.begin(), s.end());
        std::vector<double> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        tone_median = sorted[sorted.size() / 2];
    }
    if (tone_max < 3.0 * tone_median)
        throw std::invalid_argument("calibrate_g0: calibration tone not found above the floor");

    G0Estimate est;
    double sig_peak = 0.0, sig_tone = 0.0;
    est.area_peak = detail::band_power_above_floor(psd, peak_window, &sig_peak);
    est.area_tone = detail::band_power_above_floor(psd, tone_window, &sig_tone);
    if (!(est.area_peak > 0.0) || !(est.area_tone > 0.0))
        throw std::invalid_argument("calibrate_g0: non-positive band power after floor subtraction");

    est.g0 = 0.5 * tone.beta * tone.omega_cal * tone.transfer_ratio *
             std::sqrt(est.area_peak / (n_th * est.area_tone));
    // d g0 / g0 = (1/2) sqrt((dA_m/A_m)^2 + (dA_c/A_c)^2)
    est.sigma = 0.5 * est.g0 *
                std::sqrt(sig_peak * sig_peak / (est.area_peak * est.area_peak) +
                          sig_tone * sig_tone / (est.area_tone * est.area_tone));
    return est;
}

// Default windows: +-3 bins around the tone, +-5 Gamma_eff around the
// mechanical peak (located as the strongest off-tone feature and fitted).
inline G0Estimate calibrate_g0(const Psd& psd, const CalibrationTone& tone, double n_th) {
    const double f_cal = tone.omega_cal / two_pi;
    const FreqWindow tone_win{f_cal - 3.0 * psd.resolution, f_cal + 3.0 * psd.resolution};
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t k = 1; k + 1 < psd.freq.size(); ++k) {
        if (psd.freq[k] >= tone_win.lo && psd.freq[k] <= tone_win.hi) continue;
        if (psd.value[k] > best_v) {
            best_v = psd.value[k];
            best = k;
        }
    }
    const double f_pk = psd.freq[best];
    const double coarse = 40.0 * psd.resolution;
    const auto fit = fit_lorentzian(psd, std::max(psd.freq.front(), f_pk - coarse),
                                    std::min(psd.freq.back(), f_pk + coarse));
    const double half_span = 5.0 * fit.gamma_eff / two_pi;
    return calibrate_g0(psd, tone, n_th,
                        FreqWindow{f_pk - half_span, f_pk + half_span}, tone_win);
}

struct SpringCalResult {
    double g0 = 0.0;            // rad/s
    double rms_residual = 0.0;  // rad/s, of the shift fit
    int points_used = 0;
};

// Coupling rate from optical-spring data: each sample is (transmission,
// spring shift) taken on the red-detuned side.  The transmission is inverted
// to a detuning by bisection on the monotone branch, then g0^2 is the
// least-squares slope of shift against the per-unit-g0^2 model curve.
inline SpringCalResult g0_from_spring(std::span<const double> transmissions,
                                      std::span<const double> spring_shifts, const CavityParams& cav,
                                      double input_power) {
    cav.validate();
    if (!(input_power > 0.0)) throw std::invalid_argument("g0_from_spring: input_power must be > 0");
    if (transmissions.size() != spring_shifts.size())
        throw std::invalid_argument("g0_from_spring: arrays differ in length");
    if (transmissions.size() < 5)
        throw std::invalid_argument("g0_from_spring: need at least 5 points");

    const double k = cav.kappa();
    const double d_max = 5.0 * k;
    // The red branch must be monotone for the inversion to be unique; a
    // strongly split doublet (gamma ~ kappa and beyond) is not.
    const int scan = 2000;
    double prev = transmission(cav, 0.0);
    for (int i = 1; i <= scan; ++i) {
        const double t = transmission(cav, -d_max * double(i) / scan);
        if (t < prev - 1e-12)
            throw std::invalid_argument(
                "g0_from_spring: ambiguous branch: transmission not monotonic on the red side");
        prev = t;
    }
    const double t_min = transmission(cav, 0.0), t_max = prev;

    double sum_mm = 0.0, sum_ms = 0.0, sum_r = 0.0;
    for (std::size_t i = 0; i < transmissions.size(); ++i) {
        const double t_i = transmissions[i];
        if (t_i < t_min - 1e-9 || t_i > t_max)
            throw std::invalid_argument("g0_from_spring: transmission outside the invertible branch");
        double lo = -d_max, hi = 0.0;  // T(lo) >= t_i >= T(hi)
        while (hi - lo > 1e-6 * k) {
            const double mid = 0.5 * (lo + hi);
            if (transmission(cav, mid) >= t_i)
                lo = mid;
            else
                hi = mid;
        }
        const double m_i = spring_shift_per_g0sq(cav, 0.5 * (lo + hi), input_power);
        sum_mm += m_i * m_i;
        sum_ms += m_i * spring_shifts[i];
    }
    if (!(sum_mm > 0.0))
        throw std::invalid_argument("g0_from_spring: all points sit at zero detuning (no constraint)");
    const double g0_sq = sum_ms / sum_mm;
    if (g0_sq <= 0.0)
        throw std::invalid_argument("g0_from_spring: data inconsistent with the model (g0^2 <= 0)");

    SpringCalResult out;
    out.g0 = std::sqrt(g0_sq);
    out.points_used = static_cast<int>(transmissions.size());
    for (std::size_t i = 0; i < transmissions.size(); ++i) {
        // Residuals re-evaluated at the fitted slope.
        const double t_i = transmissions[i];
        double lo = -d_max, hi = 0.0;
        while (hi - lo > 1e-6 * k) {
            const double mid = 0.5 * (lo + hi);
            if (transmission(cav, mid) >= t_i)
                lo = mid;
            else
                hi = mid;
        }
        const double model = g0_sq * spring_shift_per_g0sq(cav, 0.5 * (lo + hi), input_power);
        sum_r += (spring_shifts[i] - model) * (spring_shifts[i] - model);
    }
    out.rms_residual = std::sqrt(sum_r / double(transmissions.size()));
    return out;
}

struct SplittingFit {
    double kappa_0 = 0.0;      // rad/s
    double gamma_split = 0.0;  // rad/s
    double rms_residual = 0.0;
};

// Two-parameter fit of resonant transmission against total linewidth:
//   T0(kappa) = ((gamma^2 - kappa^2 + 2 kappa kappa_0) / (kappa^2 + gamma^2))^2
// Fitted in G = gamma^2 to keep the Jacobian regular at gamma = 0.
inline SplittingFit fit_mode_splitting(std::span<const double> kappas,
                                       std::span<const double> transmissions) {
    if (kappas.size() != transmissions.size())
        throw std::invalid_argument("fit_mode_splitting: arrays differ in length");
    if (kappas.size() < 4) throw std::invalid_argument("fit_mode_splitting: need at least 4 points");
    const double k_min = *std::min_element(kappas.begin(), kappas.end());
    const double k_max = *std::max_element(kappas.begin(), kappas.end());
    if (!(k_min > 0.0)) throw std::invalid_argument("fit_mode_splitting: kappas must be > 0");
    if (k_max - k_min < 1e-9 * k_max)
        throw std::invalid_argument("fit_mode_splitting: degenerate: coupling does not vary");
    const double t_min = *std::min_element(transmissions.begin(), transmissions.end());
    const double t_max = *std::max_element(transmissions.begin(), transmissions.end());
    if (t_max - t_min < 1e-9)
        throw std::invalid_argument("fit_mode_splitting: degenerate: transmission does not vary");

    const auto model = [](double kap, double k0, double g2) {
        const double r = (g2 - kap * kap + 2.0 * kap * k0) / (kap * kap + g2);
        return r * r;
    };
    const auto cost = [&](double k0, double g2) {
        double c = 0.0;
        for (std::size_t i = 0; i < kappas.size(); ++i) {
            const double r = transmissions[i] - model(kappas[i], k0, g2);
            c += r * r;
        }
        return c;
    };

    // Coarse grid seed, then damped Gauss-Newton on (kappa_0, G = gamma^2).
    double k0 = 0.5 * k_min, g2 = 0.0, best = cost(k0, g2);
    for (int a = 1; a <= 60; ++a) {
        for (int b = 0; b <= 60; ++b) {
            const double k0_t = k_min * double(a) / 60.0;
            const double gmax = 2.0 * k_max;
            const double g2_t = gmax * gmax * double(b) * double(b) / 3600.0;
            const double c = cost(k0_t, g2_t);
            if (c < best) {
                best = c;
                k0 = k0_t;
                g2 = g2_t;
            }
        }
    }
    double lambda = 1e-6;
    for (int iter = 0; iter < 200; ++iter) {
        double j11 = 0.0, j12 = 0.0, j22 = 0.0, r1 = 0.0, r2 = 0.0;
        for (std::size_t i = 0; i < kappas.size(); ++i) {
            const double kap = kappas[i];
            const double den = kap * kap + g2;
            const double rr = (g2 - kap * kap + 2.0 * kap * k0) / den;
            const double d_k0 = 2.0 * rr * 2.0 * kap / den;
            const double d_g2 = 2.0 * rr * 2.0 * kap * (kap - k0) / (den * den);
            const double res = transmissions[i] - rr * rr;
            j11 += d_k0 * d_k0;
            j12 += d_k0 * d_g2;
            j22 += d_g2 * d_g2;
            r1 += d_k0 * res;
            r2 += d_g2 * res;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 30; ++attempt) {
            const double a11 = j11 * (1.0 + lambda), a22 = j22 * (1.0 + lambda);
            const double det = a11 * a22 - j12 * j12;
            if (std::abs(det) < 1e-300) {
                lambda *= 10.0;
                continue;
            }
            const double dk0 = (a22 * r1 - j12 * r2) / det;
            const double dg2 = (a11 * r2 - j12 * r1) / det;
            const double k0_t = k0 + dk0;
            const double g2_t = std::max(0.0, g2 + dg2);
            if (cost(k0_t, g2_t) <= best) {
                const double rel = std::max(std::abs(dk0) / (std::abs(k0) + 1e-300),
                                            std::abs(dg2) / (std::abs(g2) + 1.0));
                k0 = k0_t;
                g2 = g2_t;
                best = cost(k0, g2);
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (rel < 1e-12) iter = 200;
                break;
            }
            lambda *= 10.0;
        }
        if (!stepped) break;
    }
    SplittingFit out;
    out.kappa_0 = k0;
    out.gamma_split = std::sqrt(std::max(0.0, g2));
    out.rms_residual = std::sqrt(best / double(kappas.size()));
    return out;
}

struct RingdownFit {
    double gamma_m = 0.0;  // rad/s
    double sigma = 0.0;    // rad/s
    double t_start = 0.0, t_end = 0.0;  // fitted energy-decay window, s
};

// Energy-envelope ringdown fit via digital lock-in: quadrature mixing at
// demod_omega, 4th-order Butterworth low-pass at `bandwidth` Hz, log-linear
// least squares on the ensemble-averaged envelope I^2 + Q^2.
inline RingdownFit fit_ringdown(std::span<const Trajectory> trajectories, double demod_omega,
                                double bandwidth) {
    if (trajectories.empty()) throw std::invalid_argument("fit_ringdown: no trajectories");
    if (!(demod_omega > 0.0)) throw std::invalid_argument("fit_ringdown: demod_omega must be > 0");
    const double dt = trajectories[0].dt;
    const std::size_t n = trajectories[0].u.size();
    const double wb = two_pi * bandwidth;
    if (!(wb > 0.0) || wb > 0.5 * demod_omega)
        throw std::invalid_argument("fit_ringdown: bandwidth must be positive and well below the carrier");

    std::vector<double> energy(n, 0.0);
    for (const auto& traj : trajectories) {
        if (traj.u.size() != n || traj.dt != dt)
            throw std::invalid_argument("fit_ringdown: trajectories must share the sampling grid");
        // Two cascaded Butterworth sections per quadrature (4th order total).
        const double w0 = wb * dt;
        Biquad li1 = Biquad::lowpass(w0, 0.5411961);
        Biquad li2 = Biquad::lowpass(w0, 1.3065630);
        Biquad lq1 = Biquad::lowpass(w0, 0.5411961);
        Biquad lq2 = Biquad::lowpass(w0, 1.3065630);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = traj.t[k];
            const double i_mix = traj.u[k] * std::cos(demod_omega * t);
            const double q_mix = -traj.u[k] * std::sin(demod_omega * t);
            const double i_f = li2.process(li1.process(i_mix));
            const double q_f = lq2.process(lq1.process(q_mix));
            energy[k] += i_f * i_f + q_f * q_f;
        }
    }
    for (double& e : energy) e /= double(trajectories.size());

    // Window: skip the filter transient after the envelope maximum, stop after
    // four e-folds (or at the data's end).
    const std::size_t i_pk = std::max_element(energy.begin(), energy.end()) - energy.begin();
    const std::size_t settle = static_cast<std::size_t>(std::ceil(8.0 / (wb * dt)));
    std::size_t i0 = i_pk + settle;
    if (i0 + 100 >= n) throw std::invalid_argument("fit_ringdown: decay window too short");
    const double e0 = energy[i0];
    std::size_t i1 = n - 1;
    for (std::size_t k = i0; k < n; ++k) {
        if (energy[k] < e0 * std::exp(-4.0)) {
            i1 = k;
            break;
        }
    }
    if (i1 - i0 < 100 || !(energy[i1] > 0.0) || e0 / energy[i1] < std::exp(2.0))
        throw std::invalid_argument("fit_ringdown: decay window too short");

    // Non-monotone envelopes mean the drive never shut off (or the loop ran
    // away): compare chunked means of log-energy against their scatter.
    const int chunks = 8;
    const std::size_t span_n = i1 - i0;
    std::vector<double> cmean(chunks, 0.0), cse(chunks, 0.0);
    for (int c = 0; c < chunks; ++c) {
        const std::size_t a = i0 + span_n * c / chunks;
        const std::size_t b = i0 + span_n * (c + 1) / chunks;
        double m = 0.0;
        for (std::size_t k = a; k < b; ++k) m += std::log(energy[k]);
        m /= double(b - a);
        double v = 0.0;
        for (std::size_t k = a; k < b; ++k) {
            const double d = std::log(energy[k]) - m;
            v += d * d;
        }
        cmean[c] = m;
        cse[c] = std::sqrt(v / double(b - a) / double(b - a));
    }
    for (int c = 0; c + 1 < chunks; ++c) {
        const double rise = cmean[c + 1] - cmean[c];
        const double scale = 4.0 * std::sqrt(cse[c] * cse[c] + cse[c + 1] * cse[c + 1]) + 1e-12;
        if (rise > scale)
            throw std::invalid_argument("fit_ringdown: drive not shuttered / unstable");
    }

    // Log-linear least squares: ln E = a - gamma t.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double m = double(i1 - i0);
    for (std::size_t k = i0; k < i1; ++k) {
        const double x = trajectories[0].t[k];
        const double y = std::log(energy[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double det = m * sxx - sx * sx;
    const double slope = (m * sxy - sx * sy) / det;
    const double icept = (sy - slope * sx) / m;
    double ssr = 0.0;
    for (std::size_t k = i0; k < i1; ++k) {
        const double r = std::log(energy[k]) - (icept + slope * trajectories[0].t[k]);
        ssr += r * r;
    }
    RingdownFit out;
    out.gamma_m = -slope;
    out.sigma = std::sqrt(ssr / (m - 2.0) * m / det);
    out.t_start = trajectories[0].t[i0];
    out.t_end = trajectories[0].t[i1];
    if (!(out.gamma_m > 0.0))
        throw std::invalid_argument("fit_ringdown: envelope does not decay");
    return out;
}

inline RingdownFit fit_ringdown(const Trajectory& traj, double demod_omega, double bandwidth) {
    return fit_ringdown(std::span<const Trajectory>(&traj, 1), demod_omega, bandwidth);
}

}  // namespace colddamp
