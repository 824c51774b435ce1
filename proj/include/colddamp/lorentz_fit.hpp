#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "colddamp/constants.hpp"
#include "colddamp/psd.hpp"

// Lorentzian-plus-floor fitting of noise peaks:
//
//   S(f) = floor + peak * h^2 / ((f - f0)^2 + h^2),   h = half width
//
// seeded from the peak bin and half-max width, refined by damped Gauss-Newton
// on all four parameters.  Reported in angular units: omega_center = 2 pi f0,
// gamma_eff = 2 pi * FWHM.
namespace colddamp {

struct SpectrumFit {
    double omega_center = 0.0;  // rad/s
    double gamma_eff = 0.0;     // rad/s (full width)
    double peak = 0.0;          // height above floor at center, psd units
    double floor = 0.0;         // flat background, psd units
    double residual_rms = 0.0;  // rms of (data - model) / model
    double residual_lag1 = 0.0; // lag-1 autocorrelation of relative residuals
    bool structured_residuals = false;  // |residual_lag1| beyond chance level
    bool negative_peak = false;         // best fit wanted peak < 0 (squashed record)
    // Row-major covariance in (omega_center, gamma_eff, peak, floor) order.
    std::array<double, 16> covariance{};
    int iterations = 0;
    SpectrumUnits units = SpectrumUnits::arbitrary;
};

struct FitOptions {
    bool allow_negative_peak = false;  // model squashing dips below the floor
    bool weighted = true;              // chi-square weights (sigma ~ model / sqrt(n_avg))
    int max_iterations = 200;
    double tol = 1e-9;  // relative parameter step for convergence
};

namespace detail {

// Solve the 4x4 normal equations by Gaussian elimination with partial pivoting.
inline bool solve4(std::array<double, 16>& a, std::array<double, 4>& b) {
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(a[r * 4 + col]) > std::abs(a[piv * 4 + col])) piv = r;
        if (std::abs(a[piv * 4 + col]) < 1e-300) return false;
        if (piv != col) {
            for (int c = 0; c < 4; ++c) std::swap(a[col * 4 + c], a[piv * 4 + c]);
            std::swap(b[col], b[piv]);
        }
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double fac = a[r * 4 + col] / a[col * 4 + col];
            for (int c = col; c < 4; ++c) a[r * 4 + c] -= fac * a[col * 4 + c];
            b[r] -= fac * b[col];
        }
    }
    for (int i = 0; i < 4; ++i) b[i] /= a[i * 4 + i];
    return true;
}

inline bool invert4(const std::array<double, 16>& m, std::array<double, 16>& inv) {
    inv = {};
    for (int col = 0; col < 4; ++col) {
        std::array<double, 16> a = m;
        std::array<double, 4> e{};
        e[col] = 1.0;
        if (!solve4(a, e)) return false;
        for (int r = 0; r < 4; ++r) inv[r * 4 + col] = e[r];
    }
    return true;
}

}  // namespace detail

// Fit the window [f_lo, f_hi] of the PSD.  Deterministic: identical input
// yields identical output.  Throws on non-convergence (message carries the
// last iterate) and when no peak stands above the floor.
inline SpectrumFit fit_lorentzian(const Psd& psd, double f_lo, double f_hi,
                                  const FitOptions& opt = {}) {
    std::vector<double> f, s;
    for (std::size_t k = 0; k < psd.freq.size(); ++k) {
        if (psd.freq[k] < f_lo || psd.freq[k] > f_hi) continue;
        f.push_back(psd.freq[k]);
        s.push_back(psd.value[k]);
    }
    const std::size_t n = f.size();
    if (n < 12) throw std::invalid_argument("fit_lorentzian: window holds fewer than 12 bins");

    // Seed: floor from the lowest quartile, center/height from the peak bin,
    // width from the half-max crossings.
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    double floor0 = 0.0;
    const std::size_t quart = std::max<std::size_t>(1, n / 4);
    for (std::size_t k = 0; k < quart; ++k) floor0 += sorted[k];
    floor0 /= double(quart);
    std::size_t ipk = std::max_element(s.begin(), s.end()) - s.begin();
    double peak0 = s[ipk] - floor0;
    if (opt.allow_negative_peak) {
        // A squashing dip is a negative peak; seed from the deeper feature.
        const std::size_t imin = std::min_element(s.begin(), s.end()) - s.begin();
        double med = sorted[n / 2];
        if (med - s[imin] > peak0) {
            ipk = imin;
            floor0 = med;
            peak0 = s[imin] - med;
        }
    }
    if (peak0 == 0.0 || (peak0 > 0.0 && floor0 >= peak0 * 1e3))
        throw std::invalid_argument("fit_lorentzian: peak not resolvable above the floor");
    const double half = floor0 + 0.5 * peak0;
    std::size_t lo = ipk, hi = ipk;
    if (peak0 > 0.0) {
        while (lo > 0 && s[lo] > half) --lo;
        while (hi + 1 < n && s[hi] > half) ++hi;
    } else {
        while (lo > 0 && s[lo] < half) --lo;
        while (hi + 1 < n && s[hi] < half) ++hi;
    }
    double h0 = 0.5 * (f[hi] - f[lo]);
    if (!(h0 > 0.0)) h0 = psd.resolution;
    double f00 = f[ipk];

    // sigma_k ~ model_k / sqrt(n_avg) for averaged periodograms; the common
    // sqrt(n_avg) cancels in the normal equations, so weights are 1/model^2.
    std::array<double, 4> p{f00, h0, peak0, floor0};  // (f0, h, peak, floor)
    auto model = [&](double fi, const std::array<double, 4>& q) {
        const double d = fi - q[0];
        return q[3] + q[2] * q[1] * q[1] / (d * d + q[1] * q[1]);
    };
    auto cost = [&](const std::array<double, 4>& q) {
        double c = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double m = model(f[k], q);
            const double w = opt.weighted ? 1.0 / std::max(m * m, 1e-300) : 1.0;
            const double r = s[k] - m;
            c += w * r * r;
        }
        return c;
    };

    double lambda = 1e-6;
    double current = cost(p);
    int iter = 0;
    bool converged = false;
    std::array<double, 16> jtj{};
    for (; iter < opt.max_iterations; ++iter) {
        jtj = {};
        std::array<double, 4> jtr{};
        for (std::size_t k = 0; k < n; ++k) {
            const double d = f[k] - p[0];
            const double h2 = p[1] * p[1];
            const double den = d * d + h2;
            const double lor = h2 / den;
            const double m = p[3] + p[2] * lor;
            std::array<double, 4> j{
                p[2] * h2 * 2.0 * d / (den * den),            // d/df0
                p[2] * 2.0 * p[1] * d * d / (den * den),      // d/dh
                lor,                                          // d/dpeak
                1.0,                                          // d/dfloor
            };
            const double w = opt.weighted ? 1.0 / std::max(m * m, 1e-300) : 1.0;
            const double r = s[k] - m;
            for (int a = 0; a < 4; ++a) {
                jtr[a] += w * j[a] * r;
                for (int b = 0; b < 4; ++b) jtj[a * 4 + b] += w * j[a] * j[b];
            }
        }
        // Levenberg damping, retried with larger lambda until the step helps.
        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            std::array<double, 16> a = jtj;
            for (int i = 0; i < 4; ++i) a[i * 4 + i] *= 1.0 + lambda;
            std::array<double, 4> step = jtr;
            if (!detail::solve4(a, step)) {
                lambda *= 10.0;
                continue;
            }
            std::array<double, 4> trial{p[0] + step[0], p[1] + step[1], p[2] + step[2],
                                        p[3] + step[3]};
            trial[1] = std::abs(trial[1]);
            if (!opt.allow_negative_peak && trial[2] < 0.0) trial[2] = 0.0;
            const double trial_cost = cost(trial);
            if (trial_cost <= current) {
                double rel = 0.0;
                for (int i = 0; i < 4; ++i)
                    rel = std::max(rel, std::abs(trial[i] - p[i]) /
                                            (std::abs(p[i]) + 1e-300));
                p = trial;
                current = trial_cost;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (rel < opt.tol) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (converged || !stepped) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "fit_lorentzian: no convergence after %d iterations; last iterate f0=%.6g Hz "
                      "h=%.6g Hz peak=%.6g floor=%.6g cost=%.6g",
                      iter, p[0], p[1], p[2], p[3], current);
        throw std::runtime_error(msg);
    }

    SpectrumFit fit;
    fit.units = psd.units;
    fit.omega_center = two_pi * p[0];
    fit.gamma_eff = two_pi * 2.0 * p[1];
    fit.peak = p[2];
    fit.floor = p[3];
    fit.negative_peak = p[2] < 0.0;
    fit.iterations = iter;

    // Relative residual diagnostics: rms and lag-1 autocorrelation.  White
    // residuals have lag-1 ~ N(0, 1/n); systematic model mismatch (e.g. a
    // squashing dip fitted with peak clamped at 0) shows up as structure.
    std::vector<double> rel(n);
    double rms = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double m = model(f[k], p);
        rel[k] = (s[k] - m) / std::max(std::abs(m), 1e-300);
        rms += rel[k] * rel[k];
    }
    fit.residual_rms = std::sqrt(rms / double(n));
    double num = 0.0, den = 0.0, mean = 0.0;
    for (double r : rel) mean += r;
    mean /= double(n);
    for (std::size_t k = 0; k < n; ++k) {
        den += (rel[k] - mean) * (rel[k] - mean);
        if (k + 1 < n) num += (rel[k] - mean) * (rel[k + 1] - mean);
    }
    fit.residual_lag1 = den > 0.0 ? num / den : 0.0;
    fit.structured_residuals = std::abs(fit.residual_lag1) > 5.0 / std::sqrt(double(n));

    // Covariance: sigma^2 (J^T W J)^-1 with sigma^2 = cost / (n - 4), mapped to
    // angular units: omega = 2 pi f0, gamma = 4 pi h.
    std::array<double, 16> inv{};
    if (detail::invert4(jtj, inv)) {
        const double sigma2 = current / double(n > 4 ? n - 4 : 1);
        const std::array<double, 4> scale{two_pi, 2.0 * two_pi, 1.0, 1.0};
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                fit.covariance[r * 4 + c] = inv[r * 4 + c] * sigma2 * scale[r] * scale[c];
    }
    return fit;
}

}  // namespace colddamp
