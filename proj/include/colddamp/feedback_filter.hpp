#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "colddamp/params.hpp"

// Streaming implementation of the feedback electronics: an integer-sample
// delay line feeding a second-order (biquad) bandpass, plus the ideal
// first-difference velocity filter used as a reference loop.
namespace colddamp {

// Direct-form-II-transposed biquad, coefficients normalized so a0 = 1.
class Biquad {
  public:
    Biquad(double b0, double b1, double b2, double a1, double a2)
        : b0_(b0), b1_(b1), b2_(b2), a1_(a1), a2_(a2) {}

    // Constant-peak-gain (0 dB at center) resonator bandpass; w0 in
    // rad/sample, q = center / width.
    static Biquad bandpass(double w0, double q) {
        if (!(w0 > 0.0 && w0 < pi))
            throw std::invalid_argument("Biquad::bandpass: center must be below Nyquist");
        if (!(q > 0.0)) throw std::invalid_argument("Biquad::bandpass: q must be > 0");
        const double alpha = std::sin(w0) / (2.0 * q);
        const double a0 = 1.0 + alpha;
        return Biquad(alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0);
    }

    // Butterworth-section lowpass; w0 in rad/sample, q per pole pair.
    static Biquad lowpass(double w0, double q) {
        if (!(w0 > 0.0 && w0 < pi))
            throw std::invalid_argument("Biquad::lowpass: cutoff must be below Nyquist");
        const double alpha = std::sin(w0) / (2.0 * q);
        const double c = std::cos(w0);
        const double a0 = 1.0 + alpha;
        return Biquad((1.0 - c) / (2.0 * a0), (1.0 - c) / a0, (1.0 - c) / (2.0 * a0),
                      -2.0 * c / a0, (1.0 - alpha) / a0);
    }

    double process(double x) {
        const double y = b0_ * x + s1_;
        s1_ = b1_ * x - a1_ * y + s2_;
        s2_ = b2_ * x - a2_ * y;
        return y;
    }

    void reset() { s1_ = s2_ = 0.0; }

  private:
    double b0_, b1_, b2_, a1_, a2_;
    double s1_ = 0.0, s2_ = 0.0;
};

class DelayLine {
  public:
    explicit DelayLine(std::size_t samples) : buf_(samples, 0.0) {}

    double process(double x) {
        if (buf_.empty()) return x;
        const double out = buf_[head_];
        buf_[head_] = x;
        head_ = (head_ + 1) % buf_.size();
        return out;
    }

  private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
};

// The feedback chain as applied to the measured record y (in x_zp units),
// returning the normalized force it adds to the equation of motion (units of
// acceleration in the scaled dynamics, 1/s^2).
//
// velocity mode:         f = -g Gamma_m (y_k - y_{k-1}) / dt
// delayed_bandpass mode: f = -g Gamma_m Omega_m * bandpass(delay(y))
//
// With delay = 3 pi / (2 Omega_m) the delayed chain reproduces the velocity
// filter's 90-degree phase at resonance exactly; tuning the bandpass center to
// Omega_m makes the magnitudes agree there as well.
class FeedbackFilter {
  public:
    FeedbackFilter(const FeedbackSettings& fb, const OscillatorParams& osc, double dt)
        : mode_(fb.mode), dt_(dt) {
        fb.validate();
        if (!(dt > 0.0)) throw std::invalid_argument("FeedbackFilter: dt must be > 0");
        switch (mode_) {
            case FeedbackMode::off:
                break;
            case FeedbackMode::velocity:
                strength_ = fb.gain * osc.gamma_m;
                break;
            case FeedbackMode::delayed_bandpass: {
                const auto samples = static_cast<long long>(std::llround(fb.delay / dt));
                if (samples < 1)
                    throw std::invalid_argument("FeedbackFilter: delay shorter than one sample");
                delay_ = DelayLine(static_cast<std::size_t>(samples));
                bandpass_ = Biquad::bandpass(fb.bandpass_center * dt,
                                             fb.bandpass_center / fb.bandpass_width);
                strength_ = fb.gain * osc.gamma_m * osc.omega_m;
                break;
            }
        }
    }

    double process(double y) {
        switch (mode_) {
            case FeedbackMode::off:
                return 0.0;
            case FeedbackMode::velocity: {
                const double velocity = (y - prev_) / dt_;
                prev_ = y;
                return -strength_ * velocity;
            }
            case FeedbackMode::delayed_bandpass:
                return -strength_ * bandpass_.process(delay_.process(y));
        }
        return 0.0;
    }

  private:
    FeedbackMode mode_;
    double dt_;
    double strength_ = 0.0;
    double prev_ = 0.0;
    DelayLine delay_{0};
    Biquad bandpass_{0, 0, 0, 0, 0};
};

}  // namespace colddamp
