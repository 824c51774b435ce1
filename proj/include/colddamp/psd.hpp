#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colddamp/constants.hpp"

// Welch PSD estimation (Hann window, overlapped segments, single-sided) and
// band integration.  The accumulator form consumes samples as a stream, so
// arbitrarily long simulations need only one segment of memory.
namespace colddamp {

enum class SpectrumUnits {
    normalized_position,  // (x/x_zp)^2 / Hz
    position,             // m^2 / Hz
    frequency_noise,      // (rad/s)^2 / Hz
    arbitrary,            // e.g. V^2 / Hz
};

struct Psd {
    std::vector<double> freq;   // Hz, strictly increasing from 0
    std::vector<double> value;  // units^2 / Hz, single-sided
    double resolution = 0.0;    // bin width, Hz
    int n_averages = 0;         // segments averaged
    SpectrumUnits units = SpectrumUnits::arbitrary;
};

namespace detail {
// FFTW's planner is not thread-safe; executions on distinct plans are.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

class PsdAccumulator {
  public:
    PsdAccumulator(double sample_rate, std::size_t segment_length, double overlap,
                   SpectrumUnits units = SpectrumUnits::arbitrary)
        : fs_(sample_rate), n_(segment_length), units_(units) {
        if (!(sample_rate > 0.0)) throw std::invalid_argument("PsdAccumulator: sample_rate must be > 0");
        if (segment_length < 16 || segment_length % 2 != 0)
            throw std::invalid_argument("PsdAccumulator: segment_length must be even and >= 16");
        if (overlap < 0.0 || overlap > 0.9)
            throw std::invalid_argument("PsdAccumulator: overlap must be in [0, 0.9]");
        hop_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n_ * (1.0 - overlap))));
        window_.resize(n_);
        double wsum2 = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            window_[i] = 0.5 * (1.0 - std::cos(two_pi * double(i) / double(n_)));
            wsum2 += window_[i] * window_[i];
        }
        window_power_ = wsum2;
        buf_.reserve(n_);
        accum_.assign(n_ / 2 + 1, 0.0);
        in_ = fftw_alloc_real(n_);
        out_ = fftw_alloc_complex(n_ / 2 + 1);
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in_, out_, FFTW_ESTIMATE);
    }

    PsdAccumulator(const PsdAccumulator&) = delete;
    PsdAccumulator& operator=(const PsdAccumulator&) = delete;

    ~PsdAccumulator() {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }

    void add(double sample) {
        if (!std::isfinite(sample)) throw std::invalid_argument("PsdAccumulator: non-finite sample");
        buf_.push_back(sample);
        if (buf_.size() == n_) {
            process_segment();
            buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(hop_));
        }
    }

    void add(std::span<const double> samples) {
        for (double s : samples) add(s);
    }

    int n_averages() const { return n_segments_; }

    Psd finalize() const {
        if (n_segments_ == 0)
            throw std::invalid_argument("PsdAccumulator: fewer samples than one segment");
        Psd psd;
        psd.units = units_;
        psd.resolution = fs_ / double(n_);
        psd.n_averages = n_segments_;
        const std::size_t bins = n_ / 2 + 1;
        psd.freq.resize(bins);
        psd.value.resize(bins);
        for (std::size_t k = 0; k < bins; ++k) {
            psd.freq[k] = double(k) * psd.resolution;
            // Single-sided: double every bin except DC and Nyquist.
            const double fold = (k == 0 || k == n_ / 2) ? 1.0 : 2.0;
            psd.value[k] = fold * accum_[k] / (double(n_segments_) * fs_ * window_power_);
        }
        return psd;
    }

  private:
    void process_segment() {
        double mean = 0.0;
        for (double v : buf_) mean += v;
        mean /= double(n_);
        for (std::size_t i = 0; i < n_; ++i) in_[i] = (buf_[i] - mean) * window_[i];
        fftw_execute(plan_);
        for (std::size_t k = 0; k < accum_.size(); ++k) {
            const double re = out_[k][0], im = out_[k][1];
            accum_[k] += re * re + im * im;
        }
        ++n_segments_;
    }

    double fs_;
    std::size_t n_, hop_ = 0;
    SpectrumUnits units_;
    std::vector<double> window_, buf_, accum_;
    double window_power_ = 0.0;
    int n_segments_ = 0;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_{};
};

inline Psd welch_psd(std::span<const double> samples, double sample_rate, std::size_t segment_length,
                     double overlap = 0.5, SpectrumUnits units = SpectrumUnits::arbitrary) {
    if (samples.empty()) throw std::invalid_argument("welch_psd: empty input");
    if (segment_length > samples.size())
        throw std::invalid_argument("welch_psd: segment_length exceeds series length");
    PsdAccumulator acc(sample_rate, segment_length, overlap, units);
    acc.add(samples);
    return acc.finalize();
}

struct VarianceResult {
    double variance = 0.0;       // units^2, trapezoidal integral over the band
    double tail_fraction = 0.0;  // worst per-edge Lorentzian-wing extrapolation
    std::vector<std::string> warnings;
};

// Trapezoidal band power of a single-sided PSD over [f_lo, f_hi].  When a band
// edge lies strictly inside the spectrum, the mass beyond it is estimated by
// the 1/delta^2 wing extrapolation S(edge) * |edge - f_peak| (exact for a
// Lorentzian); an estimate above 1% of the integral produces a warning.
inline VarianceResult integrate_variance(const Psd& psd, double f_lo = 0.0,
                                         double f_hi = std::numeric_limits<double>::infinity()) {
    if (psd.freq.size() < 4) throw std::invalid_argument("integrate_variance: too few bins");
    if (!(f_hi > f_lo)) throw std::invalid_argument("integrate_variance: need f_hi > f_lo");
    const auto& f = psd.freq;
    const auto& s = psd.value;
    std::size_t i0 = std::lower_bound(f.begin(), f.end(), f_lo) - f.begin();
    std::size_t i1 = std::upper_bound(f.begin(), f.end(), f_hi) - f.begin();
    if (i1 > f.size()) i1 = f.size();
    if (i1 - i0 < 2) throw std::invalid_argument("integrate_variance: band covers fewer than 2 bins");

    VarianceResult out;
    for (std::size_t k = i0; k + 1 < i1; ++k)
        out.variance += 0.5 * (s[k] + s[k + 1]) * (f[k + 1] - f[k]);

    const std::size_t peak =
        std::max_element(s.begin() + i0, s.begin() + i1) - s.begin();
    auto edge_tail = [&](std::size_t edge_idx, bool interior) -> double {
        if (!interior) return 0.0;
        const double dist = std::abs(f[edge_idx] - f[peak]);
        if (dist <= psd.resolution) return 0.0;
        return s[edge_idx] * dist;
    };
    const double tail_hi = edge_tail(i1 - 1, i1 < f.size());
    const double tail_lo = edge_tail(i0, i0 > 1);
    if (out.variance > 0.0) {
        out.tail_fraction = std::max(tail_hi, tail_lo) / out.variance;
        if (out.tail_fraction > 0.01) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "band truncation: estimated %.2f%% of the power lies beyond the band edge; "
                          "widen the integration band",
                          100.0 * out.tail_fraction);
            out.warnings.emplace_back(msg);
        }
    }
    return out;
}

}  // namespace colddamp
