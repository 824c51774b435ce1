#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "colddamp/budget.hpp"
#include "colddamp/feedback_filter.hpp"
#include "colddamp/params.hpp"
#include "colddamp/rng.hpp"

// Time-domain Langevin simulation of the monitored oscillator in normalized
// position units u = x / x_zp:
//
//   u'' + Gamma_m u' + Omega_m^2 u = f_th + f_ba + f_fbnoise + f_fb(y) + drive
//   y_k = u_k + imprecision noise
//
// Force channels are white with strengths set by the budget occupancies
// (thermal carries the half quantum: 2(2 n_th + 1) Omega_m^2 Gamma_m), the
// measurement record carries a flat floor S_u_imp = 8 n_imp / Gamma_m, and the
// feedback force is produced by a causal FeedbackFilter acting on y.
namespace colddamp {

enum class Integrator {
    semi_implicit_euler,  // symplectic; default
    exact_propagator,     // closed-form linear propagator with exact step noise
};

struct SimConfig {
    OscillatorParams osc;
    NoiseBudget budget;
    FeedbackSettings fb;
    double dt = 0.0;        // s
    double duration = 0.0;  // s, total including burn-in
    double burn_in = 0.0;   // s, discarded
    std::uint64_t seed = 1;
    int n_trajectories = 1;
    Integrator integrator = Integrator::semi_implicit_euler;
    int threads = 1;         // 0 = hardware concurrency
    bool noiseless = false;  // disable every stochastic term (deterministic runs)
    bool has_initial_state = false;
    double u0 = 0.0, v0 = 0.0;  // used when has_initial_state; else thermal draw

    double gamma_eff() const {
        const double g = fb.mode == FeedbackMode::off ? 0.0 : fb.gain;
        return (1.0 + g) * osc.gamma_m;
    }

    // Structural checks always apply; the linewidth coverage rules matter for
    // spectral estimation and are skipped for deterministic/driven runs.
    void validate(bool for_spectra = true) const {
        osc.validate();
        fb.validate();
        if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be > 0");
        if (dt * osc.omega_m > 0.05)
            throw std::invalid_argument("SimConfig: dt * omega_m must be <= 0.05");
        if (!(duration > 0.0)) throw std::invalid_argument("SimConfig: duration must be > 0");
        if (burn_in < 0.0 || burn_in >= duration)
            throw std::invalid_argument("SimConfig: need 0 <= burn_in < duration");
        if (n_trajectories < 1) throw std::invalid_argument("SimConfig: n_trajectories must be >= 1");
        if (threads < 0) throw std::invalid_argument("SimConfig: threads must be >= 0");
        if (for_spectra && !noiseless) {
            const double geff = gamma_eff();
            if ((duration - burn_in) * geff < 20.0)
                throw std::invalid_argument(
                    "SimConfig: duration - burn_in must cover >= 20 / gamma_eff");
            if (burn_in * geff < 10.0)
                throw std::invalid_argument("SimConfig: burn_in must cover >= 10 / gamma_eff");
        }
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> w = osc.warnings();
        if (dt * osc.omega_m > 0.02)
            w.push_back("dt * omega_m > 0.02: integrator bias approaches the percent level");
        return w;
    }
};

struct Trajectory {
    double dt = 0.0;
    std::vector<double> t;     // s
    std::vector<double> u;     // x / x_zp
    std::vector<double> y;     // measured record, x / x_zp
    std::vector<double> f_fb;  // applied feedback force, 1/s^2 (normalized units)
};

// Single-trajectory stepper.  Exposes the simulation sample-by-sample so
// arbitrarily long runs can feed streaming consumers (PSD accumulation)
// without materializing the series.
class TrajectoryStream {
  public:
    struct Sample {
        double t, u, y, f_fb;
    };

    TrajectoryStream(const SimConfig& cfg, std::uint32_t index)
        : omega2_(cfg.osc.omega_m * cfg.osc.omega_m),
          gamma_(cfg.osc.gamma_m),
          dt_(cfg.dt),
          integrator_(cfg.integrator),
          filter_(cfg.fb, cfg.osc, cfg.dt),
          thermal_(cfg.seed, index, 0),
          backaction_(cfg.seed, index, 1),
          fb_noise_(cfg.seed, index, 2),
          imprecision_(cfg.seed, index, 3) {
        const NoiseBudget& b = cfg.budget;
        const double kick = 2.0 * omega2_ * gamma_ * dt_;
        if (!cfg.noiseless) {
            sigma_th_ = std::sqrt(kick * (2.0 * b.n_th + 1.0));
            sigma_ba_ = std::sqrt(kick * 2.0 * (b.n_ba + b.n_ba_ex));
            sigma_fb_ = std::sqrt(kick * 2.0 * b.n_fb);
            sigma_imp_ = std::sqrt(4.0 * b.n_imp / (gamma_ * dt_));
        }
        u_limit_ = 1e6 * std::sqrt(2.0 * b.n_tot + 1.0);
        if (cfg.has_initial_state) {
            u_ = cfg.u0;
            v_ = cfg.v0;
        } else if (!cfg.noiseless) {
            // Open-loop thermal equilibrium draw; burn-in relaxes it to the
            // closed-loop steady state.
            NormalStream init(cfg.seed, index, 4);
            const double scale = std::sqrt(2.0 * (b.n_tot + b.n_fb) + 1.0);
            u_ = scale * init.next();
            v_ = cfg.osc.omega_m * scale * init.next();
        }
        if (integrator_ == Integrator::exact_propagator) init_exact(cfg);
    }

    // Coherent radiation-pressure drive amp*cos(omega t), shuttered at t_off.
    void set_drive(double amplitude, double omega, double t_off) {
        drive_amp_ = amplitude;
        drive_omega_ = omega;
        drive_off_ = t_off;
    }

    Sample step() {
        const double t = step_count_ * dt_;
        const double y = u_ + sigma_imp_ * imprecision_.next();
        const double f_fb = filter_.process(y);
        double force = f_fb;
        if (drive_amp_ != 0.0 && t < drive_off_) force += drive_amp_ * std::cos(drive_omega_ * t);

        if (integrator_ == Integrator::semi_implicit_euler) {
            v_ += dt_ * (-gamma_ * v_ - omega2_ * u_ + force) + sigma_th_ * thermal_.next() +
                  sigma_ba_ * backaction_.next() + sigma_fb_ * fb_noise_.next();
            u_ += dt_ * v_;
        } else {
            const double un = m11_ * u_ + m12_ * v_ + cf_u_ * force;
            const double vn = m21_ * u_ + m22_ * v_ + cf_v_ * force;
            double nu = 0.0, nv = 0.0;
            if (sigma_th_ != 0.0 || sigma_ba_ != 0.0 || sigma_fb_ != 0.0) {
                const double g1 = thermal_.next(), g2 = thermal_.next();
                nu = l11_ * g1;
                nv = l21_ * g1 + l22_ * g2;
            }
            u_ = un + nu;
            v_ = vn + nv;
        }
        ++step_count_;
        if (std::abs(u_) > u_limit_)
            throw std::runtime_error("loop unstable (gain/delay mismatch)");
        return {t, u_, y, f_fb};
    }

  private:
    void init_exact(const SimConfig& cfg) {
        const double om = cfg.osc.omega_m;
        if (gamma_ >= 2.0 * om)
            throw std::invalid_argument("exact_propagator: requires an underdamped mode");
        const double wd = std::sqrt(omega2_ - 0.25 * gamma_ * gamma_);
        const double e = std::exp(-0.5 * gamma_ * dt_);
        const double c = std::cos(wd * dt_), s = std::sin(wd * dt_);
        m11_ = e * (c + 0.5 * gamma_ * s / wd);
        m12_ = e * s / wd;
        m21_ = -omega2_ * e * s / wd;
        m22_ = e * (c - 0.5 * gamma_ * s / wd);
        // Zero-order-hold force response: A^-1 (M - I) B.
        cf_u_ = -(m11_ - 1.0) / omega2_;
        cf_v_ = -m21_ / omega2_;
        // Step noise covariance q * int_0^dt [h, h'] [h, h']^T ds with
        // h(s) = e^{-gamma s/2} sin(wd s)/wd; Simpson quadrature, then Cholesky.
        const NoiseBudget& b = cfg.budget;
        const double n_force = b.n_tot + b.n_fb;
        const double q = 2.0 * (2.0 * n_force + 1.0) * omega2_ * gamma_;
        if (!cfg.noiseless && q > 0.0) {
            const int panels = 128;
            const double h = dt_ / panels;
            double q11 = 0.0, q12 = 0.0, q22 = 0.0;
            for (int i = 0; i <= panels; ++i) {
                const double sI = i * h;
                const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
                const double es = std::exp(-0.5 * gamma_ * sI);
                const double hs = es * std::sin(wd * sI) / wd;
                const double hps = es * (std::cos(wd * sI) - 0.5 * gamma_ * std::sin(wd * sI) / wd);
                q11 += w * hs * hs;
                q12 += w * hs * hps;
                q22 += w * hps * hps;
            }
            const double scale = q * h / 3.0;
            q11 *= scale;
            q12 *= scale;
            q22 *= scale;
            l11_ = std::sqrt(q11);
            l21_ = q12 / l11_;
            l22_ = std::sqrt(std::max(0.0, q22 - l21_ * l21_));
        }
    }

    double omega2_, gamma_, dt_;
    Integrator integrator_;
    FeedbackFilter filter_;
    NormalStream thermal_, backaction_, fb_noise_, imprecision_;
    double sigma_th_ = 0.0, sigma_ba_ = 0.0, sigma_fb_ = 0.0, sigma_imp_ = 0.0;
    double u_ = 0.0, v_ = 0.0;
    double u_limit_ = 0.0;
    std::uint64_t step_count_ = 0;
    // exact-propagator coefficients
    double m11_ = 0, m12_ = 0, m21_ = 0, m22_ = 0, cf_u_ = 0, cf_v_ = 0;
    double l11_ = 0, l21_ = 0, l22_ = 0;
    // drive
    double drive_amp_ = 0.0, drive_omega_ = 0.0, drive_off_ = 0.0;
};

namespace detail {

inline Trajectory collect_trajectory(const SimConfig& cfg, std::uint32_t index, double drive_amp,
                                     double drive_omega, double drive_off) {
    TrajectoryStream stream(cfg, index);
    if (drive_amp != 0.0) stream.set_drive(drive_amp, drive_omega, drive_off);
    const auto total = static_cast<std::uint64_t>(std::llround(cfg.duration / cfg.dt));
    const auto burn = static_cast<std::uint64_t>(std::llround(cfg.burn_in / cfg.dt));
    Trajectory traj;
    traj.dt = cfg.dt;
    const std::uint64_t keep = total - burn;
    traj.t.reserve(keep);
    traj.u.reserve(keep);
    traj.y.reserve(keep);
    traj.f_fb.reserve(keep);
    for (std::uint64_t k = 0; k < total; ++k) {
        const auto s = stream.step();
        if (k < burn) continue;
        traj.t.push_back(s.t);
        traj.u.push_back(s.u);
        traj.y.push_back(s.y);
        traj.f_fb.push_back(s.f_fb);
    }
    return traj;
}

inline std::vector<Trajectory> run_ensemble(const SimConfig& cfg, double drive_amp,
                                            double drive_omega, double drive_off) {
    const int n = cfg.n_trajectories;
    std::vector<Trajectory> out(n);
    int n_threads = cfg.threads > 0 ? cfg.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    if (n_threads > n) n_threads = n;
    if (n_threads == 1) {
        for (int i = 0; i < n; ++i)
            out[i] = collect_trajectory(cfg, static_cast<std::uint32_t>(i), drive_amp, drive_omega,
                                        drive_off);
        return out;
    }
    // Trajectories are independent work units; index order of the result is
    // fixed regardless of completion order.
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
                    out[i] = collect_trajectory(cfg, static_cast<std::uint32_t>(i), drive_amp,
                                                drive_omega, drive_off);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace detail

inline std::vector<Trajectory> simulate(const SimConfig& cfg) {
    cfg.validate(/*for_spectra=*/!cfg.noiseless);
    return detail::run_ensemble(cfg, 0.0, 0.0, 0.0);
}

// Coherent drive at drive_omega until drive_off_time, then free decay; the
// drive amplitude is in the same normalized force units as f_fb.
inline std::vector<Trajectory> simulate_ringdown(const SimConfig& cfg, double drive_omega,
                                                 double drive_amp, double drive_off_time) {
    cfg.validate(/*for_spectra=*/false);
    if (!(drive_omega > 0.0))
        throw std::invalid_argument("simulate_ringdown: drive_omega must be > 0");
    if (drive_off_time <= 0.0 || drive_off_time >= cfg.duration)
        throw std::invalid_argument("simulate_ringdown: need 0 < drive_off_time < duration");
    return detail::run_ensemble(cfg, drive_amp, drive_omega, drive_off_time);
}

}  // namespace colddamp
