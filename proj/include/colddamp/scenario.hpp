#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "colddamp/budget.hpp"
#include "colddamp/calibration.hpp"
#include "colddamp/config.hpp"
#include "colddamp/cooling.hpp"
#include "colddamp/detail/sha256.hpp"
#include "colddamp/io.hpp"
#include "colddamp/lorentz_fit.hpp"
#include "colddamp/psd.hpp"
#include "colddamp/readout.hpp"
#include "colddamp/sde.hpp"
#include "colddamp/spectrum_occupancy.hpp"
#include "colddamp/version.hpp"

// Scenario runner: binds the analytic budget, the simulator, the spectral
// estimators and the calibrations to INI configs, and emits CSV/JSON
// artifacts plus a manifest with content hashes.
namespace colddamp {

inline constexpr int exit_ok = 0;
inline constexpr int exit_invalid = 2;  // config/validation failures
inline constexpr int exit_physics = 3;  // runtime/physics failures
inline constexpr int exit_io = 4;       // filesystem failures

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed = std::nullopt;
    std::optional<int> threads = std::nullopt;
    bool quiet = false;
};

struct ValidationReport {
    bool valid = true;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    std::string text() const {
        std::string s = valid ? "valid\n" : "INVALID\n";
        for (const auto& e : errors) s += "error: " + e + "\n";
        for (const auto& w : warnings) s += "warning: " + w + "\n";
        return s;
    }
};

struct BundledScenario {
    std::string name;
    std::string description;
    std::string text;
};

const std::vector<BundledScenario>& bundled_scenarios();

namespace detail {

inline std::string iso8601_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Removes every file registered with track() unless commit() ran first, so a
// failed run leaves no partial artifacts behind.
class ArtifactSet {
  public:
    ~ArtifactSet() {
        if (committed_) return;
        for (const auto& p : files_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }
    void track(const std::filesystem::path& p) { files_.push_back(p); }
    void commit() { committed_ = true; }
    const std::vector<std::filesystem::path>& files() const { return files_; }

  private:
    std::vector<std::filesystem::path> files_;
    bool committed_ = false;
};

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                         std::size_t n_cols) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw io_error(path.string() + ": empty file");
    std::vector<std::vector<double>> cols(n_cols);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            const std::size_t comma = (c + 1 < n_cols) ? line.find(',', pos) : line.size();
            if (comma == std::string::npos)
                throw io_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(n_cols) + " columns");
            cols[c].push_back(parse_double(std::string_view(line).substr(pos, comma - pos),
                                           path.string() + ":" + std::to_string(lineno)));
            pos = comma + 1;
        }
    }
    return cols;
}

inline std::vector<double> sweep_grid(const Config& cfg) {
    const double start = cfg.get_double("sweep.start");
    const double stop = cfg.get_double("sweep.stop");
    const int points = cfg.get_int("sweep.points");
    const std::string scale = cfg.get_string("sweep.scale", "log");
    if (points < 1) throw std::invalid_argument("sweep.points: empty sweep (need at least 1 point)");
    if (!(stop > start)) throw std::invalid_argument("sweep.stop must exceed sweep.start");
    std::vector<double> grid(static_cast<std::size_t>(points));
    if (scale == "log") {
        if (!(start > 0.0)) throw std::invalid_argument("sweep.start must be > 0 on a log scale");
        const double la = std::log(start), lb = std::log(stop);
        for (int i = 0; i < points; ++i)
            grid[std::size_t(i)] =
                std::exp(la + (points == 1 ? 0.0 : (lb - la) * double(i) / double(points - 1)));
    } else if (scale == "linear") {
        for (int i = 0; i < points; ++i)
            grid[std::size_t(i)] =
                start + (points == 1 ? 0.0 : (stop - start) * double(i) / double(points - 1));
    } else {
        throw std::invalid_argument("sweep.scale must be 'log' or 'linear', got '" + scale + "'");
    }
    return grid;
}

inline OscillatorParams parse_oscillator(const Config& cfg) {
    OscillatorParams osc;
    osc.omega_m = two_pi * cfg.get_double("oscillator.frequency_hz");
    osc.gamma_m = two_pi * cfg.get_double("oscillator.linewidth_hz");
    osc.mass = cfg.get_double("oscillator.mass_kg", 0.0);
    osc.temperature = cfg.get_double("oscillator.temperature_k", 0.0);
    if (cfg.has("oscillator.xzp_m")) osc.x_zp_override = cfg.get_double("oscillator.xzp_m");
    return osc;
}

inline CavityParams parse_cavity(const Config& cfg) {
    CavityParams cav;
    cav.kappa_0 = two_pi * cfg.get_double("cavity.kappa0_hz");
    cav.kappa_ex = two_pi * cfg.get_double("cavity.kappaex_hz");
    cav.gamma_split = two_pi * cfg.get_double("cavity.splitting_hz", 0.0);
    cav.detuning = two_pi * cfg.get_double("cavity.detuning_hz", 0.0);
    cav.wavelength = cfg.get_double("cavity.wavelength_m");
    return cav;
}

inline MeasurementChain parse_chain(const Config& cfg) {
    MeasurementChain chain;
    chain.g0 = two_pi * cfg.get_double("chain.g0_hz");
    chain.eta_d = cfg.get_double("chain.eta_d", 1.0);
    chain.input_power = cfg.get_double("chain.input_power_w");
    chain.c0_extraneous = cfg.get_double("chain.c0_extraneous", 0.0);
    chain.n_imp_extraneous = cfg.get_double("chain.n_imp_extraneous", 0.0);
    chain.n_fb = cfg.get_double("chain.n_fb", 0.0);
    return chain;
}

inline EffectiveChain parse_effective_chain(const Config& cfg, const OscillatorParams& osc) {
    EffectiveChain chain;
    chain.c0 = cfg.get_double("budget.c0");
    chain.c0_ex = cfg.get_double("budget.c0_extraneous", 0.0);
    chain.xi = cfg.get_double("budget.xi");
    chain.n_c = cfg.get_double("budget.photon_number", 0.0);
    chain.n_imp_ex = cfg.get_double("budget.n_imp_extraneous", 0.0);
    chain.n_fb = cfg.get_double("budget.n_fb", 0.0);
    chain.gamma_m = osc.gamma_m;
    return chain;
}

// Budget inputs come in three styles: a physical cavity+chain description, an
// effective-chain description (xi, C0, photon number), or direct occupancies
// (n_tot, n_imp).
inline NoiseBudget parse_budget(const Config& cfg, const OscillatorParams& osc) {
    if (cfg.has("cavity.kappa0_hz")) {
        return noise_budget(osc, parse_cavity(cfg), parse_chain(cfg));
    }
    if (cfg.has("budget.xi")) {
        const double n_th = cfg.get_double("budget.n_th");
        return noise_budget(n_th, parse_effective_chain(cfg, osc));
    }
    const double n_tot = cfg.get_double("budget.n_tot");
    const double n_imp = cfg.get_double("budget.n_imp");
    const double n_imp_ex = cfg.get_double("budget.n_imp_extraneous", 0.0);
    const double n_th = cfg.get_double("budget.n_th", n_tot);
    NoiseBudget b;
    b.n_th = n_th;
    b.n_ba = n_tot - n_th;
    b.n_ba_ex = 0.0;
    b.n_tot = n_tot;
    b.n_imp_shot = n_imp - n_imp_ex;
    b.n_imp_ex = n_imp_ex;
    b.n_imp = n_imp;
    b.n_fb = cfg.get_double("budget.n_fb", 0.0);
    b.gamma_m = osc.gamma_m;
    if (!(b.n_imp > 0.0)) throw std::invalid_argument("budget.n_imp must be > 0");
    if (!(b.n_tot >= 0.0)) throw std::invalid_argument("budget.n_tot must be >= 0");
    b.gamma_meas = b.gamma_m / (16.0 * b.n_imp);
    b.gamma_th = b.n_th * b.gamma_m;
    b.product = 4.0 * std::sqrt(b.n_imp * b.n_tot);
    return b;
}

inline FeedbackSettings parse_feedback(const Config& cfg) {
    FeedbackSettings fb;
    const std::string mode = cfg.get_string("feedback.mode", "off");
    if (mode == "off")
        fb.mode = FeedbackMode::off;
    else if (mode == "velocity")
        fb.mode = FeedbackMode::velocity;
    else if (mode == "delayed-bandpass")
        fb.mode = FeedbackMode::delayed_bandpass;
    else
        throw std::invalid_argument("feedback.mode must be off/velocity/delayed-bandpass, got '" +
                                    mode + "'");
    fb.gain = cfg.get_double("feedback.gain", 0.0);
    fb.delay = cfg.get_double("feedback.delay_s", 0.0);
    fb.bandpass_center = two_pi * cfg.get_double("feedback.center_hz", 0.0);
    fb.bandpass_width = two_pi * cfg.get_double("feedback.width_hz", 0.0);
    return fb;
}

inline SimConfig parse_sim(const Config& cfg, const RunOptions& opt) {
    SimConfig sim;
    sim.osc = parse_oscillator(cfg);
    sim.budget = parse_budget(cfg, sim.osc);
    sim.fb = parse_feedback(cfg);
    sim.dt = cfg.get_double("sim.dt_s");
    sim.duration = cfg.get_double("sim.duration_s");
    sim.burn_in = cfg.get_double("sim.burn_in_s", 0.0);
    sim.seed = opt.seed ? *opt.seed : cfg.get_u64("sim.seed", 1);
    sim.n_trajectories = cfg.get_int("sim.trajectories", 1);
    sim.threads = opt.threads ? *opt.threads : cfg.get_int("sim.threads", 1);
    sim.noiseless = cfg.get_bool("sim.noiseless", false);
    const std::string integ = cfg.get_string("sim.integrator", "semi-implicit-euler");
    if (integ == "semi-implicit-euler")
        sim.integrator = Integrator::semi_implicit_euler;
    else if (integ == "exact-propagator")
        sim.integrator = Integrator::exact_propagator;
    else
        throw std::invalid_argument(
            "sim.integrator must be semi-implicit-euler/exact-propagator, got '" + integ + "'");
    return sim;
}

inline nlohmann::json budget_json(const NoiseBudget& b) {
    nlohmann::json j;
    j["n_th"] = b.n_th;
    j["n_ba"] = b.n_ba;
    j["n_ba_extraneous"] = b.n_ba_ex;
    j["n_tot"] = b.n_tot;
    j["n_imp_shot"] = b.n_imp_shot;
    j["n_imp_extraneous"] = b.n_imp_ex;
    j["n_imp"] = b.n_imp;
    j["n_fb"] = b.n_fb;
    j["gamma_m_hz"] = b.gamma_m / two_pi;
    j["gamma_meas_hz"] = b.gamma_meas / two_pi;
    j["gamma_th_hz"] = b.gamma_th / two_pi;
    j["imprecision_backaction_product"] = b.product;
    return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_file_text(path, j.dump(2) + "\n");
}

inline std::string file_sha256(const std::filesystem::path& path) {
    return sha256_hex(read_file_text(path));
}

struct CsvWriter {
    explicit CsvWriter(std::string header) { text = std::move(header) + "\n"; }
    void row(std::initializer_list<double> vals) {
        bool first = true;
        for (double v : vals) {
            if (!first) text.push_back(',');
            first = false;
            format_double(text, v);
        }
        text.push_back('\n');
    }
    std::string text;
};

// xi can be given directly and also implied by eta_c, eta_d and the mode
// splitting; both derivations are reported when they disagree by > 5%.
inline std::optional<std::string> xi_consistency_warning(const Config& cfg) {
    if (!cfg.has("budget.xi") || !cfg.has("cavity.kappa0_hz") || !cfg.has("chain.eta_d"))
        return std::nullopt;
    const CavityParams cav = parse_cavity(cfg);
    const double xi_given = cfg.get_double("budget.xi");
    const double xi_implied = measurement_ideality(cav, cfg.get_double("chain.eta_d"));
    if (std::abs(xi_given - xi_implied) <= 0.05 * std::max(xi_given, xi_implied)) return std::nullopt;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "budget.xi = %.4g disagrees with eta_c*eta_d*((1-r^2)/(1+r^2))^2 = %.4g "
                  "from [cavity]/[chain] by > 5%%",
                  xi_given, xi_implied);
    return std::string(buf);
}

// -------- scenario modes --------

inline void run_analytic_budget(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                                nlohmann::json& manifest) {
    const OscillatorParams osc = parse_oscillator(cfg);
    osc.validate();
    const NoiseBudget budget = parse_budget(cfg, osc);

    nlohmann::json j;
    j["budget"] = budget_json(budget);
    const auto minimum = minimum_occupancy(budget);
    j["cooling"]["n_m_min"] = minimum.n_m_min;
    j["cooling"]["g_fb_opt"] = minimum.g_fb_opt;
    j["cooling"]["gamma_eff_opt_hz"] = osc.gamma_m * (1.0 + minimum.g_fb_opt) / two_pi;
    const auto gs = ground_state_conditions(budget);
    j["ground_state"]["imprecision_bound_ok"] = gs.necessary_ok;
    j["ground_state"]["imprecision_bound_margin"] = gs.necessary_margin;
    j["ground_state"]["rate_condition_ok"] = gs.rate_ok;
    j["ground_state"]["rate_condition_margin"] = gs.rate_margin;
    j["ground_state"]["reaches_ground_state"] = gs.reaches_ground_state;
    if (cfg.has("cavity.kappa0_hz")) {
        const CavityParams cav = parse_cavity(cfg);
        cav.validate();
        j["readout"]["transmission_resonant"] = transmission(cav);
        j["readout"]["eta_c"] = cav.eta_c();
        const auto dba = dynamic_backaction(osc, cav, parse_chain(cfg));
        j["readout"]["spring_shift_hz"] = dba.spring_shift / two_pi;
        j["readout"]["gamma_ba_hz"] = dba.gamma_ba / two_pi;
    }
    const auto path = opt.out_dir / cfg.get_string("output.report", "budget.json");
    write_json(path, j);
    art.track(path);
    manifest["outputs"][path.filename().string()] = file_sha256(path);
}

inline void run_cooling_sweep(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                              nlohmann::json& manifest) {
    const OscillatorParams osc = parse_oscillator(cfg);
    osc.validate();
    const std::string variable = cfg.get_string("sweep.variable");
    const std::vector<double> grid = sweep_grid(cfg);

    if (variable == "photon_number") {
        // Imprecision-back-action trade-off against probe strength.
        EffectiveChain chain = parse_effective_chain(cfg, osc);
        const double n_th = cfg.get_double("budget.n_th");
        CsvWriter csv("n_c,n_imp,n_tot,product");
        for (const double n_c : grid) {
            chain.n_c = n_c;
            const NoiseBudget b = noise_budget(n_th, chain);
            csv.row({n_c, b.n_imp, b.n_tot, b.product});
        }
        const auto path = opt.out_dir / cfg.get_string("output.csv", "product_vs_photon_number.csv");
        write_file_text(path, csv.text);
        art.track(path);
        manifest["outputs"][path.filename().string()] = file_sha256(path);
    } else if (variable == "gamma_eff") {
        // Closed-loop occupancy against total damping, with the two terms
        // (residual bath + fed-back imprecision) reported separately.
        const NoiseBudget b = parse_budget(cfg, osc);
        CsvWriter csv("gamma_eff_hz,g_fb,n_m,n_m_plus_half,bath_term,imprecision_term");
        for (const double gamma_eff_hz : grid) {
            const double g = two_pi * gamma_eff_hz / osc.gamma_m - 1.0;
            if (g < 0.0)
                throw std::invalid_argument(
                    "sweep.start: gamma_eff below the intrinsic linewidth (gain would be negative)");
            const double bath = (b.n_tot + b.n_fb + 0.5) / (1.0 + g);
            const double imp = b.n_imp * g * g / (1.0 + g);
            csv.row({gamma_eff_hz, g, bath + imp - 0.5, bath + imp, bath, imp});
        }
        const auto path = opt.out_dir / cfg.get_string("output.csv", "occupancy_vs_damping.csv");
        write_file_text(path, csv.text);
        art.track(path);
        manifest["outputs"][path.filename().string()] = file_sha256(path);
    } else if (variable == "gain") {
        const NoiseBudget b = parse_budget(cfg, osc);
        CsvWriter csv("g_fb,gamma_eff_hz,n_m");
        for (const double g : grid)
            csv.row({g, osc.gamma_m * (1.0 + g) / two_pi, phonon_occupancy(b, g)});
        const auto path = opt.out_dir / cfg.get_string("output.csv", "occupancy_vs_gain.csv");
        write_file_text(path, csv.text);
        art.track(path);
        manifest["outputs"][path.filename().string()] = file_sha256(path);
    } else {
        throw std::invalid_argument("sweep.variable must be photon_number/gamma_eff/gain, got '" +
                                    variable + "'");
    }
}

inline void run_simulate(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                         nlohmann::json& manifest) {
    const SimConfig sim = parse_sim(cfg, opt);
    const std::vector<Trajectory> trajectories = simulate(sim);
    manifest["seed"] = sim.seed;

    const std::string stem = cfg.get_string("output.trajectory", "trajectory");
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
        std::string name = stem;
        if (trajectories.size() > 1) {
            char idx[16];
            std::snprintf(idx, sizeof idx, "_%03zu", k);
            name += idx;
        }
        const auto csv_path = opt.out_dir / (name + ".csv");
        write_trajectory_csv(csv_path, trajectories[k]);
        art.track(csv_path);
        manifest["outputs"][csv_path.filename().string()] = file_sha256(csv_path);
        if (cfg.get_bool("output.binary", false)) {
            const auto bin_path = opt.out_dir / (name + ".bin");
            write_trajectory_binary(bin_path, trajectories[k]);
            art.track(bin_path);
            manifest["outputs"][bin_path.filename().string()] = file_sha256(bin_path);
        }
    }

    if (cfg.has("psd.segment_length")) {
        const std::size_t seg = cfg.get_u64("psd.segment_length");
        const double overlap = cfg.get_double("psd.overlap", 0.5);
        const std::string source = cfg.get_string("psd.source", "y");
        PsdAccumulator acc(1.0 / sim.dt, seg, overlap, SpectrumUnits::normalized_position);
        for (const auto& traj : trajectories)
            acc.add(std::span<const double>(source == "u" ? traj.u : traj.y));
        const Psd psd = acc.finalize();
        const auto path = opt.out_dir / cfg.get_string("output.psd", "psd.csv");
        write_psd_csv(path, psd);
        art.track(path);
        manifest["outputs"][path.filename().string()] = file_sha256(path);
    }
}

inline void run_fit(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                    nlohmann::json& manifest) {
    const std::string input = cfg.get_string("fit.input");
    Psd psd = read_psd_csv(input);
    const std::string units = cfg.get_string("fit.units", "arbitrary");
    if (units == "normalized")
        psd.units = SpectrumUnits::normalized_position;
    else if (units == "position")
        psd.units = SpectrumUnits::position;
    else if (units == "frequency")
        psd.units = SpectrumUnits::frequency_noise;
    else if (units == "arbitrary")
        psd.units = SpectrumUnits::arbitrary;
    else
        throw std::invalid_argument("fit.units must be normalized/position/frequency/arbitrary");
    psd.n_averages = cfg.get_int("fit.n_averages", 1);

    FitOptions fopt;
    fopt.allow_negative_peak = cfg.get_bool("fit.allow_negative_peak", false);
    const double f_lo = cfg.get_double("fit.f_lo_hz", psd.freq.front());
    const double f_hi = cfg.get_double("fit.f_hi_hz", psd.freq.back());
    const SpectrumFit fit = fit_lorentzian(psd, f_lo, f_hi, fopt);

    nlohmann::json j;
    j["input"] = input;
    j["input_sha256"] = file_sha256(input);
    j["center_hz"] = fit.omega_center / two_pi;
    j["gamma_eff_hz"] = fit.gamma_eff / two_pi;
    j["peak"] = fit.peak;
    j["floor"] = fit.floor;
    j["center_sigma_hz"] = std::sqrt(std::max(0.0, fit.covariance[0])) / two_pi;
    j["gamma_eff_sigma_hz"] = std::sqrt(std::max(0.0, fit.covariance[5])) / two_pi;
    j["peak_sigma"] = std::sqrt(std::max(0.0, fit.covariance[10]));
    j["floor_sigma"] = std::sqrt(std::max(0.0, fit.covariance[15]));
    j["iterations"] = fit.iterations;
    j["residual_rms"] = fit.residual_rms;
    j["structured_residuals"] = fit.structured_residuals;
    j["negative_peak"] = fit.negative_peak;

    if (psd.units != SpectrumUnits::arbitrary && cfg.has("oscillator.frequency_hz")) {
        const OscillatorParams osc = parse_oscillator(cfg);
        const double g0 = two_pi * cfg.get_double("fit.g0_hz", 0.0);
        const auto occ = extract_occupancies(fit, osc, g0);
        j["occupancy"]["n_tot"] = occ.n_tot;
        j["occupancy"]["n_imp"] = occ.n_imp;
        j["occupancy"]["n_imp_damped"] = occ.n_imp_damped;
        const auto ph = phonon_from_spectrum(fit, osc, g0);
        j["occupancy"]["n_m"] = ph.n_m;
        j["occupancy"]["n_m_sigma"] = ph.sigma;
        j["occupancy"]["squashing_regime"] = ph.squashing_regime;
    }
    const auto path = opt.out_dir / cfg.get_string("output.report", "fit.json");
    write_json(path, j);
    art.track(path);
    manifest["outputs"][path.filename().string()] = file_sha256(path);
}

inline void run_calibrate(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                          nlohmann::json& manifest) {
    const std::string method = cfg.get_string("calibrate.method");
    nlohmann::json j;
    j["method"] = method;
    if (method == "tone") {
        const std::string input = cfg.get_string("calibrate.input");
        Psd psd = read_psd_csv(input);
        psd.n_averages = cfg.get_int("calibrate.n_averages", 1);
        CalibrationTone tone;
        tone.beta = cfg.get_double("tone.beta");
        tone.omega_cal = two_pi * cfg.get_double("tone.frequency_hz");
        tone.transfer_ratio = cfg.get_double("tone.transfer_ratio", 1.0);
        const double n_th = cfg.get_double("calibrate.n_th");
        const G0Estimate est = calibrate_g0(psd, tone, n_th);
        j["input"] = input;
        j["input_sha256"] = file_sha256(input);
        j["g0_hz"] = est.g0 / two_pi;
        j["g0_sigma_hz"] = est.sigma / two_pi;
        j["band_power_mechanical"] = est.area_peak;
        j["band_power_tone"] = est.area_tone;
    } else if (method == "spring") {
        const std::string input = cfg.get_string("calibrate.input");
        const auto cols = read_numeric_csv(input, 2);  // transmission, shift_hz
        std::vector<double> shifts(cols[1].size());
        for (std::size_t i = 0; i < shifts.size(); ++i) shifts[i] = two_pi * cols[1][i];
        const CavityParams cav = parse_cavity(cfg);
        cav.validate();
        const auto est =
            g0_from_spring(cols[0], shifts, cav, cfg.get_double("calibrate.input_power_w"));
        j["input"] = input;
        j["input_sha256"] = file_sha256(input);
        j["g0_hz"] = est.g0 / two_pi;
        j["rms_residual_hz"] = est.rms_residual / two_pi;
        j["points_used"] = est.points_used;
    } else if (method == "splitting") {
        const std::string input = cfg.get_string("calibrate.input");
        const auto cols = read_numeric_csv(input, 2);  // kappa_hz, transmission
        std::vector<double> kappas(cols[0].size());
        for (std::size_t i = 0; i < kappas.size(); ++i) kappas[i] = two_pi * cols[0][i];
        const SplittingFit est = fit_mode_splitting(kappas, cols[1]);
        j["input"] = input;
        j["input_sha256"] = file_sha256(input);
        j["kappa0_hz"] = est.kappa_0 / two_pi;
        j["splitting_hz"] = est.gamma_split / two_pi;
        j["rms_residual"] = est.rms_residual;
    } else if (method == "ringdown") {
        const std::string input = cfg.get_string("calibrate.input");
        const Trajectory traj = read_trajectory_csv(input);
        const double demod = two_pi * cfg.get_double("ringdown.demod_hz");
        const double bw = cfg.get_double("ringdown.bandwidth_hz");
        const RingdownFit est = fit_ringdown(traj, demod, bw);
        j["input"] = input;
        j["input_sha256"] = file_sha256(input);
        j["gamma_m_hz"] = est.gamma_m / two_pi;
        j["gamma_m_sigma_hz"] = est.sigma / two_pi;
        j["window_s"] = {est.t_start, est.t_end};
    } else {
        throw std::invalid_argument("calibrate.method must be tone/spring/splitting/ringdown, got '" +
                                    method + "'");
    }
    const auto path = opt.out_dir / cfg.get_string("output.report", "calibration.json");
    write_json(path, j);
    art.track(path);
    manifest["outputs"][path.filename().string()] = file_sha256(path);
}

inline void run_ringdown(const Config& cfg, const RunOptions& opt, ArtifactSet& art,
                         nlohmann::json& manifest) {
    SimConfig sim = parse_sim(cfg, opt);
    manifest["seed"] = sim.seed;
    const double f_m = sim.osc.omega_m / two_pi;
    const double drive_omega = two_pi * cfg.get_double("drive.frequency_hz", f_m);
    const double drive_amp = cfg.get_double("drive.amplitude", 100.0);
    const double off_time = cfg.get_double("drive.off_time_s");
    const auto trajectories = simulate_ringdown(sim, drive_omega, drive_amp, off_time);

    const std::string stem = cfg.get_string("output.trajectory", "ringdown");
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
        std::string name = stem;
        if (trajectories.size() > 1) {
            char idx[16];
            std::snprintf(idx, sizeof idx, "_%03zu", k);
            name += idx;
        }
        const auto csv_path = opt.out_dir / (name + ".csv");
        write_trajectory_csv(csv_path, trajectories[k]);
        art.track(csv_path);
        manifest["outputs"][csv_path.filename().string()] = file_sha256(csv_path);
    }

    const double demod = two_pi * cfg.get_double("ringdown.demod_hz", f_m);
    const double bw = cfg.get_double("ringdown.bandwidth_hz", f_m / 50.0);
    const RingdownFit fit = fit_ringdown(std::span<const Trajectory>(trajectories), demod, bw);
    nlohmann::json j;
    j["gamma_m_hz"] = fit.gamma_m / two_pi;
    j["gamma_m_sigma_hz"] = fit.sigma / two_pi;
    j["gamma_m_configured_hz"] = sim.osc.gamma_m / two_pi;
    j["window_s"] = {fit.t_start, fit.t_end};
    j["trajectories"] = trajectories.size();
    const auto path = opt.out_dir / cfg.get_string("output.report", "ringdown.json");
    write_json(path, j);
    art.track(path);
    manifest["outputs"][path.filename().string()] = file_sha256(path);
}

}  // namespace detail

// Structural checks without executing: parse errors throw; range and
// consistency findings land in the report.
inline ValidationReport validate_scenario(const Config& cfg) {
    ValidationReport rep;
    const auto fail = [&rep](const std::string& msg) {
        rep.valid = false;
        rep.errors.push_back(msg);
    };
    std::string mode;
    try {
        mode = cfg.get_string("scenario.mode");
    } catch (const std::exception& e) {
        fail(e.what());
        return rep;
    }
    static const char* modes[] = {"analytic-budget", "simulate", "fit",
                                  "calibrate",       "cooling-sweep", "ringdown"};
    if (std::find_if(std::begin(modes), std::end(modes),
                     [&](const char* m) { return mode == m; }) == std::end(modes)) {
        fail("scenario.mode '" + mode + "' is not one of analytic-budget/simulate/fit/calibrate/"
             "cooling-sweep/ringdown");
        return rep;
    }

    try {
        std::string sweep_variable;
        double sweep_first = 0.0;
        if (mode == "cooling-sweep") {
            sweep_variable = cfg.get_string("sweep.variable");
            if (sweep_variable != "photon_number" && sweep_variable != "gamma_eff" &&
                sweep_variable != "gain")
                fail("sweep.variable must be photon_number/gamma_eff/gain");
            sweep_first = detail::sweep_grid(cfg).front();
        }
        if (mode == "analytic-budget" || mode == "cooling-sweep" || mode == "simulate" ||
            mode == "ringdown") {
            const OscillatorParams osc = detail::parse_oscillator(cfg);
            osc.validate();
            // simulate/ringdown re-report these through the sim config below.
            if (mode == "analytic-budget" || mode == "cooling-sweep")
                for (const auto& w : osc.warnings()) rep.warnings.push_back(w);
            if (sweep_variable == "photon_number") {
                // The sweep supplies the photon number, so probe the chain at
                // the first grid point instead of requiring a fixed value.
                EffectiveChain chain = detail::parse_effective_chain(cfg, osc);
                chain.n_c = sweep_first;
                const NoiseBudget b = noise_budget(cfg.get_double("budget.n_th"), chain);
                if (!(b.n_imp > 0.0)) fail("budget: n_imp must be > 0");
            } else {
                const NoiseBudget b = detail::parse_budget(cfg, osc);
                if (!(b.n_imp > 0.0)) fail("budget: n_imp must be > 0");
            }
            if (sweep_variable == "gamma_eff" && two_pi * cfg.get_double("sweep.start") < osc.gamma_m)
                fail("sweep.start: gamma_eff below the intrinsic linewidth");
        }
        if (mode == "simulate" || mode == "ringdown") {
            RunOptions defaults;
            SimConfig sim = detail::parse_sim(cfg, defaults);
            sim.validate(mode == "simulate");
            for (const auto& w : sim.warnings()) rep.warnings.push_back(w);
        }
        if (mode == "simulate" && cfg.has("psd.segment_length")) {
            // Same constraints the spectral stage enforces at run time.
            PsdAccumulator probe(1.0, cfg.get_u64("psd.segment_length"),
                                 cfg.get_double("psd.overlap", 0.5));
            (void)probe;
            const std::string source = cfg.get_string("psd.source", "y");
            if (source != "u" && source != "y") fail("psd.source must be 'u' or 'y'");
        }
        if (mode == "ringdown") {
            (void)cfg.get_double("drive.off_time_s");
            (void)cfg.get_double("drive.frequency_hz", 0.0);
            (void)cfg.get_double("drive.amplitude", 100.0);
            (void)cfg.get_double("ringdown.demod_hz", 0.0);
            (void)cfg.get_double("ringdown.bandwidth_hz", 0.0);
        }
        if (mode == "fit") {
            (void)cfg.get_string("fit.input");
            const std::string units = cfg.get_string("fit.units", "arbitrary");
            if (units != "normalized" && units != "position" && units != "frequency" &&
                units != "arbitrary")
                fail("fit.units must be normalized/position/frequency/arbitrary");
            (void)cfg.get_int("fit.n_averages", 1);
            (void)cfg.get_bool("fit.allow_negative_peak", false);
            if (cfg.has("fit.f_lo_hz") && cfg.has("fit.f_hi_hz") &&
                !(cfg.get_double("fit.f_hi_hz") > cfg.get_double("fit.f_lo_hz")))
                fail("fit window: need f_hi_hz > f_lo_hz");
            if (cfg.has("oscillator.frequency_hz")) {
                const OscillatorParams osc = detail::parse_oscillator(cfg);
                osc.validate();
                (void)cfg.get_double("fit.g0_hz", 0.0);
            }
        }
        if (mode == "calibrate") {
            const std::string method = cfg.get_string("calibrate.method");
            if (method != "tone" && method != "spring" && method != "splitting" &&
                method != "ringdown")
                fail("calibrate.method must be tone/spring/splitting/ringdown");
            (void)cfg.get_string("calibrate.input");
            if (method == "tone") {
                if (!(cfg.get_double("tone.beta") > 0.0)) fail("tone.beta must be > 0");
                if (!(cfg.get_double("tone.frequency_hz") > 0.0))
                    fail("tone.frequency_hz must be > 0");
                (void)cfg.get_double("tone.transfer_ratio", 1.0);
                if (!(cfg.get_double("calibrate.n_th") > 0.0)) fail("calibrate.n_th must be > 0");
                (void)cfg.get_int("calibrate.n_averages", 1);
            } else if (method == "spring") {
                detail::parse_cavity(cfg).validate();
                if (!(cfg.get_double("calibrate.input_power_w") > 0.0))
                    fail("calibrate.input_power_w must be > 0");
            } else if (method == "ringdown") {
                (void)cfg.get_double("ringdown.demod_hz");
                (void)cfg.get_double("ringdown.bandwidth_hz");
            }
        }
        // Touch the artifact-name keys the run path reads so a clean config
        // validates without unused-key noise.
        (void)cfg.get_string("scenario.name", "unnamed");
        (void)cfg.get_string("output.manifest", "manifest.json");
        if (mode == "analytic-budget") (void)cfg.get_string("output.report", "budget.json");
        if (mode == "cooling-sweep") (void)cfg.get_string("output.csv", "");
        if (mode == "simulate") {
            (void)cfg.get_string("output.trajectory", "trajectory");
            (void)cfg.get_bool("output.binary", false);
            (void)cfg.get_string("output.psd", "psd.csv");
        }
        if (mode == "fit" || mode == "calibrate" || mode == "ringdown")
            (void)cfg.get_string("output.report", "");
        if (mode == "ringdown") (void)cfg.get_string("output.trajectory", "ringdown");
        if (const auto w = detail::xi_consistency_warning(cfg)) rep.warnings.push_back(*w);
    } catch (const std::exception& e) {
        fail(e.what());
    }
    for (const auto& k : cfg.unused_keys()) rep.warnings.push_back("unused key '" + k + "'");
    return rep;
}

// Executes a parsed scenario; throws on failure after removing any partial
// outputs.  Returns every artifact written, the manifest last.
inline std::vector<std::filesystem::path> run_scenario(const Config& cfg, const RunOptions& opt) {
    const std::string mode = cfg.get_string("scenario.mode");
    const std::string name = cfg.get_string("scenario.name", "unnamed");

    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + opt.out_dir.string());

    nlohmann::json manifest;
    manifest["scenario"] = name;
    manifest["mode"] = mode;
    manifest["tool_version"] = version_string;
    manifest["timestamp"] = detail::iso8601_utc_now();
    manifest["config_source"] = cfg.source();
    manifest["config_sha256"] = detail::sha256_hex(cfg.canonical_text());
    manifest["outputs"] = nlohmann::json::object();

    detail::ArtifactSet art;
    if (mode == "analytic-budget")
        detail::run_analytic_budget(cfg, opt, art, manifest);
    else if (mode == "cooling-sweep")
        detail::run_cooling_sweep(cfg, opt, art, manifest);
    else if (mode == "simulate")
        detail::run_simulate(cfg, opt, art, manifest);
    else if (mode == "fit")
        detail::run_fit(cfg, opt, art, manifest);
    else if (mode == "calibrate")
        detail::run_calibrate(cfg, opt, art, manifest);
    else if (mode == "ringdown")
        detail::run_ringdown(cfg, opt, art, manifest);
    else
        throw std::invalid_argument("scenario.mode '" + mode +
                                    "' is not one of analytic-budget/simulate/fit/calibrate/"
                                    "cooling-sweep/ringdown");

    if (!opt.quiet) {
        if (const auto w = detail::xi_consistency_warning(cfg))
            std::cerr << "warning: " << *w << "\n";
        for (const auto& k : cfg.unused_keys()) std::cerr << "warning: unused key '" << k << "'\n";
    }

    const auto manifest_path = opt.out_dir / cfg.get_string("output.manifest", "manifest.json");
    detail::write_json(manifest_path, manifest);
    art.track(manifest_path);
    art.commit();

    std::vector<std::filesystem::path> out = art.files();
    return out;
}

inline const std::vector<BundledScenario>& bundled_scenarios_impl() {
    static const std::vector<BundledScenario> list = {
        {"figure2",
         "imprecision-back-action product vs probe photon number (closed form)",
         R"(# Noise-budget trade-off: imprecision-back-action product against probe
# photon number, evaluated from the closed-form budget model.
[scenario]
name = figure2
mode = cooling-sweep

[oscillator]
frequency_hz = 4.3e6
linewidth_hz = 5.7

[budget]
n_th = 2.1e4
xi = 0.23
c0 = 0.31
c0_extraneous = 0.56
n_imp_extraneous = 0.70e-5
n_fb = 0

[sweep]
variable = photon_number
start = 1e1
stop = 1e6
points = 121
scale = log

[output]
csv = product_vs_photon_number.csv
)"},
        {"figure3",
         "closed-loop phonon occupancy vs effective damping (closed form)",
         R"(# Feedback-cooling curve: closed-loop phonon occupancy against effective
# damping rate, evaluated from the closed-form occupancy model.
[scenario]
name = figure3
mode = cooling-sweep

[oscillator]
frequency_hz = 4.3e6
linewidth_hz = 5.7

[budget]
n_tot = 2.4e4
n_imp = 2.9e-4
n_fb = 0

[sweep]
variable = gamma_eff
start = 1e2
stop = 1e7
points = 141
scale = log

[output]
csv = occupancy_vs_damping.csv
)"}};
    return list;
}

inline const std::vector<BundledScenario>& bundled_scenarios() { return bundled_scenarios_impl(); }

// `run figure2` works from any directory: bundled names resolve to embedded
// text, anything else is a filesystem path.
inline Config load_scenario_config(const std::string& name_or_path) {
    namespace fs = std::filesystem;
    if (!fs::exists(name_or_path)) {
        for (const auto& s : bundled_scenarios()) {
            if (s.name == name_or_path) {
                Config cfg = Config::parse(s.text, s.name + " (bundled)");
                cfg.apply_env_overrides();
                return cfg;
            }
        }
    }
    return Config::load(name_or_path);
}

}  // namespace colddamp
