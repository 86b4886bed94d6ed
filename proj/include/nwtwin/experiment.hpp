#pragma once

// End-to-end experiment pipelines: locked scenes, thermal-noise and
// swept-response measurements, raster maps (locked scan maps and fast
// triplet force maps) and tracked line scans. These are the recipes the
// CLI exposes and the closed loops the estimation chain is validated
// against.
//
// Phase conventions: complex amplitudes are exp(-i omega t)
// coefficients (the mechanics::susceptibility convention); a phasor
// (F_I, F_Q) corresponds to the time force F_I cos(wt) - F_Q sin(wt),
// and a lock-in demodulator output d maps back to the amplitude as
// conj(2 d).

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/cavity.hpp"
#include "nwtwin/config.hpp"
#include "nwtwin/errors.hpp"
#include "nwtwin/estimation.hpp"
#include "nwtwin/mechanics.hpp"
#include "nwtwin/optoforce.hpp"
#include "nwtwin/psd.hpp"
#include "nwtwin/scan.hpp"
#include "nwtwin/servo.hpp"

namespace nwtwin::experiment {

using cplx = std::complex<double>;

// A locked cavity + readout context at one wire position.
struct Scene {
    cavity::FieldSolution locked;
    mechanics::ModePair modes;
    servo::ProbeReflection probe;
    Eigen::Vector2d e_beta;
    double noise_floor = 0.0; // m^2/Hz displacement-equivalent
};

inline Scene make_scene(const config::ExperimentConfig& cfg,
                        const Eigen::Vector3d& wire_position) {
    cavity::NanowireScatterer wire = cfg.wire;
    wire.tip_position = wire_position;
    Scene sc;
    sc.locked = cavity::solve_cavity(cfg.geometry, wire, cfg.input_power);
    sc.modes = cfg.modes;
    sc.probe = servo::probe_reflection(wire_position, cfg.probe);
    if (!sc.probe.e_beta.defined)
        throw EstimationError("make_scene: measurement vector undefined at this position");
    sc.e_beta = sc.probe.e_beta.direction();
    sc.noise_floor = sc.probe.e_beta.noise_floor;
    return sc;
}

inline Scene make_scene(const config::ExperimentConfig& cfg) {
    return make_scene(cfg, cfg.wire.tip_position);
}

// Largest dt accepted by the trajectory integrator, rounded to give an
// integer sample rate.
inline double trajectory_dt(const mechanics::ModePair& modes) {
    const double limit = constants::two_pi / (20.0 * std::max(modes.omega1, modes.omega2));
    const double fs = std::ceil(1.1 / limit);
    return 1.0 / fs;
}

// Brownian-motion record through the projected readout, Welch PSD.
struct ThermalNoiseResult {
    psd::Spectrum spectrum;
    mechanics::Trajectory trajectory;
    Eigen::Vector2d e_beta;
};

// The full-rate integrator output is subsampled before the Welch
// estimate to reach resolution bandwidths comparable to the mechanical
// linewidth (subsampling, not averaging, so narrow peaks keep their
// height; both modes stay far below the reduced Nyquist frequency).
inline ThermalNoiseResult measure_thermal_noise(const config::ExperimentConfig& cfg,
                                                const Scene& scene, double duration,
                                                std::uint64_t seed,
                                                std::size_t segment = 1 << 17,
                                                int subsample = 8) {
    const double dt = trajectory_dt(scene.modes);
    if (subsample < 1) throw std::invalid_argument("measure_thermal_noise: bad subsample");
    if (0.5 / (dt * subsample) < 1.3 * ordinary(std::max(scene.modes.omega1, scene.modes.omega2)))
        throw std::invalid_argument("measure_thermal_noise: subsample violates Nyquist margin");
    ThermalNoiseResult out;
    out.e_beta = scene.e_beta;
    out.trajectory = mechanics::simulate_trajectory(scene.modes, nullptr, dt, duration, seed,
                                                    scene.probe.e_beta,
                                                    /*store_displacement=*/false);
    if (subsample > 1) {
        std::vector<double> thin;
        thin.reserve(out.trajectory.readout.size() / subsample + 1);
        for (std::size_t i = 0; i < out.trajectory.readout.size(); i += subsample)
            thin.push_back(out.trajectory.readout[i]);
        out.trajectory.readout = std::move(thin);
        out.trajectory.dt = dt * subsample;
    }
    out.spectrum = psd::welch(out.trajectory.readout, 1.0 / out.trajectory.dt, segment);
    (void)cfg;
    return out;
}

// Swept-tone response measurement (vector-network-analyzer style): for
// each drive frequency, intensity-modulate the pump, integrate the
// driven + thermal trajectory, demodulate the projected readout at the
// drive tone and collect the complex response.
inline estimation::ResponseDataset measure_response(const config::ExperimentConfig& cfg,
                                                    const Scene& scene,
                                                    const std::vector<double>& frequencies_hz,
                                                    double dp, std::uint64_t seed,
                                                    double duration_per_point = 0.25) {
    cavity::NanowireScatterer wire = cfg.wire;
    wire.tip_position = scene.locked.wire_position;
    const double dt = trajectory_dt(scene.modes);
    const double fs = 1.0 / dt;
    const double tau = duration_per_point / 12.0;

    estimation::ResponseDataset ds;
    ds.drive = estimation::DriveKind::SweptTone;
    ds.p0 = cfg.input_power;
    ds.dp = dp;
    ds.e_beta = scene.e_beta;
    ds.frequencies_hz = frequencies_hz;
    ds.responses.resize(frequencies_hz.size());

    for (std::size_t k = 0; k < frequencies_hz.size(); ++k) {
        const double f = frequencies_hz[k];
        const double w = angular(f);
        const auto mf =
            optoforce::modulated_force(cfg.geometry, wire, cfg.input_power, dp, w,
                                       cfg.photothermal);
        const Eigen::Vector2d fi = mf.in_phase, fq = mf.quadrature;
        auto force = [&](double t) -> Eigen::Vector2d {
            return fi * std::cos(w * t) - fq * std::sin(w * t);
        };
        const std::uint64_t pt_seed = seed ^ (0x9e3779b97f4a7c15ull * (k + 1));
        auto traj = mechanics::simulate_trajectory(scene.modes, force, dt, duration_per_point,
                                                   pt_seed, scene.probe.e_beta);
        const auto demod = servo::lockin_demodulate(traj.readout, fs, f, tau);
        cplx acc = 0.0;
        const std::size_t start = demod.size() / 2;
        for (std::size_t i = start; i < demod.size(); ++i) acc += demod[i];
        acc /= double(demod.size() - start);
        ds.responses[k] = std::conj(2.0 * acc);
    }
    return ds;
}

// The modulated-force phasor actually injected at the scene position
// (evaluated at a reference frequency).
inline mechanics::ForcePhasor injected_phasor(const config::ExperimentConfig& cfg,
                                              const Eigen::Vector3d& position, double dp,
                                              double omega) {
    cavity::NanowireScatterer wire = cfg.wire;
    wire.tip_position = position;
    const auto mf =
        optoforce::modulated_force(cfg.geometry, wire, cfg.input_power, dp, omega,
                                   cfg.photothermal);
    mechanics::ForcePhasor ph;
    ph.in_phase = mf.in_phase;
    ph.quadrature = mf.quadrature;
    return ph;
}

namespace detail {

inline Eigen::Vector3d pixel_position(const config::ExperimentConfig& cfg, double fast,
                                      double slow) {
    Eigen::Vector3d pos = cfg.wire.tip_position;
    pos.z() = fast;
    switch (cfg.scan_plan.plane) {
        case scan::ScanPlane::XZ: pos.x() = slow; break;
        case scan::ScanPlane::YZ: pos.y() = slow; break;
        case scan::ScanPlane::Axis1D: break;
    }
    return pos;
}

inline void stamp_metadata(const config::ExperimentConfig& cfg, scan::ChannelMap& map) {
    map.config_hash = cfg.hash;
    map.metadata["omega0"] = cfg.geometry.omega0();
    map.metadata["cavity_length"] = cfg.geometry.length;
    map.metadata["wavelength"] = cfg.geometry.wavelength;
    map.metadata["input_power"] = cfg.input_power;
    map.metadata["empty_linewidth"] = cfg.geometry.empty_linewidth();
}

} // namespace detail

// Locked raster scan: per pixel, position the wire, solve the cavity,
// settle the lock loop on the shifted resonance (plus slow drift) and
// record the optical channels. The "cavity_shift" channel is the piezo
// correction in meters.
inline scan::ChannelMap run_scan_map(const config::ExperimentConfig& cfg) {
    const auto& plan = cfg.scan_plan;
    const double omega0 = cfg.geometry.omega0();
    const double half_width_len =
        0.5 * cfg.geometry.empty_linewidth() * cfg.geometry.length / omega0;
    const int settle_steps = int(std::ceil(0.005 * cfg.lock.control_rate));

    servo::LoopStepper loop;
    long call_index = 0;
    cavity::NanowireScatterer wire = cfg.wire;

    auto pipeline = [&](double fast, double slow, std::uint64_t) -> scan::PixelValues {
        const long idx = call_index++;
        wire.tip_position = detail::pixel_position(cfg, fast, slow);
        const auto sol = cavity::solve_cavity(cfg.geometry, wire, cfg.input_power);

        const double t_logical = double(idx) * plan.dwell;
        const double target = sol.equivalent_length_shift + cfg.drift(t_logical);
        if (std::abs(target - loop.correction()) > 1.5 * half_width_len)
            loop.reacquire(target, cfg.lock);
        for (int k = 0; k < settle_steps; ++k) loop.step(target, cfg.lock, half_width_len);

        scan::PixelValues vals;
        vals["transmission"] = sol.transmission;
        vals["scatter"] = sol.scatter_fraction;
        vals["cavity_shift"] = loop.correction();
        vals["linewidth"] = sol.linewidth;
        vals["resonance_shift"] = sol.resonance_shift;
        vals["force_z"] = optoforce::maxwell_force(sol);
        if (!plan.channels.empty()) {
            scan::PixelValues filtered;
            for (const auto& name : plan.channels)
                if (vals.count(name)) filtered[name] = vals[name];
            return filtered;
        }
        return vals;
    };

    auto map = scan::raster_scan(plan, pipeline);
    detail::stamp_metadata(cfg, map);
    map.units = {{"transmission", "1"},   {"scatter", "1"},          {"cavity_shift", "m"},
                 {"linewidth", "rad/s"},  {"resonance_shift", "rad/s"}, {"force_z", "N"}};
    return map;
}

// Fast force map: per pixel, triplet blocks around each mechanical mode
// are synthesized from the local modulated force + thermal noise and
// fitted; the two complex mode amplitudes give the force vector.
inline scan::ChannelMap run_force_map(const config::ExperimentConfig& cfg, double dp) {
    const auto& plan = cfg.scan_plan;
    const auto& est = cfg.estimation;
    cavity::NanowireScatterer wire = cfg.wire;

    auto pipeline = [&](double fast, double slow, std::uint64_t pixel_seed) -> scan::PixelValues {
        wire.tip_position = detail::pixel_position(cfg, fast, slow);
        const auto probe = servo::probe_reflection(wire.tip_position, cfg.probe);
        if (!probe.e_beta.defined)
            throw scan::PixelFailure(2, "readout gradient below threshold");
        const Eigen::Vector2d e_beta = probe.e_beta.direction();

        const auto mf = optoforce::modulated_force(cfg.geometry, wire, cfg.input_power, dp,
                                                   cfg.modes.omega1, cfg.photothermal);
        mechanics::ForcePhasor df;
        df.in_phase = mf.in_phase;
        df.quadrature = mf.quadrature;

        std::mt19937_64 rng(pixel_seed);
        Eigen::Vector2cd f_est = Eigen::Vector2cd::Zero();
        double freq1 = 0.0, q1 = 0.0;
        for (int mode = 1; mode <= 2; ++mode) {
            const double fc = ordinary(cfg.modes.omega(mode));
            const std::array<double, 3> tones = {fc - est.triplet_spacing, fc,
                                                 fc + est.triplet_spacing};
            const auto amps = estimation::synthesize_triplet_block(
                cfg.modes, e_beta, df, tones, est.block_length, probe.e_beta.noise_floor, rng);
            estimation::TripletPrior prior;
            prior.omega = cfg.modes.omega(mode);
            prior.gamma = cfg.modes.gamma(mode);
            prior.mass = cfg.modes.effective_mass;
            prior.drive_projection = e_beta.dot(cfg.modes.axis(mode));
            if (std::abs(prior.drive_projection) < 1e-3)
                throw scan::PixelFailure(3, "mode invisible to the readout");
            // non-converged fits at near-zero force are kept (the scale is
            // noise-limited there); only genuinely broken fits are masked
            const auto te = estimation::triplet_estimate(tones, amps, prior);
            if (!std::isfinite(std::abs(te.scale)))
                throw scan::PixelFailure(3, "triplet fit diverged");
            const Eigen::Vector2d ei = cfg.modes.axis(mode);
            f_est += te.scale * ei.cast<cplx>();
            if (mode == 1) {
                freq1 = ordinary(te.omega);
                q1 = te.omega / te.gamma;
            }
        }
        scan::PixelValues vals;
        vals["force"] = f_est.norm();
        vals["force_injected"] = df.magnitude();
        vals["frequency1"] = freq1;
        vals["q1"] = q1;
        return vals;
    };

    auto map = scan::raster_scan(plan, pipeline);
    detail::stamp_metadata(cfg, map);
    map.metadata["modulation_power"] = dp;
    map.units = {{"force", "N"}, {"force_injected", "N"}, {"frequency1", "Hz"}, {"q1", "1"}};
    return map;
}

// Tracked line scan along e_z: the mode-1 frequency is softened by the
// local force-field gradient; the soft peak-tracking loop follows it
// from triplet side-tone imbalance, block by block.
struct TrackLineResult {
    std::vector<double> z;            // m
    std::vector<double> tracked_hz;   // tracker center at end of pixel
    std::vector<double> injected_hz;  // true (softened) mode-1 frequency
    std::vector<double> gradient_hz;  // shift derived from the force gradient
    std::vector<double> force;        // N, triplet estimate at last block
};

inline TrackLineResult track_line(const config::ExperimentConfig& cfg, double z_min, double z_max,
                                  int npoints, double dp, int blocks_per_point,
                                  std::uint64_t seed) {
    // true force profile and its gradient-derived softening
    const auto prof = optoforce::axial_force_profile(cfg.geometry, cfg.wire, z_min, z_max,
                                                     npoints, cfg.input_power);
    merit::OscillatorParams osc{cfg.modes.effective_mass, cfg.modes.omega1,
                                cfg.modes.omega1 / cfg.modes.gamma1, cfg.modes.temperature};
    const auto rel = optoforce::gradient_frequency_shift(prof, osc, cfg.geometry.wavelength);
    const double ez_proj = cfg.modes.axis(1).x(); // force gradient acts along e_z
    const double f1 = ordinary(cfg.modes.omega1);

    estimation::TrackerState tracker;
    tracker.center_hz = f1;
    tracker.reference_hz = f1;
    tracker.gain = cfg.estimation.tracker_gain;
    tracker.max_step_hz = cfg.estimation.tracker_max_step;

    TrackLineResult out;
    std::mt19937_64 rng(seed);
    cavity::NanowireScatterer wire = cfg.wire;
    for (int i = 0; i < npoints; ++i) {
        if (!prof.valid[i]) continue;
        wire.tip_position.z() = prof.z[i];
        const double shift_rel = ez_proj * ez_proj * rel[i];
        mechanics::ModePair local = cfg.modes;
        local.omega1 = cfg.modes.omega1 * (1.0 + shift_rel);
        local.gamma1 = local.omega1 / (cfg.modes.omega1 / cfg.modes.gamma1);

        const auto probe = servo::probe_reflection(wire.tip_position, cfg.probe);
        if (!probe.e_beta.defined) continue;
        const Eigen::Vector2d e_beta = probe.e_beta.direction();
        const auto mf = optoforce::modulated_force(cfg.geometry, wire, cfg.input_power, dp,
                                                   local.omega1, cfg.photothermal);
        mechanics::ForcePhasor df;
        df.in_phase = mf.in_phase;
        df.quadrature = mf.quadrature;

        estimation::TripletEstimate last{};
        for (int b = 0; b < blocks_per_point; ++b) {
            const double fc = tracker.center_hz;
            const std::array<double, 3> tones = {fc - cfg.estimation.triplet_spacing, fc,
                                                 fc + cfg.estimation.triplet_spacing};
            const auto amps = estimation::synthesize_triplet_block(
                local, e_beta, df, tones, cfg.estimation.block_length,
                probe.e_beta.noise_floor, rng);
            estimation::TripletPrior prior;
            prior.omega = angular(fc);
            prior.gamma = local.gamma1;
            prior.mass = local.effective_mass;
            prior.drive_projection = e_beta.dot(local.axis(1));
            last = estimation::triplet_estimate(tones, amps, prior);
            estimation::peak_tracker_update(tracker, std::abs(amps[0]), std::abs(amps[2]));
        }
        out.z.push_back(prof.z[i]);
        out.tracked_hz.push_back(tracker.center_hz);
        out.injected_hz.push_back(ordinary(local.omega1));
        out.gradient_hz.push_back(f1 * (1.0 + shift_rel));
        out.force.push_back(last.force_magnitude);
    }
    return out;
}

} // namespace nwtwin::experiment
