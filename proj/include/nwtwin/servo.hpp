#pragma once

// Simulated cavity lock: lock-in error synthesis, dual PI control on
// fast/slow piezo paths, and the visible-probe reflection readout model
// that defines the measurement vector.

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/constants.hpp"
#include "nwtwin/mechanics.hpp"

namespace nwtwin::servo {

// Mix with exp(-i 2 pi f t) and first-order low-pass with time constant
// tau. A pure tone at f of amplitude A settles to magnitude A/2; group
// delay is tau.
inline std::vector<std::complex<double>> lockin_demodulate(const std::vector<double>& signal,
                                                           double sample_rate, double f,
                                                           double tau) {
    if (!(sample_rate >= 10.0 * f))
        throw std::invalid_argument("lockin_demodulate: sample rate must be >= 10 f");
    if (!(tau > 0.0)) throw std::invalid_argument("lockin_demodulate: tau must be positive");
    const double dt = 1.0 / sample_rate;
    const double alpha = dt / tau;
    std::vector<std::complex<double>> out(signal.size());
    std::complex<double> y = 0.0;
    for (std::size_t k = 0; k < signal.size(); ++k) {
        const double phase = -constants::two_pi * f * double(k) * dt;
        const std::complex<double> mixed =
            signal[k] * std::complex<double>(std::cos(phase), std::sin(phase));
        y += alpha * (mixed - y);
        out[k] = y;
    }
    return out;
}

// Error signal from a dithered transmission record: demodulated
// component in phase with the sin(2 pi f t) dither, proportional to
// dT/d(length) and zero-crossing at resonance.
inline std::vector<double> synthesize_error_signal(const std::vector<double>& transmission,
                                                   double sample_rate, double dither_freq,
                                                   double tau) {
    const auto base = lockin_demodulate(transmission, sample_rate, dither_freq, tau);
    std::vector<double> err(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) err[k] = -2.0 * base[k].imag();
    return err;
}

struct PiPath {
    double kp = 0.0;
    double ki = 0.0;    // 1/s
    double range = 0.0; // m
};

struct LockConfig {
    double demod_frequency = 250e3;     // Hz
    double demod_time_constant = 50e-6; // s
    double control_rate = 100e3;        // Hz
    PiPath pi_fast{0.05, constants::two_pi * 2e3, 100e-9};
    PiPath pi_slow{0.0, constants::two_pi * 5.0, 5e-6};
    double loop_bandwidth_target = 2e3; // Hz
    double dither_amplitude = 0.0;      // m; 0 = slope computed analytically

    // Closed-loop gain of the fast path at omega (rad/s), magnitude of
    // K/(1+K) for the dominantly integrating controller.
    double closed_loop_gain(double omega) const {
        const std::complex<double> s(0.0, omega);
        const std::complex<double> k = pi_fast.kp + pi_fast.ki / s;
        const std::complex<double> filt = 1.0 / (1.0 + s * demod_time_constant);
        const std::complex<double> l = k * filt;
        return std::abs(l / (1.0 + l));
    }
};

struct DriftModel {
    double linear_rate = 0.0;    // m/s
    double sine_amplitude = 0.0; // m
    double sine_period = 1200.0; // s
    double sine_phase = 0.0;

    double operator()(double t) const {
        double d = linear_rate * t;
        if (sine_amplitude != 0.0)
            d += sine_amplitude * std::sin(constants::two_pi * t / sine_period + sine_phase);
        return d;
    }
};

// Plant seen by the lock: a cavity lineshape of linewidth kappa plus a
// time-dependent wire/mechanical length shift.
struct LockScene {
    double kappa;         // rad/s
    double omega0;        // rad/s
    double cavity_length; // m
    std::function<double(double)> extra_length_shift; // m, e.g. wire-induced
};

struct LockResult {
    std::vector<double> time;
    std::vector<double> fast;     // m
    std::vector<double> slow;     // m
    std::vector<double> residual; // rad/s detuning
    bool locked = true;
    bool lock_lost = false;
    double residual_rms = 0.0; // rad/s

    double total_correction() const {
        return (fast.empty() ? 0.0 : fast.back()) + (slow.empty() ? 0.0 : slow.back());
    }
};

// Persistent dual-PI loop state, advanced one control period at a
// time. The 250 kHz dither is abstracted into the per-step error: the
// local lineshape slope response, normalized to unit small-signal gain
// in length units, saturating away from resonance like the derivative
// of a Lorentzian.
struct LoopStepper {
    double i_fast = 0.0, i_slow = 0.0;
    double u_fast = 0.0, u_slow = 0.0;
    double filt = 0.0;

    double correction() const { return u_fast + u_slow; }

    // target_len is the total length offset the loop must follow;
    // returns the residual length error after this step's output.
    double step(double target_len, const LockConfig& cfg, double half_width_len) {
        const double dt = 1.0 / cfg.control_rate;
        const double alpha = dt / std::max(cfg.demod_time_constant, dt);
        const double e_len = target_len - u_fast - u_slow;

        const double u = e_len / half_width_len;
        const double raw = e_len / ((1.0 + u * u) * (1.0 + u * u));
        filt += alpha * (raw - filt);

        i_fast += cfg.pi_fast.ki * dt * filt;
        u_fast = std::clamp(cfg.pi_fast.kp * filt + i_fast, -cfg.pi_fast.range, cfg.pi_fast.range);
        i_fast = std::clamp(i_fast, -cfg.pi_fast.range, cfg.pi_fast.range); // anti-windup
        // slow path offloads the fast one
        i_slow += cfg.pi_slow.ki * dt * (u_fast + cfg.pi_slow.kp * filt);
        u_slow = std::clamp(i_slow, -cfg.pi_slow.range, cfg.pi_slow.range);
        return target_len - u_fast - u_slow;
    }

    // Lock acquisition: jump the slow integrator onto the target (the
    // hardware analogue is a piezo sweep until the error crosses zero),
    // leaving the fast path to absorb the residual.
    void reacquire(double target_len, const LockConfig& cfg) {
        i_slow = std::clamp(target_len - u_fast, -cfg.pi_slow.range, cfg.pi_slow.range);
        u_slow = i_slow;
        filt = 0.0;
    }
};

// Discrete-time dual PI lock run against a drifting scene.
inline LockResult run_lock(const LockScene& scene, const DriftModel& drift,
                           const LockConfig& cfg, double duration) {
    if (!(scene.kappa > 0.0) || !(scene.cavity_length > 0.0) || !(scene.omega0 > 0.0))
        throw std::invalid_argument("run_lock: invalid scene");
    const double dt = 1.0 / cfg.control_rate;
    const std::size_t n = static_cast<std::size_t>(std::ceil(duration / dt));
    // half linewidth expressed as a length error
    const double half_width_len = 0.5 * scene.kappa * scene.cavity_length / scene.omega0;

    LockResult res;
    res.time.resize(n);
    res.fast.resize(n);
    res.slow.resize(n);
    res.residual.resize(n);

    LoopStepper loop;
    double sum_sq = 0.0;
    std::size_t out_of_range = 0;
    const std::size_t loss_count = static_cast<std::size_t>(
        std::ceil(10.0 / std::max(cfg.loop_bandwidth_target, 1.0) / dt));

    for (std::size_t k = 0; k < n; ++k) {
        const double t = k * dt;
        const double extra = scene.extra_length_shift ? scene.extra_length_shift(t) : 0.0;
        const double e_len = drift(t) + extra - loop.u_fast - loop.u_slow;
        const double detuning = -scene.omega0 / scene.cavity_length * e_len;

        loop.step(drift(t) + extra, cfg, half_width_len);

        res.time[k] = t;
        res.fast[k] = loop.u_fast;
        res.slow[k] = loop.u_slow;
        res.residual[k] = detuning;
        sum_sq += detuning * detuning;

        if (std::abs(detuning) > scene.kappa / 2.0) {
            if (++out_of_range > loss_count) res.lock_lost = true;
        } else {
            out_of_range = 0;
        }
    }
    res.residual_rms = std::sqrt(sum_sq / double(n));
    res.locked = !res.lock_lost;
    return res;
}

struct ProbeReadoutModel {
    double probe_wavelength = 633e-9; // m
    double visibility = 0.6;          // 0..1
    double phase_offset = 0.0;        // rad
    double envelope_waist = 2.0e-6;   // m
    double mean_power = 2e-6;         // W
    double power_noise_psd = 0.0;     // W^2/Hz on the photodiode
    double displacement_noise_floor = 0.0; // m^2/Hz added at the readout
    double gradient_threshold = 1e-3; // W/m below which e_beta is undefined
};

struct ProbeReflection {
    double power;             // W
    Eigen::Vector2d gradient; // W/m, (z, x) components
    mechanics::MeasurementVector e_beta;
};

// P_R(r) = Pbar [1 + V cos(2 k_p z + phi0)] exp(-2 x^2 / w_p^2); the
// measurement vector is the normalized local gradient.
inline ProbeReflection probe_reflection(const Eigen::Vector3d& position,
                                        const ProbeReadoutModel& model) {
    const double kp = constants::two_pi / model.probe_wavelength;
    const double x = position.x(), z = position.z();
    const double envelope = std::exp(-2.0 * x * x / (model.envelope_waist * model.envelope_waist));
    const double fringe = 1.0 + model.visibility * std::cos(2.0 * kp * z + model.phase_offset);

    ProbeReflection out{};
    out.power = model.mean_power * fringe * envelope;
    const double dz =
        -2.0 * kp * model.visibility * std::sin(2.0 * kp * z + model.phase_offset) *
        model.mean_power * envelope;
    const double dx = -4.0 * x / (model.envelope_waist * model.envelope_waist) * out.power;
    out.gradient = {dz, dx};

    const double gain = out.gradient.norm();
    out.e_beta.gain = gain;
    if (gain < model.gradient_threshold) {
        out.e_beta.defined = false;
        out.e_beta.angle_beta = 0.0;
        out.e_beta.noise_floor = model.displacement_noise_floor;
    } else {
        out.e_beta.defined = true;
        out.e_beta.angle_beta = std::atan2(out.gradient.y(), out.gradient.x());
        out.e_beta.noise_floor =
            model.displacement_noise_floor + model.power_noise_psd / (gain * gain);
    }
    return out;
}

} // namespace nwtwin::servo
