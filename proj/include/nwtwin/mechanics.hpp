#pragma once

// 2D nanomechanical oscillator: eigenmode pair in the (z, x) vibration
// plane, linear susceptibilities, thermal noise spectra, projected
// readout and time-domain stochastic trajectories.
//
// Conventions: one-sided PSDs throughout; the Langevin force PSD is
// 4 kB T M Gamma. 2-vectors live in the (z, x) plane with component 0
// along the optical axis e_z.

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/constants.hpp"

namespace nwtwin::mechanics {

using cplx = std::complex<double>;

struct ModePair {
    double omega1;        // rad/s
    double omega2;        // rad/s
    double theta1;        // rad, mode-1 angle from e_z
    double gamma1;        // rad/s
    double gamma2;        // rad/s
    double effective_mass; // kg
    double temperature;   // K

    Eigen::Vector2d axis(int i) const {
        if (i == 1) return {std::cos(theta1), std::sin(theta1)};
        if (i == 2) return {-std::sin(theta1), std::cos(theta1)};
        throw std::invalid_argument("ModePair::axis: mode index must be 1 or 2");
    }
    double omega(int i) const { return i == 1 ? omega1 : omega2; }
    double gamma(int i) const { return i == 1 ? gamma1 : gamma2; }

    void validate() const {
        if (!(omega1 > 0.0) || !(omega2 > 0.0) || !(gamma1 > 0.0) || !(gamma2 > 0.0) ||
            !(effective_mass > 0.0) || !(temperature >= 0.0))
            throw std::invalid_argument("ModePair: non-positive parameter");
    }

    // Fig. 3 configuration.
    static ModePair defaults() {
        ModePair m{};
        m.omega1 = angular(50e3);
        m.omega2 = 1.2 * m.omega1;
        m.theta1 = 20.0 * constants::pi / 180.0;
        m.gamma1 = m.omega1 / 5000.0;
        m.gamma2 = m.omega2 / 5000.0;
        m.effective_mass = 1e-15;
        m.temperature = 300.0;
        return m;
    }
};

struct MeasurementVector {
    double angle_beta;   // rad from e_z
    double gain;         // W/m, |grad P_R|
    double noise_floor;  // m^2/Hz displacement-equivalent
    bool defined = true; // false at zero-gradient locations

    Eigen::Vector2d direction() const { return {std::cos(angle_beta), std::sin(angle_beta)}; }
};

struct ForcePhasor {
    Eigen::Vector2d in_phase{0.0, 0.0};   // N
    Eigen::Vector2d quadrature{0.0, 0.0}; // N (photothermal)

    Eigen::Vector2cd complex_vector() const {
        // quadrature enters with a -i factor (drive modulation defines 0 deg)
        return in_phase.cast<cplx>() - cplx(0.0, 1.0) * quadrature.cast<cplx>();
    }
    double magnitude() const { return complex_vector().norm(); }
};

// chi_i(Omega) = 1 / (M (Omega_i^2 - Omega^2 - i Omega Gamma_i)), m/N.
inline cplx susceptibility(const ModePair& modes, int i, double omega) {
    const double wi = modes.omega(i), gi = modes.gamma(i);
    return 1.0 / (modes.effective_mass * cplx(wi * wi - omega * omega, -omega * gi));
}

// delta r_beta(Omega) = e_beta . sum_i chi_i (e_i . dF) e_i, meters.
inline cplx projected_response(const ModePair& modes, const Eigen::Vector2d& e_beta,
                               const ForcePhasor& df, double omega) {
    const Eigen::Vector2cd f = df.complex_vector();
    cplx out = 0.0;
    for (int i = 1; i <= 2; ++i) {
        const Eigen::Vector2d ei = modes.axis(i);
        const cplx drive = ei.x() * f.x() + ei.y() * f.y();
        out += susceptibility(modes, i, omega) * drive * (e_beta.dot(ei));
    }
    return out;
}

// One-sided displacement PSD of the projected thermal motion, m^2/Hz
// (per ordinary-frequency hertz), plus the readout noise floor.
inline double thermal_psd(const ModePair& modes, const Eigen::Vector2d& e_beta, double omega,
                          double noise_floor = 0.0) {
    double s = 0.0;
    for (int i = 1; i <= 2; ++i) {
        const double proj = e_beta.dot(modes.axis(i));
        const double s_ff = 4.0 * constants::k_boltzmann * modes.temperature *
                            modes.effective_mass * modes.gamma(i);
        s += proj * proj * std::norm(susceptibility(modes, i, omega)) * s_ff;
    }
    return s + noise_floor;
}

struct Trajectory {
    double dt;
    std::vector<Eigen::Vector2d> displacement; // (z, x) per sample
    std::vector<double> readout;               // projected displacement + noise, m
};

// Integrates both eigenmodes with the exact discrete propagator of the
// damped oscillator (no dt-dependent damping bias); thermal kicks are
// drawn with the exact per-step covariance Q = P_inf - Phi P_inf Phi^T.
inline Trajectory simulate_trajectory(const ModePair& modes,
                                      const std::function<Eigen::Vector2d(double)>& force,
                                      double dt, double duration, std::uint64_t seed,
                                      const MeasurementVector& readout = {0.0, 1.0, 0.0, true},
                                      bool store_displacement = true) {
    modes.validate();
    const double omega_max = std::max(modes.omega1, modes.omega2);
    if (!(dt > 0.0) || dt > constants::two_pi / (20.0 * omega_max))
        throw std::invalid_argument("simulate_trajectory: dt must satisfy dt <= 2pi/(20 Omega_2)");

    const std::size_t n = static_cast<std::size_t>(std::ceil(duration / dt));
    const double kbt = constants::k_boltzmann * modes.temperature;
    const double mass = modes.effective_mass;

    struct ModeState {
        Eigen::Matrix2d phi;    // exact propagator
        Eigen::Vector2d forced; // ZOH force response per unit force
        Eigen::Matrix2d noise_l; // Cholesky factor of per-step covariance
        Eigen::Vector2d state{0.0, 0.0};
        Eigen::Vector2d axis;
    };

    std::array<ModeState, 2> ms;
    for (int i = 1; i <= 2; ++i) {
        auto& m = ms[i - 1];
        const double w = modes.omega(i), g = modes.gamma(i);
        const double wd = std::sqrt(w * w - 0.25 * g * g); // Q >> 1 in practice
        const double e = std::exp(-0.5 * g * dt);
        const double c = std::cos(wd * dt), s = std::sin(wd * dt);
        m.phi << e * (c + 0.5 * g * s / wd), e * s / wd,
                 -e * w * w * s / wd,        e * (c - 0.5 * g * s / wd);
        // x_{k+1} = Phi x_k + forced * (F/M) + noise
        m.forced = Eigen::Vector2d((1.0 - m.phi(0, 0)) / (w * w), -m.phi(1, 0) / (w * w));
        Eigen::Matrix2d p_inf = Eigen::Matrix2d::Zero();
        p_inf(0, 0) = kbt / (mass * w * w);
        p_inf(1, 1) = kbt / mass;
        Eigen::Matrix2d q = p_inf - m.phi * p_inf * m.phi.transpose();
        Eigen::LLT<Eigen::Matrix2d> llt(q);
        m.noise_l = (llt.info() == Eigen::Success) ? Eigen::Matrix2d(llt.matrixL())
                                                   : Eigen::Matrix2d::Zero();
        m.axis = modes.axis(i);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Eigen::Vector2d e_beta = readout.direction();
    const double sigma_read =
        readout.defined ? std::sqrt(readout.noise_floor * 0.5 / dt) : 0.0; // fs/2 bandwidth

    Trajectory out;
    out.dt = dt;
    if (store_displacement) out.displacement.resize(n);
    out.readout.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = k * dt;
        const Eigen::Vector2d f = force ? force(t) : Eigen::Vector2d::Zero();
        Eigen::Vector2d r = Eigen::Vector2d::Zero();
        for (auto& m : ms) {
            const double f_mode = m.axis.dot(f);
            const Eigen::Vector2d kick(gauss(rng), gauss(rng));
            m.state = m.phi * m.state + m.forced * (f_mode / mass) + m.noise_l * kick;
            r += m.axis * m.state[0];
        }
        if (store_displacement) out.displacement[k] = r;
        out.readout[k] = e_beta.dot(r) + (sigma_read > 0.0 ? sigma_read * gauss(rng) : 0.0);
    }
    return out;
}

} // namespace nwtwin::mechanics
