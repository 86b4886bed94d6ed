#pragma once

// Scalar optomechanical figures of merit: zero-point motion, thermal
// spread, single-photon coupling, per-photon force/displacement and
// cooperativities.

#include <cmath>
#include <stdexcept>

#include "nwtwin/constants.hpp"

namespace nwtwin::merit {

struct OscillatorParams {
    double effective_mass; // kg
    double omega_m;        // rad/s
    double quality;        // dimensionless
    double temperature;    // K

    double damping() const { return omega_m / quality; } // rad/s
    double stiffness() const { return effective_mass * omega_m * omega_m; } // N/m

    void validate() const {
        if (!(effective_mass > 0.0) || !(omega_m > 0.0) || !(quality > 0.0))
            throw std::invalid_argument("OscillatorParams: mass, omega_m and Q must be positive");
        if (!(temperature >= 0.0))
            throw std::invalid_argument("OscillatorParams: temperature must be >= 0");
    }
};

struct CouplingFigures {
    double g0;           // rad/s
    double big_g;        // rad/s/m
    double delta_x_zpf;  // m
    double kappa;        // rad/s
    double ratio;        // g0 / omega_m
    bool ultrastrong;    // g0 > omega_m / 2
};

// rms spatial spread of the ground state, sqrt(hbar / 2 M Omega).
inline double zero_point_motion(const OscillatorParams& osc) {
    osc.validate();
    return std::sqrt(constants::hbar / (2.0 * osc.effective_mass * osc.omega_m));
}

// Thermal position spread sqrt(kB T / M Omega^2).
inline double thermal_spread(const OscillatorParams& osc) {
    osc.validate();
    return std::sqrt(constants::k_boltzmann * osc.temperature /
                     (osc.effective_mass * osc.omega_m * osc.omega_m));
}

// g0 = G * x_zpf, with the ultrastrong-regime flag g0 > Omega/2.
inline CouplingFigures single_photon_coupling(double big_g, const OscillatorParams& osc,
                                              double kappa = 0.0) {
    if (!std::isfinite(big_g))
        throw std::invalid_argument("single_photon_coupling: big_g must be finite");
    CouplingFigures fig{};
    fig.big_g = big_g;
    fig.delta_x_zpf = zero_point_motion(osc);
    fig.g0 = std::abs(big_g) * fig.delta_x_zpf;
    fig.kappa = kappa;
    fig.ratio = fig.g0 / osc.omega_m;
    fig.ultrastrong = fig.g0 > osc.omega_m / 2.0;
    return fig;
}

struct SinglePhotonAction {
    double force;        // N, magnitude; points toward decreasing cavity frequency
    double displacement; // m
};

// Per-photon static force |F| = hbar G and displacement 2 (g0/Omega) x_zpf.
inline SinglePhotonAction single_photon_force_displacement(const CouplingFigures& fig,
                                                           const OscillatorParams& osc) {
    osc.validate();
    SinglePhotonAction out{};
    out.force = constants::hbar * fig.big_g;
    out.displacement = 2.0 * (fig.g0 / osc.omega_m) * fig.delta_x_zpf;
    return out;
}

struct Cooperativities {
    double parametric; // 2 g0^2 / (Omega kappa)
    double standard;   // g0^2 / (Gamma kappa)
};

inline Cooperativities cooperativities(const CouplingFigures& fig, const OscillatorParams& osc) {
    osc.validate();
    if (!(fig.kappa > 0.0))
        throw std::invalid_argument("cooperativities: kappa must be positive");
    Cooperativities c{};
    c.parametric = 2.0 * fig.g0 * fig.g0 / (osc.omega_m * fig.kappa);
    c.standard = fig.g0 * fig.g0 / (osc.damping() * fig.kappa);
    return c;
}

} // namespace nwtwin::merit
