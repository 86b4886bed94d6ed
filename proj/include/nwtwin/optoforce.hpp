#pragma once

// Intracavity optical force on the wire, computed two independent ways:
// adiabatic (F = -hbar n grad(omega0)) and 1D momentum-flux balance at
// the scatterer plane. Plus axial force profiles, gradient-induced
// frequency shifts and the optional photothermal channel.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/cavity.hpp"
#include "nwtwin/merit.hpp"

namespace nwtwin::optoforce {

struct ForceSample {
    Eigen::Vector3d position;    // m
    Eigen::Vector3d force;       // N (dominant component F_z)
    double photon_number;
    double input_power;          // W
    bool valid = true;
};

// Momentum-flux balance at the wire plane (z component only).
inline double maxwell_force(const cavity::FieldSolution& sol) {
    const auto& p = sol.directional_powers;
    return (p.fwd_left + p.bwd_left - p.fwd_right - p.bwd_right) / constants::speed_of_light;
}

// F = -hbar n grad(omega0), valid in the adiabatic regime Omega_m << kappa.
inline ForceSample adiabatic_force(const cavity::CavityGeometry& geom,
                                   const cavity::NanowireScatterer& wire, double input_power,
                                   double omega_m, double gradient_step = 0.3e-9) {
    const double kappa = geom.empty_linewidth();
    if (!(omega_m < kappa / 100.0))
        throw std::invalid_argument(
            "adiabatic_force: configuration not adiabatic (requires Omega_m << kappa; got "
            "Omega_m/kappa = " +
            std::to_string(omega_m / kappa) + ")");
    const auto sol = cavity::solve_cavity(geom, wire, input_power);
    const auto g = cavity::coupling_vector(geom, wire, gradient_step);
    ForceSample s{};
    s.position = wire.tip_position;
    s.force = -constants::hbar * sol.photon_number * g;
    s.photon_number = sol.photon_number;
    s.input_power = input_power;
    return s;
}

struct AxialProfile {
    std::vector<double> z;            // m
    std::vector<double> fz;           // N (momentum balance, re-locked per point)
    std::vector<double> photon_number;
    std::vector<double> transmission;
    std::vector<bool> valid;
    std::vector<double> node_positions; // nodes inside [z_min, z_max]
    double input_power;
};

// F_z(z) on a grid, cavity re-locked at every position.
inline AxialProfile axial_force_profile(const cavity::CavityGeometry& geom,
                                        cavity::NanowireScatterer wire, double z_min, double z_max,
                                        int npoints, double input_power) {
    if (npoints < 2 || !(z_max > z_min))
        throw std::invalid_argument("axial_force_profile: bad grid");
    const auto mode = cavity::mode_from_geometry(geom);
    AxialProfile prof{};
    prof.input_power = input_power;
    prof.z.resize(npoints);
    prof.fz.assign(npoints, 0.0);
    prof.photon_number.assign(npoints, 0.0);
    prof.transmission.assign(npoints, 0.0);
    prof.valid.assign(npoints, true);
    for (int i = 0; i < npoints; ++i) {
        const double z = z_min + (z_max - z_min) * i / (npoints - 1);
        prof.z[i] = z;
        wire.tip_position.z() = z;
        try {
            const auto sol = cavity::solve_cavity(geom, wire, input_power);
            prof.fz[i] = maxwell_force(sol);
            prof.photon_number[i] = sol.photon_number;
            prof.transmission[i] = sol.transmission;
        } catch (const std::exception&) {
            prof.valid[i] = false; // marked, not fatal
        }
    }
    // node positions covered by the grid
    double zn = mode.node_near(z_min);
    if (zn < z_min) zn += geom.wavelength / 2.0;
    for (; zn <= z_max; zn += geom.wavelength / 2.0) prof.node_positions.push_back(zn);
    return prof;
}

// Relative frequency shifts from the force-field gradient,
// dOmega/Omega = -(dF_z/dz) / (2 k) with k the intrinsic stiffness.
inline std::vector<double> gradient_frequency_shift(const AxialProfile& prof,
                                                    const merit::OscillatorParams& osc,
                                                    double wavelength) {
    const size_t n = prof.z.size();
    if (n < 3) throw std::invalid_argument("gradient_frequency_shift: profile too short");
    const double step = prof.z[1] - prof.z[0];
    if (step > wavelength / 40.0)
        throw std::invalid_argument("gradient_frequency_shift: grid too coarse (step > lambda/40)");
    const double stiffness = osc.stiffness();
    std::vector<double> rel(n);
    for (size_t i = 0; i < n; ++i) {
        double dfdz;
        if (i == 0)
            dfdz = (prof.fz[1] - prof.fz[0]) / step;
        else if (i == n - 1)
            dfdz = (prof.fz[n - 1] - prof.fz[n - 2]) / step;
        else
            dfdz = (prof.fz[i + 1] - prof.fz[i - 1]) / (2.0 * step);
        rel[i] = -dfdz / (2.0 * stiffness);
    }
    return rel;
}

// Delayed force from absorbed power; shows up in quadrature at
// mechanical frequencies when Omega * tau >> 1.
struct PhotothermalConfig {
    double coefficient = 0.0;          // N per W absorbed
    double time_constant = 1e-3;       // s
    Eigen::Vector2d direction{1.0, 0.0}; // unit vector in the (z, x) vibration plane
};

// Low-pass transfer of the absorbed-power channel, as an exp(-i omega t)
// amplitude (same convention as mechanics::susceptibility).
inline std::complex<double> photothermal_response(const PhotothermalConfig& pt, double omega) {
    return 1.0 / std::complex<double>(1.0, -omega * pt.time_constant);
}

struct ModulatedForce {
    Eigen::Vector2d in_phase;   // N, (z, x) components, instantaneous optical force
    Eigen::Vector2d quadrature; // N, photothermal part
};

// Complex force phasor produced by an input-intensity modulation dP
// around P0 at modulation frequency omega, for a locked cavity. The
// steady-state force is linear in power, so the in-phase part is
// F(P0) * dP / P0; the photothermal channel follows the absorbed power
// through its low-pass response.
inline ModulatedForce modulated_force(const cavity::CavityGeometry& geom,
                                      const cavity::NanowireScatterer& wire, double p0, double dp,
                                      double omega, const PhotothermalConfig& pt = {}) {
    const auto sol = cavity::solve_cavity(geom, wire, p0);
    const auto g = cavity::coupling_vector(geom, wire, 0.3e-9);
    const double fz = maxwell_force(sol);
    const double fx = -constants::hbar * sol.photon_number * g.x();
    ModulatedForce out{};
    out.in_phase = Eigen::Vector2d(fz, fx) * (dp / p0);
    if (pt.coefficient != 0.0) {
        const double absorbed_mod = sol.scatter_fraction * dp;
        const auto resp = photothermal_response(pt, omega) * pt.coefficient * absorbed_mod;
        // phasor (F_I - i F_Q) = resp, so the delayed force lands in the
        // quadrature component with F_Q = -Im(resp)
        out.in_phase += pt.direction * resp.real();
        out.quadrature = -pt.direction * resp.imag();
    } else {
        out.quadrature.setZero();
    }
    return out;
}

} // namespace nwtwin::optoforce
