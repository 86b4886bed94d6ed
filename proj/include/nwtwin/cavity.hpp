#pragma once

// Steady-state optics of a fiber microcavity with a sub-wavelength
// scatterer inside: 1D transfer-matrix model with a thin effective
// sheet, resonance root-finding, Lorentzian linewidth extraction and
// the vectorial parametric coupling strength.
//
// Frame: z along the optical axis, origin at the cavity midpoint,
// mirror 1 (the pumped one) at z = -L/2. y is the vertical insertion
// axis (the wire body occupies y >= y_tip). The nominal cavity length
// is snapped to the nearest resonant length q*lambda/2, so the empty
// cavity is exactly resonant at the nominal wavelength and the mirror
// reflection phase is absorbed into the length origin.

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/constants.hpp"
#include "nwtwin/errors.hpp"
#include "nwtwin/fit.hpp"
#include "nwtwin/merit.hpp"

namespace nwtwin::cavity {

using cplx = std::complex<double>;

struct CavityGeometry {
    double length;     // m (nominal)
    double roc1;       // m
    double roc2;       // m
    double wavelength; // m
    double t1, t2;     // mirror power transmissions
    double l1, l2;     // mirror power losses

    double total_loss() const { return t1 + t2 + l1 + l2; }
    double finesse() const { return constants::two_pi / total_loss(); }

    long mode_index() const { return std::lround(2.0 * length / wavelength); }
    double resonant_length() const { return double(mode_index()) * wavelength / 2.0; }
    double wavenumber() const { return constants::two_pi / wavelength; }
    double omega0() const { return constants::speed_of_light * wavenumber(); }
    // angular free spectral range
    double fsr() const { return constants::pi * constants::speed_of_light / resonant_length(); }
    // empty-cavity linewidth (rad/s)
    double empty_linewidth() const { return fsr() / finesse(); }

    void validate() const {
        if (!(length > 0.0) || !(wavelength > 0.0))
            throw std::invalid_argument("CavityGeometry: length and wavelength must be positive");
        auto mirror_ok = [](double t, double l) {
            return t > 0.0 && t < 1.0 && l >= 0.0 && l < 1.0 && t + l < 1.0;
        };
        if (!mirror_ok(t1, l1) || !mirror_ok(t2, l2))
            throw std::invalid_argument("CavityGeometry: mirror t, l must satisfy 0<t, 0<=l, t+l<1");
        const double rbar = 0.5 * (roc1 + roc2);
        const double g = 1.0 - length / rbar;
        if (!(g > -1.0 && g < 1.0) || !(length < roc1 + roc2))
            throw std::invalid_argument("CavityGeometry: unstable resonator (g outside (-1,1))");
        if (mode_index() < 1)
            throw std::invalid_argument("CavityGeometry: cavity shorter than half a wavelength");
    }
};

// Symmetric-resonator waist, w0^2 = (L lambda / pi) sqrt((1+g)/(4(1-g))),
// g = 1 - L / mean(roc).
inline double gaussian_waist(const CavityGeometry& geom) {
    geom.validate();
    const double rbar = 0.5 * (geom.roc1 + geom.roc2);
    const double g = 1.0 - geom.length / rbar;
    const double w0_sq = (geom.length * geom.wavelength / constants::pi) *
                         std::sqrt((1.0 + g) / (4.0 * (1.0 - g)));
    return std::sqrt(w0_sq);
}

struct GaussianMode {
    double waist;          // m
    double wavenumber;     // 1/m
    double cavity_length;  // m (snapped resonant length)

    // Standing-wave intensity at axial position z (midpoint frame),
    // normalized to 1 at an antinode.
    double intensity(double z) const {
        const double c = std::cos(wavenumber * (z + cavity_length / 2.0));
        return c * c;
    }
    // Nearest intensity node / antinode to z.
    double node_near(double z) const {
        const double zm = z + cavity_length / 2.0;
        const double m = std::round((wavenumber * zm - constants::pi / 2.0) / constants::pi);
        return (constants::pi / 2.0 + m * constants::pi) / wavenumber - cavity_length / 2.0;
    }
    double antinode_near(double z) const {
        const double zm = z + cavity_length / 2.0;
        const double m = std::round(wavenumber * zm / constants::pi);
        return m * constants::pi / wavenumber - cavity_length / 2.0;
    }
};

inline GaussianMode mode_from_geometry(const CavityGeometry& geom) {
    GaussianMode m{};
    m.waist = gaussian_waist(geom);
    m.wavenumber = geom.wavenumber();
    m.cavity_length = geom.resonant_length();
    return m;
}

struct NanowireScatterer {
    cplx zeta0;                  // dimensionless; Re dispersive, Im >= 0 scattering loss
    double radius = 65e-9;       // m
    Eigen::Vector3d tip_position{0.0, 0.0, 0.0}; // (x, y_tip, z), midpoint frame

    void validate(const CavityGeometry& geom) const {
        if (zeta0.imag() < 0.0)
            throw std::invalid_argument("NanowireScatterer: Im(zeta0) must be >= 0");
        const double half_l = geom.resonant_length() / 2.0;
        if (!(tip_position.z() > -half_l && tip_position.z() < half_l))
            throw std::invalid_argument("NanowireScatterer: wire z outside the cavity");
    }
    bool subwavelength(const CavityGeometry& geom) const {
        return radius <= geom.wavelength / 4.0;
    }
};

// Vertical insertion fraction: the wire body occupies y >= y_tip, so a
// fully lowered wire (y_tip -> -inf) overlaps the whole mode.
inline double insertion_fraction(double y_tip, double waist) {
    return 0.5 * std::erfc(std::sqrt(2.0) * y_tip / waist);
}

// 3D wire/mode overlap reduced to the 1D sheet strength.
inline cplx effective_polarizability(const NanowireScatterer& wire, const GaussianMode& mode) {
    const double x = wire.tip_position.x();
    const double envelope = std::exp(-2.0 * x * x / (mode.waist * mode.waist));
    return wire.zeta0 * envelope * insertion_fraction(wire.tip_position.y(), mode.waist);
}

struct Drive {
    bool locked = true;
    double detuning = 0.0; // rad/s relative to the (shifted) resonance

    static Drive on_resonance() { return Drive{true, 0.0}; }
    static Drive detuned(double delta) { return Drive{false, delta}; }
};

struct DirectionalPowers {
    double fwd_left;  // right-moving, left sub-cavity (W)
    double bwd_left;  // left-moving, left sub-cavity
    double fwd_right; // right-moving, right sub-cavity
    double bwd_right; // left-moving, right sub-cavity
};

struct FieldSolution {
    double resonance_shift;        // rad/s vs empty cavity
    double equivalent_length_shift; // m, -L * shift / omega0
    double linewidth;              // rad/s
    double transmission;           // power fraction at drive point
    double reflection;
    double scatter_fraction;
    double mirror_loss_fraction;
    double photon_number;
    DirectionalPowers directional_powers;
    double omega_drive;       // rad/s
    double omega_resonance;   // rad/s (with wire)
    double input_power;       // W
    cplx zeta_eff;
    double linewidth_fit_residual; // rms of the Lorentzian fit
    Eigen::Vector3d wire_position{0.0, 0.0, 0.0};
};

namespace detail {

struct Mat2 {
    cplx a, b, c, d; // [[a, b], [c, d]]
    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
};

inline Mat2 mirror_matrix(double t_pow, double l_pow) {
    const double t = std::sqrt(t_pow);
    const double r = std::sqrt(1.0 - t_pow - l_pow);
    const cplx inv_it = 1.0 / cplx(0.0, t);
    return {inv_it * cplx(-(t * t + r * r)), inv_it * r, inv_it * (-r), inv_it};
}

inline Mat2 propagation_matrix(double k, double d) {
    const cplx e = std::exp(cplx(0.0, k * d));
    return {e, 0.0, 0.0, 1.0 / e};
}

// Thin sheet with t_s = 1/(1 - i zeta), r_s = i zeta / (1 - i zeta).
inline Mat2 scatterer_matrix(cplx zeta) {
    const cplx one_m = 1.0 - cplx(0.0, 1.0) * zeta;
    return {(1.0 + zeta * zeta) / one_m, cplx(0.0, 1.0) * zeta, -cplx(0.0, 1.0) * zeta, one_m};
}

struct Stack {
    double z_mirror1; // wire distance from mirror 1
    double d_right;   // wire distance to mirror 2
    double t1, l1, t2, l2;
    cplx zeta;

    Mat2 total(double k) const {
        return mirror_matrix(t2, l2) * propagation_matrix(k, d_right) * scatterer_matrix(zeta) *
               propagation_matrix(k, z_mirror1) * mirror_matrix(t1, l1);
    }
    cplx transmission_amplitude(double k) const {
        return 1.0 / total(k).d; // det = 1
    }
    // Round trip seen from mirror 1's inner face.
    cplx round_trip(double k) const {
        const double r2 = std::sqrt(1.0 - t2 - l2);
        const double r1 = std::sqrt(1.0 - t1 - l1);
        const cplx ts = 1.0 / (1.0 - cplx(0.0, 1.0) * zeta);
        const cplx rs = cplx(0.0, 1.0) * zeta * ts;
        const cplx e2 = std::exp(cplx(0.0, 2.0 * k * d_right));
        const cplx r_right = rs + ts * ts * r2 * e2 / (1.0 - rs * r2 * e2);
        return r1 * r_right * std::exp(cplx(0.0, 2.0 * k * z_mirror1));
    }
};

// Bracketed root of f on [a, b] (f(a), f(b) opposite signs); bisection
// with secant acceleration.
template <typename F>
double find_root(F&& f, double a, double b, double rel_tol) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0)
        throw SolverError("find_root: no sign change in bracket [" + std::to_string(a) +
                                 ", " + std::to_string(b) + "]");
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (a + b);
        // secant candidate
        double s = b - fb * (b - a) / (fb - fa);
        double x = (s > std::min(a, b) && s < std::max(a, b)) ? s : mid;
        double fx = f(x);
        if (fx == 0.0 || std::abs(b - a) < rel_tol * std::abs(x)) return x;
        if (fa * fx < 0.0) {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    return 0.5 * (a + b);
}

inline double wrap_phase(double phi) {
    while (phi > constants::pi) phi -= constants::two_pi;
    while (phi <= -constants::pi) phi += constants::two_pi;
    return phi;
}

inline Stack make_stack(const CavityGeometry& geom, const NanowireScatterer& wire,
                        const GaussianMode& mode) {
    Stack st{};
    const double half_l = geom.resonant_length() / 2.0;
    st.z_mirror1 = wire.tip_position.z() + half_l;
    st.d_right = geom.resonant_length() - st.z_mirror1;
    st.t1 = geom.t1;
    st.l1 = geom.l1;
    st.t2 = geom.t2;
    st.l2 = geom.l2;
    st.zeta = effective_polarizability(wire, mode);
    return st;
}

// Resonant wavenumber of the loaded cavity, bracketed around the empty
// resonance and expanded up to half an FSR if needed.
inline double resonant_wavenumber(const CavityGeometry& geom, const Stack& st) {
    const double k0 = geom.wavenumber();
    const double fsr_k = constants::pi / geom.resonant_length();
    auto phase = [&](double k) { return wrap_phase(std::arg(st.round_trip(k))); };
    for (double half : {fsr_k / 4.0, fsr_k / 2.0 * 0.98}) {
        const double a = k0 - half, b = k0 + half;
        if (phase(a) * phase(b) < 0.0) return find_root(phase, a, b, 1e-14);
    }
    throw SolverError("solve_cavity: resonance root not bracketed within half an FSR");
}

} // namespace detail

// Resonance frequency (rad/s) of the loaded cavity; cheap path used by
// gradient evaluation.
inline double resonance_frequency(const CavityGeometry& geom, const NanowireScatterer& wire) {
    geom.validate();
    const GaussianMode mode = mode_from_geometry(geom);
    wire.validate(geom);
    const auto st = detail::make_stack(geom, wire, mode);
    if (std::abs(st.zeta) == 0.0) return geom.omega0();
    return constants::speed_of_light * detail::resonant_wavenumber(geom, st);
}

inline FieldSolution solve_cavity(const CavityGeometry& geom, const NanowireScatterer& wire,
                                  double input_power, const Drive& drive = Drive::on_resonance()) {
    geom.validate();
    const GaussianMode mode = mode_from_geometry(geom);
    wire.validate(geom);
    const auto st = detail::make_stack(geom, wire, mode);

    const double omega0 = geom.omega0();
    const double omega_res =
        (std::abs(st.zeta) == 0.0)
            ? omega0
            : constants::speed_of_light * detail::resonant_wavenumber(geom, st);

    FieldSolution sol{};
    sol.wire_position = wire.tip_position;
    sol.zeta_eff = st.zeta;
    sol.input_power = input_power;
    sol.omega_resonance = omega_res;
    sol.resonance_shift = omega_res - omega0;
    sol.equivalent_length_shift = -geom.resonant_length() * sol.resonance_shift / omega0;

    // Linewidth: Lorentzian least squares over +-5 empty linewidths.
    {
        const double kappa0 = geom.empty_linewidth();
        const int npts = 201;
        Eigen::VectorXd delta(npts), tdata(npts);
        for (int i = 0; i < npts; ++i) {
            const double d = (-5.0 + 10.0 * i / (npts - 1)) * kappa0;
            delta[i] = d;
            const double k = (omega_res + d) / constants::speed_of_light;
            tdata[i] = std::norm(st.transmission_amplitude(k));
        }
        auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
            const double amp = p[0], d0 = p[1], kap = p[2];
            r.resize(npts);
            if (jac) jac->resize(npts, 3);
            for (int i = 0; i < npts; ++i) {
                const double u = 2.0 * (delta[i] - d0) / kap;
                const double den = 1.0 + u * u;
                const double f = amp / den;
                r[i] = f - tdata[i];
                if (jac) {
                    (*jac)(i, 0) = 1.0 / den;
                    (*jac)(i, 1) = amp * (4.0 * u / kap) / (den * den);
                    (*jac)(i, 2) = amp * (2.0 * u * u / kap) / (den * den);
                }
            }
        };
        Eigen::VectorXd p0(3);
        p0 << tdata.maxCoeff(), 0.0, kappa0;
        Eigen::VectorXd lo(3), hi(3);
        lo << 0.0, -5.0 * kappa0, kappa0 * 1e-3;
        hi << 10.0, 5.0 * kappa0, kappa0 * 100.0;
        auto res = fit::levenberg_marquardt(model, p0, lo, hi);
        sol.linewidth = res.params[2];
        sol.linewidth_fit_residual = std::sqrt(res.chi2 / npts);
    }

    // Field amplitudes at the drive frequency.
    sol.omega_drive = drive.locked ? omega_res : omega_res + drive.detuning;
    const double k = sol.omega_drive / constants::speed_of_light;
    const auto m_total = st.total(k);
    const cplx t_tot = 1.0 / m_total.d;
    const cplx r_tot = -m_total.c / m_total.d;

    const cplx a_fwd = std::sqrt(input_power);
    const cplx a_bwd = r_tot * a_fwd;
    auto apply = [](const detail::Mat2& m, cplx p, cplx q) {
        return std::pair<cplx, cplx>{m.a * p + m.b * q, m.c * p + m.d * q};
    };
    auto [u0p, u0m] = apply(detail::mirror_matrix(st.t1, st.l1), a_fwd, a_bwd);
    auto [up, um] = apply(detail::propagation_matrix(k, st.z_mirror1), u0p, u0m);
    auto [vp, vm] = apply(detail::scatterer_matrix(st.zeta), up, um);
    auto [wp, wm] = apply(detail::propagation_matrix(k, st.d_right), vp, vm);

    sol.directional_powers = {std::norm(up), std::norm(um), std::norm(vp), std::norm(vm)};
    sol.transmission = std::norm(t_tot);
    sol.reflection = std::norm(r_tot);
    const double p_in = input_power > 0.0 ? input_power : 1.0;
    const double absorbed_sheet = std::norm(up) + std::norm(vm) - std::norm(um) - std::norm(vp);
    const double loss_m1 = std::norm(a_fwd) + std::norm(u0m) - std::norm(a_bwd) - std::norm(u0p);
    const double loss_m2 = std::norm(wp) - std::norm(wm) - std::norm(t_tot) * input_power;
    sol.scatter_fraction = absorbed_sheet / p_in;
    sol.mirror_loss_fraction = (loss_m1 + loss_m2) / p_in;

    const double energy =
        (std::norm(up) + std::norm(um)) * st.z_mirror1 / constants::speed_of_light +
        (std::norm(vp) + std::norm(vm)) * st.d_right / constants::speed_of_light;
    sol.photon_number = energy / (constants::hbar * sol.omega_drive);
    return sol;
}

// Central finite-difference gradient of the resonance frequency with
// respect to the wire position: G = grad(omega0) at r0 (rad/s/m).
inline Eigen::Vector3d coupling_vector(const CavityGeometry& geom, const NanowireScatterer& wire,
                                       double step) {
    if (!(step > 0.0) || step > geom.wavelength / 10.0)
        throw std::invalid_argument("coupling_vector: step must be positive and small vs lambda");
    Eigen::Vector3d g;
    for (int axis = 0; axis < 3; ++axis) {
        NanowireScatterer plus = wire, minus = wire;
        plus.tip_position[axis] += step;
        minus.tip_position[axis] -= step;
        g[axis] = (resonance_frequency(geom, plus) - resonance_frequency(geom, minus)) /
                  (2.0 * step);
    }
    return g;
}

// Side-scattered power (W) lost at the wire plane.
inline double scatter_power(const FieldSolution& sol) {
    return sol.scatter_fraction * sol.input_power;
}

// Cavity linewidth broadening from the thermal position spread, G * dr_th.
inline double thermal_linewidth_broadening(double big_g, const merit::OscillatorParams& osc) {
    return std::abs(big_g) * merit::thermal_spread(osc);
}

// Calibrate the wire polarizability: Re(zeta0) reproduces the target
// resonant-length shift at full insertion on an antinode; Im(zeta0)
// makes the loaded linewidth there `linewidth_ratio` times the empty
// one. Returns zeta0.
inline cplx calibrate_scatterer(const CavityGeometry& geom, double target_length_shift,
                                double linewidth_ratio) {
    geom.validate();
    const GaussianMode mode = mode_from_geometry(geom);
    NanowireScatterer wire{};
    wire.tip_position = {0.0, -10.0 * mode.waist, mode.antinode_near(0.0)};

    double re = 0.05, im = 0.0;
    for (int round = 0; round < 4; ++round) {
        auto shift_err = [&](double re_try) {
            wire.zeta0 = cplx(re_try, im);
            const double omega_res = resonance_frequency(geom, wire);
            const double dl = -geom.resonant_length() * (omega_res - geom.omega0()) / geom.omega0();
            return dl - target_length_shift;
        };
        re = detail::find_root(shift_err, 1e-5, 0.3, 1e-13);
        if (linewidth_ratio > 1.0) {
            auto width_err = [&](double im_try) {
                wire.zeta0 = cplx(re, im_try);
                const auto sol = solve_cavity(geom, wire, 1e-6);
                return sol.linewidth / geom.empty_linewidth() - linewidth_ratio;
            };
            im = detail::find_root(width_err, 0.0, 0.2, 1e-10);
        }
    }
    return {re, im};
}

} // namespace nwtwin::cavity
