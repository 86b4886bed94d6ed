#pragma once

// Analysis chain: thermal-spectrum fits, response (force-vector) fits,
// fast triplet estimation with peak tracking, and measurement-vector
// calibration. All estimators are validated closed-loop against the
// simulator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nwtwin/constants.hpp"
#include "nwtwin/errors.hpp"
#include "nwtwin/fit.hpp"
#include "nwtwin/mechanics.hpp"
#include "nwtwin/servo.hpp"

namespace nwtwin::estimation {

using cplx = std::complex<double>;

enum class DriveKind { SweptTone, Triplet };

struct ResponseDataset {
    std::vector<double> frequencies_hz;
    std::vector<cplx> responses; // m, phase referenced to the drive modulation
    DriveKind drive = DriveKind::SweptTone;
    double p0 = 0.0; // W
    double dp = 0.0; // W
    Eigen::Vector2d e_beta{1.0, 0.0};

    void validate() const {
        if (frequencies_hz.size() != responses.size() || frequencies_hz.size() < 4)
            throw std::invalid_argument("ResponseDataset: size mismatch or too few points");
        for (std::size_t i = 1; i < frequencies_hz.size(); ++i)
            if (!(frequencies_hz[i] > frequencies_hz[i - 1]))
                throw std::invalid_argument("ResponseDataset: frequency axis must be monotone");
        if (p0 > 0.0 && dp / p0 > 1.0 + 1e-12)
            throw std::invalid_argument("ResponseDataset: modulation depth dP/P0 must be <= 1");
    }
};

// ---------------------------------------------------------------------------
// Thermal spectrum fit

struct SpectrumFit {
    mechanics::ModePair modes;   // fitted frequencies/damping; mass and T from priors
    double projection1 = 0.0;    // |e_beta . e_1|
    double projection2 = 0.0;
    double noise_floor = 0.0;    // m^2/Hz
    bool mode2_identifiable = true;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    Eigen::MatrixXd covariance;
};

namespace detail {

// index of the largest local maximum, excluding +-guard bins around `avoid`
inline int find_peak(const std::vector<double>& y, int avoid, int guard) {
    int best = -1;
    double best_v = -1.0;
    for (int i = 1; i + 1 < int(y.size()); ++i) {
        if (avoid >= 0 && std::abs(i - avoid) <= guard) continue;
        if (y[i] >= y[i - 1] && y[i] >= y[i + 1] && y[i] > best_v) {
            best_v = y[i];
            best = i;
        }
    }
    return best;
}

// Residual model of the two-Lorentzian thermal fit (relative residuals,
// analytic Jacobian). Exposed so the Jacobian can be checked against
// finite differences independently of the fit driver.
inline fit::ResidualFn spectrum_model(std::vector<double> frequencies_hz, std::vector<double> psd,
                                      double effective_mass, double temperature) {
    const double kbt = constants::k_boltzmann * temperature;
    const int n = int(psd.size());
    return [frequencies_hz = std::move(frequencies_hz), psd = std::move(psd), effective_mass, kbt,
            n](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n);
        if (jac) jac->setZero(n, 7);
        for (int k = 0; k < n; ++k) {
            const double w = angular(frequencies_hz[k]);
            double s = p[6];
            for (int m = 0; m < 2; ++m) {
                const double wi = p[3 * m], gi = p[3 * m + 1], ci = p[3 * m + 2];
                const double den = (wi * wi - w * w) * (wi * wi - w * w) + w * w * gi * gi;
                const double num = ci * 4.0 * kbt * gi / effective_mass;
                s += num / den;
                if (jac) {
                    (*jac)(k, 3 * m) = -num * 4.0 * wi * (wi * wi - w * w) / (den * den);
                    (*jac)(k, 3 * m + 1) =
                        (ci * 4.0 * kbt / effective_mass) / den - num * 2.0 * w * w * gi / (den * den);
                    (*jac)(k, 3 * m + 2) = 4.0 * kbt * gi / effective_mass / den;
                }
            }
            const double d = std::max(psd[k], 1e-300);
            r[k] = (s - psd[k]) / d;
            if (jac) {
                for (int c = 0; c < 6; ++c) (*jac)(k, c) /= d;
                (*jac)(k, 6) = 1.0 / d;
            }
        }
    };
}

} // namespace detail

// Nonlinear least squares of the two-Lorentzian thermal model over
// (Omega_1, Gamma_1, c1^2, Omega_2, Gamma_2, c2^2, floor), with mass and
// temperature taken as known priors. Relative residuals, analytic
// Jacobian, bounded restarts.
// theta1_prior: the mode-1 orientation, which is not observable from a
// single readout projection and must come from calibration.
inline SpectrumFit fit_thermal_spectrum(const std::vector<double>& frequencies_hz,
                                        const std::vector<double>& psd, double effective_mass,
                                        double temperature, int restarts = 5,
                                        double theta1_prior = 0.0) {
    if (frequencies_hz.size() != psd.size() || psd.size() < 16)
        throw std::invalid_argument("fit_thermal_spectrum: bad data");
    const int n = int(psd.size());

    // peak detection on a lightly smoothed copy
    std::vector<double> smooth(psd.size());
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        int cnt = 0;
        for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j, ++cnt) acc += psd[j];
        smooth[i] = acc / cnt;
    }
    std::vector<double> sorted = smooth;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double floor0 = sorted[n / 2];
    const int p1 = detail::find_peak(smooth, -1, 0);
    if (p1 < 0 || smooth[p1] < 5.0 * floor0)
        throw EstimationError("fit_thermal_spectrum: no peaks above the noise floor");
    const double df = frequencies_hz[1] - frequencies_hz[0];
    const int guard = std::max(3, int(std::ceil(frequencies_hz[p1] * 0.05 / df)));
    int p2 = detail::find_peak(smooth, p1, guard);
    const bool two_modes = p2 >= 0 && smooth[p2] > 5.0 * floor0;
    if (!two_modes) p2 = -1;

    const auto model = detail::spectrum_model(frequencies_hz, psd, effective_mass, temperature);

    auto initial = [&](double jitter, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(1.0 - jitter, 1.0 + jitter);
        Eigen::VectorXd p0(7);
        const double w1 = angular(frequencies_hz[p1]);
        const double w2 = two_modes ? angular(frequencies_hz[p2]) : 1.2 * w1;
        p0 << w1 * u(rng), w1 / 5000.0 * u(rng), 0.5 * u(rng), w2 * u(rng), w2 / 5000.0 * u(rng),
            two_modes ? 0.5 * u(rng) : 0.0, std::max(floor0, 1e-300) * u(rng);
        return p0;
    };
    Eigen::VectorXd lo(7), hi(7);
    const double wmin = angular(frequencies_hz.front()), wmax = angular(frequencies_hz.back());
    lo << wmin, wmin * 1e-7, 0.0, wmin, wmin * 1e-7, 0.0, 0.0;
    hi << wmax, wmax, 2.0, wmax, wmax, 2.0, smooth[p1];

    std::mt19937_64 rng(0x5eedf17ull);
    fit::Result best;
    for (int attempt = 0; attempt <= restarts; ++attempt) {
        auto res = fit::levenberg_marquardt(model, initial(attempt == 0 ? 0.0 : 0.05, rng), lo, hi);
        if (res.chi2 < best.chi2) best = res;
        if (best.converged && best.chi2 / n < 1e-2) break;
    }
    if (!best.converged && best.chi2 / n > 1.0)
        throw EstimationError("fit_thermal_spectrum: fit did not converge after restarts");

    SpectrumFit out;
    auto& p = best.params;
    // order modes by frequency
    int first = p[0] <= p[3] ? 0 : 1;
    const auto mode_of = [&](int m) {
        return std::array<double, 3>{p[3 * m], p[3 * m + 1], p[3 * m + 2]};
    };
    auto m1 = mode_of(first), m2 = mode_of(1 - first);
    out.modes.omega1 = m1[0];
    out.modes.gamma1 = m1[1];
    out.modes.omega2 = m2[0];
    out.modes.gamma2 = m2[1];
    out.modes.effective_mass = effective_mass;
    out.modes.temperature = temperature;
    out.modes.theta1 = theta1_prior;
    out.projection1 = std::sqrt(std::max(0.0, m1[2]));
    out.projection2 = std::sqrt(std::max(0.0, m2[2]));
    out.noise_floor = p[6];
    out.mode2_identifiable = two_modes;
    out.converged = best.converged;
    out.iterations = best.iterations;
    out.residual = std::sqrt(best.chi2 / n);
    out.covariance = best.covariance;
    return out;
}

// ---------------------------------------------------------------------------
// Response fit (force vector)

struct ResponseFit {
    mechanics::ForcePhasor force;
    double magnitude = 0.0;  // |F_I - i F_Q|, N
    double angle = 0.0;      // rad, in-phase force direction from e_z
    double residual = 0.0;   // rms of (data - model)
    bool rank_deficient = false;
    Eigen::Matrix4d covariance;
};

// Linear least squares in the 4 real unknowns (in-phase and quadrature
// force 2-vectors) of the projected two-mode response model.
inline ResponseFit fit_response(const ResponseDataset& ds, const mechanics::ModePair& modes,
                                const Eigen::Vector2d& e_beta) {
    ds.validate();
    const int n = int(ds.frequencies_hz.size());
    Eigen::MatrixXd a(2 * n, 4);
    Eigen::VectorXd b(2 * n);
    for (int k = 0; k < n; ++k) {
        const double w = angular(ds.frequencies_hz[k]);
        cplx cz = 0.0, cx = 0.0;
        for (int i = 1; i <= 2; ++i) {
            const Eigen::Vector2d ei = modes.axis(i);
            const cplx chi = mechanics::susceptibility(modes, i, w);
            const double proj = e_beta.dot(ei);
            cz += chi * ei.x() * proj;
            cx += chi * ei.y() * proj;
        }
        // response = cz F_Iz + cx F_Ix - i cz F_Qz - i cx F_Qx
        a(2 * k, 0) = cz.real();
        a(2 * k, 1) = cx.real();
        a(2 * k, 2) = cz.imag();
        a(2 * k, 3) = cx.imag();
        a(2 * k + 1, 0) = cz.imag();
        a(2 * k + 1, 1) = cx.imag();
        a(2 * k + 1, 2) = -cz.real();
        a(2 * k + 1, 3) = -cx.real();
        b[2 * k] = ds.responses[k].real();
        b[2 * k + 1] = ds.responses[k].imag();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ResponseFit out;
    out.rank_deficient = svd.singularValues()(3) < 1e-8 * svd.singularValues()(0);
    const Eigen::Vector4d u = svd.solve(b);
    out.force.in_phase = {u[0], u[1]};
    out.force.quadrature = {u[2], u[3]};
    out.magnitude = out.force.magnitude();
    out.angle = std::atan2(u[1], u[0]);
    const Eigen::VectorXd resid = a * u - b;
    out.residual = std::sqrt(resid.squaredNorm() / (2.0 * n));
    const double sigma2 = resid.squaredNorm() / std::max(1, 2 * n - 4);
    out.covariance = (a.transpose() * a).inverse() * sigma2;
    return out;
}

// ---------------------------------------------------------------------------
// Triplet estimation

struct TripletPrior {
    double omega;       // rad/s, mode center prior
    double gamma;       // rad/s
    double mass;        // kg
    double drive_projection; // (e_beta . e_i)(e_i . f_hat), force -> response scale
    std::vector<cplx> background; // fixed other-mode tail per tone (m), may be empty
};

namespace detail {

// Residual model of the triplet fit (3 complex amplitudes vs.
// s * chi(omega_j; Omega, Gamma) + background). Exposed for the
// finite-difference Jacobian cross-check.
inline fit::ResidualFn triplet_model(std::array<double, 3> w, std::array<cplx, 3> amplitudes,
                                     TripletPrior prior) {
    return [w, amplitudes, prior = std::move(prior)](const Eigen::VectorXd& p, Eigen::VectorXd& r,
                                                     Eigen::MatrixXd* jac) {
        const double mass = prior.mass;
        r.resize(6);
        if (jac) jac->setZero(6, 4);
        const cplx s(p[0], p[1]);
        const double wi = p[2], gi = p[3];
        for (int j = 0; j < 3; ++j) {
            const cplx inv_chi = mass * cplx(wi * wi - w[j] * w[j], -w[j] * gi);
            const cplx chi = 1.0 / inv_chi;
            cplx m = s * chi * prior.drive_projection;
            if (!prior.background.empty()) m += prior.background[j];
            const cplx diff = m - amplitudes[j];
            r[2 * j] = diff.real();
            r[2 * j + 1] = diff.imag();
            if (jac) {
                const cplx ds_re = chi * prior.drive_projection;
                const cplx ds_im = cplx(0.0, 1.0) * chi * prior.drive_projection;
                const cplx dchi_dw = -chi * chi * mass * 2.0 * wi;
                const cplx dchi_dg = chi * chi * mass * cplx(0.0, w[j]);
                const cplx dw = s * dchi_dw * prior.drive_projection;
                const cplx dg = s * dchi_dg * prior.drive_projection;
                (*jac)(2 * j, 0) = ds_re.real();
                (*jac)(2 * j + 1, 0) = ds_re.imag();
                (*jac)(2 * j, 1) = ds_im.real();
                (*jac)(2 * j + 1, 1) = ds_im.imag();
                (*jac)(2 * j, 2) = dw.real();
                (*jac)(2 * j + 1, 2) = dw.imag();
                (*jac)(2 * j, 3) = dg.real();
                (*jac)(2 * j + 1, 3) = dg.imag();
            }
        }
    };
}

} // namespace detail

struct TripletEstimate {
    double force_magnitude = 0.0; // N
    double omega = 0.0;           // rad/s
    double gamma = 0.0;           // rad/s
    cplx scale;                   // fitted complex amplitude scale (N)
    bool converged = false;
    bool reliable = true;
    double residual = 0.0;
};

// Fit 3 demodulated complex amplitudes to s * chi(omega_j; Omega, Gamma),
// 4 real unknowns (complex scale, center, width).
inline TripletEstimate triplet_estimate(const std::array<double, 3>& tone_frequencies_hz,
                                        const std::array<cplx, 3>& amplitudes,
                                        const TripletPrior& prior) {
    if (!(prior.drive_projection != 0.0))
        throw std::invalid_argument("triplet_estimate: zero drive projection");
    std::array<double, 3> w{};
    for (int j = 0; j < 3; ++j) w[j] = angular(tone_frequencies_hz[j]);

    TripletEstimate out;
    out.reliable = true;
    for (int j = 0; j < 3; ++j)
        if (std::abs(w[j] - prior.omega) > 10.0 * prior.gamma) out.reliable = false;

    const double mass = prior.mass;
    const auto model = detail::triplet_model(w, amplitudes, prior);

    // initial scale from the center tone and the prior susceptibility
    const cplx chi_c = 1.0 / (mass * cplx(prior.omega * prior.omega - w[1] * w[1],
                                          -w[1] * prior.gamma));
    cplx a_center = amplitudes[1];
    if (!prior.background.empty()) a_center -= prior.background[1];
    const cplx s0 = a_center / (chi_c * prior.drive_projection);
    Eigen::VectorXd p0(4);
    p0 << s0.real(), s0.imag(), prior.omega, prior.gamma;
    Eigen::VectorXd lo(4), hi(4);
    const double span = std::max(1e3 * prior.gamma, 100.0 * (w[2] - w[0]));
    lo << -1e-6, -1e-6, prior.omega - span, prior.gamma * 1e-3;
    hi << 1e-6, 1e-6, prior.omega + span, prior.gamma * 1e3;
    fit::Options opt;
    opt.tol_step = 1e-11;
    auto res = fit::levenberg_marquardt(model, p0, lo, hi, opt);

    out.scale = cplx(res.params[0], res.params[1]);
    out.force_magnitude = std::abs(out.scale);
    out.omega = res.params[2];
    out.gamma = res.params[3];
    out.converged = res.converged;
    out.residual = std::sqrt(res.chi2 / 6.0);
    return out;
}

// ---------------------------------------------------------------------------
// Peak tracker

struct TrackerState {
    double center_hz;        // current center frequency
    double reference_hz;     // re-acquire window center
    double gain = 10.0;      // Hz per unit imbalance, per block
    double max_step_hz = 5.0;
    double window_hz = 500.0;
    bool needs_reacquire = false;
};

// Integrator on the side-tone magnitude imbalance; bounded step per
// block, divergence guard on a +-window around the reference.
inline double peak_tracker_update(TrackerState& state, double lower_tone_mag,
                                  double upper_tone_mag) {
    const double total = lower_tone_mag + upper_tone_mag;
    if (total > 0.0) {
        const double imbalance = (upper_tone_mag - lower_tone_mag) / total;
        const double step =
            std::clamp(state.gain * imbalance, -state.max_step_hz, state.max_step_hz);
        state.center_hz += step;
    }
    if (std::abs(state.center_hz - state.reference_hz) > state.window_hz)
        state.needs_reacquire = true;
    return state.center_hz;
}

// ---------------------------------------------------------------------------
// Measurement-vector calibration (two-tone scheme)

struct TwoToneDrive {
    double f_x_hz = 80.0;  // drive along e_x
    double f_z_hz = 85.0;  // drive along e_z
    double amp_x = 0.0;    // m
    double amp_z = 0.0;    // m
};

// Demodulates the probe-reflection record at both drive tones; the
// in-phase amplitudes per meter of drive give the local gradient
// components, hence e_beta and the gain |grad P_R|.
inline mechanics::MeasurementVector calibrate_measurement_vector(
    const std::vector<double>& probe_power, double sample_rate, const TwoToneDrive& drive,
    double tau = 0.2, double noise_level = 0.0) {
    if (!(drive.amp_x > 0.0) && !(drive.amp_z > 0.0))
        throw std::invalid_argument("calibrate_measurement_vector: both drive amplitudes zero");

    auto steady_inphase = [&](double f) {
        const auto d = servo::lockin_demodulate(probe_power, sample_rate, f, tau);
        // average the settled second half; in-phase vs a sin drive
        cplx acc = 0.0;
        const std::size_t start = d.size() / 2;
        for (std::size_t k = start; k < d.size(); ++k) acc += d[k];
        acc /= double(d.size() - start);
        return -2.0 * acc.imag();
    };

    const double comp_x = drive.amp_x > 0.0 ? steady_inphase(drive.f_x_hz) : 0.0;
    const double comp_z = drive.amp_z > 0.0 ? steady_inphase(drive.f_z_hz) : 0.0;
    const double gx = drive.amp_x > 0.0 ? comp_x / drive.amp_x : 0.0;
    const double gz = drive.amp_z > 0.0 ? comp_z / drive.amp_z : 0.0;

    mechanics::MeasurementVector mv{};
    mv.gain = std::hypot(gx, gz);
    if (noise_level > 0.0 && std::abs(comp_x) < noise_level && std::abs(comp_z) < noise_level) {
        mv.defined = false;
        return mv;
    }
    mv.defined = mv.gain > 0.0;
    mv.angle_beta = std::atan2(gx, gz); // angle from e_z
    return mv;
}

// ---------------------------------------------------------------------------
// Triplet block synthesis (instrument model used by the fast mapping
// scheme and the Monte-Carlo validations): demodulated amplitude =
// projected response + complex thermal/readout noise of total variance
// 2 S(omega) / T_block.

inline std::array<cplx, 3> synthesize_triplet_block(const mechanics::ModePair& modes,
                                                    const Eigen::Vector2d& e_beta,
                                                    const mechanics::ForcePhasor& df,
                                                    const std::array<double, 3>& tones_hz,
                                                    double block_length, double noise_floor,
                                                    std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<cplx, 3> out{};
    for (int j = 0; j < 3; ++j) {
        const double w = angular(tones_hz[j]);
        const cplx signal = mechanics::projected_response(modes, e_beta, df, w);
        const double s = mechanics::thermal_psd(modes, e_beta, w, noise_floor);
        const double sigma = std::sqrt(s / block_length); // per quadrature
        out[j] = signal + cplx(sigma * gauss(rng), sigma * gauss(rng));
    }
    return out;
}

} // namespace nwtwin::estimation
