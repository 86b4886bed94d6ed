// Unit tests for the raster-scan engine and the estimation chain
// (thermal-spectrum fit, response fit, triplet estimation, peak tracker
// and measurement-vector calibration).

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "nwtwin/estimation.hpp"
#include "nwtwin/mechanics.hpp"
#include "nwtwin/scan.hpp"
#include "nwtwin/servo.hpp"

using namespace nwtwin;
using Catch::Approx;
using cplx = std::complex<double>;

namespace {

scan::ScanPlan small_plan(int nx = 16, int ny = 4) {
    scan::ScanPlan plan{};
    plan.plane = scan::ScanPlane::XZ;
    plan.origin_fast = -1e-7;
    plan.origin_slow = -2e-7;
    plan.extent_fast = 3e-7;
    plan.extent_slow = 4e-7;
    plan.pixels_fast = nx;
    plan.pixels_slow = ny;
    plan.seed = 99;
    return plan;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_CASE("raster scan visits pixels in serpentine order and is deterministic") {
    const auto plan = small_plan();
    std::vector<double> order;
    auto pipeline = [&](double fast, double slow, std::uint64_t seed) {
        order.push_back(fast);
        return scan::PixelValues{{"value", fast + 2.0 * slow + double(seed % 1000)}};
    };
    const auto map = scan::raster_scan(plan, pipeline);
    REQUIRE(int(order.size()) == plan.pixels_fast * plan.pixels_slow);
    // row 0 ascending, row 1 descending
    CHECK(order[1] > order[0]);
    CHECK(order[plan.pixels_fast + 1] < order[plan.pixels_fast]);
    CHECK(order[plan.pixels_fast] == Approx(map.fast_coord(plan.pixels_fast - 1)));

    order.clear();
    const auto again = scan::raster_scan(plan, pipeline);
    CHECK(again.channel("value") == map.channel("value"));

    scan::ScanPlan reseeded = plan;
    reseeded.seed = 100;
    order.clear();
    const auto different = scan::raster_scan(reseeded, pipeline);
    CHECK(different.channel("value") != map.channel("value"));
}

TEST_CASE("pixel failures are masked with their cause code, never fatal") {
    const auto plan = small_plan();
    auto pipeline = [&](double fast, double slow, std::uint64_t) -> scan::PixelValues {
        if (fast > 0.9e-7 && slow < -1e-7) throw scan::PixelFailure(2, "readout undefined");
        if (fast < -0.9e-7 && slow > 1.5e-7) throw std::runtime_error("solver");
        return {{"value", 1.0}};
    };
    const auto map = scan::raster_scan(plan, pipeline);
    int masked = 0, code1 = 0, code2 = 0;
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
        if (!map.mask[i]) {
            ++masked;
            CHECK(std::isnan(map.channel("value")[i]));
            if (map.failure_code[i] == 1) ++code1;
            if (map.failure_code[i] == 2) ++code2;
        } else {
            CHECK(map.failure_code[i] == 0);
        }
    }
    CHECK(masked > 0);
    CHECK(code1 > 0);
    CHECK(code2 > 0);
    CHECK(masked == code1 + code2);
}

TEST_CASE("per-line detrend removes the slope and keeps the offset") {
    const auto plan = small_plan();
    auto pipeline = [&](double fast, double slow, std::uint64_t) {
        return scan::PixelValues{{"corr", 5e-12 + 3e-3 * fast + 1e-4 * slow}};
    };
    auto map = scan::raster_scan(plan, pipeline);
    scan::detrend_lines(map, "corr");
    const auto& ch = map.channel("corr");
    for (int iy = 0; iy < map.ny; ++iy) {
        // each row collapses to a constant
        for (int ix = 1; ix < map.nx; ++ix)
            CHECK(ch[map.index(ix, iy)] == Approx(ch[map.index(0, iy)]).margin(1e-18));
    }
}

TEST_CASE("gradient channel differentiates and converts length to frequency") {
    auto plan = small_plan(64, 2);
    const double period = 1.5e-7;
    auto pipeline = [&](double fast, double slow, std::uint64_t) {
        (void)slow;
        return scan::PixelValues{{"shift", std::sin(constants::two_pi * fast / period)}};
    };
    auto map = scan::raster_scan(plan, pipeline);
    map.metadata["omega0"] = 2.4e15;
    map.metadata["cavity_length"] = 12e-6;

    const auto plain = scan::gradient_channel(map, "shift", 0);
    for (int ix = 2; ix < map.nx - 2; ++ix) {
        const double expect =
            constants::two_pi / period * std::cos(constants::two_pi * map.fast_coord(ix) / period);
        CHECK(plain[map.index(ix, 0)] == Approx(expect).epsilon(0.02));
    }
    const auto scaled = scan::gradient_channel(map, "shift", 0, true);
    const double scale = -2.4e15 / 12e-6;
    CHECK(scaled[map.index(5, 0)] == Approx(scale * plain[map.index(5, 0)]));

    // a masked pixel masks the gradient of its neighbors
    map.mask[map.index(10, 1)] = 0;
    const auto masked = scan::gradient_channel(map, "shift", 0);
    CHECK(std::isnan(masked[map.index(9, 1)]));
    CHECK(std::isnan(masked[map.index(11, 1)]));
    CHECK_FALSE(std::isnan(masked[map.index(13, 1)]));

    CHECK_THROWS_AS(scan::gradient_channel(map, "shift", 3), std::invalid_argument);
}

TEST_CASE("pixel averaging reduces white-noise variance and sets the resolution") {
    scan::ScanPlan plan = small_plan(400, 1);
    plan.extent_fast = 1e-6;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    auto pipeline = [&](double, double, std::uint64_t) {
        return scan::PixelValues{{"noise", gauss(rng)}};
    };
    const auto map = scan::raster_scan(plan, pipeline);

    const auto same = scan::pixel_average(map, "noise", 1);
    CHECK(same == map.channel("noise"));

    const int kernel = 10;
    const auto smooth = scan::pixel_average(map, "noise", kernel);
    auto variance = [](const std::vector<double>& v, int lo, int hi) {
        double m = 0.0;
        for (int i = lo; i < hi; ++i) m += v[i];
        m /= (hi - lo);
        double s = 0.0;
        for (int i = lo; i < hi; ++i) s += (v[i] - m) * (v[i] - m);
        return s / (hi - lo);
    };
    // skip the kernel-truncated edges; samples kernel-apart are independent
    std::vector<double> thin;
    for (int i = kernel; i < 400 - kernel; i += kernel) thin.push_back(smooth[i]);
    const double v_raw = variance(map.channel("noise"), 0, 400);
    double v_thin = 0.0;
    for (double t : thin) v_thin += t * t;
    v_thin /= double(thin.size());
    CHECK(v_raw / v_thin == Approx(double(kernel)).epsilon(0.45));

    // 10-pixel kernel on a 400-pixel, 1 um fast axis: ~25 nm resolution
    CHECK(scan::effective_resolution(map, kernel) == Approx(25e-9).epsilon(0.03));

    CHECK_THROWS_AS(scan::pixel_average(map, "noise", 0), std::invalid_argument);
    CHECK_THROWS_AS(scan::pixel_average(map, "noise", 17), std::invalid_argument);
}

// ------------------------------------------------------- spectrum fit

namespace {

// one-sided PSD record with chi^2 scatter equivalent to `navg` averages
std::vector<double> synthetic_psd(const mechanics::ModePair& m, const Eigen::Vector2d& e_beta,
                                  const std::vector<double>& freqs, double floor, int navg,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> out(freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double s = mechanics::thermal_psd(m, e_beta, nwtwin::angular(freqs[i]), floor);
        std::gamma_distribution<double> gamma(navg, s / navg);
        out[i] = gamma(rng);
    }
    return out;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

} // namespace

TEST_CASE("thermal spectrum fit recovers both modes from a noisy record") {
    const auto m = mechanics::ModePair::defaults();
    const double beta = 1.0;
    const Eigen::Vector2d e_beta{std::cos(beta), std::sin(beta)};
    const auto freqs = linspace(40e3, 72e3, 8001);
    const double floor = 1e-26;
    const auto psd = synthetic_psd(m, e_beta, freqs, floor, 50, 17);

    const auto fitres = estimation::fit_thermal_spectrum(freqs, psd, m.effective_mass,
                                                         m.temperature, 5, m.theta1);
    REQUIRE(fitres.converged);
    CHECK(fitres.mode2_identifiable);
    CHECK(ordinary(fitres.modes.omega1) == Approx(50e3).margin(2.0));
    CHECK(ordinary(fitres.modes.omega2) == Approx(60e3).margin(2.0));
    CHECK(fitres.modes.gamma1 == Approx(m.gamma1).epsilon(0.05));
    CHECK(fitres.modes.gamma2 == Approx(m.gamma2).epsilon(0.05));
    CHECK(fitres.projection1 == Approx(std::abs(e_beta.dot(m.axis(1)))).epsilon(0.03));
    CHECK(fitres.projection2 == Approx(std::abs(e_beta.dot(m.axis(2)))).epsilon(0.03));
    CHECK(fitres.noise_floor == Approx(floor).epsilon(0.10));
}

TEST_CASE("thermal spectrum fit refuses a record without peaks") {
    std::mt19937_64 rng(4);
    const auto freqs = linspace(40e3, 70e3, 2001);
    std::vector<double> flat(freqs.size());
    std::gamma_distribution<double> gamma(50.0, 1e-26 / 50.0);
    for (auto& v : flat) v = gamma(rng);
    CHECK_THROWS_AS(
        estimation::fit_thermal_spectrum(freqs, flat, 1e-15, 300.0),
        EstimationError);
}

TEST_CASE("mode 2 is flagged unidentifiable when the readout is blind to it") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta = m.axis(1); // orthogonal to mode 2
    const auto freqs = linspace(40e3, 72e3, 8001);
    // readout floor above the far Lorentzian tail, as in a real record
    const auto psd = synthetic_psd(m, e_beta, freqs, 1e-22, 50, 23);
    const auto fitres =
        estimation::fit_thermal_spectrum(freqs, psd, m.effective_mass, m.temperature);
    CHECK_FALSE(fitres.mode2_identifiable);
    CHECK(ordinary(fitres.modes.omega1) == Approx(50e3).margin(2.0));
}

// ------------------------------------------------------- response fit

TEST_CASE("response fit recovers a noiseless pure-quadrature force exactly") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{std::cos(0.9), std::sin(0.9)};
    mechanics::ForcePhasor truth{};
    truth.quadrature = {6e-15, 0.0};

    estimation::ResponseDataset ds;
    ds.p0 = 3e-6;
    ds.dp = 1.5e-6;
    ds.e_beta = e_beta;
    ds.frequencies_hz = linspace(45e3, 65e3, 81);
    ds.responses.resize(ds.frequencies_hz.size());
    for (std::size_t k = 0; k < ds.frequencies_hz.size(); ++k)
        ds.responses[k] = mechanics::projected_response(m, e_beta, truth,
                                                        nwtwin::angular(ds.frequencies_hz[k]));

    const auto fitres = estimation::fit_response(ds, m, e_beta);
    CHECK_FALSE(fitres.rank_deficient);
    CHECK(fitres.force.quadrature.x() == Approx(6e-15).epsilon(1e-9));
    CHECK(std::abs(fitres.force.quadrature.y()) < 1e-9 * 6e-15);
    CHECK(fitres.force.in_phase.norm() < 1e-9 * 6e-15);
    CHECK(fitres.magnitude == Approx(6e-15).epsilon(1e-9));
}

TEST_CASE("response fit recovers a 6 fN vector through thermal-level noise") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{std::cos(0.9), std::sin(0.9)};
    const double angle = 15.0 * constants::pi / 180.0;
    mechanics::ForcePhasor truth{};
    truth.in_phase = 6e-15 * Eigen::Vector2d(std::cos(angle), std::sin(angle));

    estimation::ResponseDataset ds;
    ds.p0 = 3e-6;
    ds.dp = 1.5e-6;
    ds.e_beta = e_beta;
    ds.frequencies_hz = linspace(45e3, 65e3, 81);
    ds.responses.resize(ds.frequencies_hz.size());
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss;
    const double t_block = 0.25;
    for (std::size_t k = 0; k < ds.frequencies_hz.size(); ++k) {
        const double w = nwtwin::angular(ds.frequencies_hz[k]);
        const double sigma = std::sqrt(mechanics::thermal_psd(m, e_beta, w) / t_block);
        ds.responses[k] = mechanics::projected_response(m, e_beta, truth, w) +
                          cplx(sigma * gauss(rng), sigma * gauss(rng));
    }
    const auto fitres = estimation::fit_response(ds, m, e_beta);
    CHECK(fitres.magnitude == Approx(6e-15).epsilon(0.05));
    CHECK(fitres.angle == Approx(angle).margin(2.0 * constants::pi / 180.0));
    CHECK(fitres.force.quadrature.norm() < 0.05 * 6e-15);
}

TEST_CASE("response dataset validation") {
    estimation::ResponseDataset ds;
    ds.frequencies_hz = {1.0, 2.0, 3.0};
    ds.responses = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument); // too few points
    ds.frequencies_hz = {1.0, 2.0, 2.0, 3.0};
    ds.responses.resize(4);
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument); // non-monotone
    ds.frequencies_hz = {1.0, 2.0, 3.0, 4.0};
    ds.p0 = 1e-6;
    ds.dp = 2e-6;
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument); // dp > p0
}

// ------------------------------------------------------- triplet fit

namespace {

// full two-mode response at the tones, and the mode-2 tail used as the
// fixed background of the single-mode triplet model
struct TripletScene {
    std::array<cplx, 3> amplitudes;
    estimation::TripletPrior prior;
};

TripletScene make_triplet_scene(const mechanics::ModePair& m, const Eigen::Vector2d& e_beta,
                                const mechanics::ForcePhasor& df,
                                const std::array<double, 3>& tones_hz) {
    TripletScene s{};
    s.prior.omega = m.omega1;
    s.prior.gamma = m.gamma1;
    s.prior.mass = m.effective_mass;
    const Eigen::Vector2d fhat = df.complex_vector().real().normalized();
    s.prior.drive_projection = e_beta.dot(m.axis(1)) * m.axis(1).dot(fhat);
    s.prior.background.resize(3);
    for (int j = 0; j < 3; ++j) {
        const double w = nwtwin::angular(tones_hz[j]);
        s.amplitudes[j] = mechanics::projected_response(m, e_beta, df, w);
        // mode-2 tail only
        const Eigen::Vector2d e2 = m.axis(2);
        const cplx f2 = e2.x() * df.complex_vector().x() + e2.y() * df.complex_vector().y();
        s.prior.background[j] =
            mechanics::susceptibility(m, 2, w) * f2 * (e_beta.dot(e2));
    }
    return s;
}

} // namespace

TEST_CASE("triplet estimate is exact on noiseless amplitudes") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{1.0, 0.0};
    mechanics::ForcePhasor df{};
    df.in_phase = {2e-15, 0.0};
    const std::array<double, 3> tones{49950.0, 50000.0, 50050.0};
    const auto s = make_triplet_scene(m, e_beta, df, tones);
    const auto est = estimation::triplet_estimate(tones, s.amplitudes, s.prior);
    REQUIRE(est.converged);
    CHECK(est.reliable);
    CHECK(est.force_magnitude == Approx(2e-15).epsilon(1e-6));
    CHECK(est.omega == Approx(m.omega1).epsilon(1e-9));
    CHECK(est.gamma == Approx(m.gamma1).epsilon(1e-4));
    CHECK(est.residual < 1e-9 * std::abs(s.amplitudes[1]));
}

TEST_CASE("triplet estimate flags far-detuned tones as unreliable") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{1.0, 0.0};
    mechanics::ForcePhasor df{};
    df.in_phase = {2e-15, 0.0};
    const std::array<double, 3> tones{49950.0, 50000.0, 50050.0};
    auto s = make_triplet_scene(m, e_beta, df, tones);
    s.prior.omega = nwtwin::angular(50e3 + 5e3); // 5 kHz off, >> 10 Gamma
    const auto est = estimation::triplet_estimate(tones, s.amplitudes, s.prior);
    CHECK_FALSE(est.reliable);

    s.prior.drive_projection = 0.0;
    CHECK_THROWS_AS(estimation::triplet_estimate(tones, s.amplitudes, s.prior),
                    std::invalid_argument);
}

TEST_CASE("triplet Monte-Carlo: 100 blocks of 0.1 s recover force, frequency and Q") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{1.0, 0.0};
    mechanics::ForcePhasor df{};
    df.in_phase = {2e-15, 0.0};
    const std::array<double, 3> tones{49950.0, 50000.0, 50050.0};
    auto s = make_triplet_scene(m, e_beta, df, tones);

    std::mt19937_64 rng(2024);
    std::vector<double> ferr, werr, qerr;
    const double q_true = m.omega1 / m.gamma1;
    for (int b = 0; b < 100; ++b) {
        const auto amps =
            estimation::synthesize_triplet_block(m, e_beta, df, tones, 0.1, 0.0, rng);
        const auto est = estimation::triplet_estimate(tones, amps, s.prior);
        if (!est.converged) continue;
        ferr.push_back(std::abs(est.force_magnitude - 2e-15) / 2e-15);
        werr.push_back(std::abs(ordinary(est.omega) - 50e3));
        qerr.push_back(std::abs(est.omega / est.gamma - q_true) / q_true);
    }
    REQUIRE(ferr.size() > 90);
    CHECK(median_of(ferr) < 0.10);
    CHECK(median_of(werr) < 1.0);
    CHECK(median_of(qerr) < 0.15);
}

// ------------------------------------------------------- peak tracker

TEST_CASE("peak tracker: balance, direction, bounded step and convergence") {
    estimation::TrackerState st{};
    st.center_hz = 50e3;
    st.reference_hz = 50e3;

    estimation::peak_tracker_update(st, 1.0, 1.0);
    CHECK(st.center_hz == 50e3);

    estimation::peak_tracker_update(st, 1.0, 3.0); // peak sits above
    CHECK(st.center_hz > 50e3);
    CHECK(st.center_hz <= 50e3 + st.max_step_hz); // bounded step
    CHECK_FALSE(st.needs_reacquire);

    // converge onto a softened mode 37 Hz below the reference
    auto m = mechanics::ModePair::defaults();
    const double f_true = 50e3 - 37.0;
    m.omega1 = nwtwin::angular(f_true);
    st = estimation::TrackerState{};
    st.center_hz = 50e3;
    st.reference_hz = 50e3;
    const double half_span = 25.0;
    for (int b = 0; b < 40; ++b) {
        const double lo = std::abs(mechanics::susceptibility(m, 1,
                                   nwtwin::angular(st.center_hz - half_span)));
        const double hi = std::abs(mechanics::susceptibility(m, 1,
                                   nwtwin::angular(st.center_hz + half_span)));
        estimation::peak_tracker_update(st, lo, hi);
    }
    CHECK(st.center_hz == Approx(f_true).margin(2.0));
    CHECK_FALSE(st.needs_reacquire);

    // divergence guard
    st.center_hz = st.reference_hz + st.window_hz + 1.0;
    estimation::peak_tracker_update(st, 1.0, 1.0);
    CHECK(st.needs_reacquire);
}

// ------------------------------------- measurement-vector calibration

TEST_CASE("two-tone calibration reconstructs the probe measurement vector") {
    servo::ProbeReadoutModel model{};
    model.phase_offset = constants::pi / 2.0;
    const double kp = constants::two_pi / model.probe_wavelength;
    const double z0 = -constants::pi / (2.0 * kp); // rising fringe slope
    const double x0 = 0.25e-6;

    estimation::TwoToneDrive drive{};
    drive.amp_x = 1e-10;
    drive.amp_z = 1e-10;
    const double fs = 2000.0, duration = 3.0;
    std::vector<double> record(std::size_t(fs * duration));
    for (std::size_t k = 0; k < record.size(); ++k) {
        const double t = double(k) / fs;
        const Eigen::Vector3d pos{
            x0 + drive.amp_x * std::sin(constants::two_pi * drive.f_x_hz * t), 0.0,
            z0 + drive.amp_z * std::sin(constants::two_pi * drive.f_z_hz * t)};
        record[k] = servo::probe_reflection(pos, model).power;
    }
    const auto mv = estimation::calibrate_measurement_vector(record, fs, drive);
    REQUIRE(mv.defined);
    const auto truth = servo::probe_reflection({x0, 0.0, z0}, model);
    CHECK(mv.gain == Approx(truth.gradient.norm()).epsilon(0.02));
    const double angle_truth = std::atan2(truth.gradient.y(), truth.gradient.x());
    CHECK(mv.angle_beta == Approx(angle_truth).margin(0.5 * constants::pi / 180.0));

    // z-only drive at a rising fringe: measurement vector along +e_z
    estimation::TwoToneDrive zonly{};
    zonly.amp_z = 1e-10;
    std::vector<double> rec_z(record.size());
    for (std::size_t k = 0; k < rec_z.size(); ++k) {
        const double t = double(k) / fs;
        const Eigen::Vector3d pos{0.0, 0.0,
                                  z0 + zonly.amp_z * std::sin(constants::two_pi * zonly.f_z_hz * t)};
        rec_z[k] = servo::probe_reflection(pos, model).power;
    }
    const auto mvz = estimation::calibrate_measurement_vector(rec_z, fs, zonly);
    CHECK(mvz.defined);
    CHECK(std::abs(mvz.angle_beta) < 0.01);

    estimation::TwoToneDrive none{};
    CHECK_THROWS_AS(estimation::calibrate_measurement_vector(rec_z, fs, none),
                    std::invalid_argument);
}

TEST_CASE("synthesized triplet blocks carry the thermal noise variance") {
    const auto m = mechanics::ModePair::defaults();
    const Eigen::Vector2d e_beta{1.0, 0.0};
    const mechanics::ForcePhasor none{};
    const std::array<double, 3> tones{49950.0, 50000.0, 50050.0};
    std::mt19937_64 rng(8);
    const double t_block = 0.1;
    std::array<double, 3> acc{};
    const int nblocks = 400;
    for (int b = 0; b < nblocks; ++b) {
        const auto amps = estimation::synthesize_triplet_block(m, e_beta, none, tones, t_block,
                                                               0.0, rng);
        for (int j = 0; j < 3; ++j) acc[j] += std::norm(amps[j]);
    }
    for (int j = 0; j < 3; ++j) {
        const double expect =
            2.0 * mechanics::thermal_psd(m, e_beta, nwtwin::angular(tones[j])) / t_block;
        CHECK(acc[j] / nblocks == Approx(expect).epsilon(0.15));
    }
}
