// nanocavity-twin: command-line front end binding the twin's modules
// into reproducible experiment recipes. Every recipe writes its
// artifacts plus a run manifest (config hash, seed, versions, wall
// time) into the output directory; all writes are atomic
// (write-temp-then-rename).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nwtwin/config.hpp"
#include "nwtwin/errors.hpp"
#include "nwtwin/experiment.hpp"
#include "nwtwin/mapio.hpp"
#include "nwtwin/merit.hpp"
#include "nwtwin/optoforce.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nwtwin;

namespace {

constexpr const char* tool_version = "1.0.0";

struct RunContext {
    std::string recipe;
    std::string config_path;
    std::string out_dir;
    config::ExperimentConfig cfg;
    std::vector<std::string> outputs;
};

// Atomic text write: temp file + rename.
void write_text(RunContext& ctx, const std::string& name, const std::string& body) {
    const fs::path path = fs::path(ctx.out_dir) / name;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
        os << body;
        if (!os) throw ConfigError("write failure on '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
    ctx.outputs.push_back(name);
}

void write_map_file(RunContext& ctx, const std::string& name, const scan::ChannelMap& map) {
    mapio::write_map((fs::path(ctx.out_dir) / name).string(), map);
    ctx.outputs.push_back(name);
}

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// Recipes

void recipe_merit_report(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    merit::OscillatorParams osc{cfg.modes.effective_mass, cfg.modes.omega1,
                                cfg.modes.omega1 / cfg.modes.gamma1, cfg.modes.temperature};
    const double xzpf = merit::zero_point_motion(osc);
    const double spread = merit::thermal_spread(osc);

    // simulated peak axial coupling: scan G_z over one standing-wave
    // period through the wire position
    const auto mode = cavity::mode_from_geometry(cfg.geometry);
    cavity::NanowireScatterer wire = cfg.wire;
    const double z0 = mode.node_near(wire.tip_position.z());
    double g_sim = 0.0;
    const double h = 0.3e-9;
    for (int i = 0; i <= 160; ++i) {
        const double z = z0 - cfg.geometry.wavelength / 4.0 +
                         cfg.geometry.wavelength / 2.0 * i / 160.0;
        cavity::NanowireScatterer p = wire, m = wire;
        p.tip_position.z() = z + h;
        m.tip_position.z() = z - h;
        const double g = (cavity::resonance_frequency(cfg.geometry, p) -
                          cavity::resonance_frequency(cfg.geometry, m)) /
                         (2.0 * h);
        g_sim = std::max(g_sim, std::abs(g));
    }
    const double kappa = cavity::solve_cavity(cfg.geometry, wire, cfg.input_power).linewidth;

    std::ostringstream os;
    os << "figure-of-merit report (config " << cfg.hash << ")\n";
    os << fmt("delta_x_zpf = %.3g pm\n", xzpf * 1e12);
    os << fmt("thermal_spread = %.3g nm\n", spread * 1e9);
    os << fmt("cavity linewidth kappa/2pi = %.4g GHz\n", ordinary(kappa) / 1e9);
    os << fmt("simulated max |G_z|/2pi = %.3f GHz/nm\n", ordinary(g_sim) / 1e18);
    for (const auto& [label, big_g] :
         std::vector<std::pair<std::string, double>>{
             {"reference coupling G_z/2pi = 3 GHz/nm", angular(3e18)},
             {"simulated coupling", g_sim}}) {
        const auto fig = merit::single_photon_coupling(big_g, osc, kappa);
        const auto act = merit::single_photon_force_displacement(fig, osc);
        const auto coop = merit::cooperativities(fig, osc);
        os << "at " << label << ":\n";
        os << fmt("  g0/2pi = %.2f MHz\n", ordinary(fig.g0) / 1e6);
        os << fmt("  g0/Omega_m = %.3g\n", fig.ratio);
        os << "  ultrastrong = " << (fig.ultrastrong ? "yes" : "no") << "\n";
        os << fmt("  single-photon force = %.3g fN\n", act.force * 1e15);
        os << fmt("  single-photon displacement = %.3g pm\n", act.displacement * 1e12);
        os << fmt("  parametric cooperativity C1 = %.3g\n", coop.parametric);
        os << fmt("  standard cooperativity C = %.3g\n", coop.standard);
        os << fmt("  thermal linewidth broadening G*dr_th/2pi = %.3g GHz\n",
                  ordinary(cavity::thermal_linewidth_broadening(big_g, osc)) / 1e9);
    }
    const std::string body = os.str();
    std::cout << body;
    write_text(ctx, "merit_report.txt", body);
}

void recipe_sweep(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const double kappa0 = cfg.geometry.empty_linewidth();
    {
        std::ostringstream os;
        os << "# detuning_hz transmission reflection scatter_fraction\n";
        for (int i = 0; i <= 200; ++i) {
            const double d = (-5.0 + 10.0 * i / 200.0) * kappa0;
            const auto sol = cavity::solve_cavity(cfg.geometry, cfg.wire, cfg.input_power,
                                                  cavity::Drive::detuned(d));
            os << fmt("%.12g %.12g %.12g %.12g\n", ordinary(d), sol.transmission,
                      sol.reflection, sol.scatter_fraction);
        }
        write_text(ctx, "sweep_detuning.txt", os.str());
    }
    {
        const auto mode = cavity::mode_from_geometry(cfg.geometry);
        const double zc = mode.node_near(cfg.wire.tip_position.z());
        std::ostringstream os;
        os << "# z_m resonance_shift_hz linewidth_hz transmission equivalent_length_shift_m\n";
        cavity::NanowireScatterer wire = cfg.wire;
        for (int i = 0; i <= 160; ++i) {
            wire.tip_position.z() = zc - cfg.geometry.wavelength / 2.0 +
                                    cfg.geometry.wavelength * i / 160.0;
            const auto sol = cavity::solve_cavity(cfg.geometry, wire, cfg.input_power);
            os << fmt("%.12g %.12g %.12g %.12g %.12g\n", wire.tip_position.z(),
                      ordinary(sol.resonance_shift), ordinary(sol.linewidth), sol.transmission,
                      sol.equivalent_length_shift);
        }
        write_text(ctx, "sweep_axial.txt", os.str());
    }
    {
        const double w0 = cavity::gaussian_waist(cfg.geometry);
        std::ostringstream os;
        os << "# x_m resonance_shift_hz linewidth_hz transmission\n";
        cavity::NanowireScatterer wire = cfg.wire;
        for (int i = 0; i <= 120; ++i) {
            wire.tip_position.x() = -3.0 * w0 + 6.0 * w0 * i / 120.0;
            const auto sol = cavity::solve_cavity(cfg.geometry, wire, cfg.input_power);
            os << fmt("%.12g %.12g %.12g %.12g\n", wire.tip_position.x(),
                      ordinary(sol.resonance_shift), ordinary(sol.linewidth), sol.transmission);
        }
        write_text(ctx, "sweep_transverse.txt", os.str());
    }
}

void recipe_scan_map(RunContext& ctx) {
    write_map_file(ctx, "scan_map.nwmap", experiment::run_scan_map(ctx.cfg));
}

void recipe_force_profile(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const double z0 = cfg.scan_plan.origin_fast;
    const double z1 = cfg.scan_plan.origin_fast + cfg.scan_plan.extent_fast;
    const auto prof =
        optoforce::axial_force_profile(cfg.geometry, cfg.wire, z0, z1, 400, cfg.input_power);
    std::ostringstream os;
    os << "# nodes_m:";
    for (double zn : prof.node_positions) os << fmt(" %.12g", zn);
    os << "\n# z_m force_z_n photon_number transmission\n";
    for (std::size_t i = 0; i < prof.z.size(); ++i) {
        if (!prof.valid[i]) continue;
        os << fmt("%.12g %.12g %.12g %.12g\n", prof.z[i], prof.fz[i], prof.photon_number[i],
                  prof.transmission[i]);
    }
    write_text(ctx, "force_profile.txt", os.str());
}

void recipe_force_map(RunContext& ctx) {
    if (!(ctx.cfg.modulation_power > 0.0))
        throw ConfigError("force-map requires drive/modulation_power > 0");
    write_map_file(ctx, "force_map.nwmap",
                   experiment::run_force_map(ctx.cfg, ctx.cfg.modulation_power));
}

experiment::ThermalNoiseResult measure_noise(const config::ExperimentConfig& cfg,
                                             const experiment::Scene& scene) {
    return experiment::measure_thermal_noise(cfg, scene, 8.0, cfg.seed);
}

std::string noise_table(const experiment::ThermalNoiseResult& tn, double fmax) {
    std::ostringstream os;
    os << "# frequency_hz psd_m2_per_hz\n";
    for (std::size_t i = 0; i < tn.spectrum.frequency.size(); ++i) {
        if (tn.spectrum.frequency[i] > fmax) break;
        os << fmt("%.12g %.12g\n", tn.spectrum.frequency[i], tn.spectrum.power[i]);
    }
    return os.str();
}

void recipe_thermal_noise(RunContext& ctx) {
    const auto scene = experiment::make_scene(ctx.cfg);
    const auto tn = measure_noise(ctx.cfg, scene);
    write_text(ctx, "thermal_noise.txt",
               noise_table(tn, 2.0 * ordinary(ctx.cfg.modes.omega2)));
}

std::vector<double> response_grid(const config::ExperimentConfig& cfg) {
    const auto& e = cfg.estimation;
    if (e.response_points < 4) throw ConfigError("estimation/response/points must be >= 4");
    std::vector<double> freqs(e.response_points);
    for (int k = 0; k < e.response_points; ++k)
        freqs[k] = e.response_fmin +
                   (e.response_fmax - e.response_fmin) * k / (e.response_points - 1);
    return freqs;
}

std::string response_table(const estimation::ResponseDataset& ds) {
    std::ostringstream os;
    os << "# frequency_hz response_re_m response_im_m magnitude_m phase_deg\n";
    for (std::size_t k = 0; k < ds.frequencies_hz.size(); ++k) {
        const auto r = ds.responses[k];
        os << fmt("%.12g %.12g %.12g %.12g %.12g\n", ds.frequencies_hz[k], r.real(), r.imag(),
                  std::abs(r), std::arg(r) * 180.0 / constants::pi);
    }
    return os.str();
}

void recipe_response(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    if (!(cfg.modulation_power > 0.0))
        throw ConfigError("response requires drive/modulation_power > 0");
    const auto scene = experiment::make_scene(cfg);
    const auto ds = experiment::measure_response(cfg, scene, response_grid(cfg),
                                                 cfg.modulation_power, cfg.seed);
    write_text(ctx, "response.txt", response_table(ds));
}

std::string covariance_block(const Eigen::MatrixXd& cov) {
    std::ostringstream os;
    os << "covariance:\n";
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        os << " ";
        for (Eigen::Index j = 0; j < cov.cols(); ++j) os << fmt(" %.6g", cov(i, j));
        os << "\n";
    }
    return os.str();
}

estimation::SpectrumFit fit_modes(const config::ExperimentConfig& cfg,
                                  const experiment::ThermalNoiseResult& tn) {
    const double f_lo = 0.7 * ordinary(cfg.modes.omega1);
    const double f_hi = 1.3 * ordinary(cfg.modes.omega2);
    std::vector<double> ff, pp;
    for (std::size_t i = 0; i < tn.spectrum.frequency.size(); ++i) {
        const double f = tn.spectrum.frequency[i];
        if (f >= f_lo && f <= f_hi) {
            ff.push_back(f);
            pp.push_back(tn.spectrum.power[i]);
        }
    }
    // the mode-1 orientation is unobservable from a single projection;
    // it enters as a calibration prior
    return estimation::fit_thermal_spectrum(ff, pp, cfg.modes.effective_mass,
                                            cfg.modes.temperature, 5, cfg.modes.theta1);
}

void recipe_fit_noise(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto scene = experiment::make_scene(cfg);
    const auto tn = measure_noise(cfg, scene);
    write_text(ctx, "thermal_noise.txt", noise_table(tn, 2.0 * ordinary(cfg.modes.omega2)));
    const auto sf = fit_modes(cfg, tn);
    std::ostringstream os;
    os << "thermal spectrum fit\n";
    os << fmt("frequency1_hz = %.6f\n", ordinary(sf.modes.omega1));
    os << fmt("gamma1_hz = %.6f\n", ordinary(sf.modes.gamma1));
    os << fmt("q1 = %.3f\n", sf.modes.omega1 / sf.modes.gamma1);
    os << fmt("frequency2_hz = %.6f\n", ordinary(sf.modes.omega2));
    os << fmt("gamma2_hz = %.6f\n", ordinary(sf.modes.gamma2));
    os << fmt("q2 = %.3f\n", sf.modes.omega2 / sf.modes.gamma2);
    os << fmt("projection1 = %.6f\n", sf.projection1);
    os << fmt("projection2 = %.6f\n", sf.projection2);
    os << fmt("noise_floor_m2_per_hz = %.6g\n", sf.noise_floor);
    os << "mode2_identifiable = " << (sf.mode2_identifiable ? "yes" : "no") << "\n";
    os << "converged = " << (sf.converged ? "yes" : "no") << "\n";
    os << fmt("iterations = %d\n", sf.iterations);
    os << fmt("residual = %.6g\n", sf.residual);
    os << covariance_block(sf.covariance);
    write_text(ctx, "fit_noise.txt", os.str());
    std::cout << "fit-noise: f1 = " << ordinary(sf.modes.omega1)
              << " Hz, f2 = " << ordinary(sf.modes.omega2) << " Hz\n";
}

void recipe_fit_response(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    if (!(cfg.modulation_power > 0.0))
        throw ConfigError("fit-response requires drive/modulation_power > 0");
    const auto scene = experiment::make_scene(cfg);
    const auto tn = measure_noise(cfg, scene);
    const auto sf = fit_modes(cfg, tn);
    const auto ds = experiment::measure_response(cfg, scene, response_grid(cfg),
                                                 cfg.modulation_power, cfg.seed ^ 0xa5a5a5ull);
    write_text(ctx, "response.txt", response_table(ds));
    const auto rf = estimation::fit_response(ds, sf.modes, scene.e_beta);
    const auto truth = experiment::injected_phasor(cfg, scene.locked.wire_position,
                                                   cfg.modulation_power, cfg.modes.omega1);
    std::ostringstream os;
    os << "response (force-vector) fit\n";
    os << fmt("force_inphase_z_n = %.6g\n", rf.force.in_phase.x());
    os << fmt("force_inphase_x_n = %.6g\n", rf.force.in_phase.y());
    os << fmt("force_quadrature_z_n = %.6g\n", rf.force.quadrature.x());
    os << fmt("force_quadrature_x_n = %.6g\n", rf.force.quadrature.y());
    os << fmt("magnitude_n = %.6g\n", rf.magnitude);
    os << fmt("angle_deg = %.4f\n", rf.angle * 180.0 / constants::pi);
    os << fmt("residual_m = %.6g\n", rf.residual);
    os << "rank_deficient = " << (rf.rank_deficient ? "yes" : "no") << "\n";
    os << fmt("injected_magnitude_n = %.6g\n", truth.magnitude());
    os << covariance_block(rf.covariance);
    write_text(ctx, "fit_response.txt", os.str());
    std::cout << "fit-response: |F| = " << rf.magnitude << " N (injected "
              << truth.magnitude() << " N)\n";
}

void recipe_lock_sim(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto sol = cavity::solve_cavity(cfg.geometry, cfg.wire, cfg.input_power);
    servo::LockScene scene;
    scene.kappa = sol.linewidth;
    scene.omega0 = cfg.geometry.omega0();
    scene.cavity_length = cfg.geometry.resonant_length();
    const auto res = servo::run_lock(scene, cfg.drift, cfg.lock, 5.0);
    std::ostringstream os;
    os << "# lock summary: locked=" << (res.locked ? "yes" : "no")
       << " lock_lost=" << (res.lock_lost ? "yes" : "no")
       << fmt(" residual_rms_hz=%.6g", ordinary(res.residual_rms))
       << fmt(" total_correction_m=%.12g\n", res.total_correction());
    os << "# t_s fast_m slow_m residual_detuning_hz\n";
    for (std::size_t k = 0; k < res.time.size(); k += 10)
        os << fmt("%.6f %.12g %.12g %.12g\n", res.time[k], res.fast[k], res.slow[k],
                  ordinary(res.residual[k]));
    write_text(ctx, "lock_sim.txt", os.str());
    std::cout << "lock-sim: locked=" << (res.locked ? "yes" : "no")
              << ", residual rms = " << ordinary(res.residual_rms) << " Hz\n";
}

void recipe_track_line(RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    if (!(cfg.modulation_power > 0.0))
        throw ConfigError("track-line requires drive/modulation_power > 0");
    const double z0 = cfg.scan_plan.origin_fast;
    const double z1 = cfg.scan_plan.origin_fast + cfg.scan_plan.extent_fast;
    const int min_pts = int(std::ceil((z1 - z0) / (cfg.geometry.wavelength / 40.0))) + 2;
    const int npoints = std::max(cfg.scan_plan.pixels_fast, min_pts);
    const auto tl = experiment::track_line(cfg, z0, z1, npoints, cfg.modulation_power, 25,
                                           cfg.seed);
    std::ostringstream os;
    os << "# z_m tracked_hz injected_hz gradient_hz force_n\n";
    for (std::size_t i = 0; i < tl.z.size(); ++i)
        os << fmt("%.12g %.12g %.12g %.12g %.12g\n", tl.z[i], tl.tracked_hz[i],
                  tl.injected_hz[i], tl.gradient_hz[i], tl.force[i]);
    write_text(ctx, "track_line.txt", os.str());
}

void recipe_map_export(RunContext& ctx, const std::string& map_path,
                       const std::string& channel) {
    if (map_path.empty()) throw ConfigError("map-export requires --map <file.nwmap>");
    const auto map = mapio::read_map(map_path);
    const std::string stem = fs::path(map_path).stem().string();
    std::vector<std::string> names;
    if (!channel.empty()) {
        if (!map.has_channel(channel))
            throw ConfigError("map-export: no channel named '" + channel + "'");
        names.push_back(channel);
    } else {
        for (const auto& [name, _] : map.channels) names.push_back(name);
    }
    for (const auto& name : names) {
        std::ostringstream os;
        mapio::export_channel_text(map, name, os);
        write_text(ctx, stem + "_" + name + ".txt", os.str());
    }
}

// ---------------------------------------------------------------------------

void write_manifest(RunContext& ctx, double wall_s) {
    json m;
    m["tool"] = "nanocavity-twin";
    m["version"] = tool_version;
    m["format_versions"] = {{"config_schema", 1}, {"map", 1}};
    m["recipe"] = ctx.recipe;
    m["config_path"] = ctx.config_path;
    m["config_hash"] = ctx.cfg.hash;
    m["seed"] = ctx.cfg.seed;
    m["pixels"] = {ctx.cfg.scan_plan.pixels_fast, ctx.cfg.scan_plan.pixels_slow};
    std::sort(ctx.outputs.begin(), ctx.outputs.end());
    m["outputs"] = ctx.outputs;
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["timing"] = {{"timestamp_utc", stamp}, {"wall_time_s", wall_s}};
    const fs::path path = fs::path(ctx.out_dir) / "manifest.json";
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        os << m.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nanocavity-twin: digital twin of a nanowire-in-cavity experiment"};
    std::string recipe, config_path, out_dir, pixels, map_path, channel;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("recipe", recipe,
                   "one of: merit-report sweep scan-map force-profile force-map thermal-noise "
                   "response fit-noise fit-response lock-sim track-line map-export")
        ->required();
    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--out", out_dir, "output directory")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    app.add_option("--pixels", pixels, "override scan pixels, WxH (fast x slow)");
    app.add_option("--map", map_path, "input .nwmap file (map-export)");
    app.add_option("--channel", channel, "restrict map-export to one channel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    seed_set = seed_opt->count() > 0;

    const std::vector<std::string> known = {
        "merit-report", "sweep",     "scan-map",     "force-profile",
        "force-map",    "thermal-noise", "response", "fit-noise",
        "fit-response", "lock-sim",  "track-line",   "map-export"};
    if (std::find(known.begin(), known.end(), recipe) == known.end()) {
        std::cerr << "error: unknown recipe '" << recipe << "'\n";
        return 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        RunContext ctx;
        ctx.recipe = recipe;
        ctx.config_path = config_path;
        ctx.out_dir = out_dir;
        if (recipe != "map-export" || !config_path.empty()) {
            if (config_path.empty()) throw ConfigError("--config is required for this recipe");
            ctx.cfg = config::load_config(config_path);
        }
        if (seed_set) {
            ctx.cfg.seed = seed;
            ctx.cfg.scan_plan.seed = seed;
        }
        if (!pixels.empty()) {
            int w = 0, h = 0;
            char x = 0;
            std::istringstream ps(pixels);
            if (!(ps >> w >> x >> h) || x != 'x' || w < 1 || h < 1)
                throw ConfigError("--pixels must look like 100x100");
            ctx.cfg.scan_plan.pixels_fast = w;
            ctx.cfg.scan_plan.pixels_slow = h;
        }
        fs::create_directories(out_dir);

        if (recipe == "merit-report") recipe_merit_report(ctx);
        else if (recipe == "sweep") recipe_sweep(ctx);
        else if (recipe == "scan-map") recipe_scan_map(ctx);
        else if (recipe == "force-profile") recipe_force_profile(ctx);
        else if (recipe == "force-map") recipe_force_map(ctx);
        else if (recipe == "thermal-noise") recipe_thermal_noise(ctx);
        else if (recipe == "response") recipe_response(ctx);
        else if (recipe == "fit-noise") recipe_fit_noise(ctx);
        else if (recipe == "fit-response") recipe_fit_response(ctx);
        else if (recipe == "lock-sim") recipe_lock_sim(ctx);
        else if (recipe == "track-line") recipe_track_line(ctx);
        else if (recipe == "map-export") recipe_map_export(ctx, map_path, channel);

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(ctx, wall);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const EstimationError& e) {
        std::cerr << "estimation failure: " << e.what() << "\n";
        return 4;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
