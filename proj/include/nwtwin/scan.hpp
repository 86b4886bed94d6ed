#pragma once

// Raster-scan engine: serpentine per-pixel evaluation with a validity
// mask, per-line drift detrend, derived gradient channels and
// mask-aware pixel averaging.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nwtwin/constants.hpp"

namespace nwtwin::scan {

enum class ScanPlane { XZ, YZ, Axis1D };

inline std::string to_string(ScanPlane p) {
    switch (p) {
        case ScanPlane::XZ: return "XZ";
        case ScanPlane::YZ: return "YZ";
        default: return "axis-1D";
    }
}

struct ScanPlan {
    ScanPlane plane = ScanPlane::XZ;
    // fast axis = z (axis 0), slow axis = x or y (axis 1)
    double origin_fast = 0.0;  // m
    double origin_slow = 0.0;  // m
    double extent_fast = 0.0;  // m
    double extent_slow = 0.0;  // m
    int pixels_fast = 100;
    int pixels_slow = 100;
    double dwell = 0.0; // s, logical dwell per pixel
    std::uint64_t seed = 0;
    std::vector<std::string> channels;

    double pitch_fast() const {
        return pixels_fast > 1 ? extent_fast / (pixels_fast - 1) : 0.0;
    }
    double pitch_slow() const {
        return pixels_slow > 1 ? extent_slow / (pixels_slow - 1) : 0.0;
    }
    void validate() const {
        if (pixels_fast < 1 || pixels_slow < 1)
            throw std::invalid_argument("ScanPlan: pixel counts must be >= 1");
        if (!(extent_fast >= 0.0) || !(extent_slow >= 0.0))
            throw std::invalid_argument("ScanPlan: extents must be >= 0");
    }
};

struct ChannelMap {
    int nx = 0; // fast axis (z)
    int ny = 0; // slow axis
    double origin_fast = 0.0, origin_slow = 0.0;
    double pitch_fast = 0.0, pitch_slow = 0.0;
    std::string plane;
    std::string scan_order = "serpentine";
    std::uint64_t seed = 0;
    std::string config_hash;
    // scalars needed by derived channels and cross-checks
    std::map<std::string, double> metadata;
    std::map<std::string, std::string> units;            // channel -> unit label
    std::map<std::string, std::vector<double>> channels; // row-major [iy * nx + ix]
    std::vector<std::uint8_t> mask;                      // 1 = valid
    std::vector<std::uint8_t> failure_code;              // 0 = ok

    std::size_t index(int ix, int iy) const { return std::size_t(iy) * nx + ix; }
    double fast_coord(int ix) const { return origin_fast + ix * pitch_fast; }
    double slow_coord(int iy) const { return origin_slow + iy * pitch_slow; }

    const std::vector<double>& channel(const std::string& name) const {
        auto it = channels.find(name);
        if (it == channels.end())
            throw std::invalid_argument("ChannelMap: no channel named '" + name + "'");
        return it->second;
    }
    bool has_channel(const std::string& name) const { return channels.count(name) != 0; }
};

// Throwable per-pixel failure with a cause code recorded in the map
// (1 = generic/solver, 2 = readout undefined, 3 = estimation).
struct PixelFailure : std::runtime_error {
    std::uint8_t code;
    PixelFailure(std::uint8_t c, const std::string& what) : std::runtime_error(what), code(c) {}
};

// Per-pixel evaluation result: channel name -> value.
using PixelValues = std::map<std::string, double>;
// pipeline(fast, slow, pixel_seed) -> values, or throws on failure.
using PixelPipeline =
    std::function<PixelValues(double fast, double slow, std::uint64_t pixel_seed)>;

// Serpentine raster: even rows left-to-right, odd rows right-to-left.
// Per-pixel failures are masked with a cause code, never fatal.
inline ChannelMap raster_scan(const ScanPlan& plan, const PixelPipeline& pipeline) {
    plan.validate();
    ChannelMap map;
    map.nx = plan.pixels_fast;
    map.ny = plan.pixels_slow;
    map.origin_fast = plan.origin_fast;
    map.origin_slow = plan.origin_slow;
    map.pitch_fast = plan.pitch_fast();
    map.pitch_slow = plan.pitch_slow();
    map.plane = to_string(plan.plane);
    map.seed = plan.seed;
    const std::size_t total = std::size_t(map.nx) * map.ny;
    map.mask.assign(total, 1);
    map.failure_code.assign(total, 0);

    for (int iy = 0; iy < map.ny; ++iy) {
        const bool reverse = (iy % 2) == 1;
        for (int step = 0; step < map.nx; ++step) {
            const int ix = reverse ? map.nx - 1 - step : step;
            const std::size_t idx = map.index(ix, iy);
            const std::uint64_t pixel_seed = plan.seed ^ (0x9e3779b97f4a7c15ull * (idx + 1));
            try {
                PixelValues vals = pipeline(map.fast_coord(ix), map.slow_coord(iy), pixel_seed);
                for (const auto& [name, value] : vals) {
                    auto& ch = map.channels[name];
                    if (ch.empty()) ch.assign(total, std::nan(""));
                    ch[idx] = value;
                }
            } catch (const PixelFailure& pf) {
                map.mask[idx] = 0;
                map.failure_code[idx] = pf.code;
            } catch (const std::exception&) {
                map.mask[idx] = 0;
                map.failure_code[idx] = 1;
            }
        }
    }
    return map;
}

// Per-line linear detrend along the fast axis (the slow-drift
// subtraction applied to lock-correction maps).
inline void detrend_lines(ChannelMap& map, const std::string& channel) {
    auto& ch = map.channels.at(channel);
    for (int iy = 0; iy < map.ny; ++iy) {
        // least-squares line through valid pixels of the row
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        for (int ix = 0; ix < map.nx; ++ix) {
            const auto idx = map.index(ix, iy);
            if (!map.mask[idx]) continue;
            sx += ix;
            sy += ch[idx];
            sxx += double(ix) * ix;
            sxy += double(ix) * ch[idx];
            ++cnt;
        }
        if (cnt < 2) continue;
        const double det = cnt * sxx - sx * sx;
        if (det == 0.0) continue;
        const double slope = (cnt * sxy - sx * sy) / det;
        // remove the slope only; the line offset carries signal
        const double mid = sx / cnt;
        for (int ix = 0; ix < map.nx; ++ix) {
            const auto idx = map.index(ix, iy);
            if (map.mask[idx]) ch[idx] -= slope * (ix - mid);
        }
    }
}

// Spatial derivative of a channel. For the cavity-shift (length)
// channel the values are converted to rad/s via -omega0/L before
// derivation, producing the parametric coupling map.
inline std::vector<double> gradient_channel(const ChannelMap& map, const std::string& channel,
                                            int axis, bool length_to_frequency = false) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("gradient_channel: axis must be 0 or 1");
    const auto& src = map.channel(channel);
    const double pitch = axis == 0 ? map.pitch_fast : map.pitch_slow;
    if (!(pitch > 0.0)) throw std::invalid_argument("gradient_channel: zero pitch along axis");
    double scale = 1.0;
    if (length_to_frequency) {
        const double omega0 = map.metadata.at("omega0");
        const double length = map.metadata.at("cavity_length");
        scale = -omega0 / length;
    }
    const std::size_t total = src.size();
    std::vector<double> out(total, std::nan(""));
    const int n_axis = axis == 0 ? map.nx : map.ny;

    auto at = [&](int ix, int iy) { return map.index(ix, iy); };
    for (int iy = 0; iy < map.ny; ++iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            const int i = axis == 0 ? ix : iy;
            int im = std::max(0, i - 1), ip = std::min(n_axis - 1, i + 1);
            std::size_t idx_m, idx_p;
            if (axis == 0) {
                idx_m = at(im, iy);
                idx_p = at(ip, iy);
            } else {
                idx_m = at(ix, im);
                idx_p = at(ix, ip);
            }
            if (!map.mask[idx_m] || !map.mask[idx_p]) continue; // masked neighbors -> masked
            out[at(ix, iy)] = scale * (src[idx_p] - src[idx_m]) / ((ip - im) * pitch);
        }
    }
    return out;
}

// Mask-aware moving average along the fast axis.
inline std::vector<double> pixel_average(const ChannelMap& map, const std::string& channel,
                                         int kernel_size) {
    if (kernel_size < 1 || kernel_size > 16)
        throw std::invalid_argument("pixel_average: kernel must be in [1, 16]");
    const auto& src = map.channel(channel);
    std::vector<double> out(src.size(), std::nan(""));
    const int half_lo = (kernel_size - 1) / 2;
    const int half_hi = kernel_size / 2;
    for (int iy = 0; iy < map.ny; ++iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            double acc = 0.0;
            int cnt = 0;
            for (int j = ix - half_lo; j <= ix + half_hi; ++j) {
                if (j < 0 || j >= map.nx) continue;
                const auto idx = map.index(j, iy);
                if (!map.mask[idx]) continue;
                acc += src[idx];
                ++cnt;
            }
            if (cnt > 0) out[map.index(ix, iy)] = acc / cnt;
        }
    }
    return out;
}

// Effective resolution along the fast axis after kernel averaging.
inline double effective_resolution(const ChannelMap& map, int kernel_size) {
    return kernel_size * map.pitch_fast;
}

} // namespace nwtwin::scan
