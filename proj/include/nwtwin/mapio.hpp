#pragma once

// NWMAP1 map container: magic string, JSON header (axes, pitch,
// channels, units, config hash, seed), then row-major 64-bit
// little-endian floats per channel plus the validity mask. Writes are
// atomic (temp file + rename); reads refuse partial payloads.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nwtwin/errors.hpp"
#include "nwtwin/scan.hpp"

namespace nwtwin::mapio {

using nlohmann::json;

inline constexpr char magic[] = "NWMAP1\n";
inline constexpr std::size_t magic_len = 7;

namespace detail {

inline void require_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw SolverError("mapio: big-endian hosts are not supported");
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw ConfigError("mapio: truncated header length");
    return v;
}

} // namespace detail

inline void write_map(const std::string& path, const scan::ChannelMap& map) {
    detail::require_little_endian();
    json header;
    header["format_version"] = 1;
    header["nx"] = map.nx;
    header["ny"] = map.ny;
    header["origin"] = {map.origin_fast, map.origin_slow};
    header["pitch"] = {map.pitch_fast, map.pitch_slow};
    header["plane"] = map.plane;
    header["scan_order"] = map.scan_order;
    header["seed"] = map.seed;
    header["config_hash"] = map.config_hash;
    header["metadata"] = map.metadata;
    header["units"] = map.units;
    std::vector<std::string> names;
    for (const auto& [name, _] : map.channels) names.push_back(name);
    header["channels"] = names;
    const std::string htext = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("mapio: cannot open '" + tmp + "' for writing");
        os.write(magic, magic_len);
        detail::put_u64(os, htext.size());
        os.write(htext.data(), std::streamsize(htext.size()));
        const std::size_t total = std::size_t(map.nx) * map.ny;
        for (const auto& name : names) {
            const auto& ch = map.channels.at(name);
            if (ch.size() != total) throw ConfigError("mapio: channel size mismatch: " + name);
            os.write(reinterpret_cast<const char*>(ch.data()), std::streamsize(total * 8));
        }
        os.write(reinterpret_cast<const char*>(map.mask.data()), std::streamsize(total));
        os.write(reinterpret_cast<const char*>(map.failure_code.data()), std::streamsize(total));
        if (!os) throw ConfigError("mapio: write failure on '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline scan::ChannelMap read_map(const std::string& path) {
    detail::require_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("mapio: cannot open '" + path + "'");
    char head[magic_len];
    is.read(head, magic_len);
    if (!is || std::memcmp(head, magic, magic_len) != 0)
        throw ConfigError("mapio: magic/version mismatch in '" + path + "'");
    const std::uint64_t hlen = detail::get_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), std::streamsize(hlen));
    if (!is) throw ConfigError("mapio: truncated header in '" + path + "'");

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::parse_error& ex) {
        throw ConfigError(std::string("mapio: corrupt header (") + ex.what() + ")");
    }
    if (header.value("format_version", 0) != 1)
        throw ConfigError("mapio: magic/version mismatch in '" + path + "'");

    scan::ChannelMap map;
    try {
        map.nx = header.at("nx");
        map.ny = header.at("ny");
        map.origin_fast = header.at("origin")[0];
        map.origin_slow = header.at("origin")[1];
        map.pitch_fast = header.at("pitch")[0];
        map.pitch_slow = header.at("pitch")[1];
        map.plane = header.at("plane");
        map.scan_order = header.at("scan_order");
        map.seed = header.at("seed");
        map.config_hash = header.at("config_hash");
        map.metadata = header.at("metadata").get<std::map<std::string, double>>();
        map.units = header.at("units").get<std::map<std::string, std::string>>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("mapio: incomplete header (") + ex.what() + ")");
    }
    if (map.nx < 1 || map.ny < 1) throw ConfigError("mapio: bad grid size");
    const std::size_t total = std::size_t(map.nx) * map.ny;
    for (const auto& name : header.at("channels")) {
        std::vector<double> ch(total);
        is.read(reinterpret_cast<char*>(ch.data()), std::streamsize(total * 8));
        if (!is) throw ConfigError("mapio: truncated payload in '" + path + "'");
        map.channels[name.get<std::string>()] = std::move(ch);
    }
    map.mask.resize(total);
    map.failure_code.resize(total);
    is.read(reinterpret_cast<char*>(map.mask.data()), std::streamsize(total));
    is.read(reinterpret_cast<char*>(map.failure_code.data()), std::streamsize(total));
    if (!is) throw ConfigError("mapio: truncated payload in '" + path + "'");
    return map;
}

// Columnar text export: one matrix row per slow-axis line, 12
// significant digits, masked pixels as nan.
inline void export_channel_text(const scan::ChannelMap& map, const std::string& channel,
                                std::ostream& os) {
    const auto& ch = map.channel(channel);
    char buf[40];
    for (int iy = 0; iy < map.ny; ++iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            const auto idx = map.index(ix, iy);
            if (!map.mask[idx])
                std::snprintf(buf, sizeof buf, "nan");
            else
                std::snprintf(buf, sizeof buf, "%.12g", ch[idx]);
            os << (ix ? " " : "") << buf;
        }
        os << '\n';
    }
}

} // namespace nwtwin::mapio
