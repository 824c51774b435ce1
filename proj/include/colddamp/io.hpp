#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "colddamp/psd.hpp"
#include "colddamp/sde.hpp"

// File formats: trajectory CSV / packed binary, spectrum CSV.  All text
// output keeps well over nine significant digits so round-trips through the
// CSVs reproduce doubles bit-for-bit in practice.
namespace colddamp {

// Filesystem/format failures; mapped to their own process exit code.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void format_double(std::string& out, double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 15);
    out.append(buf, res.ptr);
}

inline double parse_double(std::string_view tok, const std::string& where) {
    double v = 0.0;
    const char* begin = tok.data();
    const char* end = tok.data() + tok.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{}) throw io_error(where + ": malformed number '" + std::string(tok) + "'");
    return v;
}

}  // namespace detail

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    std::string line = "t,u,y,f_fb\n";
    f.write(line.data(), std::streamsize(line.size()));
    for (std::size_t k = 0; k < traj.u.size(); ++k) {
        line.clear();
        detail::format_double(line, traj.t[k]);
        line.push_back(',');
        detail::format_double(line, traj.u[k]);
        line.push_back(',');
        detail::format_double(line, traj.y[k]);
        line.push_back(',');
        detail::format_double(line, traj.f_fb[k]);
        line.push_back('\n');
        f.write(line.data(), std::streamsize(line.size()));
    }
    if (!f) throw io_error("write failed: " + path.string());
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line.rfind("t,u,y,f_fb", 0) != 0)
        throw io_error(path.string() + ": missing t,u,y,f_fb header");
    Trajectory traj;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        double col[4];
        std::size_t pos = 0;
        for (int c = 0; c < 4; ++c) {
            const std::size_t comma = (c < 3) ? line.find(',', pos) : line.size();
            if (comma == std::string::npos)
                throw io_error(path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
            col[c] = detail::parse_double(std::string_view(line).substr(pos, comma - pos),
                                          path.string() + ":" + std::to_string(lineno));
            pos = comma + 1;
        }
        traj.t.push_back(col[0]);
        traj.u.push_back(col[1]);
        traj.y.push_back(col[2]);
        traj.f_fb.push_back(col[3]);
    }
    if (traj.t.size() >= 2) traj.dt = traj.t[1] - traj.t[0];
    return traj;
}

// Packed layout: 64-byte header (magic "CDTRAJB1", u32 version, u32 column
// count, u64 row count, f64 dt, f64 t0, zero padding), then the t, u, y, f_fb
// columns as contiguous little-endian f64 runs.
inline constexpr char trajectory_magic[8] = {'C', 'D', 'T', 'R', 'A', 'J', 'B', '1'};

inline void write_trajectory_binary(const std::filesystem::path& path, const Trajectory& traj) {
    static_assert(std::endian::native == std::endian::little,
                  "packed trajectory export assumes a little-endian host");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    unsigned char header[64] = {};
    std::memcpy(header, trajectory_magic, 8);
    const std::uint32_t version = 1, n_cols = 4;
    const std::uint64_t n_rows = traj.u.size();
    const double t0 = traj.t.empty() ? 0.0 : traj.t.front();
    std::memcpy(header + 8, &version, 4);
    std::memcpy(header + 12, &n_cols, 4);
    std::memcpy(header + 16, &n_rows, 8);
    std::memcpy(header + 24, &traj.dt, 8);
    std::memcpy(header + 32, &t0, 8);
    f.write(reinterpret_cast<const char*>(header), 64);
    const auto write_col = [&](const std::vector<double>& col) {
        f.write(reinterpret_cast<const char*>(col.data()), std::streamsize(col.size() * 8));
    };
    write_col(traj.t);
    write_col(traj.u);
    write_col(traj.y);
    write_col(traj.f_fb);
    if (!f) throw io_error("write failed: " + path.string());
}

inline Trajectory read_trajectory_binary(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "packed trajectory import assumes a little-endian host");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    unsigned char header[64];
    f.read(reinterpret_cast<char*>(header), 64);
    if (!f || std::memcmp(header, trajectory_magic, 8) != 0)
        throw io_error(path.string() + ": not a packed trajectory file");
    std::uint32_t version = 0, n_cols = 0;
    std::uint64_t n_rows = 0;
    std::memcpy(&version, header + 8, 4);
    std::memcpy(&n_cols, header + 12, 4);
    std::memcpy(&n_rows, header + 16, 8);
    if (version != 1) throw io_error(path.string() + ": unsupported version " + std::to_string(version));
    if (n_cols != 4) throw io_error(path.string() + ": unexpected column count");
    Trajectory traj;
    std::memcpy(&traj.dt, header + 24, 8);
    const auto read_col = [&](std::vector<double>& col) {
        col.resize(n_rows);
        f.read(reinterpret_cast<char*>(col.data()), std::streamsize(n_rows * 8));
    };
    read_col(traj.t);
    read_col(traj.u);
    read_col(traj.y);
    read_col(traj.f_fb);
    if (!f) throw io_error(path.string() + ": truncated data section");
    return traj;
}

inline void write_psd_csv(const std::filesystem::path& path, const Psd& psd) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    std::string line = "freq_hz,psd\n";
    f.write(line.data(), std::streamsize(line.size()));
    for (std::size_t k = 0; k < psd.freq.size(); ++k) {
        line.clear();
        detail::format_double(line, psd.freq[k]);
        line.push_back(',');
        detail::format_double(line, psd.value[k]);
        line.push_back('\n');
        f.write(line.data(), std::streamsize(line.size()));
    }
    if (!f) throw io_error("write failed: " + path.string());
}

inline Psd read_psd_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line.rfind("freq_hz,psd", 0) != 0)
        throw io_error(path.string() + ": missing freq_hz,psd header");
    Psd psd;
    psd.units = SpectrumUnits::arbitrary;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw io_error(path.string() + ":" + std::to_string(lineno) + ": expected 2 columns");
        const std::string where = path.string() + ":" + std::to_string(lineno);
        psd.freq.push_back(detail::parse_double(std::string_view(line).substr(0, comma), where));
        psd.value.push_back(detail::parse_double(std::string_view(line).substr(comma + 1), where));
    }
    if (psd.freq.size() >= 2) psd.resolution = psd.freq[1] - psd.freq[0];
    psd.n_averages = 1;
    return psd;
}

inline std::string read_file_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw io_error("read failed: " + path.string());
    return data;
}

inline void write_file_text(const std::filesystem::path& path, std::string_view data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    f.write(data.data(), std::streamsize(data.size()));
    if (!f) throw io_error("write failed: " + path.string());
}

}  // namespace colddamp
