#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridjac/errors.hpp"
#include "gridjac/estimation.hpp"
#include "gridjac/spectral.hpp"

namespace gridjac {

namespace csv {

inline void write_double(std::ostream& os, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                   std::chars_format::general, 17);
    os.write(buf, ptr - buf);
}

inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os.put(',');
            write_double(os, m(i, j));
        }
        os.put('\n');
    }
}

inline void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    write_matrix(out, m);
}

inline Eigen::MatrixXd read_matrix(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError("bad numeric cell \"" + cell + "\"");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("ragged CSV row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("empty CSV");
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline Eigen::MatrixXd read_matrix_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    return read_matrix(in);
}

//! Two-column (lambda, density) file.
inline void write_density(std::ostream& os, const SpectralDensity& rho) {
    os << "lambda,density\n";
    for (Eigen::Index i = 0; i < rho.support.size(); ++i) {
        write_double(os, rho.support(i));
        os.put(',');
        write_double(os, rho.density(i));
        os.put('\n');
    }
}

inline void write_density(const std::string& path, const SpectralDensity& rho) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    write_density(out, rho);
}

//! Snapshot table: one row per sample, columns t, x_1.., y_1..
inline void write_snapshots(const std::string& path, const SnapshotSeries& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    const Eigen::Index k = s.xs.empty() ? 0 : s.xs.front().size();
    out << "t";
    for (Eigen::Index i = 1; i <= k; ++i) out << ",x_" << i;
    for (Eigen::Index i = 1; i <= k; ++i) out << ",y_" << i;
    out.put('\n');
    for (std::size_t r = 0; r < s.xs.size(); ++r) {
        out << s.timestamps[r];
        for (Eigen::Index i = 0; i < k; ++i) {
            out.put(',');
            write_double(out, s.xs[r](i));
        }
        for (Eigen::Index i = 0; i < k; ++i) {
            out.put(',');
            write_double(out, s.ys[r](i));
        }
        out.put('\n');
    }
}

inline SnapshotSeries read_snapshots(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("t,", 0) != 0)
        throw ParseError(path + ": expected snapshot header t,x_1,..,y_1,..");
    std::size_t cols = 1;
    for (char ch : header) cols += ch == ',';
    if (cols < 3 || (cols - 1) % 2 != 0)
        throw ParseError(path + ": snapshot table needs t plus 2K columns");
    const Eigen::Index k = static_cast<Eigen::Index>((cols - 1) / 2);
    Eigen::MatrixXd body = read_matrix(in);
    if (body.cols() != static_cast<Eigen::Index>(cols))
        throw ParseError(path + ": header/body column mismatch");
    SnapshotSeries s;
    for (Eigen::Index r = 0; r < body.rows(); ++r) {
        s.timestamps.push_back(static_cast<int>(body(r, 0)));
        s.xs.push_back(body.row(r).segment(1, k).transpose());
        s.ys.push_back(body.row(r).segment(1 + k, k).transpose());
    }
    return s;
}

//! FNV-1a 64-bit content hash, hex-encoded; used in run manifests.
inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "unreadable";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    std::ostringstream os;
    os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

} // namespace csv

} // namespace gridjac
