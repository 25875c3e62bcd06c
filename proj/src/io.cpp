#include "lowrank/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lowrank {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'G', 'M'};

void put_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void put_f64_le(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64_le(out, bits);
}

double get_f64_le(std::istream& in) {
    const std::uint64_t bits = get_u64_le(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

DenseMatrix parse_matrix_body(std::istream& in, const std::string& path,
                              int& line_no) {
    std::string line;
    Index rows = 0, cols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream header(line);
        if (!(header >> rows >> cols) || rows < 1 || cols < 1) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": expected header \"l m\"",
                             line_no);
        }
        break;
    }
    if (rows < 1) {
        throw ParseError(path + ": empty matrix file", line_no);
    }
    DenseMatrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) {
            throw ParseError(path + ": unexpected end of file in row " +
                                 std::to_string(i + 1),
                             line_no);
        }
        ++line_no;
        std::istringstream row(line);
        for (Index j = 0; j < cols; ++j) {
            if (!(row >> m(i, j))) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                     ": expected " + std::to_string(cols) +
                                     " values",
                                 line_no);
            }
        }
    }
    require_finite(m, path.c_str());
    return m;
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_matrix_text(const std::string& path, const DenseMatrix& m) {
    std::ofstream out = open_out(path, false);
    out << m.rows() << ' ' << m.cols() << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

DenseMatrix read_matrix_text(const std::string& path) {
    std::ifstream in = open_in(path, false);
    int line_no = 0;
    return parse_matrix_body(in, path, line_no);
}

void write_matrix_binary(const std::string& path, const DenseMatrix& m) {
    std::ofstream out = open_out(path, true);
    out.write(kMagic, 4);
    put_u64_le(out, static_cast<std::uint64_t>(m.rows()));
    put_u64_le(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) put_f64_le(out, m(i, j));
    if (!out) throw IoError("write failed: " + path);
}

DenseMatrix read_matrix_binary(const std::string& path) {
    std::ifstream in = open_in(path, true);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(path + ": missing LRGM magic");
    }
    const std::uint64_t rows = get_u64_le(in);
    const std::uint64_t cols = get_u64_le(in);
    if (!in || rows < 1 || cols < 1 || rows > (1u << 24) || cols > (1u << 24)) {
        throw IoError(path + ": invalid binary header");
    }
    DenseMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64_le(in);
    if (!in) throw IoError(path + ": truncated binary payload");
    require_finite(m, path.c_str());
    return m;
}

void write_matrix(const std::string& path, const DenseMatrix& m,
                  FileFormat format) {
    if (format == FileFormat::binary) {
        write_matrix_binary(path, m);
    } else {
        write_matrix_text(path, m);
    }
}

DenseMatrix read_matrix(const std::string& path, FileFormat format) {
    if (format == FileFormat::text) return read_matrix_text(path);
    if (format == FileFormat::binary) return read_matrix_binary(path);
    std::ifstream probe = open_in(path, true);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    return std::memcmp(magic, kMagic, 4) == 0 ? read_matrix_binary(path)
                                              : read_matrix_text(path);
}

void write_point(const std::string& path, const FixedRankPoint& p) {
    std::ofstream out = open_out(path, false);
    out << p.rows() << ' ' << p.cols() << ' ' << p.rank() << '\n';
    auto emit = [&](const DenseMatrix& m) {
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) {
                if (j) out << ' ';
                out << format_double(m(i, j));
            }
            out << '\n';
        }
    };
    emit(p.u);
    emit(p.z);
    if (!out) throw IoError("write failed: " + path);
}

FixedRankPoint read_point(const std::string& path) {
    std::ifstream in = open_in(path, false);
    int line_no = 1;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file", 1);
    std::istringstream header(line);
    Index l = 0, m = 0, r = 0;
    if (!(header >> l >> m >> r) || l < 1 || m < 1 || r < 1 || r > std::min(l, m)) {
        throw ParseError(path + ":1: expected header \"l m r\"", 1);
    }
    auto read_block = [&](Index rows, Index cols) {
        DenseMatrix block(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            if (!std::getline(in, line)) {
                throw ParseError(path + ": unexpected end of file", line_no);
            }
            ++line_no;
            std::istringstream row(line);
            for (Index j = 0; j < cols; ++j) {
                if (!(row >> block(i, j))) {
                    throw ParseError(path + ":" + std::to_string(line_no) +
                                         ": expected " + std::to_string(cols) +
                                         " values",
                                     line_no);
                }
            }
        }
        return block;
    };
    FixedRankPoint p;
    p.u = read_block(l, r);
    p.z = read_block(m, r);
    require_valid_point(p, path.c_str());
    return p;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out = open_out(path, false);
    out << "t,gap_sigma_r,gap_sigma_r1,residual_norm,reconstruction_error\n";
    for (const TrajectorySample& s : traj.samples) {
        out << format_double(s.t) << ',' << format_double(s.sigma_r) << ','
            << format_double(s.sigma_r1) << ','
            << format_double(s.residual_norm) << ','
            << format_double(s.reconstruction_error) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_error_report_csv(const std::string& path,
                            const ErrorBoundReport& report) {
    std::ofstream out = open_out(path, false);
    out << "t,do_error,best_error,bound\n";
    for (std::size_t i = 0; i < report.times.size(); ++i) {
        out << format_double(report.times[i]) << ','
            << format_double(report.do_error[i]) << ','
            << format_double(report.best_error[i]) << ','
            << format_double(report.bound[i]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_trace_csv(const std::string& path, const OptimTrace& trace) {
    std::ofstream out = open_out(path, false);
    out << "iter,J,grad_norm,step_size,status\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const OptimIterRecord& rec = trace.records[i];
        out << rec.iter << ',' << format_double(rec.j) << ','
            << format_double(rec.grad_norm) << ','
            << format_double(rec.step_size) << ','
            << (i + 1 == trace.records.size() ? to_string(trace.status) : "")
            << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace lowrank
