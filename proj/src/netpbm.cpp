#include "adviris/netpbm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace adviris::pnm {

namespace {

void require_2d(const Tensor& t, const char* who) {
    if (t.shape.size() != 2 || t.shape[0] < 1 || t.shape[1] < 1)
        throw std::invalid_argument(std::string(who) + ": image must be 2-D and nonempty");
}

[[noreturn]] void fail(const std::string& path, const std::string& msg, std::size_t offset) {
    throw std::runtime_error("netpbm: " + path + ": " + msg + " at byte " + std::to_string(offset));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("netpbm: " + path + ": cannot open");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Header scanner: whitespace-separated decimal tokens, '#' to end of line.
struct HeaderScan {
    const std::string& path;
    const std::string& bytes;
    std::size_t pos = 0;

    void skip_space() {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long next_int(const char* what) {
        skip_space();
        const std::size_t start = pos;
        long value = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1 << 30) fail(path, std::string(what) + " out of range", start);
            ++pos;
        }
        if (pos == start) fail(path, std::string("expected ") + what, start);
        return value;
    }
};

}  // namespace

void write_pgm16(const std::string& path, const Tensor& image) {
    require_2d(image, "write_pgm16");
    const int H = image.shape[0], W = image.shape[1];
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("netpbm: " + path + ": cannot open for writing");
    out << "P5\n" << W << " " << H << "\n65535\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(W) * 2);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const double v = image.at2(h, w);
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("write_pgm16: pixel outside [0,1]");
            const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
            row[static_cast<std::size_t>(w) * 2] = static_cast<unsigned char>(q >> 8);
            row[static_cast<std::size_t>(w) * 2 + 1] = static_cast<unsigned char>(q & 0xFF);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("netpbm: " + path + ": write failed");
}

Tensor read_pgm16(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(path, "bad magic, expected P5", 0);
    HeaderScan scan{path, bytes, 2};
    const long W = scan.next_int("width");
    const long H = scan.next_int("height");
    const std::size_t maxval_at = (scan.skip_space(), scan.pos);
    const long maxval = scan.next_int("maxval");
    if (maxval != 65535) fail(path, "unsupported maxval " + std::to_string(maxval) + ", expected 65535", maxval_at);
    if (scan.pos >= bytes.size()) fail(path, "missing raster", scan.pos);
    ++scan.pos;  // single whitespace byte separates header and raster
    const std::size_t need = static_cast<std::size_t>(W) * static_cast<std::size_t>(H) * 2;
    const std::size_t have = bytes.size() - scan.pos;
    if (have < need)
        fail(path, "truncated raster: expected " + std::to_string(need) + " bytes, found " + std::to_string(have),
             scan.pos + have);
    Tensor img({static_cast<int>(H), static_cast<int>(W)});
    for (long h = 0; h < H; ++h)
        for (long w = 0; w < W; ++w) {
            const std::size_t at = scan.pos + (static_cast<std::size_t>(h) * static_cast<std::size_t>(W) +
                                               static_cast<std::size_t>(w)) * 2;
            const unsigned hi = static_cast<unsigned char>(bytes[at]);
            const unsigned lo = static_cast<unsigned char>(bytes[at + 1]);
            img.at2(static_cast<int>(h), static_cast<int>(w)) = static_cast<double>((hi << 8) | lo) / 65535.0;
        }
    return img;
}

void write_pbm(const std::string& path, const Tensor& bits) {
    require_2d(bits, "write_pbm");
    const int H = bits.shape[0], W = bits.shape[1];
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("netpbm: " + path + ": cannot open for writing");
    out << "P4\n" << W << " " << H << "\n";
    const int row_bytes = (W + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    for (int h = 0; h < H; ++h) {
        std::fill(row.begin(), row.end(), 0);
        for (int w = 0; w < W; ++w) {
            const double v = bits.at2(h, w);
            if (v != 0.0 && v != 1.0) throw std::invalid_argument("write_pbm: values must be 0 or 1");
            if (v == 1.0) row[static_cast<std::size_t>(w / 8)] |= static_cast<unsigned char>(0x80 >> (w % 8));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("netpbm: " + path + ": write failed");
}

Tensor read_pbm(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '4') fail(path, "bad magic, expected P4", 0);
    HeaderScan scan{path, bytes, 2};
    const long W = scan.next_int("width");
    const long H = scan.next_int("height");
    if (scan.pos >= bytes.size()) fail(path, "missing raster", scan.pos);
    ++scan.pos;
    const std::size_t row_bytes = (static_cast<std::size_t>(W) + 7) / 8;
    const std::size_t need = row_bytes * static_cast<std::size_t>(H);
    const std::size_t have = bytes.size() - scan.pos;
    if (have < need)
        fail(path, "truncated raster: expected " + std::to_string(need) + " bytes, found " + std::to_string(have),
             scan.pos + have);
    Tensor bits({static_cast<int>(H), static_cast<int>(W)});
    for (long h = 0; h < H; ++h)
        for (long w = 0; w < W; ++w) {
            const std::size_t at = scan.pos + static_cast<std::size_t>(h) * row_bytes + static_cast<std::size_t>(w / 8);
            const unsigned char byte = static_cast<unsigned char>(bytes[at]);
            bits.at2(static_cast<int>(h), static_cast<int>(w)) = (byte >> (7 - w % 8)) & 1 ? 1.0 : 0.0;
        }
    return bits;
}

}  // namespace adviris::pnm
