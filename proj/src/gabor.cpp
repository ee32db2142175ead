#include "adviris/gabor.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace adviris::gabor {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Binarization deadzone.  A zero-mean kernel on a constant patch should give
// response 0, but summation rounding leaves residue up to ~1e-14; anything
// below this magnitude is treated as a true zero (bit 0).  Meaningful
// responses on [0,1] imagery are orders of magnitude above it.
constexpr double kResponseTol = 1e-9;

int wrap(int c, int w) {
    c %= w;
    return c < 0 ? c + w : c;
}

int clamp(int r, int h) { return r < 0 ? 0 : (r >= h ? h - 1 : r); }

int oddify(int x) { return x % 2 ? x : x + 1; }

}  // namespace

void validate_sample(const IrisSample& s) {
    using nn::shape_str;
    if (s.iris.rank() != 2 || s.mask.rank() != 2)
        throw std::invalid_argument("iris sample: iris and mask must be rank 2, got " +
                                    shape_str(s.iris.shape) + " / " + shape_str(s.mask.shape));
    if (!nn::same_shape(s.iris, s.mask))
        throw std::invalid_argument("iris sample: iris " + shape_str(s.iris.shape) + " and mask " +
                                    shape_str(s.mask.shape) + " differ");
    for (double v : s.iris.v)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("iris sample: iris value " + std::to_string(v) + " outside [0,1]");
    for (double v : s.mask.v)
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("iris sample: mask value " + std::to_string(v) + " not binary");
}

FilterBank make_filter_bank(const FilterBankParams& p) {
    if (p.wavelengths.empty()) throw std::invalid_argument("filter bank: need at least one wavelength");
    if (p.height < 3 || p.height % 2 == 0)
        throw std::invalid_argument("filter bank: height must be odd and >= 3, got " + std::to_string(p.height));
    if (p.min_width < 3 || p.min_width % 2 == 0)
        throw std::invalid_argument("filter bank: min width must be odd and >= 3, got " +
                                    std::to_string(p.min_width));
    if (p.sigma_factor <= 0.0) throw std::invalid_argument("filter bank: sigma factor must be positive");

    FilterBank bank;
    for (int lam : p.wavelengths) {
        if (lam < 2)
            throw std::invalid_argument("filter bank: wavelength " + std::to_string(lam) +
                                        " below the 2-pixel Nyquist limit");
        // the support must cover a full period or the tuning peak drifts
        // down-wavelength; widen per scale instead of growing every kernel
        const int kw = std::max(p.min_width, oddify(lam));
        const int kh = p.height;
        const int ch = kh / 2, cw = kw / 2;
        const double sigma = p.sigma_factor * lam;
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

        GaborFilter even;
        even.wavelength = lam;
        even.even = true;
        even.k = Tensor({kh, kw});
        GaborFilter odd;
        odd.wavelength = lam;
        odd.even = false;
        odd.k = Tensor({kh, kw});

        for (int r = 0; r < kh; ++r)
            for (int c = 0; c <= cw; ++c) {
                const int y = r - ch;
                const int x = c - cw;  // <= 0 on this half
                const double env = std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) * inv2s2);
                const double phase = 2.0 * kPi * x / lam;
                // mirror so the even kernel is exactly symmetric and the odd
                // kernel exactly antisymmetric in floating point
                const double ev = env * std::cos(phase);
                even.k.at2(r, c) = ev;
                even.k.at2(r, kw - 1 - c) = ev;
                const double ov = env * std::sin(phase);
                odd.k.at2(r, c) = ov;
                odd.k.at2(r, kw - 1 - c) = -ov;
            }
        // odd center column is sin(0) = 0 already; even kernel needs DC removal
        double sum = 0.0;
        for (double v : even.k.v) sum += v;
        const double dc = sum / static_cast<double>(even.k.numel());
        for (double& v : even.k.v) v -= dc;

        bank.filters.push_back(std::move(even));
        bank.filters.push_back(std::move(odd));
    }
    return bank;
}

IrisCode encode(const IrisSample& s, const FilterBank& bank) {
    validate_sample(s);
    if (bank.size() == 0) throw std::invalid_argument("encode: empty filter bank");
    const int H = s.iris.dim(0), W = s.iris.dim(1);
    const int F = bank.size();

    IrisCode code;
    code.bits = Tensor({F * H, W});
    code.code_mask = expand_mask(s.mask, bank);

    for (int f = 0; f < F; ++f) {
        const Tensor& k = bank.filters[static_cast<std::size_t>(f)].k;
        const int kh = k.dim(0), kw = k.dim(1);
        const int ch = kh / 2, cw = kw / 2;
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                double resp = 0.0;
                for (int dr = 0; dr < kh; ++dr) {
                    const int ir = clamp(r + dr - ch, H);
                    for (int dc = 0; dc < kw; ++dc)
                        resp += s.iris.at2(ir, wrap(c + dc - cw, W)) * k.at2(dr, dc);
                }
                code.bits.at2(f * H + r, c) = resp > kResponseTol ? 1.0 : 0.0;
            }
    }
    return code;
}

Tensor expand_mask(const Tensor& mask, const FilterBank& bank) {
    if (mask.rank() != 2)
        throw std::invalid_argument("expand_mask: mask must be rank 2, got " + nn::shape_str(mask.shape));
    const int H = mask.dim(0), W = mask.dim(1);
    const int F = bank.size();
    Tensor out({F * H, W});
    for (int f = 0; f < F; ++f) {
        const Tensor& k = bank.filters[static_cast<std::size_t>(f)].k;
        const int kh = k.dim(0), kw = k.dim(1);
        const int ch = kh / 2, cw = kw / 2;
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                bool ok = r - ch >= 0 && r + ch < H;  // clamped taps are not real pixels
                for (int dr = 0; ok && dr < kh; ++dr)
                    for (int dc = 0; ok && dc < kw; ++dc)
                        if (mask.at2(r + dr - ch, wrap(c + dc - cw, W)) == 0.0) ok = false;
                out.at2(f * H + r, c) = ok ? 1.0 : 0.0;
            }
    }
    return out;
}

void save_filter_bank(const std::string& path, const FilterBank& bank) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("filter bank: cannot open '" + path + "' for writing");
    out << "gabor-bank v1\n";
    out << "filters " << bank.size() << "\n";
    char buf[64];
    for (const GaborFilter& f : bank.filters) {
        out << "filter " << f.wavelength << " " << (f.even ? "even" : "odd") << " " << f.k.dim(0) << " "
            << f.k.dim(1) << "\n";
        for (int r = 0; r < f.k.dim(0); ++r) {
            for (int c = 0; c < f.k.dim(1); ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", f.k.at2(r, c));
                out << (c ? " " : "") << buf;
            }
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("filter bank: write to '" + path + "' failed");
}

FilterBank load_filter_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("filter bank: cannot open '" + path + "'");
    auto fail = [&](int line, const std::string& what) {
        throw std::runtime_error("filter bank: " + path + ":" + std::to_string(line) + ": " + what);
    };
    std::string word;
    int line = 1;
    std::string header;
    if (!std::getline(in, header) || header != "gabor-bank v1") fail(1, "bad header '" + header + "'");
    ++line;
    int count = 0;
    in >> word >> count;
    if (!in || word != "filters" || count < 1) fail(line, "expected 'filters <count>'");
    FilterBank bank;
    for (int i = 0; i < count; ++i) {
        ++line;
        int lam = 0, kh = 0, kw = 0;
        std::string phase;
        in >> word >> lam >> phase >> kh >> kw;
        if (!in || word != "filter" || (phase != "even" && phase != "odd"))
            fail(line, "expected 'filter <wavelength> even|odd <kh> <kw>'");
        if (kh < 3 || kw < 3 || kh % 2 == 0 || kw % 2 == 0)
            fail(line, "extents must be odd and >= 3, got " + std::to_string(kh) + "x" + std::to_string(kw));
        GaborFilter f;
        f.wavelength = lam;
        f.even = phase == "even";
        f.k = Tensor({kh, kw});
        for (int r = 0; r < kh; ++r) {
            ++line;
            for (int c = 0; c < kw; ++c) {
                if (!(in >> f.k.at2(r, c))) fail(line, "bad coefficient at row " + std::to_string(r));
            }
        }
        bank.filters.push_back(std::move(f));
    }
    return bank;
}

}  // namespace adviris::gabor
