#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "adviris/gabor.hpp"
#include "adviris/rng.hpp"

using namespace adviris;
using namespace adviris::gabor;
using nn::Shape;
using nn::Tensor;

namespace {

constexpr double kTau = 6.283185307179586476925287;

// Scatter-style correlation oracle: iterates kernel taps in the outer loops
// and accumulates into the response image, with wrap/clamp done by hand.
Tensor oracle_responses(const Tensor& iris, const Tensor& k) {
    const int H = iris.dim(0), W = iris.dim(1);
    const int kh = k.dim(0), kw = k.dim(1), ch = kh / 2, cw = kw / 2;
    Tensor resp({H, W});
    for (int dr = 0; dr < kh; ++dr)
        for (int dc = 0; dc < kw; ++dc) {
            const double kv = k.at2(dr, dc);
            for (int r = 0; r < H; ++r) {
                int ir = r + dr - ch;
                ir = ir < 0 ? 0 : (ir >= H ? H - 1 : ir);
                for (int c = 0; c < W; ++c) {
                    int ic = (c + dc - cw) % W;
                    if (ic < 0) ic += W;
                    resp.at2(r, c) += iris.at2(ir, ic) * kv;
                }
            }
        }
    return resp;
}

// Exhaustive-footprint erosion oracle, vertical out-of-bounds = invalid.
bool oracle_mask_ok(const Tensor& mask, const Tensor& k, int r, int c) {
    const int H = mask.dim(0), W = mask.dim(1);
    const int kh = k.dim(0), kw = k.dim(1), ch = kh / 2, cw = kw / 2;
    for (int dr = -ch; dr <= ch; ++dr)
        for (int dc = -cw; dc <= cw; ++dc) {
            const int ir = r + dr;
            if (ir < 0 || ir >= H) return false;
            int ic = (c + dc) % W;
            if (ic < 0) ic += W;
            if (mask.at2(ir, ic) == 0.0) return false;
        }
    return true;
}

Tensor cosine_image(int H, int W, double wavelength) {
    Tensor img({H, W});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) img.at2(r, c) = 0.5 + 0.45 * std::cos(kTau * c / wavelength);
    return img;
}

IrisSample random_sample(int H, int W, Rng& rng, double hole_rate = 0.0) {
    IrisSample s;
    s.iris = Tensor({H, W});
    s.mask = Tensor::full({H, W}, 1.0);
    for (double& v : s.iris.v) v = rng.uniform();
    for (double& v : s.mask.v)
        if (rng.uniform() < hole_rate) v = 0.0;
    return s;
}

}  // namespace

TEST_CASE("three scales make six zero-mean quadrature kernels") {
    const FilterBank bank = make_filter_bank();
    REQUIRE(bank.size() == 6);
    for (const GaborFilter& f : bank.filters) {
        double sum = 0.0;
        for (double v : f.k.v) sum += v;
        CHECK(std::abs(sum) < 1e-12);
        CHECK(f.k.dim(0) == 9);
        CHECK(f.k.dim(0) % 2 == 1);
        CHECK(f.k.dim(1) % 2 == 1);
    }
    // pairs share a wavelength: even first, odd second
    CHECK(bank.filters[0].wavelength == 8);
    CHECK(bank.filters[0].even);
    CHECK(bank.filters[1].wavelength == 8);
    CHECK_FALSE(bank.filters[1].even);
    CHECK(bank.filters[2].wavelength == 16);
    CHECK(bank.filters[4].wavelength == 32);
    // support spans at least one full period at every scale
    CHECK(bank.filters[0].k.dim(1) == 15);
    CHECK(bank.filters[2].k.dim(1) == 17);
    CHECK(bank.filters[4].k.dim(1) == 33);
}

TEST_CASE("even kernels flip-symmetric, odd kernels flip-antisymmetric") {
    const FilterBank bank = make_filter_bank();
    for (const GaborFilter& f : bank.filters) {
        const int kh = f.k.dim(0), kw = f.k.dim(1);
        for (int r = 0; r < kh; ++r)
            for (int c = 0; c < kw; ++c) {
                const double mirrored = f.k.at2(r, kw - 1 - c);
                if (f.even)
                    CHECK(f.k.at2(r, c) == mirrored);
                else
                    CHECK(f.k.at2(r, c) == -mirrored);
            }
    }
}

TEST_CASE("each even kernel is tuned to its own wavelength") {
    const FilterBank bank = make_filter_bank();
    const int H = 16, W = 128;  // multiple of every probe wavelength
    for (const GaborFilter& f : bank.filters) {
        if (!f.even) continue;
        double best = -1.0;
        int best_lam = 0;
        for (int probe : {4, 8, 16, 32, 64}) {
            const Tensor img = cosine_image(H, W, probe);
            const double resp = std::abs(oracle_responses(img, f.k).at2(H / 2, 0));
            if (resp > best) {
                best = resp;
                best_lam = probe;
            }
        }
        CHECK_MESSAGE(best_lam == f.wavelength, "kernel " << f.wavelength << " peaked at " << best_lam);
    }
}

TEST_CASE("filter bank rejects bad parameters") {
    FilterBankParams p;
    p.wavelengths = {1};
    CHECK_THROWS_AS(make_filter_bank(p), std::invalid_argument);
    p = FilterBankParams{};
    p.height = 8;
    CHECK_THROWS_AS(make_filter_bank(p), std::invalid_argument);
    p = FilterBankParams{};
    p.wavelengths.clear();
    CHECK_THROWS_AS(make_filter_bank(p), std::invalid_argument);
}

TEST_CASE("constant iris encodes to all-zero bits") {
    const FilterBank bank = make_filter_bank();
    for (double level : {0.0, 0.3, 1.0}) {
        IrisSample s;
        s.iris = Tensor::full({16, 64}, level);
        s.mask = Tensor::full({16, 64}, 1.0);
        const IrisCode code = encode(s, bank);
        for (double b : code.bits.v) CHECK(b == 0.0);
    }
}

TEST_CASE("pure cosine lights the matching plane with period-16 bands") {
    const FilterBank bank = make_filter_bank();
    const int H = 16, W = 128;
    IrisSample s;
    s.iris = cosine_image(H, W, 16.0);
    s.mask = Tensor::full({H, W}, 1.0);
    const IrisCode code = encode(s, bank);
    const int plane = 2;  // wavelength-16 even filter
    const int r = H / 2;
    int transitions = 0;
    for (int c = 0; c < W; ++c) {
        // vertical bands: every row in the plane agrees
        for (int rr = 0; rr < H; ++rr)
            CHECK(code.bits.at2(plane * H + rr, c) == code.bits.at2(plane * H + r, c));
        // periodic with the stimulus
        CHECK(code.bits.at2(plane * H + r, c) == code.bits.at2(plane * H + r, (c + 16) % W));
        if (code.bits.at2(plane * H + r, c) != code.bits.at2(plane * H + r, (c + 1) % W)) ++transitions;
        // sign follows the cosine away from its zero crossings
        const double phase = std::cos(kTau * c / 16.0);
        if (std::abs(phase) > 0.2) CHECK(code.bits.at2(plane * H + r, c) == (phase > 0.0 ? 1.0 : 0.0));
    }
    CHECK(transitions == 2 * (W / 16));  // alternating bands
}

TEST_CASE("encode agrees with the scatter oracle bit-for-bit") {
    const FilterBank bank = make_filter_bank();
    Rng rng(909);
    for (int trial = 0; trial < 10; ++trial) {
        const IrisSample s = random_sample(16, 128, rng, trial % 3 ? 0.1 : 0.0);
        const IrisCode code = encode(s, bank);
        REQUIRE(code.bits.shape == Shape{6 * 16, 128});
        for (int f = 0; f < bank.size(); ++f) {
            const Tensor resp = oracle_responses(s.iris, bank.filters[static_cast<std::size_t>(f)].k);
            for (int r = 0; r < 16; ++r)
                for (int c = 0; c < 128; ++c) {
                    const double expect = resp.at2(r, c) > 1e-9 ? 1.0 : 0.0;
                    if (code.bits.at2(f * 16 + r, c) != expect) {
                        CAPTURE(trial);
                        CAPTURE(f);
                        CAPTURE(r);
                        CAPTURE(c);
                        REQUIRE(code.bits.at2(f * 16 + r, c) == expect);
                    }
                }
        }
    }
}

TEST_CASE("code mask matches the erosion oracle") {
    const FilterBank bank = make_filter_bank(FilterBankParams{.wavelengths = {8}});
    Rng rng(911);
    const IrisSample s = random_sample(16, 128, rng, 0.05);
    const Tensor cm = expand_mask(s.mask, bank);
    for (int f = 0; f < bank.size(); ++f)
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 128; ++c)
                CHECK(cm.at2(f * 16 + r, c) ==
                      (oracle_mask_ok(s.mask, bank.filters[static_cast<std::size_t>(f)].k, r, c) ? 1.0 : 0.0));
}

TEST_CASE("full mask erodes to a top/bottom margin only") {
    const FilterBank bank = make_filter_bank(FilterBankParams{.wavelengths = {8}});
    const Tensor cm = expand_mask(Tensor::full({16, 128}, 1.0), bank);
    for (int f = 0; f < 2; ++f)
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 128; ++c)
                CHECK(cm.at2(f * 16 + r, c) == ((r >= 4 && r < 12) ? 1.0 : 0.0));
}

TEST_CASE("empty mask erodes to nothing") {
    const FilterBank bank = make_filter_bank();
    const Tensor cm = expand_mask(Tensor({16, 64}), bank);
    for (double v : cm.v) CHECK(v == 0.0);
}

TEST_CASE("a single hole erodes to a kernel-sized hole") {
    const FilterBank bank = make_filter_bank(FilterBankParams{.wavelengths = {8}});  // 9x15 kernels
    Tensor mask = Tensor::full({16, 128}, 1.0);
    mask.at2(8, 64) = 0.0;
    const Tensor cm = expand_mask(mask, bank);
    for (int f = 0; f < 2; ++f)
        for (int r = 4; r < 12; ++r)  // inside the clamp margin
            for (int c = 0; c < 128; ++c) {
                const bool in_hole = std::abs(r - 8) <= 4 && std::abs(c - 64) <= 7;
                CHECK(cm.at2(f * 16 + r, c) == (in_hole ? 0.0 : 1.0));
            }
}

TEST_CASE("circularly shifting the iris shifts every code plane") {
    const FilterBank bank = make_filter_bank();
    Rng rng(913);
    const int H = 16, W = 128, shift = 37;
    IrisSample s = random_sample(H, W, rng);
    IrisSample shifted;
    shifted.iris = Tensor({H, W});
    shifted.mask = Tensor::full({H, W}, 1.0);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) shifted.iris.at2(r, (c + shift) % W) = s.iris.at2(r, c);
    const IrisCode a = encode(s, bank);
    const IrisCode b = encode(shifted, bank);
    for (int rr = 0; rr < 6 * H; ++rr)
        for (int c = 0; c < W; ++c) CHECK(b.bits.at2(rr, (c + shift) % W) == a.bits.at2(rr, c));
}

TEST_CASE("bits are contrast invariant away from zero responses") {
    const FilterBank bank = make_filter_bank();
    Rng rng(917);
    const IrisSample s = random_sample(16, 128, rng);
    IrisSample t;
    t.iris = Tensor({16, 128});
    t.mask = s.mask;
    for (std::size_t i = 0; i < s.iris.v.size(); ++i) t.iris.v[i] = 0.5 * s.iris.v[i] + 0.25;
    const IrisCode a = encode(s, bank);
    const IrisCode b = encode(t, bank);
    for (int f = 0; f < bank.size(); ++f) {
        const Tensor resp = oracle_responses(s.iris, bank.filters[static_cast<std::size_t>(f)].k);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 128; ++c)
                if (std::abs(resp.at2(r, c)) > 1e-9)
                    CHECK(a.bits.at2(f * 16 + r, c) == b.bits.at2(f * 16 + r, c));
    }
}

TEST_CASE("encode is deterministic") {
    const FilterBank bank = make_filter_bank();
    Rng rng(919);
    const IrisSample s = random_sample(16, 64, rng);
    const IrisCode a = encode(s, bank);
    const IrisCode b = encode(s, bank);
    CHECK(a.bits.v == b.bits.v);
    CHECK(a.code_mask.v == b.code_mask.v);
}

TEST_CASE("sample validation rejects out-of-range values") {
    const FilterBank bank = make_filter_bank();
    IrisSample s;
    s.iris = Tensor::full({4, 8}, 1.5);
    s.mask = Tensor::full({4, 8}, 1.0);
    CHECK_THROWS_AS(encode(s, bank), std::invalid_argument);
    s.iris = Tensor::full({4, 8}, 0.5);
    s.mask = Tensor::full({4, 8}, 0.7);
    CHECK_THROWS_AS(encode(s, bank), std::invalid_argument);
    s.mask = Tensor::full({4, 9}, 1.0);
    CHECK_THROWS_AS(encode(s, bank), std::invalid_argument);
}

TEST_CASE("filter bank text round trip is exact") {
    const FilterBank bank = make_filter_bank();
    const std::string path = (std::filesystem::temp_directory_path() / "bank_roundtrip.txt").string();
    save_filter_bank(path, bank);
    const FilterBank back = load_filter_bank(path);
    REQUIRE(back.size() == bank.size());
    for (int i = 0; i < bank.size(); ++i) {
        const auto& a = bank.filters[static_cast<std::size_t>(i)];
        const auto& b = back.filters[static_cast<std::size_t>(i)];
        CHECK(a.wavelength == b.wavelength);
        CHECK(a.even == b.even);
        REQUIRE(a.k.shape == b.k.shape);
        CHECK(a.k.v == b.k.v);  // %.17g round-trips doubles exactly
    }
    std::filesystem::remove(path);
}

TEST_CASE("filter bank load rejects malformed files") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "bank_bad.txt").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("not-a-bank\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_filter_bank(path), std::runtime_error);
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("gabor-bank v1\nfilters 1\nfilter 8 even 3 3\n1 2\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_filter_bank(path), std::runtime_error);
    CHECK_THROWS_AS(load_filter_bank((fs::temp_directory_path() / "does_not_exist.txt").string()),
                    std::runtime_error);
    fs::remove(path);
}
