#include "adviris/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adviris/matcher.hpp"

namespace adviris::synth {

namespace {

constexpr double kTau = 6.283185307179586476925287;

// Sum of random 2-D sinusoids spanning the codec's wavelength range,
// normalized to max |t| = 1.  Also the model for per-sample noise fields.
Tensor band_texture(Rng& rng, int H, int W, int components) {
    Tensor t({H, W});
    const double llo = std::log(4.0), lhi = std::log(64.0);
    const double lylo = std::log(8.0);
    for (int i = 0; i < components; ++i) {
        const double lx = std::exp(rng.uniform(llo, lhi));
        const double ly = std::exp(rng.uniform(lylo, lhi));
        const double amp = 1.0 / std::sqrt(lx);  // mild red spectrum
        const double ph = rng.uniform(0.0, kTau);
        const double phy = rng.uniform(0.0, kTau);
        for (int r = 0; r < H; ++r) {
            const double fy = std::cos(kTau * r / ly + phy);
            for (int c = 0; c < W; ++c) t.at2(r, c) += amp * std::cos(kTau * c / lx + ph) * fy;
        }
    }
    double peak = 0.0;
    for (double v : t.v) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : t.v) v /= peak;
    return t;
}

}  // namespace

IdentityParams make_identity(std::uint64_t seed, int H, int W, double contrast, int components) {
    if (H < 1 || W < 1) throw std::invalid_argument("make_identity: extents must be positive");
    if (components < 1) throw std::invalid_argument("make_identity: need at least one component");
    IdentityParams id;
    id.seed = seed;
    id.contrast = contrast;
    Rng rng(seed);
    id.texture = band_texture(rng, H, W, components);
    return id;
}

IrisSample render_sample(const IdentityParams& id, const SampleNoise& noise, int H, int W) {
    if (id.texture.rank() != 2 || id.texture.dim(0) != H || id.texture.dim(1) != W)
        throw std::invalid_argument("render_sample: identity texture " + nn::shape_str(id.texture.shape) +
                                    " does not match requested " + std::to_string(H) + "x" + std::to_string(W));
    Rng rng(noise.seed);

    IrisSample s;
    s.iris = Tensor({H, W});
    s.mask = Tensor::full({H, W}, 1.0);

    // additive fresh noise field, same family as the identity texture
    Tensor field({H, W});
    if (noise.noise_level > 0.0) field = band_texture(rng, H, W, 24);

    // linear illumination gradient with random direction
    double gx = 0.0, gy = 0.0;
    if (noise.illumination > 0.0) {
        gx = rng.uniform(-noise.illumination, noise.illumination);
        gy = rng.uniform(-noise.illumination, noise.illumination);
    }

    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double grad = gx * (static_cast<double>(c) / W - 0.5) + gy * (static_cast<double>(r) / H - 0.5);
            const double v = 0.5 + id.contrast * id.texture.at2(r, c) +
                             noise.noise_level * field.at2(r, c) + grad;
            s.iris.at2(r, c) = std::clamp(v, 0.0, 1.0);
        }

    // eyelid-like parabolic arcs anchored at the top or bottom edge; the
    // per-arc extents bound total occlusion well under kMaxOcclusionFrac
    if (noise.max_occlusion_arcs > 0) {
        const int arcs = static_cast<int>(rng.below(static_cast<std::uint64_t>(noise.max_occlusion_arcs) + 1));
        for (int a = 0; a < arcs; ++a) {
            const bool top = rng.coin();
            const int center = static_cast<int>(rng.below(static_cast<std::uint64_t>(W)));
            const int half_w = std::max(2, W / 16 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                                       std::max(1, W / 6 - W / 16)))));
            const int depth = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, H / 4))));
            for (int dc = -half_w; dc <= half_w; ++dc) {
                const double frac = static_cast<double>(dc) / half_w;
                const int d = static_cast<int>(std::ceil(depth * (1.0 - frac * frac)));
                int cc = (center + dc) % W;
                if (cc < 0) cc += W;
                for (int k = 0; k < d && k < H; ++k) s.mask.at2(top ? k : H - 1 - k, cc) = 0.0;
            }
        }
        double occluded = 0.0;
        for (double m : s.mask.v) occluded += 1.0 - m;
        if (occluded > kMaxOcclusionFrac * static_cast<double>(H) * W)
            throw std::logic_error("render_sample: occlusion fraction exceeded its bound");
    }
    return s;
}

Corpus generate_corpus(const CorpusParams& p, const gabor::FilterBank& bank) {
    if (p.n_identities < 1 || p.eyes_per_identity < 1 || p.samples_per_eye < 1)
        throw std::invalid_argument("generate_corpus: counts must be >= 1");

    Corpus corpus;
    for (int id = 0; id < p.n_identities; ++id)
        for (int eye = 0; eye < p.eyes_per_identity; ++eye) {
            const IdentityParams ident = make_identity(
                mix_seed(p.master_seed, 0x1Du, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(eye)),
                p.height, p.width, p.contrast);
            const int stream = id * p.eyes_per_identity + eye;
            for (int s = 0; s < p.samples_per_eye; ++s) {
                SampleNoise n;
                n.seed = mix_seed(p.master_seed, 0x5Au, static_cast<std::uint64_t>(stream),
                                  static_cast<std::uint64_t>(s));
                n.noise_level = p.noise_level;
                n.illumination = p.illumination;
                n.max_occlusion_arcs = p.max_occlusion_arcs;
                CorpusItem item;
                item.identity = id;
                item.eye = eye;
                item.sample = s;
                item.image = render_sample(ident, n, p.height, p.width);
                item.code = gabor::encode(item.image, bank);
                corpus.items.push_back(std::move(item));
            }
        }

    // pair statistics: genuine within a stream, impostors across first
    // samples of distinct streams
    CorpusStats& st = corpus.stats;
    const int streams = p.n_identities * p.eyes_per_identity;
    double gsum = 0.0, isum = 0.0;
    int gwrong = 0, iwrong = 0;
    for (int s0 = 0; s0 < streams; ++s0) {
        const int base = s0 * p.samples_per_eye;
        for (int a = 0; a < p.samples_per_eye; ++a)
            for (int b = a + 1; b < p.samples_per_eye; ++b) {
                const double hd =
                    match::masked_hamming(corpus.items[static_cast<std::size_t>(base + a)].code,
                                          corpus.items[static_cast<std::size_t>(base + b)].code)
                        .hd;
                ++st.genuine_pairs;
                gsum += hd;
                st.genuine_max = std::max(st.genuine_max, hd);
                if (hd >= p.threshold) ++gwrong;
            }
        for (int s1 = s0 + 1; s1 < streams; ++s1) {
            const double hd =
                match::masked_hamming(corpus.items[static_cast<std::size_t>(s0 * p.samples_per_eye)].code,
                                      corpus.items[static_cast<std::size_t>(s1 * p.samples_per_eye)].code)
                    .hd;
            ++st.impostor_pairs;
            isum += hd;
            st.impostor_min = std::min(st.impostor_min, hd);
            if (hd < p.threshold) ++iwrong;
        }
    }
    if (st.genuine_pairs) st.genuine_mean = gsum / st.genuine_pairs;
    if (st.impostor_pairs) st.impostor_mean = isum / st.impostor_pairs;
    const int pairs = st.genuine_pairs + st.impostor_pairs;
    if (pairs > 0) {
        st.overlap_frac = static_cast<double>(gwrong + iwrong) / pairs;
        if (st.overlap_frac > p.max_overlap) {
            std::ostringstream msg;
            msg << "corpus calibration failed: overlap " << st.overlap_frac << " at threshold " << p.threshold
                << " (genuine mean " << st.genuine_mean << " max " << st.genuine_max << " over "
                << st.genuine_pairs << " pairs; impostor mean " << st.impostor_mean << " min "
                << st.impostor_min << " over " << st.impostor_pairs << " pairs)";
            CalibrationError err(msg.str());
            err.stats = st;
            throw err;
        }
    }
    return corpus;
}

double calibrate_noise(const CorpusParams& base, const gabor::FilterBank& bank, double lo, double hi,
                       int max_iters) {
    if (!(lo > 0.0 && hi > lo && hi < 0.5))
        throw std::invalid_argument("calibrate_noise: target band must satisfy 0 < lo < hi < 0.5");
    // genuine-pair HD grows monotonically with the noise level
    double nlo = 0.005, nhi = 0.60;
    CorpusParams p = base;
    p.max_overlap = 1.0;  // the probe corpora must not trip the gate
    for (int i = 0; i < max_iters; ++i) {
        p.noise_level = 0.5 * (nlo + nhi);
        const CorpusStats st = generate_corpus(p, bank).stats;
        if (st.genuine_pairs == 0)
            throw std::invalid_argument("calibrate_noise: corpus too small for genuine pairs");
        if (st.genuine_mean < lo)
            nlo = p.noise_level;
        else if (st.genuine_mean > hi)
            nhi = p.noise_level;
        else
            return p.noise_level;
    }
    std::ostringstream msg;
    msg << "calibrate_noise: no noise level in [" << nlo << ", " << nhi << "] reached genuine mean in ["
        << lo << ", " << hi << "] after " << max_iters << " bisections";
    throw CalibrationError(msg.str());
}

}  // namespace adviris::synth
