#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adviris/gabor.hpp"
#include "adviris/rng.hpp"

namespace adviris::synth {

using gabor::IrisCode;
using gabor::IrisSample;
using nn::Tensor;

// Stable identity signature: a band-limited random texture whose wavelengths
// span the codec's filter range, normalized to max |t| = 1.
struct IdentityParams {
    std::uint64_t seed = 0;
    Tensor texture;          // [H,W] in [-1,1]
    double contrast = 0.35;  // weight of the texture in the rendered strip
};

IdentityParams make_identity(std::uint64_t seed, int H, int W, double contrast = 0.35,
                             int components = 24);

// Per-sample nuisance model: fresh additive texture noise, a linear
// illumination gradient, and eyelid-like occlusion arcs cut from the mask.
struct SampleNoise {
    std::uint64_t seed = 0;
    double noise_level = 0.12;   // amplitude of the fresh noise field
    double illumination = 0.08;  // max linear-gradient amplitude
    int max_occlusion_arcs = 2;  // arcs anchored at the strip's top/bottom
};

// Occlusions never exceed this fraction of the strip area (asserted).
constexpr double kMaxOcclusionFrac = 0.30;

// iris = clip_[0,1](0.5 + contrast*texture + noise + gradient);
// mask = ones minus occlusion arcs.  Deterministic in (id, noise).
IrisSample render_sample(const IdentityParams& id, const SampleNoise& noise, int H, int W);

struct CorpusItem {
    int identity = 0;
    int eye = 0;  // 0/1; the two eyes of an identity have independent textures
    int sample = 0;
    IrisSample image;
    IrisCode code;
};

struct CorpusStats {
    int genuine_pairs = 0;
    int impostor_pairs = 0;
    double genuine_mean = 0.0;
    double genuine_max = 0.0;
    double impostor_mean = 0.0;
    double impostor_min = 1.0;
    // fraction of pairs on the wrong side of the decision threshold
    double overlap_frac = 0.0;
};

struct Corpus {
    std::vector<CorpusItem> items;
    CorpusStats stats;
};

struct CorpusParams {
    int n_identities = 8;
    int eyes_per_identity = 2;
    int samples_per_eye = 3;
    std::uint64_t master_seed = 1;
    int height = 16;
    int width = 128;
    double contrast = 0.35;
    double noise_level = 0.12;
    double illumination = 0.08;
    int max_occlusion_arcs = 2;
    double threshold = 0.32;    // genuine/impostor separation point
    double max_overlap = 0.05;  // calibration gate
};

// Raised when the generated corpus fails its separation gate; the message
// carries the measured statistics.
struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
    CorpusStats stats;
};

// Samples every (identity, eye, sample) stream, encodes with the bank, and
// measures genuine/impostor separation.  Genuine pairs are same identity and
// eye; impostor pairs are first samples of distinct streams (the two eyes of
// one identity count as impostors — independent textures).  Corpora whose
// overlap at `threshold` exceeds `max_overlap` are rejected.  Degenerate
// corpora with no pairs skip the gate.
Corpus generate_corpus(const CorpusParams& p, const gabor::FilterBank& bank);

// Bisection on noise_level until the genuine-pair mean HD lands inside
// [lo, hi]; the oracle run that froze the default noise level.
double calibrate_noise(const CorpusParams& base, const gabor::FilterBank& bank, double lo = 0.10,
                       double hi = 0.25, int max_iters = 24);

}  // namespace adviris::synth
