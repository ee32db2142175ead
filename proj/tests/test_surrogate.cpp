#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "adviris/matcher.hpp"
#include "adviris/surrogate.hpp"
#include "adviris/synth.hpp"

using namespace adviris;
using namespace adviris::net;
using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

gabor::FilterBank desk_bank() { return gabor::make_filter_bank(gabor::FilterBankParams{.wavelengths = {8}}); }

Tensor random_input(int N, int H, int W, Rng& rng) {
    Tensor t({N, 2, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < 2; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    t.at4(n, c, h, w) = c == 0 ? rng.uniform() : (rng.coin() ? 1.0 : 0.0);
    return t;
}

std::vector<Shape> shapes_with_label(const Graph& g, const std::string& label) {
    std::vector<Shape> out;
    for (int i = 0; i < g.size(); ++i)
        if (g.node(i).label == label) out.push_back(g.node(i).value.shape);
    return out;
}

SurrogateConfig tiny_config() {
    SurrogateConfig c;
    c.height = 4;
    c.width = 8;
    c.code_planes = 2;
    c.encoder_channels = {4, 4};
    c.decoder_channels = {4};
    return c;
}

std::vector<SurrogateSample> desk_samples(int n_identities, int samples_per_eye, std::uint64_t seed) {
    const gabor::FilterBank bank = desk_bank();
    synth::CorpusParams p;
    p.n_identities = n_identities;
    p.eyes_per_identity = 1;
    p.samples_per_eye = samples_per_eye;
    p.master_seed = seed;
    const synth::Corpus corpus = synth::generate_corpus(p, bank);
    std::vector<SurrogateSample> out;
    for (const synth::CorpusItem& item : corpus.items)
        out.push_back(make_surrogate_sample(item.image, item.code));
    return out;
}

}  // namespace

TEST_CASE("full-scale network reproduces the published shape schedule") {
    Surrogate s = build_surrogate(SurrogateConfig::full_scale(), 3);
    Graph g;
    Rng rng(5);
    Var input = g.leaf(random_input(1, 64, 512, rng), false);
    Var soft = surrogate_forward(g, s, input, ForwardOptions{});
    CHECK(g.value(soft).shape == Shape{1, 384, 512});  // 64x512x6 reshaped plane-major

    // encoder outputs (relu) halve extents down to 2x16 at 512 channels
    const auto relus = shapes_with_label(g, "relu");
    REQUIRE(relus.size() == 9);  // 5 encoder + 4 decoder stages
    CHECK(relus[0] == Shape{1, 64, 32, 256});
    CHECK(relus[1] == Shape{1, 128, 16, 128});
    CHECK(relus[2] == Shape{1, 256, 8, 64});
    CHECK(relus[3] == Shape{1, 256, 4, 32});
    CHECK(relus[4] == Shape{1, 512, 2, 16});
    // decoder climbs back up
    CHECK(relus[5] == Shape{1, 512, 4, 32});
    CHECK(relus[6] == Shape{1, 256, 8, 64});
    CHECK(relus[7] == Shape{1, 128, 16, 128});
    CHECK(relus[8] == Shape{1, 64, 32, 256});
    // skip concats match the published (decoder+encoder) channel sums
    const auto concats = shapes_with_label(g, "concat_channels");
    REQUIRE(concats.size() == 4);
    CHECK(concats[0] == Shape{1, 512 + 256, 4, 32});
    CHECK(concats[1] == Shape{1, 256 + 256, 8, 64});
    CHECK(concats[2] == Shape{1, 128 + 128, 16, 128});
    CHECK(concats[3] == Shape{1, 64 + 64, 32, 256});
    // final stage emits 6 planes at full extent before the reshape
    const auto affines = shapes_with_label(g, "affine");
    REQUIRE(affines.size() == 1);
    CHECK(affines[0] == Shape{1, 6, 64, 512});
}

TEST_CASE("desk extents need a four-level schedule") {
    SurrogateConfig five = SurrogateConfig::full_scale();
    five.height = 16;
    five.width = 128;
    try {
        build_surrogate(five, 1);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("conv5") != std::string::npos);
    }
    CHECK_NOTHROW(build_surrogate(SurrogateConfig::desk_scale(), 1));
}

TEST_CASE("desk forward walks the halving/doubling ladder") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 3);
    Graph g;
    Rng rng(6);
    Var input = g.leaf(random_input(2, 16, 128, rng), false);
    Var soft = surrogate_forward(g, s, input, ForwardOptions{});
    CHECK(g.value(soft).shape == Shape{2, 32, 128});
    const auto relus = shapes_with_label(g, "relu");
    REQUIRE(relus.size() == 7);
    CHECK(relus[0] == Shape{2, 8, 8, 64});
    CHECK(relus[1] == Shape{2, 16, 4, 32});
    CHECK(relus[2] == Shape{2, 32, 2, 16});
    CHECK(relus[3] == Shape{2, 64, 1, 8});
    CHECK(relus[4] == Shape{2, 32, 2, 16});
    CHECK(relus[5] == Shape{2, 16, 4, 32});
    CHECK(relus[6] == Shape{2, 8, 8, 64});
}

TEST_CASE("soft code values stay inside the unit interval") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 11);
    Graph g;
    Rng rng(12);
    Var input = g.leaf(random_input(3, 16, 128, rng), false);
    const Tensor& soft = g.value(surrogate_forward(g, s, input, ForwardOptions{}));
    for (double v : soft.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("eval-mode inference is deterministic") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 13);
    const std::vector<SurrogateSample> data = desk_samples(1, 1, 21);
    const Tensor a = surrogate_infer(s, data[0]);
    const Tensor b = surrogate_infer(s, data[0]);
    CHECK(a.v == b.v);
}

TEST_CASE("forward rejects extent mismatches") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 1);
    Graph g;
    Rng rng(1);
    Var input = g.leaf(random_input(1, 16, 64, rng), false);
    CHECK_THROWS_AS(surrogate_forward(g, s, input, ForwardOptions{}), std::invalid_argument);
}

TEST_CASE("untrained surrogate sits at chance-level agreement") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 17);
    const std::vector<SurrogateSample> data = desk_samples(6, 2, 23);  // 12 samples
    REQUIRE(data.size() >= 10);
    const BitErrorReport rep = bit_error_rate(s, data);
    CHECK(rep.evaluated == static_cast<int>(data.size()));
    CHECK(rep.rate > 0.45);
    CHECK(rep.rate < 0.55);
}

TEST_CASE("reconstruction loss is zero at zero residual") {
    Graph g;
    Tensor t({2, 4, 8});
    Rng rng(3);
    for (double& v : t.v) v = rng.coin() ? 1.0 : 0.0;
    Var target = g.leaf(t, false);
    Var soft = g.leaf(t, false);
    CHECK(g.value(reconstruction_loss(g, soft, target)).v[0] == 0.0);
}

TEST_CASE("reconstruction loss is the batch mean of per-sample norms") {
    Graph g;
    // two 1x2 samples: residuals (3,4) -> 5 and (0,0) -> 0; mean 2.5
    Var target = g.leaf(Tensor({2, 1, 2}, {3, 4, 0, 0}), false);
    Var soft = g.leaf(Tensor({2, 1, 2}, {0, 0, 0, 0}), false);
    CHECK(g.value(reconstruction_loss(g, soft, target)).v[0] == doctest::Approx(2.5));
}

TEST_CASE("surrogate samples pack iris and mask as input planes") {
    const gabor::FilterBank bank = desk_bank();
    const synth::IdentityParams id = synth::make_identity(3, 16, 128);
    synth::SampleNoise n;
    n.seed = 4;
    const gabor::IrisSample raw = synth::render_sample(id, n, 16, 128);
    const gabor::IrisCode code = gabor::encode(raw, bank);
    const SurrogateSample s = make_surrogate_sample(raw, code);
    CHECK(s.input.shape == Shape{2, 16, 128});
    for (int h = 0; h < 16; ++h)
        for (int w = 0; w < 128; ++w) {
            CHECK(s.input.v[static_cast<std::size_t>(h * 128 + w)] == raw.iris.at2(h, w));
            CHECK(s.input.v[static_cast<std::size_t>(16 * 128 + h * 128 + w)] == raw.mask.at2(h, w));
        }
    CHECK(s.target.v == code.bits.v);
    CHECK(s.mask.v == code.code_mask.v);
}

TEST_CASE("masked bit error counts exactly") {
    Tensor target({384, 512});
    Tensor mask = Tensor::full({384, 512}, 1.0);
    Tensor soft({384, 512});  // all zeros -> binarizes to all zeros
    CHECK(masked_bit_error(soft, target, mask) == 0.0);
    soft.at2(100, 200) = 0.9;  // one masked bit flips
    CHECK(masked_bit_error(soft, target, mask) == doctest::Approx(1.0 / 196608.0));
    // threshold is strict: exactly 0.5 binarizes to 0
    soft.at2(100, 200) = 0.5;
    CHECK(masked_bit_error(soft, target, mask) == 0.0);
}

TEST_CASE("empty-mask samples are skipped and reported") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 19);
    std::vector<SurrogateSample> data = desk_samples(2, 1, 29);
    for (double& m : data[0].mask.v) m = 0.0;
    const BitErrorReport rep = bit_error_rate(s, data);
    CHECK(rep.skipped == 1);
    CHECK(rep.evaluated == 1);
}

TEST_CASE("two hundred steps overfit one sample") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 31);
    const std::vector<SurrogateSample> data = desk_samples(1, 1, 33);
    TrainOptions opt;
    opt.epochs = 200;
    opt.batch_size = 1;
    opt.seed = 1;
    opt.lr = 5e-3;  // single-sample memorization wants a hotter step than corpus training
    const std::vector<double> curve = train_surrogate(s, data, opt);
    REQUIRE(curve.size() == 200);
    CHECK(curve.back() < curve.front());
    const BitErrorReport rep = bit_error_rate(s, data);
    CHECK(rep.rate < 0.01);
}

TEST_CASE("epoch losses trend downward on a small corpus") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 37);
    const std::vector<SurrogateSample> data = desk_samples(8, 4, 41);  // 32 samples
    TrainOptions opt;
    opt.epochs = 6;
    opt.seed = 2;
    int epochs_seen = 0;
    opt.on_epoch = [&](int, double) { ++epochs_seen; };
    const std::vector<double> curve = train_surrogate(s, data, opt);
    CHECK(epochs_seen == 6);
    int violations = 0;
    for (std::size_t i = 2; i < curve.size(); ++i)
        if (curve[i] > curve[i - 1]) ++violations;
    CHECK(violations <= 1);
}

TEST_CASE("training rejects bad datasets") {
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 1);
    CHECK_THROWS_AS(train_surrogate(s, {}, TrainOptions{}), std::invalid_argument);
    std::vector<SurrogateSample> bad(1);
    bad[0].input = Tensor({2, 8, 8});
    bad[0].target = Tensor({32, 128});
    CHECK_THROWS_AS(train_surrogate(s, bad, TrainOptions{}), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences on a tiny net") {
    const double h = 1e-5;
    for (nn::BatchNormMode mode : {nn::BatchNormMode::Train, nn::BatchNormMode::Eval}) {
        Surrogate s = build_surrogate(tiny_config(), 43);
        Rng rng(44);
        Tensor input({1, 2, 4, 8});
        for (double& v : input.v) v = rng.uniform(0.1, 0.9);
        Tensor target({1, 8, 8});
        for (double& v : target.v) v = rng.coin() ? 1.0 : 0.0;

        auto loss_value = [&]() {
            Graph g;
            Var in = g.leaf(input, false);
            Var tg = g.leaf(target, false);
            ForwardOptions fo;
            fo.bn_mode = mode;
            Var soft = surrogate_forward(g, s, in, fo);
            return g.value(reconstruction_loss(g, soft, tg)).v[0];
        };

        // analytic pass
        Graph g;
        Var in = g.leaf(input, true);
        Var tg = g.leaf(target, false);
        ForwardOptions fo;
        fo.bn_mode = mode;
        fo.params_require_grad = true;
        std::vector<Var> pvars;
        Var soft = surrogate_forward(g, s, in, fo, &pvars);
        Var loss = reconstruction_loss(g, soft, tg);
        g.backward(loss);
        const Tensor din = g.grad(in);
        std::vector<Tensor> dp;
        for (Var v : pvars) dp.push_back(g.grad(v));

        double max_rel = 0.0;
        auto probe = [&](Tensor& host, const Tensor& analytic) {
            for (std::size_t j = 0; j < host.v.size(); ++j) {
                const double orig = host.v[j];
                host.v[j] = orig + h;
                const double fp = loss_value();
                host.v[j] = orig - h;
                const double fm = loss_value();
                host.v[j] = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                const double rel = std::abs(analytic.v[j] - numeric) / std::max(1.0, std::abs(analytic.v[j]));
                max_rel = std::max(max_rel, rel);
            }
        };
        probe(input, din);
        for (std::size_t i = 0; i < s.params.size(); ++i) probe(s.params[i].value, dp[i]);
        CAPTURE(static_cast<int>(mode));
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("checkpoints round-trip bytes and values") {
    namespace fs = std::filesystem;
    Surrogate s = build_surrogate(SurrogateConfig::desk_scale(), 47);
    // make running stats non-trivial so their persistence is visible
    const std::vector<SurrogateSample> data = desk_samples(2, 2, 49);
    TrainOptions opt;
    opt.epochs = 1;
    train_surrogate(s, data, opt);

    const std::string p1 = (fs::temp_directory_path() / "surrogate_a.irsg").string();
    const std::string p2 = (fs::temp_directory_path() / "surrogate_b.irsg").string();
    save_surrogate(p1, s);
    Surrogate back = load_surrogate(p1);
    CHECK(back.config.height == s.config.height);
    CHECK(back.config.encoder_channels == s.config.encoder_channels);
    CHECK(back.config.lr == s.config.lr);
    REQUIRE(back.params.size() == s.params.size());
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        CHECK(back.params[i].name == s.params[i].name);
        REQUIRE(back.params[i].value.shape == s.params[i].value.shape);
        for (std::size_t j = 0; j < s.params[i].value.v.size(); ++j)
            CHECK(back.params[i].value.v[j] == static_cast<double>(static_cast<float>(s.params[i].value.v[j])));
    }
    for (std::size_t i = 0; i < s.running.size(); ++i)
        for (std::size_t j = 0; j < s.running[i].mean.v.size(); ++j)
            CHECK(back.running[i].mean.v[j] == static_cast<double>(static_cast<float>(s.running[i].mean.v[j])));

    // storage is idempotent once quantized: save(load(save(x))) == save(x) bytes
    save_surrogate(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("checkpoint loader rejects corrupt files with offsets") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "surrogate_bad.irsg").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE";
    }
    try {
        load_surrogate(path);
        FAIL("expected bad magic");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
    // truncate a valid checkpoint
    Surrogate s = build_surrogate(tiny_config(), 1);
    save_surrogate(path, s);
    const auto full_size = fs::file_size(path);
    fs::resize_file(path, full_size / 2);
    try {
        load_surrogate(path);
        FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    fs::remove(path);
}
