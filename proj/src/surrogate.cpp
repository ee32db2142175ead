#include "adviris/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adviris/rng.hpp"

namespace adviris::net {

using nn::BatchNormAttrs;
using nn::BatchNormMode;
using nn::Graph;
using nn::NamedParam;
using nn::same_padding;
using nn::Shape;
using nn::Var;

namespace {

struct LayerPlan {
    std::string name;
    int in_channels = 0;
    int out_channels = 0;
    bool final_stage = false;  // tanh output stage
};

void validate_config(const SurrogateConfig& c) {
    if (c.encoder_channels.empty())
        throw std::invalid_argument("surrogate config: encoder schedule is empty");
    if (c.decoder_channels.size() + 1 != c.encoder_channels.size())
        throw std::invalid_argument("surrogate config: decoder stages (" +
                                    std::to_string(c.decoder_channels.size() + 1) + ") must match encoder levels (" +
                                    std::to_string(c.encoder_channels.size()) + ")");
    if (c.code_planes < 1) throw std::invalid_argument("surrogate config: code planes must be >= 1");
    if (c.kernel < 2) throw std::invalid_argument("surrogate config: kernel must be >= 2");
    for (int ch : c.encoder_channels)
        if (ch < 1) throw std::invalid_argument("surrogate config: non-positive encoder channel count");
    for (int ch : c.decoder_channels)
        if (ch < 1) throw std::invalid_argument("surrogate config: non-positive decoder channel count");
    if (c.height < 1 || c.width < 1) throw std::invalid_argument("surrogate config: extents must be positive");

    int h = c.height, w = c.width;
    for (int i = 1; i <= c.levels(); ++i) {
        if (h % 2 || w % 2)
            throw std::invalid_argument("build_surrogate: conv" + std::to_string(i) + " cannot halve its " +
                                        std::to_string(h) + "x" + std::to_string(w) +
                                        " input; reduce the level count or resize");
        h /= 2;
        w /= 2;
    }
}

std::vector<LayerPlan> plan_layers(const SurrogateConfig& c) {
    const int L = c.levels();
    std::vector<LayerPlan> plan;
    for (int i = 0; i < L; ++i) {
        LayerPlan p;
        p.name = "conv" + std::to_string(i + 1);
        p.in_channels = i == 0 ? 2 : c.encoder_channels[static_cast<std::size_t>(i - 1)];
        p.out_channels = c.encoder_channels[static_cast<std::size_t>(i)];
        plan.push_back(std::move(p));
    }
    for (int t = 0; t < L; ++t) {
        LayerPlan p;
        p.name = "deconv" + std::to_string(L - 1 - t);
        p.in_channels = t == 0 ? c.encoder_channels[static_cast<std::size_t>(L - 1)]
                               : c.decoder_channels[static_cast<std::size_t>(t - 1)] +
                                     c.encoder_channels[static_cast<std::size_t>(L - 1 - t)];
        p.final_stage = t == L - 1;
        p.out_channels = p.final_stage ? c.code_planes : c.decoder_channels[static_cast<std::size_t>(t)];
        plan.push_back(std::move(p));
    }
    return plan;
}

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.v) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

SurrogateConfig SurrogateConfig::desk_scale() {
    SurrogateConfig c;
    c.height = 16;
    c.width = 128;
    c.code_planes = 2;
    c.encoder_channels = {8, 16, 32, 64};
    c.decoder_channels = {32, 16, 8};
    c.batch_size = 16;
    c.lr = 5e-3;  // hotter than full scale: the small net sees far fewer steps
    c.epochs = 20;
    return c;
}

Surrogate build_surrogate(const SurrogateConfig& config, std::uint64_t seed) {
    validate_config(config);
    Surrogate s;
    s.config = config;
    Rng rng(mix_seed(seed, 0xA11u));
    const int k = config.kernel;
    for (const LayerPlan& p : plan_layers(config)) {
        const double dw_bound = std::sqrt(6.0 / (static_cast<double>(k) * k));
        const double pw_bound = std::sqrt(6.0 / p.in_channels);
        s.params.push_back({p.name + ".dw", uniform_init({p.in_channels, k, k}, dw_bound, rng)});
        s.params.push_back({p.name + ".pw", uniform_init({p.out_channels, p.in_channels}, pw_bound, rng)});
        s.params.push_back({p.name + ".bn.gamma", Tensor::full({p.out_channels}, 1.0)});
        s.params.push_back({p.name + ".bn.beta", Tensor({p.out_channels})});
        s.running.push_back({Tensor({p.out_channels}), Tensor::full({p.out_channels}, 1.0)});
    }
    return s;
}

Var surrogate_forward(Graph& g, Surrogate& s, Var input, const ForwardOptions& opt,
                      std::vector<Var>* param_vars) {
    const SurrogateConfig& c = s.config;
    const Tensor& in = g.value(input);
    if (in.rank() != 4 || in.dim(1) != 2 || in.dim(2) != c.height || in.dim(3) != c.width)
        throw std::invalid_argument("surrogate_forward: input " + nn::shape_str(in.shape) + " must be [N,2," +
                                    std::to_string(c.height) + "," + std::to_string(c.width) + "]");
    const int N = in.dim(0);
    const int L = c.levels();
    const std::vector<LayerPlan> plan = plan_layers(c);

    if (param_vars) param_vars->clear();
    std::size_t pi = 0;
    auto next_param = [&](void) {
        Var v = g.leaf(s.params[pi].value, opt.params_require_grad, s.params[pi].name);
        ++pi;
        if (param_vars) param_vars->push_back(v);
        return v;
    };

    std::vector<Var> enc_out;
    Var x = input;
    for (int i = 0; i < L; ++i) {
        Var dw = next_param(), pw = next_param(), gamma = next_param(), beta = next_param();
        Var y = nn::separable_conv2d(g, x, dw, pw, same_padding(c.kernel, 2));
        BatchNormAttrs bn;
        bn.mode = opt.bn_mode;
        bn.running = &s.running[static_cast<std::size_t>(i)];
        y = nn::batch_norm(g, y, gamma, beta, bn);
        x = nn::relu(g, y);
        enc_out.push_back(x);
    }

    Var cur = enc_out[static_cast<std::size_t>(L - 1)];
    for (int t = 0; t < L; ++t) {
        Var dw = next_param(), pw = next_param(), gamma = next_param(), beta = next_param();
        if (t > 0) cur = nn::concat_channels(g, cur, enc_out[static_cast<std::size_t>(L - 1 - t)]);
        cur = nn::upsample2x(g, cur);
        cur = nn::separable_conv2d(g, cur, dw, pw, same_padding(c.kernel, 1));
        BatchNormAttrs bn;
        bn.mode = opt.bn_mode;
        bn.running = &s.running[static_cast<std::size_t>(L + t)];
        cur = nn::batch_norm(g, cur, gamma, beta, bn);
        if (plan[static_cast<std::size_t>(L + t)].final_stage)
            cur = nn::affine(g, nn::tanh_act(g, cur), 0.5, 0.5);  // (tanh+1)/2 -> [0,1]
        else
            cur = nn::relu(g, cur);
    }
    return nn::reshape(g, cur, {N, c.code_planes * c.height, c.width});
}

SurrogateSample make_surrogate_sample(const gabor::IrisSample& s, const gabor::IrisCode& code) {
    gabor::validate_sample(s);
    const int H = s.iris.dim(0), W = s.iris.dim(1);
    SurrogateSample out;
    out.input = Tensor({2, H, W});
    std::copy(s.iris.v.begin(), s.iris.v.end(), out.input.v.begin());
    std::copy(s.mask.v.begin(), s.mask.v.end(), out.input.v.begin() + static_cast<std::ptrdiff_t>(H) * W);
    out.target = code.bits;
    out.mask = code.code_mask;
    return out;
}

Var reconstruction_loss(Graph& g, Var soft, Var target) {
    if (!nn::same_shape(g.value(soft), g.value(target)))
        throw std::invalid_argument("reconstruction_loss: soft " + nn::shape_str(g.value(soft).shape) +
                                    " vs target " + nn::shape_str(g.value(target).shape));
    return nn::mean_all(g, nn::l2_norm_rows(g, nn::subtract(g, target, soft)));
}

std::vector<double> train_surrogate(Surrogate& s, const std::vector<SurrogateSample>& data,
                                    const TrainOptions& opt) {
    if (data.empty()) throw std::invalid_argument("train_surrogate: empty dataset");
    const SurrogateConfig& c = s.config;
    const int epochs = opt.epochs > 0 ? opt.epochs : c.epochs;
    const int batch = opt.batch_size > 0 ? opt.batch_size : c.batch_size;
    const double lr = opt.lr > 0.0 ? opt.lr : c.lr;
    const int FH = c.code_planes * c.height;
    for (const SurrogateSample& d : data) {
        if (d.input.shape != Shape{2, c.height, c.width} || d.target.shape != Shape{FH, c.width})
            throw std::invalid_argument("train_surrogate: sample shapes " + nn::shape_str(d.input.shape) + "/" +
                                        nn::shape_str(d.target.shape) + " do not match the config");
    }

    nn::AdamState adam;
    adam.lr = lr;
    Rng rng(mix_seed(opt.seed, 0x7Au));
    const int n = static_cast<int>(data.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> curve;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1))]);
        double loss_sum = 0.0;
        for (int start = 0, bi = 0; start < n; start += batch, ++bi) {
            const int B = std::min(batch, n - start);
            Tensor bin({B, 2, c.height, c.width});
            Tensor btg({B, FH, c.width});
            const std::size_t in_sz = data[0].input.v.size(), tg_sz = data[0].target.v.size();
            for (int j = 0; j < B; ++j) {
                const SurrogateSample& d = data[static_cast<std::size_t>(order[static_cast<std::size_t>(start + j)])];
                std::copy(d.input.v.begin(), d.input.v.end(),
                          bin.v.begin() + static_cast<std::ptrdiff_t>(j * in_sz));
                std::copy(d.target.v.begin(), d.target.v.end(),
                          btg.v.begin() + static_cast<std::ptrdiff_t>(j * tg_sz));
            }
            Graph g;
            Var input = g.leaf(std::move(bin), false, "batch_input");
            Var target = g.leaf(std::move(btg), false, "batch_target");
            std::vector<Var> pvars;
            ForwardOptions fo;
            fo.bn_mode = BatchNormMode::Train;
            fo.params_require_grad = true;
            Var soft = surrogate_forward(g, s, input, fo, &pvars);
            Var loss = reconstruction_loss(g, soft, target);
            const double lv = g.value(loss).v[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_surrogate: non-finite loss at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(bi));
            g.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(pvars.size());
            for (Var v : pvars) grads.push_back(g.grad(v));
            nn::adam_step(s.params, grads, adam);
            loss_sum += lv * B;
        }
        const double mean_loss = loss_sum / n;
        curve.push_back(mean_loss);
        if (opt.on_epoch) opt.on_epoch(epoch, mean_loss);
    }
    return curve;
}

Tensor surrogate_infer(Surrogate& s, const SurrogateSample& sample) {
    const SurrogateConfig& c = s.config;
    Graph g;
    Tensor in({1, 2, c.height, c.width});
    if (sample.input.v.size() != in.v.size())
        throw std::invalid_argument("surrogate_infer: sample input " + nn::shape_str(sample.input.shape) +
                                    " does not match the config");
    std::copy(sample.input.v.begin(), sample.input.v.end(), in.v.begin());
    Var input = g.leaf(std::move(in), false, "input");
    Var soft = surrogate_forward(g, s, input, ForwardOptions{});
    Tensor out = g.value(soft);
    out.shape = {c.code_planes * c.height, c.width};
    return out;
}

double masked_bit_error(const Tensor& soft, const Tensor& target, const Tensor& mask) {
    if (soft.shape != target.shape || soft.shape != mask.shape)
        throw std::invalid_argument("masked_bit_error: shape mismatch");
    std::int64_t masked = 0, wrong = 0;
    for (std::size_t i = 0; i < soft.v.size(); ++i) {
        if (mask.v[i] == 0.0) continue;
        ++masked;
        const double bit = soft.v[i] > 0.5 ? 1.0 : 0.0;
        if (bit != target.v[i]) ++wrong;
    }
    if (masked == 0) return -1.0;
    return static_cast<double>(wrong) / static_cast<double>(masked);
}

BitErrorReport bit_error_rate(Surrogate& s, const std::vector<SurrogateSample>& data) {
    BitErrorReport rep;
    double sum = 0.0;
    for (const SurrogateSample& d : data) {
        const double err = masked_bit_error(surrogate_infer(s, d), d.target, d.mask);
        if (err < 0.0) {
            ++rep.skipped;
            continue;
        }
        sum += err;
        ++rep.evaluated;
    }
    if (rep.evaluated > 0) rep.rate = sum / rep.evaluated;
    return rep;
}

// --- checkpoint format -----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'R', 'S', 'G'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
    std::ifstream in;
    std::string path;
    std::int64_t offset = 0;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw std::runtime_error("checkpoint: cannot open '" + p + "'");
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("checkpoint: " + path + ": " + what + " at byte " + std::to_string(offset));
    }

    void raw(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) fail("unexpected end of file");
        offset += static_cast<std::int64_t>(n);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
               static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }

    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) fail("implausible string length " + std::to_string(n));
        std::string s(n, '\0');
        if (n) raw(s.data(), n);
        return s;
    }
};

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.v) put_f32(out, static_cast<float>(v));
}

}  // namespace

void save_surrogate(const std::string& path, const Surrogate& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    char lr_buf[64];
    std::snprintf(lr_buf, sizeof lr_buf, "%.17g", s.config.lr);
    const std::vector<std::pair<std::string, std::string>> config_kv = {
        {"height", std::to_string(s.config.height)},
        {"width", std::to_string(s.config.width)},
        {"code_planes", std::to_string(s.config.code_planes)},
        {"encoder_channels", join_ints(s.config.encoder_channels)},
        {"decoder_channels", join_ints(s.config.decoder_channels)},
        {"kernel", std::to_string(s.config.kernel)},
        {"batch_size", std::to_string(s.config.batch_size)},
        {"lr", lr_buf},
        {"epochs", std::to_string(s.config.epochs)},
    };
    put_u32(out, static_cast<std::uint32_t>(config_kv.size()));
    for (const auto& [k, v] : config_kv) {
        put_str(out, k);
        put_str(out, v);
    }

    const std::vector<LayerPlan> plan = plan_layers(s.config);
    put_u32(out, static_cast<std::uint32_t>(s.params.size() + 2 * plan.size()));
    for (const NamedParam& p : s.params) put_tensor(out, p.name, p.value);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        put_tensor(out, plan[i].name + ".bn.running_mean", s.running[i].mean);
        put_tensor(out, plan[i].name + ".bn.running_var", s.running[i].var);
    }
    if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Surrogate load_surrogate(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion) r.fail("unsupported version " + std::to_string(version));

    std::vector<std::pair<std::string, std::string>> kv;
    const std::uint32_t nkv = r.u32();
    for (std::uint32_t i = 0; i < nkv; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        kv.emplace_back(std::move(k), std::move(v));
    }
    auto get = [&](const char* key) -> const std::string& {
        for (const auto& [k, v] : kv)
            if (k == key) return v;
        r.fail(std::string("missing config key '") + key + "'");
    };
    SurrogateConfig c;
    try {
        c.height = std::stoi(get("height"));
        c.width = std::stoi(get("width"));
        c.code_planes = std::stoi(get("code_planes"));
        c.encoder_channels = split_ints(get("encoder_channels"));
        c.decoder_channels = split_ints(get("decoder_channels"));
        c.kernel = std::stoi(get("kernel"));
        c.batch_size = std::stoi(get("batch_size"));
        c.lr = std::stod(get("lr"));
        c.epochs = std::stoi(get("epochs"));
    } catch (const std::logic_error& e) {
        r.fail(std::string("bad config value: ") + e.what());
    }

    Surrogate s = build_surrogate(c, 0);
    const std::vector<LayerPlan> plan = plan_layers(c);
    const std::uint32_t count = r.u32();
    if (count != s.params.size() + 2 * plan.size())
        r.fail("expected " + std::to_string(s.params.size() + 2 * plan.size()) + " tensors, file has " +
               std::to_string(count));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + name + "'");
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        Tensor* dst = nullptr;
        for (NamedParam& p : s.params)
            if (p.name == name) dst = &p.value;
        for (std::size_t li = 0; !dst && li < plan.size(); ++li) {
            if (name == plan[li].name + ".bn.running_mean") dst = &s.running[li].mean;
            if (name == plan[li].name + ".bn.running_var") dst = &s.running[li].var;
        }
        if (!dst) r.fail("unknown tensor '" + name + "'");
        if (dst->shape != shape)
            r.fail("tensor '" + name + "' has shape " + nn::shape_str(shape) + ", expected " +
                   nn::shape_str(dst->shape));
        for (double& v : dst->v) v = static_cast<double>(r.f32());
    }
    return s;
}

}  // namespace adviris::net
