#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adviris/adam.hpp"
#include "adviris/gabor.hpp"
#include "adviris/graph.hpp"
#include "adviris/ops.hpp"

namespace adviris::net {

using nn::Tensor;

// U-shaped encoder/decoder schedule.  The encoder halves spatial extents at
// every level (stride-2 separable conv); the decoder doubles them back
// (nearest-neighbor x2 + stride-1 separable conv) with depth-concat skips
// from the matching encoder level.  decoder_channels excludes the final
// stage, which always emits code_planes channels through tanh.
struct SurrogateConfig {
    int height = 64;
    int width = 512;
    int code_planes = 6;  // F: output planes, stacked plane-major to [F*H, W]
    std::vector<int> encoder_channels{64, 128, 256, 256, 512};
    std::vector<int> decoder_channels{512, 256, 128, 64};
    int kernel = 4;
    int batch_size = 64;
    double lr = 1e-4;
    int epochs = 10;

    int levels() const { return static_cast<int>(encoder_channels.size()); }

    static SurrogateConfig full_scale() { return {}; }
    // Shrunk profile: one quadrature pair, four levels, eighth-width channels.
    static SurrogateConfig desk_scale();
};

// Flat parameter store.  Layer names run conv1..convL then deconv(L-1)..
// deconv0; each layer owns <name>.dw, <name>.pw, <name>.bn.gamma,
// <name>.bn.beta in params and one RunningStats slot (same layer order).
struct Surrogate {
    SurrogateConfig config;
    std::vector<nn::NamedParam> params;
    std::vector<nn::RunningStats> running;
};

// Fan-in-scaled uniform init (U(+-sqrt(6/fan_in))); gamma=1, beta=0,
// running mean/var = 0/1.  Rejects extents that do not survive the halving
// schedule, naming the offending layer.
Surrogate build_surrogate(const SurrogateConfig& config, std::uint64_t seed);

struct ForwardOptions {
    nn::BatchNormMode bn_mode = nn::BatchNormMode::Eval;
    bool params_require_grad = false;
};

// input: [N, 2, H, W] (iris in channel 0, mask in channel 1).
// Returns the soft code [N, F*H, W] with values in [0,1] ((tanh+1)/2).
// param_vars, when given, receives the weight leaves in s.params order so a
// trainer can read their gradients after backward().
nn::Var surrogate_forward(nn::Graph& g, Surrogate& s, nn::Var input, const ForwardOptions& opt,
                          std::vector<nn::Var>* param_vars = nullptr);

// One training/eval record: network input plus codec ground truth.
struct SurrogateSample {
    Tensor input;   // [2, H, W]
    Tensor target;  // [F*H, W] binary code bits
    Tensor mask;    // [F*H, W] binary code mask
};

SurrogateSample make_surrogate_sample(const gabor::IrisSample& s, const gabor::IrisCode& code);

// Reconstruction loss: mean over the batch of per-sample L2 norms
// ||target - soft||_2.  target: [N, F*H, W].
nn::Var reconstruction_loss(nn::Graph& g, nn::Var soft, nn::Var target);

struct TrainOptions {
    int epochs = 0;       // 0 = take from config
    int batch_size = 0;   // 0 = take from config
    double lr = 0.0;      // 0 = take from config
    std::uint64_t seed = 1;
    std::function<void(int epoch, double mean_loss)> on_epoch;
};

// ADAM over shuffled mini-batches; returns per-epoch mean loss.  A
// non-finite loss aborts with the epoch/batch index in the message.
std::vector<double> train_surrogate(Surrogate& s, const std::vector<SurrogateSample>& data,
                                    const TrainOptions& opt);

// Single-sample eval-mode inference: [F*H, W] soft code in [0,1].
Tensor surrogate_infer(Surrogate& s, const SurrogateSample& sample);

struct BitErrorReport {
    double rate = 0.0;  // mean over evaluated samples of the masked bit error
    int evaluated = 0;
    int skipped = 0;  // samples with an empty code mask
};

// Fraction of masked positions where binarized soft (> 0.5) disagrees with
// target.  Returns -1 when the mask is empty.
double masked_bit_error(const Tensor& soft, const Tensor& target, const Tensor& mask);

BitErrorReport bit_error_rate(Surrogate& s, const std::vector<SurrogateSample>& data);

// Checkpoint: magic "IRSG", version, config echo, then a named tensor table
// (params and running stats) as raw little-endian float32.
void save_surrogate(const std::string& path, const Surrogate& s);
Surrogate load_surrogate(const std::string& path);

}  // namespace adviris::net
