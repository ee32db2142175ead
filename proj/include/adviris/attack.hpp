#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "adviris/gabor.hpp"
#include "adviris/graph.hpp"
#include "adviris/matcher.hpp"
#include "adviris/surrogate.hpp"

namespace adviris::attack {

using nn::Tensor;

enum class Mode { NonTargeted, Targeted };

// How the verifier compares codes, and therefore what the attack must defeat:
//   1 — full masked Hamming distance over the whole code;
//   2 — Hamming over a bit subset v the attacker also knows;
//   3 — Hamming over a secret subset only the verifier holds.  The attacker
//       still optimizes the full-code objective and keeps going until its own
//       full-code criterion passes too, so runs stop only when both the
//       attacker's view and the verifier's subset cross delta.
struct AttackConfig {
    double epsilon = 0.03;   // iGSM step size
    double delta = 0.32;     // termination threshold (0.32 evade, 0.25 impersonate)
    int max_iterations = 50;
    int scenario = 1;
    Mode mode = Mode::NonTargeted;
    double bin_threshold = 0.5;                     // soft-code binarization
    std::optional<match::BitLocationSet> v;         // scenario 2 only
    std::optional<match::BitLocationSet> verifier;  // scenario 3 only
};

// Impersonation target: the conventional code to move toward plus the pixel
// mask of the image it came from (needed for the distance denominator).
struct AttackTarget {
    gabor::IrisCode code;
    Tensor pixel_mask;
};

enum class Status {
    Success,
    CapExhausted,    // iteration budget ran out
    DegenerateMask,  // joint mask collapsed; no verification decision possible
    Stalled,         // no pixel left to move (zero step or empty objective)
    NumericalError,  // non-finite loss or gradient
};

struct IterationRecord {
    int n = 0;
    double loss = 0.0;
    double hd = 0.0;                  // scenario metric after this step
    std::int64_t mask_popcount = 0;   // surviving pixels in the adversarial mask
    std::int64_t flipped_bits = 0;    // code bits differing from the benign code
};

struct AttackResult {
    bool success = false;
    Status status = Status::CapExhausted;
    int iterations = 0;
    gabor::IrisSample adversarial;  // final image and (shrunken) pixel mask
    gabor::IrisCode code;           // conventional re-encode of `adversarial`
    double dist = 0.0;              // L2 image change per valid pixel
    double final_hd = 0.0;          // last scenario-metric value
    std::vector<IterationRecord> trace;
};

// 1 where binarize(soft, threshold) still equals reference, else 0.  The
// objective is restricted to these not-yet-flipped bits.
Tensor unflipped_bits(const Tensor& soft, const Tensor& reference, double threshold);

struct AdversarialLoss {
    nn::Var loss;                 // scalar ||restriction * (reference - soft)||
    std::int64_t active_bits = 0; // bits the loss actually covers
    bool complete = false;        // empty restriction set: nothing left to push
};

// Masked L2 between the soft code and a reference bit pattern.  `restriction`
// is a 0/1 tensor (same extent as the code); when `v` is given the loss is
// further confined to those locations.  Bits outside the restriction receive
// exactly zero gradient.
AdversarialLoss adversarial_loss(nn::Graph& g, nn::Var soft, const Tensor& reference,
                                 const Tensor& restriction, const match::BitLocationSet* v);

// One clipped gradient-sign step: clip_[0,1](image - direction*eps*sign(grad)).
// direction +1 descends the loss, -1 ascends; sign(0) = 0.
Tensor igsm_step(const Tensor& image, const Tensor& grad, double epsilon, int direction);

// Saturation rule for the pixel mask: a position leaves the mask for good once
// it clips to 0 or 1 away from its benign value; masked-out stays masked-out.
Tensor update_mask(const Tensor& mask_prev, const Tensor& image_now, const Tensor& image_benign);

// L2 image perturbation per valid pixel; the denominator is popcount(mask),
// intersected with *target_mask when impersonating.
double attack_distance(const Tensor& benign, const Tensor& adversarial, const Tensor& mask,
                       const Tensor* target_mask = nullptr);

// Full loop: forward through the surrogate, backpropagate the restricted loss
// to the input image, step, shrink the mask, re-encode with the conventional
// codec, and test the scenario's verification metric.  Success is always
// judged on conventional codes, never on the surrogate output.
AttackResult run_attack(const gabor::IrisSample& benign, net::Surrogate& surrogate,
                        const gabor::FilterBank& bank, const AttackConfig& cfg,
                        const AttackTarget* target = nullptr);

}  // namespace adviris::attack
