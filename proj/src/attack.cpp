#include "adviris/attack.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "adviris/ops.hpp"

namespace adviris::attack {

namespace {

std::int64_t popcount(const Tensor& mask) {
    std::int64_t n = 0;
    for (double v : mask.v)
        if (v != 0.0) ++n;
    return n;
}

double l2_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void validate_config(const AttackConfig& cfg, const AttackTarget* target) {
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be positive");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw std::invalid_argument("attack: delta must lie in (0,1)");
    if (cfg.max_iterations < 1) throw std::invalid_argument("attack: max_iterations must be >= 1");
    if (cfg.scenario < 1 || cfg.scenario > 3) throw std::invalid_argument("attack: scenario must be 1, 2 or 3");
    if (!(cfg.bin_threshold > 0.0 && cfg.bin_threshold < 1.0))
        throw std::invalid_argument("attack: bin_threshold must lie in (0,1)");
    if (cfg.scenario == 2) {
        if (!cfg.v || cfg.v->count() == 0) throw std::invalid_argument("attack: scenario 2 needs a nonempty v");
    } else if (cfg.v) {
        throw std::invalid_argument("attack: v is only meaningful in scenario 2");
    }
    if (cfg.scenario == 3) {
        if (!cfg.verifier || cfg.verifier->count() == 0)
            throw std::invalid_argument("attack: scenario 3 needs a nonempty verifier set");
    } else if (cfg.verifier) {
        throw std::invalid_argument("attack: verifier set is only meaningful in scenario 3");
    }
    if (cfg.mode == Mode::Targeted && target == nullptr)
        throw std::invalid_argument("attack: targeted mode needs a target");
    if (cfg.mode == Mode::NonTargeted && target != nullptr)
        throw std::invalid_argument("attack: target given but mode is non-targeted");
}

}  // namespace

Tensor unflipped_bits(const Tensor& soft, const Tensor& reference, double threshold) {
    if (soft.shape != reference.shape) throw std::invalid_argument("unflipped_bits: shape mismatch");
    Tensor out(soft.shape);
    for (std::size_t i = 0; i < soft.v.size(); ++i) {
        const double bit = soft.v[i] > threshold ? 1.0 : 0.0;
        out.v[i] = bit == reference.v[i] ? 1.0 : 0.0;
    }
    return out;
}

AdversarialLoss adversarial_loss(nn::Graph& g, nn::Var soft, const Tensor& reference,
                                 const Tensor& restriction, const match::BitLocationSet* v) {
    const Tensor& sv = g.value(soft);
    if (reference.v.size() != sv.v.size() || restriction.v.size() != sv.v.size())
        throw std::invalid_argument("adversarial_loss: shape mismatch");
    Tensor ref(sv.shape);
    ref.v = reference.v;
    Tensor keep(sv.shape);
    keep.v = restriction.v;
    if (v != nullptr) {
        const int rank = static_cast<int>(sv.shape.size());
        const int rows = sv.shape[static_cast<std::size_t>(rank - 2)];
        const int cols = sv.shape[static_cast<std::size_t>(rank - 1)];
        Tensor in_v({rows, cols});
        for (const auto& [r, c] : v->locations) {
            if (r < 0 || r >= rows || c < 0 || c >= cols)
                throw std::invalid_argument("adversarial_loss: v location out of bounds");
            in_v.at2(r, c) = 1.0;
        }
        for (std::size_t i = 0; i < keep.v.size(); ++i) keep.v[i] *= in_v.v[i];
    }
    AdversarialLoss out;
    out.active_bits = popcount(keep);
    out.complete = out.active_bits == 0;
    nn::Var residual = nn::subtract(g, g.leaf(ref, false), soft);
    out.loss = nn::l2_norm(g, nn::multiply(g, residual, g.leaf(keep, false)));
    return out;
}

Tensor igsm_step(const Tensor& image, const Tensor& grad, double epsilon, int direction) {
    if (image.shape != grad.shape) throw std::invalid_argument("igsm_step: shape mismatch");
    if (!(epsilon > 0.0)) throw std::invalid_argument("igsm_step: epsilon must be positive");
    if (direction != 1 && direction != -1) throw std::invalid_argument("igsm_step: direction must be +1 or -1");
    Tensor out(image.shape);
    for (std::size_t i = 0; i < image.v.size(); ++i) {
        const double gv = grad.v[i];
        if (!std::isfinite(gv)) throw std::runtime_error("igsm_step: non-finite gradient");
        const double sgn = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
        double x = image.v[i] - direction * epsilon * sgn;
        if (x < 0.0) x = 0.0;
        if (x > 1.0) x = 1.0;
        out.v[i] = x;
    }
    return out;
}

Tensor update_mask(const Tensor& mask_prev, const Tensor& image_now, const Tensor& image_benign) {
    if (mask_prev.shape != image_now.shape || mask_prev.shape != image_benign.shape)
        throw std::invalid_argument("update_mask: shape mismatch");
    Tensor out(mask_prev.shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        if (mask_prev.v[i] == 0.0) continue;
        const double now = image_now.v[i], benign = image_benign.v[i];
        if (now == 0.0 && benign != 0.0) continue;
        if (now == 1.0 && benign != 1.0) continue;
        out.v[i] = 1.0;
    }
    return out;
}

double attack_distance(const Tensor& benign, const Tensor& adversarial, const Tensor& mask,
                       const Tensor* target_mask) {
    if (benign.shape != adversarial.shape || benign.shape != mask.shape)
        throw std::invalid_argument("attack_distance: shape mismatch");
    std::int64_t denom = 0;
    if (target_mask != nullptr) {
        if (target_mask->shape != mask.shape) throw std::invalid_argument("attack_distance: shape mismatch");
        for (std::size_t i = 0; i < mask.v.size(); ++i)
            if (mask.v[i] != 0.0 && target_mask->v[i] != 0.0) ++denom;
    } else {
        denom = popcount(mask);
    }
    if (denom == 0) throw std::invalid_argument("attack_distance: empty mask denominator");
    return l2_diff(benign, adversarial) / static_cast<double>(denom);
}

namespace {

// Scenario metric between the reference code (benign or target) and the
// current adversarial code.  Throws when the compared set is empty.
double scenario_hd(const AttackConfig& cfg, const gabor::IrisCode& ref, const gabor::IrisCode& adv) {
    switch (cfg.scenario) {
        case 2: return match::subset_hamming(ref, adv, *cfg.v).hd;
        case 3: return match::subset_hamming(ref, adv, *cfg.verifier).hd;
        default: return match::masked_hamming(ref, adv).hd;
    }
}

bool crossed(const AttackConfig& cfg, double hd) {
    return cfg.mode == Mode::NonTargeted ? hd > cfg.delta : hd < cfg.delta;
}

// In scenario 3 the attacker cannot observe the verifier's locations, so the
// attack runs on its own full-code criterion and only stops once the secret
// subset agrees: the run ends when both views cross delta.
bool terminated(const AttackConfig& cfg, const gabor::IrisCode& ref, const gabor::IrisCode& adv,
                double hd) {
    if (!crossed(cfg, hd)) return false;
    if (cfg.scenario != 3) return true;
    return crossed(cfg, match::masked_hamming(ref, adv).hd);
}

std::int64_t count_diff(const Tensor& a, const Tensor& b) {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        if (a.v[i] != b.v[i]) ++n;
    return n;
}

}  // namespace

AttackResult run_attack(const gabor::IrisSample& benign, net::Surrogate& surrogate,
                        const gabor::FilterBank& bank, const AttackConfig& cfg,
                        const AttackTarget* target) {
    validate_config(cfg, target);
    gabor::validate_sample(benign);
    const int H = benign.iris.shape[0], W = benign.iris.shape[1];
    if (H != surrogate.config.height || W != surrogate.config.width)
        throw std::invalid_argument("run_attack: sample extent does not match the surrogate");

    const gabor::IrisCode benign_code = gabor::encode(benign, bank);
    const gabor::IrisCode& ref_code = cfg.mode == Mode::Targeted ? target->code : benign_code;
    if (cfg.mode == Mode::Targeted) {
        if (target->code.bits.shape != benign_code.bits.shape || target->pixel_mask.shape != benign.mask.shape)
            throw std::invalid_argument("run_attack: target shapes do not match");
    }
    const int direction = cfg.mode == Mode::Targeted ? 1 : -1;

    AttackResult res;
    res.adversarial = benign;
    res.code = benign_code;

    auto finish = [&](Status st, int iters, double hd) {
        res.status = st;
        res.success = st == Status::Success;
        res.iterations = iters;
        res.final_hd = hd;
        const Tensor* tmask = cfg.mode == Mode::Targeted ? &target->pixel_mask : nullptr;
        res.dist = attack_distance(benign.iris, res.adversarial.iris, benign.mask, tmask);
        return res;
    };

    // a benign sample can already satisfy the goal (e.g. a very close target)
    try {
        const double hd0 = scenario_hd(cfg, ref_code, benign_code);
        if (terminated(cfg, ref_code, benign_code, hd0)) return finish(Status::Success, 0, hd0);
    } catch (const std::runtime_error&) {
        res.status = Status::DegenerateMask;
        return res;
    }

    Tensor iris = benign.iris;
    Tensor mask = benign.mask;
    double last_hd = 0.0;

    for (int n = 1; n <= cfg.max_iterations; ++n) {
        nn::Graph g;
        Tensor packed({1, 2, H, W});
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                packed.at4(0, 0, h, w) = iris.at2(h, w);
                packed.at4(0, 1, h, w) = mask.at2(h, w);
            }
        nn::Var input = g.leaf(std::move(packed), true, "attack_input");
        nn::Var soft = net::surrogate_forward(g, surrogate, input, net::ForwardOptions{});

        const Tensor& soft_v = g.value(soft);
        Tensor soft_flat(ref_code.bits.shape);
        soft_flat.v = soft_v.v;
        Tensor restriction = unflipped_bits(soft_flat, ref_code.bits, cfg.bin_threshold);
        if (cfg.mode == Mode::Targeted)  // push the bits that do not match the target yet
            for (double& r : restriction.v) r = 1.0 - r;

        const match::BitLocationSet* v = cfg.scenario == 2 ? &*cfg.v : nullptr;
        AdversarialLoss adv = adversarial_loss(g, soft, ref_code.bits, restriction, v);
        const double loss_value = g.value(adv.loss).v[0];
        if (!std::isfinite(loss_value)) return finish(Status::NumericalError, n - 1, last_hd);
        if (adv.complete) return finish(Status::Stalled, n - 1, last_hd);

        g.backward(adv.loss);
        const Tensor& din = g.grad(input);
        Tensor grad({H, W});
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) grad.at2(h, w) = din.at4(0, 0, h, w);

        Tensor iris_next;
        try {
            iris_next = igsm_step(iris, grad, cfg.epsilon, direction);
        } catch (const std::runtime_error&) {
            return finish(Status::NumericalError, n - 1, last_hd);
        }
        Tensor mask_next = update_mask(mask, iris_next, benign.iris);
        const bool moved = iris_next.v != iris.v || mask_next.v != mask.v;
        iris = std::move(iris_next);
        mask = std::move(mask_next);
        res.adversarial = gabor::IrisSample{iris, mask};
        res.code = gabor::encode(res.adversarial, bank);

        double hd = 0.0;
        try {
            hd = scenario_hd(cfg, ref_code, res.code);
        } catch (const std::runtime_error&) {
            res.status = Status::DegenerateMask;
            res.iterations = n;
            res.final_hd = last_hd;
            return res;
        }
        last_hd = hd;
        res.trace.push_back(IterationRecord{n, loss_value, hd, popcount(mask),
                                            count_diff(res.code.bits, benign_code.bits)});
        if (terminated(cfg, ref_code, res.code, hd)) return finish(Status::Success, n, hd);
        if (!moved) return finish(Status::Stalled, n, hd);
    }
    return finish(Status::CapExhausted, cfg.max_iterations, last_hd);
}

}  // namespace adviris::attack
