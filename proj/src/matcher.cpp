#include "adviris/matcher.hpp"

#include <stdexcept>

namespace adviris::match {

namespace {

void check_code(const IrisCode& c, const char* role) {
    using nn::shape_str;
    if (c.bits.rank() != 2 || !nn::same_shape(c.bits, c.code_mask))
        throw std::invalid_argument(std::string("matcher: ") + role + " code bits " + shape_str(c.bits.shape) +
                                    " / mask " + shape_str(c.code_mask.shape) + " malformed");
}

}  // namespace

BitLocationSet random_locations(int rows, int cols, int count, Rng& rng) {
    const std::int64_t total = static_cast<std::int64_t>(rows) * cols;
    if (count < 1 || count > total)
        throw std::invalid_argument("random_locations: count " + std::to_string(count) + " outside [1, " +
                                    std::to_string(total) + "]");
    // Floyd's sampling: distinct draws without materializing the full grid
    std::vector<bool> taken(static_cast<std::size_t>(total), false);
    BitLocationSet v;
    v.locations.reserve(static_cast<std::size_t>(count));
    for (std::int64_t j = total - count; j < total; ++j) {
        std::int64_t t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j + 1)));
        if (taken[static_cast<std::size_t>(t)]) t = j;
        taken[static_cast<std::size_t>(t)] = true;
        v.locations.emplace_back(static_cast<int>(t / cols), static_cast<int>(t % cols));
    }
    return v;
}

HammingResult masked_hamming(const IrisCode& a, const IrisCode& b) {
    check_code(a, "first");
    check_code(b, "second");
    if (!nn::same_shape(a.bits, b.bits))
        throw std::invalid_argument("masked_hamming: code shapes differ (" + nn::shape_str(a.bits.shape) +
                                    " vs " + nn::shape_str(b.bits.shape) + ")");
    std::int64_t joint = 0, diff = 0;
    for (std::size_t i = 0; i < a.bits.v.size(); ++i) {
        if (a.code_mask.v[i] != 0.0 && b.code_mask.v[i] != 0.0) {
            ++joint;
            if (a.bits.v[i] != b.bits.v[i]) ++diff;
        }
    }
    if (joint == 0) throw std::runtime_error("masked_hamming: empty joint mask, no decision possible");
    return {static_cast<double>(diff) / static_cast<double>(joint), joint};
}

HammingResult subset_hamming(const IrisCode& a, const IrisCode& b, const BitLocationSet& v) {
    check_code(a, "first");
    check_code(b, "second");
    if (!nn::same_shape(a.bits, b.bits))
        throw std::invalid_argument("subset_hamming: code shapes differ (" + nn::shape_str(a.bits.shape) +
                                    " vs " + nn::shape_str(b.bits.shape) + ")");
    const int R = a.bits.dim(0), C = a.bits.dim(1);
    std::int64_t usable = 0, diff = 0;
    for (const auto& [r, c] : v.locations) {
        if (r < 0 || r >= R || c < 0 || c >= C)
            throw std::invalid_argument("subset_hamming: location (" + std::to_string(r) + "," +
                                        std::to_string(c) + ") outside " + nn::shape_str(a.bits.shape));
        if (a.code_mask.at2(r, c) != 0.0 && b.code_mask.at2(r, c) != 0.0) {
            ++usable;
            if (a.bits.at2(r, c) != b.bits.at2(r, c)) ++diff;
        }
    }
    if (usable == 0) throw std::runtime_error("subset_hamming: no usable locations in the joint mask");
    return {static_cast<double>(diff) / static_cast<double>(usable), usable};
}

MatchDecision verify(const HammingResult& r, double threshold) {
    if (!(r.hd >= 0.0 && r.hd <= 1.0))
        throw std::invalid_argument("verify: hd " + std::to_string(r.hd) + " outside [0,1]");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("verify: threshold " + std::to_string(threshold) + " outside (0,1)");
    return {r.hd, threshold, r.hd < threshold, r.compared_bits};
}

}  // namespace adviris::match
