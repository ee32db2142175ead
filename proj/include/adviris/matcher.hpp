#pragma once

#include <cstdint>
#include <vector>

#include "adviris/gabor.hpp"
#include "adviris/rng.hpp"

namespace adviris::match {

using gabor::IrisCode;
using nn::Tensor;

// Code coordinates of the bit subset v used by the partial-verification
// scenario.  Unique, in-bounds (row, col) pairs.
struct BitLocationSet {
    std::vector<std::pair<int, int>> locations;
    int count() const { return static_cast<int>(locations.size()); }
};

// Uniform sample of `count` distinct in-bounds locations.
BitLocationSet random_locations(int rows, int cols, int count, Rng& rng);

struct HammingResult {
    double hd = 0.0;
    std::int64_t compared_bits = 0;
};

// Fraction of differing bits over the joint mask.  An empty joint mask is an
// error (no decision possible), not a reject.
HammingResult masked_hamming(const IrisCode& a, const IrisCode& b);

// Hamming fraction over the locations of v that fall inside both code masks.
HammingResult subset_hamming(const IrisCode& a, const IrisCode& b, const BitLocationSet& v);

struct MatchDecision {
    double hd = 0.0;
    double threshold = 0.0;
    bool accepted = false;
    std::int64_t compared_bits = 0;
};

// Strict accept: hd < threshold.
MatchDecision verify(const HammingResult& r, double threshold);

}  // namespace adviris::match
