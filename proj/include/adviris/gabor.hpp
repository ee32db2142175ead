#pragma once

#include <string>
#include <vector>

#include "adviris/tensor.hpp"

namespace adviris::gabor {

using nn::Tensor;

// Normalized iris strip plus per-pixel validity mask, same [H,W] shape.
// iris in [0,1]; mask in {0,1}, 1 = usable iris pixel.
struct IrisSample {
    Tensor iris;
    Tensor mask;
};

void validate_sample(const IrisSample& s);

struct GaborFilter {
    int wavelength = 0;  // pixels along the angular (width) axis
    bool even = true;    // cosine phase; false = sine phase
    Tensor k;            // [kh, kw], odd extents, zero-mean
};

struct FilterBank {
    std::vector<GaborFilter> filters;
    int size() const { return static_cast<int>(filters.size()); }
};

struct FilterBankParams {
    std::vector<int> wavelengths{8, 16, 32};
    int height = 9;      // radial support, odd
    int min_width = 15;  // angular support floor, odd; widened per scale so
                         // the kernel spans at least one full wavelength
    double sigma_factor = 0.5;  // gaussian sigma = factor * wavelength
};

// Quadrature pair (even=cos, odd=sin) per wavelength, F = 2*|wavelengths|.
// Even kernels are DC-corrected to exact zero mean; odd kernels are
// antisymmetric by construction so their mean is exactly zero.
FilterBank make_filter_bank(const FilterBankParams& p = {});

// Binary code of shape [F*H, W]: filter plane f occupies rows [f*H,(f+1)*H).
struct IrisCode {
    Tensor bits;       // {0,1}
    Tensor code_mask;  // {0,1}; 1 = every pixel under the support is valid
};

// bit(f,r,c) = 1 iff the filter response centered at (r,c) is positive,
// where |response| <= 1e-9 counts as zero (absorbs the summation residue a
// zero-mean kernel leaves on constant patches; ties break to bit 0).
// Width wraps circularly (angular axis is periodic); height clamps to edge.
IrisCode encode(const IrisSample& s, const FilterBank& bank);

// Per-plane binary erosion of the pixel mask by each filter's support.
// A vertical tap falling off the strip counts as invalid, so even a full
// mask leaves a top/bottom margin of half the kernel height.
Tensor expand_mask(const Tensor& mask, const FilterBank& bank);

// Plain-text round trip so the exact bank behind an experiment is archived.
void save_filter_bank(const std::string& path, const FilterBank& bank);
FilterBank load_filter_bank(const std::string& path);

}  // namespace adviris::gabor
