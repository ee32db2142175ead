#pragma once

#include <string>

#include "adviris/tensor.hpp"

namespace adviris::pnm {

using nn::Tensor;

// Grayscale images travel as 16-bit binary PGM (P5, maxval 65535, big-endian
// samples): value = round(pixel * 65535), so a round trip moves a pixel by at
// most 1/65535.  Binary maps (masks, code planes) travel as packed PBM (P4,
// MSB-first bits, rows byte-aligned) and round-trip exactly.
//
// Readers accept '#' comments in headers and report malformed or truncated
// files with the byte offset where parsing stopped.

void write_pgm16(const std::string& path, const Tensor& image);  // [H,W], values in [0,1]
Tensor read_pgm16(const std::string& path);

void write_pbm(const std::string& path, const Tensor& bits);  // [H,W], values in {0,1}
Tensor read_pbm(const std::string& path);

}  // namespace adviris::pnm
