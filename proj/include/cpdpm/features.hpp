#pragma once

#include "cpdpm/sepconv.hpp"

#include <filesystem>

namespace cpdpm {

/// Grayscale image, row-major, intensities as doubles.
using Image = Matrixd;

/**
 * Minimal gradient-orientation histogram features: central-difference
 * gradients, unsigned orientation hard-binned into `bins` bins over [0, pi)
 * and weighted by magnitude, summed per cell_size x cell_size cell, then each
 * cell divided by the L2 norm of the 2x2 cell block starting at it (clipped
 * at the border) plus a small epsilon. Output is
 * (rows/cell) x (cols/cell) x bins. This is a demo extractor, not the
 * 32-channel HOG of trained part models.
 */
FeatureMapd extract_features(const Image& image, int cell_size = 8, int bins = 9);

/// Reads binary (P5) or ASCII (P2) PGM.
Image read_pgm(const std::filesystem::path& path);
/// Writes binary P5, clamping to [0, 255].
void write_pgm(const std::filesystem::path& path, const Image& image);

}  // namespace cpdpm
