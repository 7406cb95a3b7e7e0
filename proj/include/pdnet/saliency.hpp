#pragma once

#include <span>
#include <string>

#include "pdnet/model.hpp"

namespace pdnet {

/// d(sum_j weights[j] * logit_j) / d(input) for a (D, H, W) volume, infer
/// mode. Signed; linear in `logit_weights`.
Tensor input_gradient(const Model& model, const Tensor& volume, std::span<const double> logit_weights);

/// |d logit_target / d input|, same shape as `volume`. Uses the
/// pre-softmax class score.
Tensor saliency_map(const Model& model, const Tensor& volume, int target_class);

/// Max over the axial (D) axis: (D, H, W) -> (H, W).
Tensor saliency_projection(const Tensor& map);

/// Binary 8-bit PGM of a rank-2 (H, W) image, linearly scaled so the
/// maximum maps to 255.
std::string encode_pgm(const Tensor& image);

}  // namespace pdnet
