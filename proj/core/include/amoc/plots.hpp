#pragma once

#include <string>
#include <utility>
#include <vector>

#include "amoc/tensor.hpp"
#include "amoc/train.hpp"

namespace amoc {

// SVG emitters for the report artifacts. Output is deterministic text:
// fixed canvas, fixed palette, fixed decimal formatting, no timestamps —
// the same inputs always produce byte-identical files.

// One polyline per (epsilon, accuracy%) curve.
std::string svg_eps_curve(const std::vector<std::vector<std::pair<double, double>>>& curves,
                          const std::vector<std::string>& names);

// One polyline per run, epoch vs mean loss.
std::string svg_loss_curves(const std::vector<std::vector<EpochMetrics>>& runs,
                            const std::vector<std::string>& names);

// Labeled bars (e.g. robust accuracy per variant).
std::string svg_variant_bars(const std::vector<std::pair<std::string, double>>& bars);

// 2-D points colored by class id; xy is (N,2) (PCA scores upstream).
std::string svg_embedding_scatter(const Tensor& xy, const std::vector<int>& labels);

}  // namespace amoc
