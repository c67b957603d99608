#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hsnet/lcurve.hpp"

namespace hsnet {

/// Static SVG of the transformed L-curve with each point labeled by its
/// lambda. The corner, if given, is drawn in a second color.
void write_lcurve_svg(std::ostream& os, const LCurve& curve,
                      std::optional<std::size_t> corner = std::nullopt);

struct SensitivityProfile {
  std::string layer;
  std::vector<double> magnitudes;  // |s| sorted descending
};

/// Sorted |s| per trainable sensitivity layer.
std::vector<SensitivityProfile> sensitivity_profiles(const NetworkGraph& graph);

/// One polyline per layer, node rank on x and |s| on y.
void write_sensitivity_svg(std::ostream& os, const std::vector<SensitivityProfile>& profiles);

/// CSV columns: layer,rank,magnitude.
void write_sensitivity_csv(std::ostream& os, const std::vector<SensitivityProfile>& profiles);

}  // namespace hsnet
