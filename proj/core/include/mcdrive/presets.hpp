#pragma once

#include "mcdrive/network.hpp"
#include "mcdrive/steering.hpp"

namespace mcdrive {

enum class PresetScale { Full, Fast };

inline constexpr double kPresetDropout = 0.05;
inline constexpr double kPresetL2 = 1e-6;

PresetScale parse_preset_scale(const std::string& name);
std::string to_string(PresetScale scale);

// PilotNet-style steering networks. Dropout follows every weight layer except
// the first and the last. Full scale takes 66x200x3 frames; fast scale halves
// the resolution (33x100x3) and every channel/unit count, with the kernels of
// conv2..conv5 shrunk so all convolutions stay valid at that resolution.
NetworkSpec build_preset(HeadKind head, PresetScale scale, double p_drop = kPresetDropout);

}  // namespace mcdrive
