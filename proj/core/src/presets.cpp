#include "mcdrive/presets.hpp"

#include "mcdrive/error.hpp"

namespace mcdrive {

PresetScale parse_preset_scale(const std::string& name) {
  if (name == "full") return PresetScale::Full;
  if (name == "fast") return PresetScale::Fast;
  throw FormatError("unknown preset scale '" + name + "' (expected full or fast)");
}

std::string to_string(PresetScale scale) { return scale == PresetScale::Full ? "full" : "fast"; }

NetworkSpec build_preset(HeadKind head, PresetScale scale, double p_drop) {
  struct Conv {
    int filters, kernel, stride;
  };
  NetworkSpec spec;
  spec.head = head;
  spec.l2_lambda = kPresetL2;

  std::vector<Conv> convs;
  std::vector<int> dense;
  if (scale == PresetScale::Full) {
    spec.input = {66, 200, 3};
    convs = {{24, 5, 2}, {36, 5, 2}, {48, 5, 2}, {64, 3, 1}, {64, 3, 1}};
    dense = head == HeadKind::Regression ? std::vector<int>{100, 50, 10, 1}
                                         : std::vector<int>{100, 50, kSteeringClasses};
  } else {
    spec.input = {33, 100, 3};
    convs = {{12, 5, 2}, {18, 3, 2}, {24, 3, 1}, {32, 3, 1}, {32, 3, 1}};
    dense = head == HeadKind::Regression ? std::vector<int>{50, 25, 5, 1}
                                         : std::vector<int>{50, 25, kSteeringClasses};
  }

  auto& layers = spec.layers;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    layers.push_back(LayerSpec::convolution(convs[i].filters, convs[i].kernel, convs[i].stride));
    layers.push_back(LayerSpec::relu());
    if (i > 0) layers.push_back(LayerSpec::dropout(p_drop));
  }
  layers.push_back(LayerSpec::flatten());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    layers.push_back(LayerSpec::dense(dense[i]));
    if (i + 1 == dense.size()) break;
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::dropout(p_drop));
  }
  if (head == HeadKind::Classification) layers.push_back(LayerSpec::softmax());
  validate(spec);
  return spec;
}

}  // namespace mcdrive
