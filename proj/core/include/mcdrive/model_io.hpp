#pragma once

#include <filesystem>
#include <string>

#include "mcdrive/network.hpp"

namespace mcdrive {

inline constexpr int kModelFormatVersion = 1;

// Model file: one line of JSON {"format", "version", "endianness", "spec"},
// a newline, then every layer's weights followed by its bias as little-endian
// IEEE-754 binary32, row-major, in layer order.
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

// Rounds every parameter to binary32, i.e. the value a save/load cycle yields.
Network round_to_float(const Network& net);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

}  // namespace mcdrive
