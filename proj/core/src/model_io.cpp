#include "mcdrive/model_io.hpp"

#include <fstream>
#include <iterator>
#include <json.hpp>

#include "binary_io.hpp"
#include "mcdrive/error.hpp"

namespace mcdrive {

using nlohmann::json;

namespace {

json layer_to_json(const LayerSpec& l) {
  json j{{"kind", to_string(l.kind)}};
  switch (l.kind) {
    case LayerKind::Convolution:
      j["filters"] = l.filters;
      j["kernel"] = {l.kernel_h, l.kernel_w};
      j["stride"] = {l.stride_h, l.stride_w};
      break;
    case LayerKind::Dense:
      j["units"] = l.units;
      break;
    case LayerKind::Dropout:
      j["p_drop"] = l.p_drop;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  switch (l.kind) {
    case LayerKind::Convolution:
      l.filters = j.at("filters").get<int>();
      l.kernel_h = j.at("kernel").at(0).get<int>();
      l.kernel_w = j.at("kernel").at(1).get<int>();
      l.stride_h = j.at("stride").at(0).get<int>();
      l.stride_w = j.at("stride").at(1).get<int>();
      break;
    case LayerKind::Dense:
      l.units = j.at("units").get<int>();
      break;
    case LayerKind::Dropout:
      l.p_drop = j.at("p_drop").get<double>();
      break;
    default:
      break;
  }
  return l;
}

json spec_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  return json{{"head", to_string(spec.head)},
              {"input_shape", {spec.input.height, spec.input.width, spec.input.channels}},
              {"l2_lambda", spec.l2_lambda},
              {"layers", layers}};
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec spec;
  spec.head = parse_head_kind(j.at("head").get<std::string>());
  const auto& in = j.at("input_shape");
  spec.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  spec.l2_lambda = j.at("l2_lambda").get<double>();
  for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
  validate(spec);
  return spec;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid network spec: ") + e.what());
  }
}

void save_model(const Network& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  const json header{{"format", "mcdrive-model"},
                    {"version", kModelFormatVersion},
                    {"endianness", "little"},
                    {"spec", spec_json(net.spec())}};
  os << header.dump() << '\n';
  for (const auto& p : net.params()) {
    for (double v : p.weights.values()) detail::write_f32(os, static_cast<float>(v));
    for (double v : p.bias.values()) detail::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw FormatError("failed writing " + path.string());
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model file " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": missing model header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": model header is not JSON: " + e.what());
  }
  if (header.value("format", "") != "mcdrive-model") {
    throw FormatError(path.string() + ": not a model file");
  }
  if (header.value("version", -1) != kModelFormatVersion) {
    throw FormatError(path.string() + ": unsupported model version " +
                      header.value("version", json(-1)).dump());
  }
  if (header.value("endianness", "") != "little") {
    throw FormatError(path.string() + ": only little-endian model files are supported");
  }
  NetworkSpec spec;
  try {
    spec = spec_from(header.at("spec"));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": invalid spec: " + e.what());
  }

  // Shapes come from a throwaway initialization of the same spec.
  Network shape_ref = Network::initialize(spec, 0);
  std::size_t floats = shape_ref.parameter_count();
  const std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (payload.size() != floats * 4) {
    throw FormatError(path.string() + ": expected " + std::to_string(floats * 4) +
                      " weight bytes, found " + std::to_string(payload.size()));
  }
  std::vector<LayerParams> params = shape_ref.params();
  const char* p = payload.data();
  for (auto& lp : params) {
    for (double& v : lp.weights.values()) {
      v = detail::decode_f32(p);
      p += 4;
    }
    for (double& v : lp.bias.values()) {
      v = detail::decode_f32(p);
      p += 4;
    }
  }
  return Network(std::move(spec), std::move(params));
}

Network round_to_float(const Network& net) {
  std::vector<LayerParams> params = net.params();
  for (auto& lp : params) {
    for (double& v : lp.weights.values()) v = static_cast<double>(static_cast<float>(v));
    for (double& v : lp.bias.values()) v = static_cast<double>(static_cast<float>(v));
  }
  return Network(net.spec(), std::move(params));
}

}  // namespace mcdrive
