#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mcdrive/error.hpp"
#include "mcdrive/model_io.hpp"
#include "mcdrive/presets.hpp"
#include "test_support.hpp"

using namespace mcdrive;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("mcdrive_model_io_" + name);
}

}  // namespace

TEST(ModelIo, RoundTripIsExactAtSinglePrecision) {
  const Network net = Network::initialize(build_preset(HeadKind::Classification, PresetScale::Fast), 5);
  const auto path = temp_path("roundtrip.bin");
  save_model(net, path);
  const Network loaded = load_model(path);
  EXPECT_EQ(loaded, round_to_float(net));
  const auto again = temp_path("roundtrip2.bin");
  save_model(loaded, again);
  EXPECT_EQ(load_model(again), loaded);

  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(ModelIo, HeaderIsJsonLine) {
  const Network net = Network::initialize(mcdrive::testing::small_conv_regressor(0.1, 1e-6), 1);
  const auto path = temp_path("header.bin");
  save_model(net, path);
  std::ifstream is(path, std::ios::binary);
  std::string line;
  std::getline(is, line);
  EXPECT_NE(line.find("\"endianness\":\"little\""), std::string::npos);
  EXPECT_NE(line.find("\"version\":1"), std::string::npos);
  EXPECT_EQ(fs::file_size(path), line.size() + 1 + 4 * net.parameter_count());
}

TEST(ModelIo, TruncatedFileIsRejected) {
  const Network net = Network::initialize(mcdrive::testing::small_conv_regressor(0.1), 1);
  const auto path = temp_path("trunc.bin");
  save_model(net, path);
  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_THROW(load_model(path), FormatError);
  EXPECT_THROW(load_model(temp_path("does-not-exist.bin")), FormatError);
}

TEST(ModelIo, SpecJsonRoundTrip) {
  const NetworkSpec spec = build_preset(HeadKind::Regression, PresetScale::Full);
  EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
  EXPECT_THROW(spec_from_json("{\"head\":\"regression\"}"), FormatError);
}
