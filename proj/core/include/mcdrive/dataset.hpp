#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcdrive/network.hpp"
#include "mcdrive/simulator.hpp"
#include "mcdrive/train.hpp"

namespace mcdrive {

// Images with steering labels in degrees, stored at 32-bit precision.
// `states` is either empty or holds the simulator state of every sample.
struct Dataset {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> pixels;
  std::vector<float> angles;
  std::vector<SimState> states;
  std::string source;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return angles.size(); }
  std::size_t image_size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  InputShape shape() const { return {height, width, channels}; }
  Tensor image(std::size_t i) const;
  // Appends an image (values rounded to float) with its angle.
  void add(const Tensor& image, double angle_deg);

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Training view over the dataset's pixels: normalized angles for a
// regression head, 0.25 degree buckets for a classification head. The view
// borrows `d.pixels`.
TrainingData training_view(const Dataset& d, HeadKind head);

class Policy {
 public:
  static Policy expert(double lookahead = 8.0);
  // Steers with the network's deterministic output.
  static Policy model(const Network& net);

  double operator()(const Track& track, const SimState& state, const Tensor& image) const;

 private:
  const Network* net_ = nullptr;
  double lookahead_ = 8.0;
};

struct CollectConfig {
  SimConfig sim;
  bool random_start = true;
  // Average number of frames between displacements of the car; 0 disables
  // them. A displacement shifts the car sideways by up to
  // perturb_offset * half_width and turns it by up to perturb_heading_deg, so
  // the recorded data includes recoveries.
  int perturb_interval = 30;
  double perturb_offset = 0.5;
  double perturb_heading_deg = 12.0;
  int crash_budget = 0;
};

Dataset collect_run(const Track& track, const Policy& policy, std::size_t n_frames,
                    std::uint64_t seed, const CollectConfig& cfg = {});

// Input followed by every sample flipped left-right with its angle negated.
// States are dropped because mirrored states belong to a mirrored track.
Dataset augment_mirror(const Dataset& d);

struct Split {
  Dataset train;
  Dataset test;
};

// Seeded shuffle; the test side gets floor(count * test_fraction) samples.
// Both sides keep the original sample order.
Split split(const Dataset& d, double test_fraction, std::uint64_t seed);

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices);

inline constexpr int kDatasetVersion = 1;

// Directory with meta.json, frames.bin and, when states are present, states.csv.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mcdrive
