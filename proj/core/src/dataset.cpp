#include "mcdrive/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"
#include "mcdrive/steering.hpp"

namespace mcdrive {

namespace fs = std::filesystem;

Tensor Dataset::image(std::size_t i) const {
  if (i >= size()) throw ShapeError("sample index " + std::to_string(i) + " out of range");
  const std::size_t per = image_size();
  const float* p = pixels.data() + i * per;
  return Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width),
                 static_cast<std::size_t>(channels)},
                std::vector<double>(p, p + per));
}

void Dataset::add(const Tensor& img, double angle_deg) {
  if (img.rank() != 3 || img.dim(0) != static_cast<std::size_t>(height) ||
      img.dim(1) != static_cast<std::size_t>(width) ||
      img.dim(2) != static_cast<std::size_t>(channels)) {
    throw ShapeError("image shape " + img.shape_string() + " does not match dataset (" +
                     std::to_string(height) + ", " + std::to_string(width) + ", " +
                     std::to_string(channels) + ")");
  }
  if (!(angle_deg >= -kMaxSteeringDeg && angle_deg <= kMaxSteeringDeg)) {
    throw ShapeError("steering angle " + std::to_string(angle_deg) + " outside [-25, 25]");
  }
  for (double v : img.values()) pixels.push_back(static_cast<float>(v));
  angles.push_back(static_cast<float>(angle_deg));
}

TrainingData training_view(const Dataset& d, HeadKind head) {
  TrainingData out;
  out.shape = d.shape();
  out.pixels = d.pixels;
  if (head == HeadKind::Regression) {
    out.targets.reserve(d.size());
    for (float a : d.angles) out.targets.push_back(normalize_angle(a));
  } else {
    out.labels.reserve(d.size());
    for (float a : d.angles) out.labels.push_back(bucket_angle(a));
  }
  return out;
}

Policy Policy::expert(double lookahead) {
  Policy p;
  p.lookahead_ = lookahead;
  return p;
}

Policy Policy::model(const Network& net) {
  Policy p;
  p.net_ = &net;
  return p;
}

double Policy::operator()(const Track& track, const SimState& state, const Tensor& image) const {
  if (!net_) return expert_steering(track, state, 2.5, lookahead_);
  const Tensor out = forward(*net_, image, ForwardMode::Deterministic);
  if (net_->spec().head == HeadKind::Regression) {
    return std::clamp(denormalize_angle(out[0]), -kMaxSteeringDeg, kMaxSteeringDeg);
  }
  const auto vals = out.values();
  return unbucket(static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin()));
}

Dataset collect_run(const Track& track, const Policy& policy, std::size_t n_frames,
                    std::uint64_t seed, const CollectConfig& cfg) {
  if (n_frames == 0) throw ShapeError("collect_run needs at least one frame");
  SplitMix64 rng(seed);
  const double s0 = cfg.random_start ? rng.uniform() * track.length() : 0.0;
  Simulator sim(track, cfg.sim, start_state(track, cfg.sim, s0));

  Dataset d;
  d.height = cfg.sim.camera.height;
  d.width = cfg.sim.camera.width;
  d.channels = 3;
  d.source = track.name();
  d.seed = seed;
  d.pixels.reserve(n_frames * d.image_size());
  d.angles.reserve(n_frames);
  d.states.reserve(n_frames);

  auto next_gap = [&] {
    return cfg.perturb_interval / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.perturb_interval) + 1));
  };
  int countdown = cfg.perturb_interval > 0 ? next_gap() : -1;
  int crashes = 0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (countdown == 0) {
      SimState s = sim.state();
      const Projection p = track.project(s.position);
      const double shift = (2.0 * rng.uniform() - 1.0) * cfg.perturb_offset * track.half_width();
      const double turn = (2.0 * rng.uniform() - 1.0) * cfg.perturb_heading_deg * std::numbers::pi / 180.0;
      s.position = {p.point.x - shift * std::sin(p.heading), p.point.y + shift * std::cos(p.heading)};
      s.heading = p.heading + turn;
      sim.set_state(s);
      countdown = next_gap();
    }
    if (countdown > 0) --countdown;
    if (sim.resolve_crash() && ++crashes > cfg.crash_budget) {
      throw Error("collection on '" + track.name() + "' crashed " + std::to_string(crashes) +
                  " times (budget " + std::to_string(cfg.crash_budget) + ")");
    }
    const Tensor img = sim.render();
    const double angle = policy(track, sim.state(), img);
    d.add(img, angle);
    d.states.push_back(sim.state());
    sim.advance(angle);
  }
  return d;
}

Dataset augment_mirror(const Dataset& d) {
  Dataset out = d;
  out.states.clear();
  const std::size_t per = d.image_size();
  const auto w = static_cast<std::size_t>(d.width);
  const auto c = static_cast<std::size_t>(d.channels);
  const std::size_t row = w * c;
  out.pixels.reserve(2 * d.pixels.size());
  out.angles.reserve(2 * d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const float* img = d.pixels.data() + i * per;
    for (std::size_t r = 0; r < static_cast<std::size_t>(d.height); ++r) {
      const float* src = img + r * row;
      for (std::size_t j = 0; j < w; ++j) {
        const float* px = src + (w - 1 - j) * c;
        out.pixels.insert(out.pixels.end(), px, px + c);
      }
    }
    out.angles.push_back(-d.angles[i]);
  }
  return out;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.height = d.height;
  out.width = d.width;
  out.channels = d.channels;
  out.source = d.source;
  out.seed = d.seed;
  const std::size_t per = d.image_size();
  out.pixels.reserve(indices.size() * per);
  for (std::size_t i : indices) {
    if (i >= d.size()) throw ShapeError("subset index out of range");
    const float* p = d.pixels.data() + i * per;
    out.pixels.insert(out.pixels.end(), p, p + per);
    out.angles.push_back(d.angles[i]);
    if (!d.states.empty()) out.states.push_back(d.states[i]);
  }
  return out;
}

Split split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ShapeError("test fraction must lie in (0, 1)");
  }
  const std::size_t n = d.size();
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction + 1e-9));
  if (n_test == 0 || n_test == n) {
    throw ShapeError("split of " + std::to_string(n) + " samples at " + std::to_string(test_fraction) +
                     " leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {subset(d, train), subset(d, test)};
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const fs::path& file) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError(file.string() + ": bad number '" + s + "'");
  }
  return v;
}

void save_states(const std::vector<SimState>& states, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "index,x,y,heading,speed,steering,t,frame\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    const SimState& s = states[i];
    out << i << ',' << format_double(s.position.x) << ',' << format_double(s.position.y) << ','
        << format_double(s.heading) << ',' << format_double(s.speed) << ','
        << format_double(s.steering) << ',' << format_double(s.t) << ',' << s.frame << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<SimState> load_states(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<SimState> states;
  states.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 8) throw FormatError(path.string() + ": expected 8 columns");
    SimState s;
    s.position = {parse_double(cols[1], path), parse_double(cols[2], path)};
    s.heading = parse_double(cols[3], path);
    s.speed = parse_double(cols[4], path);
    s.steering = parse_double(cols[5], path);
    s.t = parse_double(cols[6], path);
    s.frame = static_cast<std::int64_t>(parse_double(cols[7], path));
    states.push_back(s);
  }
  if (states.size() != count) {
    throw FormatError(path.string() + ": " + std::to_string(states.size()) + " states for " +
                      std::to_string(count) + " samples");
  }
  return states;
}

}  // namespace

void save_dataset(const Dataset& d, const fs::path& dir) {
  if (d.pixels.size() != d.size() * d.image_size()) throw ShapeError("dataset pixel count mismatch");
  fs::create_directories(dir);
  nlohmann::json meta = {{"version", kDatasetVersion}, {"height", d.height},
                         {"width", d.width},           {"channels", d.channels},
                         {"count", d.size()},          {"angle_unit", "degrees"},
                         {"seed", d.seed},             {"source", d.source}};
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  std::ofstream out(dir / "frames.bin", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "frames.bin").string());
  const std::size_t per = d.image_size();
  std::vector<char> record((per + 1) * 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    char* p = record.data();
    for (std::size_t k = 0; k < per; ++k, p += 4) {
      const std::uint32_t le = detail::to_little(std::bit_cast<std::uint32_t>(d.pixels[i * per + k]));
      std::memcpy(p, &le, 4);
    }
    const std::uint32_t le = detail::to_little(std::bit_cast<std::uint32_t>(d.angles[i]));
    std::memcpy(p, &le, 4);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  if (!out) throw Error("failed writing " + (dir / "frames.bin").string());
  out.close();
  const fs::path states = dir / "states.csv";
  if (!d.states.empty()) {
    save_states(d.states, states);
  } else if (fs::exists(states)) {
    fs::remove(states);
  }
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json", std::ios::binary);
  if (!meta_in) throw FormatError("cannot open " + (dir / "meta.json").string());
  Dataset d;
  std::size_t count = 0;
  try {
    const auto meta = nlohmann::json::parse(meta_in);
    const int version = meta.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(version));
    }
    if (meta.at("angle_unit").get<std::string>() != "degrees") {
      throw FormatError("unsupported angle unit");
    }
    d.height = meta.at("height").get<int>();
    d.width = meta.at("width").get<int>();
    d.channels = meta.at("channels").get<int>();
    count = meta.at("count").get<std::size_t>();
    d.seed = meta.at("seed").get<std::uint64_t>();
    d.source = meta.at("source").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  if (d.height <= 0 || d.width <= 0 || d.channels <= 0) {
    throw FormatError((dir / "meta.json").string() + ": image dimensions must be positive");
  }
  const fs::path frames = dir / "frames.bin";
  std::ifstream in(frames, std::ios::binary);
  if (!in) throw FormatError("cannot open " + frames.string());
  const std::size_t per = d.image_size();
  const std::uintmax_t expected = count * (per + 1) * 4;
  const std::uintmax_t actual = fs::file_size(frames);
  if (actual != expected) {
    throw FormatError(frames.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
  }
  d.pixels.resize(count * per);
  d.angles.resize(count);
  std::vector<char> record((per + 1) * 4);
  for (std::size_t i = 0; i < count; ++i) {
    in.read(record.data(), static_cast<std::streamsize>(record.size()));
    if (!in) throw FormatError(frames.string() + ": truncated record " + std::to_string(i));
    for (std::size_t k = 0; k < per; ++k) d.pixels[i * per + k] = detail::decode_f32(record.data() + 4 * k);
    const float a = detail::decode_f32(record.data() + 4 * per);
    if (!(a >= -kMaxSteeringDeg && a <= kMaxSteeringDeg)) {
      throw FormatError(frames.string() + ": angle of record " + std::to_string(i) + " outside [-25, 25]");
    }
    d.angles[i] = a;
  }
  if (fs::exists(dir / "states.csv")) d.states = load_states(dir / "states.csv", count);
  return d;
}

}  // namespace mcdrive
