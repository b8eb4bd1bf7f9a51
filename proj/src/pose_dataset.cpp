#include "fedhar/pose_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "fedhar/error.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

using nlohmann::json;

namespace {

constexpr std::array<CocoKeypoint, 5> kFacialKeypoints = {
    CocoKeypoint::nose, CocoKeypoint::left_eye, CocoKeypoint::right_eye,
    CocoKeypoint::left_ear, CocoKeypoint::right_ear};

// Body joints copied through, in PoseFrame order after the head.
constexpr std::array<CocoKeypoint, kJoints - 1> kBodyKeypoints = {
    CocoKeypoint::left_shoulder, CocoKeypoint::right_shoulder,
    CocoKeypoint::left_elbow,    CocoKeypoint::right_elbow,
    CocoKeypoint::left_wrist,    CocoKeypoint::right_wrist,
    CocoKeypoint::left_hip,      CocoKeypoint::right_hip,
    CocoKeypoint::left_knee,     CocoKeypoint::right_knee,
    CocoKeypoint::left_ankle,    CocoKeypoint::right_ankle};

constexpr std::size_t kMaxPartitionAttempts = 100;
constexpr std::size_t kMinPartitionSubjects = 3;

void require_image_size(double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw ConfigError("image dimensions must be positive, got " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
}

std::size_t floor_share(double fraction, std::size_t n) {
  // Guard against 0.06 * 50 landing a hair under 3.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

GestureLabel label_from_json(const json& value) {
  const auto name = value.get<std::string>();
  const auto label = parse_gesture(name);
  if (!label) throw DataError("unknown gesture label '" + name + "'");
  return *label;
}

}  // namespace

std::string WindowSample::id() const {
  return client_id + "/" + recording_id + "/" + std::to_string(start_frame);
}

PoseFrame merge_facial_keypoints(const RawKeypointFrame& raw) {
  PoseFrame frame;
  frame.label = raw.label;
  frame.frame_index = raw.frame_index;

  double head_x = 0.0;
  double head_y = 0.0;
  for (auto k : kFacialKeypoints) {
    head_x += raw.keypoints[static_cast<std::size_t>(k)].x;
    head_y += raw.keypoints[static_cast<std::size_t>(k)].y;
  }
  frame.coords(0) = head_x / static_cast<double>(kFacialKeypoints.size());
  frame.coords(1) = head_y / static_cast<double>(kFacialKeypoints.size());

  for (std::size_t j = 0; j < kBodyKeypoints.size(); ++j) {
    const auto& kp = raw.keypoints[static_cast<std::size_t>(kBodyKeypoints[j])];
    frame.coords(static_cast<Eigen::Index>(2 * (j + 1))) = kp.x;
    frame.coords(static_cast<Eigen::Index>(2 * (j + 1) + 1)) = kp.y;
  }
  return frame;
}

PoseFrame normalize_frame(const PoseFrame& frame, double image_width,
                          double image_height) {
  require_image_size(image_width, image_height);
  PoseFrame out = frame;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kJoints); ++j) {
    out.coords(2 * j) = std::clamp(frame.coords(2 * j) / image_width, 0.0, 1.0);
    out.coords(2 * j + 1) = std::clamp(frame.coords(2 * j + 1) / image_height, 0.0, 1.0);
  }
  return out;
}

std::vector<RawKeypointFrame> repair_low_confidence(
    std::span<const RawKeypointFrame> recording, double image_width,
    double image_height) {
  require_image_size(image_width, image_height);
  std::vector<RawKeypointFrame> out(recording.begin(), recording.end());
  for (std::size_t f = 0; f < out.size(); ++f) {
    for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
      auto& kp = out[f].keypoints[k];
      if (kp.confidence >= kMinKeypointConfidence) continue;
      if (f == 0) {
        kp.x = 0.5 * image_width;
        kp.y = 0.5 * image_height;
      } else {
        kp.x = out[f - 1].keypoints[k].x;
        kp.y = out[f - 1].keypoints[k].y;
      }
    }
  }
  return out;
}

std::vector<WindowSample> slide_windows(const Recording& recording) {
  std::vector<WindowSample> windows;
  const auto& frames = recording.frames;
  std::size_t run_start = 0;
  while (run_start < frames.size()) {
    std::size_t run_end = run_start + 1;
    while (run_end < frames.size() &&
           frames[run_end].label == frames[run_start].label &&
           frames[run_end].frame_index == frames[run_end - 1].frame_index + 1) {
      ++run_end;
    }
    for (std::size_t s = run_start; s + kWindowLength <= run_end; ++s) {
      WindowSample w;
      for (std::size_t t = 0; t < kWindowLength; ++t) {
        w.frames.col(static_cast<Eigen::Index>(t)) = frames[s + t].coords;
      }
      w.label = frames[s].label;
      w.client_id = recording.client_id;
      w.recording_id = recording.recording_id;
      w.start_frame = frames[s].frame_index;
      windows.push_back(std::move(w));
    }
    run_start = run_end;
  }
  return windows;
}

ClientDataset stratified_split(const std::string& client_id,
                               std::span<const WindowSample> windows,
                               SplitFractions fractions, std::uint64_t seed) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (std::abs(total - 1.0) > 1e-9 || fractions.train < 0.0 ||
      fractions.val < 0.0 || fractions.test < 0.0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }

  ClientDataset out;
  out.client_id = client_id;

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    by_class[index_of(windows[i].label)].push_back(i);
  }

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& members = by_class[c];
    if (members.empty()) {
      out.warnings.push_back("client " + client_id + ": class '" +
                             std::string(kGestureNames[c]) +
                             "' has no windows; skipped in split");
      continue;
    }
    Rng rng(mix_seed(seed, c));
    rng.shuffle(std::span(members));

    const std::size_t n = members.size();
    std::array<std::size_t, 3> counts = {floor_share(fractions.train, n),
                                         floor_share(fractions.val, n),
                                         floor_share(fractions.test, n)};
    const std::array<double, 3> fraction = {fractions.train, fractions.val,
                                            fractions.test};
    std::size_t remainder = n - (counts[0] + counts[1] + counts[2]);
    if (counts[0] == 0 && remainder > 0 && fraction[0] > 0.0) {
      ++counts[0];
      --remainder;
    }
    for (std::size_t s = 1; s < 3 && remainder > 0; ++s) {
      if (counts[s] == 0 && fraction[s] > 0.0 && counts[0] > 0) {
        ++counts[s];
        --remainder;
      }
    }
    for (std::size_t s = 0; remainder > 0; s = (s + 1) % 3) {
      if (fraction[s] > 0.0) {
        ++counts[s];
        --remainder;
      }
    }

    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts[0]; ++k) out.train.push_back(windows[members[pos++]]);
    for (std::size_t k = 0; k < counts[1]; ++k) out.val.push_back(windows[members[pos++]]);
    for (std::size_t k = 0; k < counts[2]; ++k) out.test.push_back(windows[members[pos++]]);
  }
  return out;
}

PartitionPlan build_subject_partition(std::span<const WindowSample> windows,
                                      std::span<const std::string> client_order) {
  PartitionPlan plan;
  plan.mode = PartitionMode::by_subject;
  plan.partitions = client_order.size();
  std::map<std::string, std::size_t> client_index;
  for (std::size_t i = 0; i < client_order.size(); ++i) client_index[client_order[i]] = i;
  for (const auto& w : windows) {
    auto it = client_index.find(w.client_id);
    if (it == client_index.end()) {
      throw PartitionError("window " + w.id() + " belongs to unknown client '" +
                           w.client_id + "'");
    }
    plan.assignments[w.id()] = it->second;
  }
  return plan;
}

PartitionPlan build_fedensemble_partition(std::span<const WindowSample> windows,
                                          std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fedensemble partition needs k >= 2, got " + std::to_string(k));
  if (windows.size() < k) {
    throw PartitionError("cannot split " + std::to_string(windows.size()) +
                         " windows into " + std::to_string(k) + " partitions");
  }

  // A part of m windows cannot hold more than m subjects.
  const std::size_t required = std::min(kMinPartitionSubjects, windows.size() / k);
  std::vector<std::size_t> order(windows.size());
  for (std::size_t attempt = 0; attempt < kMaxPartitionAttempts; ++attempt) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed + attempt);
    rng.shuffle(std::span(order));

    std::vector<std::set<std::string>> subjects(k);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      subjects[pos % k].insert(windows[order[pos]].client_id);
    }
    const bool mixed = std::all_of(subjects.begin(), subjects.end(),
                                   [&](const auto& s) { return s.size() >= required; });
    if (!mixed) continue;

    PartitionPlan plan;
    plan.mode = PartitionMode::fedensemble_iid;
    plan.partitions = k;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const auto [it, inserted] = plan.assignments.emplace(windows[order[pos]].id(), pos % k);
      if (!inserted) throw DataError("duplicate window id " + it->first);
    }
    return plan;
  }
  throw PartitionError("no partition into " + std::to_string(k) +
                       " parts gives every part at least " + std::to_string(required) +
                       " distinct subjects after " +
                       std::to_string(kMaxPartitionAttempts) + " attempts");
}

std::vector<std::vector<WindowSample>> apply_partition(
    const PartitionPlan& plan, std::span<const WindowSample> windows) {
  std::vector<std::vector<WindowSample>> parts(plan.partitions);
  for (const auto& w : windows) {
    auto it = plan.assignments.find(w.id());
    if (it == plan.assignments.end()) {
      throw PartitionError("window " + w.id() + " has no partition assignment");
    }
    parts.at(it->second).push_back(w);
  }
  return parts;
}

std::vector<Recording> build_recordings(std::span<const RawKeypointFrame> frames,
                                        double image_width, double image_height) {
  require_image_size(image_width, image_height);
  std::map<std::pair<std::string, std::string>, std::vector<RawKeypointFrame>> grouped;
  for (const auto& f : frames) grouped[{f.client_id, f.recording_id}].push_back(f);

  std::vector<Recording> recordings;
  for (auto& [key, raw] : grouped) {
    std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
      return a.frame_index < b.frame_index;
    });
    for (std::size_t i = 1; i < raw.size(); ++i) {
      if (raw[i].frame_index == raw[i - 1].frame_index) {
        throw DataError("recording " + key.first + "/" + key.second +
                        " repeats frame index " + std::to_string(raw[i].frame_index));
      }
    }
    Recording rec;
    rec.client_id = key.first;
    rec.recording_id = key.second;
    for (const auto& f : repair_low_confidence(raw, image_width, image_height)) {
      rec.frames.push_back(
          normalize_frame(merge_facial_keypoints(f), image_width, image_height));
    }
    recordings.push_back(std::move(rec));
  }
  return recordings;
}

std::vector<ClientDataset> prepare_clients(std::span<const RawKeypointFrame> frames,
                                           const PrepareOptions& options) {
  std::map<std::string, std::vector<WindowSample>> per_client;
  for (const auto& rec : build_recordings(frames, options.image_width, options.image_height)) {
    auto windows = slide_windows(rec);
    auto& dest = per_client[rec.client_id];
    std::move(windows.begin(), windows.end(), std::back_inserter(dest));
  }
  std::vector<ClientDataset> clients;
  std::uint64_t ordinal = 0;
  for (const auto& [client, windows] : per_client) {
    clients.push_back(stratified_split(client, windows, options.fractions,
                                       mix_seed(options.seed, ordinal++)));
  }
  return clients;
}

std::vector<RawKeypointFrame> parse_frames(std::istream& in) {
  std::vector<RawKeypointFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      RawKeypointFrame f;
      f.client_id = j.at("client").get<std::string>();
      f.recording_id = j.at("recording").get<std::string>();
      f.frame_index = j.at("frame").get<std::uint64_t>();
      f.label = label_from_json(j.at("label"));
      const auto& kp = j.at("kp");
      if (!kp.is_array() || kp.size() != kCocoKeypoints) {
        throw DataError("expected 17 keypoints");
      }
      for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
        const auto& triple = kp[k];
        if (!triple.is_array() || triple.size() != 3) {
          throw DataError("keypoint " + std::to_string(k) + " is not an [x, y, c] triple");
        }
        f.keypoints[k] = {triple[0].get<double>(), triple[1].get<double>(),
                          triple[2].get<double>()};
      }
      frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return frames;
}

std::vector<RawKeypointFrame> load_frames(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_frames(in);
}

void write_frames(std::ostream& out, std::span<const RawKeypointFrame> frames) {
  for (const auto& f : frames) {
    json kp = json::array();
    for (const auto& k : f.keypoints) kp.push_back({k.x, k.y, k.confidence});
    json j = {{"client", f.client_id},
              {"recording", f.recording_id},
              {"frame", f.frame_index},
              {"label", to_string(f.label)},
              {"kp", std::move(kp)}};
    out << j.dump() << '\n';
  }
}

void write_windows(std::ostream& out, std::span<const TaggedWindow> windows) {
  for (const auto& [w, split] : windows) {
    // Column-major storage of a 26x20 matrix is frame-major order.
    std::vector<double> coords(w.frames.data(), w.frames.data() + w.frames.size());
    json j = {{"id", w.id()},
              {"client", w.client_id},
              {"recording", w.recording_id},
              {"start", w.start_frame},
              {"label", to_string(w.label)},
              {"split", split},
              {"coords", std::move(coords)}};
    out << j.dump() << '\n';
  }
}

std::vector<TaggedWindow> parse_windows(std::istream& in) {
  std::vector<TaggedWindow> windows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      TaggedWindow t;
      t.window.client_id = j.at("client").get<std::string>();
      t.window.recording_id = j.value("recording", std::string("r") + std::to_string(line_no));
      t.window.start_frame = j.value("start", static_cast<std::uint64_t>(0));
      t.window.label = label_from_json(j.at("label"));
      t.split = j.value("split", std::string());
      const auto coords = j.at("coords").get<std::vector<double>>();
      if (coords.size() != kFrameDim * kWindowLength) {
        throw DataError("expected " + std::to_string(kFrameDim * kWindowLength) +
                        " coordinates, got " + std::to_string(coords.size()));
      }
      t.window.frames = Eigen::Map<const WindowMatrix>(coords.data());
      windows.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return windows;
}

std::vector<TaggedWindow> load_windows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_windows(in);
}

std::vector<TaggedWindow> tag_splits(std::span<const ClientDataset> clients) {
  std::vector<TaggedWindow> out;
  for (const auto& c : clients) {
    for (const auto& w : c.train) out.push_back({w, "train"});
    for (const auto& w : c.val) out.push_back({w, "val"});
    for (const auto& w : c.test) out.push_back({w, "test"});
  }
  return out;
}

std::vector<ClientDataset> untag_splits(std::span<const TaggedWindow> windows) {
  std::map<std::string, ClientDataset> by_client;
  for (const auto& [w, split] : windows) {
    auto& c = by_client[w.client_id];
    c.client_id = w.client_id;
    if (split == "train") {
      c.train.push_back(w);
    } else if (split == "val") {
      c.val.push_back(w);
    } else if (split == "test") {
      c.test.push_back(w);
    } else {
      throw DataError("window " + w.id() + " has unknown split '" + split + "'");
    }
  }
  std::vector<ClientDataset> out;
  for (auto& [id, c] : by_client) out.push_back(std::move(c));
  return out;
}

std::array<std::size_t, kNumClasses> class_histogram(
    std::span<const WindowSample> windows) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& w : windows) ++counts[index_of(w.label)];
  return counts;
}

}  // namespace fedhar
