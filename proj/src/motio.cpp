#include "darthkit/motio.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "darthkit/errors.hpp"
#include "darthkit/image.hpp"
#include "fsutil.hpp"
#include "hash.hpp"

namespace fs = std::filesystem;

namespace darthkit {

namespace {

constexpr const char* kHeader = "frame,id,x,y,w,h,conf,class,vis";

void sort_rows(std::vector<TrackRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.track_id < b.track_id;
  });
}

std::string frame_file(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", frame);
  return buf;
}


}  // namespace

std::string format_mot_csv(const SequenceTracks& seq) {
  std::vector<TrackRow> rows = seq.rows;
  sort_rows(rows);
  std::string out = std::string(kHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.3f,%.3f,%.3f,%.3f,%.5f,%d,1\n", r.frame, r.track_id, r.box.x1, r.box.y1,
                  r.box.width(), r.box.height(), r.box.confidence, r.box.class_id);
    out += buf;
  }
  return out;
}

SequenceTracks parse_mot_csv(const std::string& text, const std::string& name, int num_frames) {
  SequenceTracks seq;
  seq.name = name;
  seq.num_frames = num_frames;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("frame", 0) == 0) continue;
    int frame = 0, id = 0, cls = 0;
    double x = 0, y = 0, w = 0, h = 0, conf = 0, vis = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%d,%lf", &frame, &id, &x, &y, &w, &h, &conf, &cls, &vis) < 8)
      throw IoError(name + ": malformed MOT row at line " + std::to_string(line_no));
    if (frame < 1) throw IoError(name + ": frame indices are 1-based (line " + std::to_string(line_no) + ")");
    TrackRow r;
    r.frame = frame;
    r.track_id = id;
    r.box = BoundingBox{x, y, x + w, y + h, cls, conf};
    seq.rows.push_back(r);
    seq.num_frames = std::max(seq.num_frames, frame);
  }
  sort_rows(seq.rows);
  return seq;
}

void write_mot_csv(const SequenceTracks& seq, const fs::path& path) { atomic_write(path, format_mot_csv(seq)); }

SequenceTracks read_mot_csv(const fs::path& path, int num_frames) {
  return parse_mot_csv(read_file(path), path.stem().string(), num_frames);
}

void save_tracking_result(const TrackingResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : result.sequences) write_mot_csv(s, dir / (s.name + ".csv"));
}

TrackingResult load_tracking_result(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  TrackingResult r;
  for (const auto& f : files) r.sequences.push_back(read_mot_csv(f));
  return r;
}

void save_dataset(const LabeledVideoSet& set, const fs::path& dir, const std::string& extra_json) {
  if (set.gt.sequences.size() != set.videos.sequences.size())
    throw Error("save_dataset: videos and ground truth differ in sequence count");
  const auto extra = extra_json.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(extra_json);
  nlohmann::ordered_json top = extra;
  top["sequences"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < set.videos.sequences.size(); ++s) {
    const auto& video = set.videos.sequences[s];
    const fs::path seq_dir = dir / video.name;
    fs::create_directories(seq_dir / "img");
    for (std::size_t f = 0; f < video.frames.size(); ++f) {
      const fs::path target = seq_dir / "img" / frame_file(static_cast<int>(f) + 1);
      fs::path tmp = target;
      tmp += ".tmp";
      write_png(video.frames[f], tmp);
      fs::rename(tmp, target);
    }
    SequenceTracks gt = set.gt.sequences[s];
    gt.name = video.name;
    write_mot_csv(gt, seq_dir / "gt.csv");
    nlohmann::ordered_json m = extra;
    m["name"] = video.name;
    m["num_frames"] = video.frames.size();
    m["width"] = video.frames.empty() ? 0 : video.frames.front().width;
    m["height"] = video.frames.empty() ? 0 : video.frames.front().height;
    atomic_write(seq_dir / "manifest.json", m.dump(2) + "\n");
    top["sequences"].push_back(video.name);
  }
  top["content_hash"] = dataset_hash(set);
  atomic_write(dir / "manifest.json", top.dump(2) + "\n");
}

LabeledVideoSet load_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw IoError("no dataset manifest in " + dir.string());
  const auto top = nlohmann::json::parse(read_file(manifest));
  LabeledVideoSet set;
  for (const auto& name_json : top.at("sequences")) {
    const auto name = name_json.get<std::string>();
    const fs::path seq_dir = dir / name;
    const auto m = nlohmann::json::parse(read_file(seq_dir / "manifest.json"));
    const int n = m.at("num_frames").get<int>();
    VideoSequence video;
    video.name = name;
    for (int f = 1; f <= n; ++f) video.frames.push_back(read_png(seq_dir / "img" / frame_file(f)));
    SequenceTracks gt = read_mot_csv(seq_dir / "gt.csv", n);
    gt.name = name;
    gt.num_frames = n;
    set.videos.sequences.push_back(std::move(video));
    set.gt.sequences.push_back(std::move(gt));
  }
  return set;
}

TrackingResult load_dataset_gt(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw IoError("no dataset manifest in " + dir.string());
  const auto top = nlohmann::json::parse(read_file(manifest));
  TrackingResult gt;
  for (const auto& name_json : top.at("sequences")) {
    const auto name = name_json.get<std::string>();
    const auto m = nlohmann::json::parse(read_file(dir / name / "manifest.json"));
    const int n = m.at("num_frames").get<int>();
    SequenceTracks s = read_mot_csv(dir / name / "gt.csv", n);
    s.name = name;
    s.num_frames = n;
    gt.sequences.push_back(std::move(s));
  }
  return gt;
}

std::string dataset_hash(const LabeledVideoSet& set) {
  Fnv64 h;
  for (const auto& v : set.videos.sequences) {
    h.str(v.name);
    for (const auto& img : v.frames) {
      const int dims[3] = {img.width, img.height, img.channels};
      h.bytes(dims, sizeof dims);
      h.bytes(img.data.data(), img.data.size());
    }
  }
  for (const auto& s : set.gt.sequences) h.str(format_mot_csv(s));
  return h.hex();
}

TrackingResult load_tracks(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) return load_dataset_gt(dir);
  if (fs::exists(dir / "results")) return load_tracking_result(dir / "results");
  return load_tracking_result(dir);
}

}  // namespace darthkit
