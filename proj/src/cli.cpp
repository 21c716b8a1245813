#include "darthkit/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "darthkit/adapt.hpp"
#include "darthkit/chart.hpp"
#include "darthkit/config.hpp"
#include "darthkit/errors.hpp"
#include "darthkit/metrics.hpp"
#include "darthkit/motio.hpp"
#include "darthkit/synthbench.hpp"
#include "darthkit/tracker.hpp"
#include "fsutil.hpp"
#include "hash.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace darthkit {

namespace {

struct CheckpointMissing : Error {
  using Error::Error;
};
struct ClassMismatch : Error {
  using Error::Error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string gt;
  std::string pred;
  std::vector<std::string> reports;
  std::vector<std::string> labels;
};

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t which) {
  return KeyedRng(seed, which, StreamRole::kScene)();
}

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  return cfg;
}

// Resolved config plus a manifest tying the outputs to config, seeds and data.
void write_run_record(const fs::path& out, const std::string& command, const RunConfig& cfg,
                      const std::string& data_hash, const ordered_json& inputs = ordered_json::object()) {
  const std::string text = format_run_config(cfg);
  atomic_write(out / "config.ini", text);
  ordered_json m;
  m["command"] = command;
  m["config_hash"] = content_hash(text);
  m["seeds"] = {{"global", cfg.seed},
                {"source_split", split_seed(cfg.seed, 1)},
                {"target_split", split_seed(cfg.seed, 2)},
                {"pretrain", cfg.pretrain.seed},
                {"adapt", cfg.adapt.seed}};
  m["data_hash"] = data_hash;
  m["inputs"] = inputs;
  atomic_write(out / "run.json", m.dump(2) + "\n");
}

Checkpoint load_checkpoint_or_fail(const std::string& path) {
  if (path.empty() || !fs::exists(fs::path(path) / "manifest.json"))
    throw CheckpointMissing("checkpoint not found: " + (path.empty() ? std::string("(none given)") : path));
  return load_checkpoint(path);
}

std::string weights_hash(const Checkpoint& c) {
  Fnv64 h;
  for (const auto& p : c.weights.arrays) h.bytes(p.values.data(), static_cast<std::size_t>(p.values.size()) * sizeof(double));
  return h.hex();
}

int cmd_synth(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = o.out;
  const auto src = make_split(cfg.bench, cfg.source_style, cfg.bench.source_sequences, split_seed(cfg.seed, 1), "source");
  const auto tgt = make_split(cfg.bench, cfg.target_style, cfg.bench.target_sequences, split_seed(cfg.seed, 2), "target");
  auto style_json = [](const DomainStyle& s) {
    ordered_json p = ordered_json::array();
    for (const auto& c : s.object_palette) p.push_back({c[0], c[1], c[2]});
    return ordered_json{{"background_intensity", s.background_intensity},
                        {"noise_sigma", s.noise_sigma},
                        {"global_hue_shift", s.global_hue_shift},
                        {"blur_radius", s.blur_radius},
                        {"object_palette", p}};
  };
  auto extra = [&](const DomainStyle& s, std::uint64_t seed, const char* split) {
    ordered_json e;
    e["split"] = split;
    e["seed"] = seed;
    e["style"] = style_json(s);
    e["spec"] = {{"frames_per_sequence", cfg.bench.frames_per_sequence},
                 {"min_objects", cfg.bench.min_objects},
                 {"max_objects", cfg.bench.max_objects},
                 {"width", cfg.bench.width},
                 {"height", cfg.bench.height}};
    return e.dump();
  };
  save_dataset(src, dir / "source", extra(cfg.source_style, split_seed(cfg.seed, 1), "source"));
  save_dataset(tgt, dir / "target", extra(cfg.target_style, split_seed(cfg.seed, 2), "target"));
  write_run_record(dir, "synth", cfg, content_hash(dataset_hash(src) + dataset_hash(tgt)),
                   {{"shift_magnitude", shift_magnitude(cfg.source_style, cfg.target_style)}});
  out << "wrote " << src.videos.sequences.size() << " source and " << tgt.videos.sequences.size()
      << " target sequences to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const auto data = load_dataset(o.data);
  const Detector det(cfg.model);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  std::ostringstream log;
  const auto w = pretrain_source(det, det.init_weights(cfg.seed), data, cfg.pretrain, &log);
  std::size_t frames = data.videos.num_frames();
  const Checkpoint ckpt{cfg.model, w, static_cast<std::int64_t>(frames) * cfg.pretrain.epochs};
  save_checkpoint(ckpt, dir / "checkpoint");
  atomic_write(dir / "pretrain_log.jsonl", log.str());
  write_run_record(dir, "pretrain", cfg, dataset_hash(data), {{"data", o.data}});
  out << "pretrained on " << frames << " frames; checkpoint in " << (dir / "checkpoint").string() << "\n";
  return kExitOk;
}

int cmd_adapt(const Options& o, std::ostream& out, bool sfod) {
  const RunConfig cfg = resolve_config(o);
  const Checkpoint src = load_checkpoint_or_fail(o.checkpoint);
  const auto data = load_dataset(o.data);
  const Detector det(src.model);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  std::ostringstream log;
  // Only the frames reach adaptation; the target labels stay on disk.
  const VideoSet& frames = data.videos;
  const auto w = sfod ? sfod_baseline(det, src.weights, frames, cfg.sfod_conf_thr, cfg.adapt, &log)
                      : adapt_run(det, src.weights, frames, cfg.adapt, &log);
  const auto steps = static_cast<std::int64_t>(frames.num_frames()) * cfg.adapt.epochs;
  save_checkpoint(Checkpoint{src.model, w, src.step + steps}, dir / "checkpoint");
  atomic_write(dir / (sfod ? "sfod_log.jsonl" : "adapt_log.jsonl"), log.str());
  write_run_record(dir, sfod ? "sfod" : "adapt", cfg, dataset_hash(data),
                   {{"data", o.data}, {"checkpoint", o.checkpoint}, {"checkpoint_hash", weights_hash(src)}});
  out << (sfod ? "sfod" : "adapt") << ": " << steps << " steps; checkpoint in " << (dir / "checkpoint").string()
      << "\n";
  return kExitOk;
}

int cmd_track(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const Checkpoint ckpt = load_checkpoint_or_fail(o.checkpoint);
  const auto data = load_dataset(o.data);
  const Detector det(ckpt.model);
  const auto result = track_sequence(det, ckpt.weights, data.videos, cfg.tracker);
  const fs::path dir = o.out;
  save_tracking_result(result, dir / "results");
  write_run_record(dir, "track", cfg, dataset_hash(data),
                   {{"data", o.data}, {"checkpoint", o.checkpoint}, {"checkpoint_hash", weights_hash(ckpt)}});
  std::size_t rows = 0;
  for (const auto& s : result.sequences) rows += s.rows.size();
  out << "tracked " << result.sequences.size() << " sequences, " << rows << " rows\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const auto gt = load_tracks(o.gt);
  const auto pred = load_tracks(o.pred);
  const auto report = evaluate(gt, pred, cfg.eval_classes);
  const fs::path dir = o.out;
  const std::string text = report.to_json();
  atomic_write(dir / "metrics.json", text);
  std::string gt_csv;
  for (const auto& s : gt.sequences) gt_csv += format_mot_csv(s);
  write_run_record(dir, "eval", cfg, content_hash(gt_csv), {{"gt", o.gt}, {"pred", o.pred}});
  char line[256];
  const auto& v = report.average;
  std::snprintf(line, sizeof line, "DetA %.1f  MOTA %.1f  HOTA %.1f  IDF1 %.1f  AssA %.1f\n", 100 * v.deta,
                100 * v.mota, 100 * v.hota, 100 * v.idf1, 100 * v.assa);
  out << line;
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  if (o.reports.size() < 2) throw ConfigError("reports", "compare needs at least two reports");
  if (!o.labels.empty() && o.labels.size() != o.reports.size())
    throw ConfigError("labels", "compare: one label per report");
  std::vector<MetricsReport> reports;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < o.reports.size(); ++i) {
    fs::path p = o.reports[i];
    if (fs::is_directory(p)) p /= "metrics.json";
    reports.push_back(MetricsReport::from_json(read_file(p)));
    labels.push_back(o.labels.empty() ? p.parent_path().filename().string() : o.labels[i]);
    if (labels.back().empty()) labels.back() = p.stem().string();
    if (reports.back().class_ids != reports.front().class_ids)
      throw ClassMismatch("report " + p.string() + " covers a different class set than " + o.reports.front());
  }
  static const char* kNames[5] = {"DetA", "MOTA", "HOTA", "IDF1", "AssA"};
  auto cols = [](const MetricValues& v) { return std::array<double, 5>{v.deta, v.mota, v.hota, v.idf1, v.assa}; };
  auto fmt = [](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  const auto base = cols(reports.front().average);
  std::string csv = "method,DetA,MOTA,HOTA,IDF1,AssA,dDetA,dMOTA,dHOTA,dIDF1,dAssA\n";
  std::string txt;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s\n", "method", "DetA", "MOTA", "HOTA", "IDF1", "AssA");
  txt += buf;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto v = cols(reports[i].average);
    csv += labels[i];
    for (double x : v) csv += "," + fmt(100 * x);
    for (int k = 0; k < 5; ++k) csv += "," + fmt(100 * (v[k] - base[k]));
    csv += "\n";
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s\n", labels[i].c_str(), fmt(100 * v[0]).c_str(),
                  fmt(100 * v[1]).c_str(), fmt(100 * v[2]).c_str(), fmt(100 * v[3]).c_str(), fmt(100 * v[4]).c_str());
    txt += buf;
  }
  const fs::path dir = o.out;
  atomic_write(dir / "comparison.csv", csv);
  atomic_write(dir / "comparison.txt", txt);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> values;
    for (const auto& r : reports) values.push_back(100 * cols(r.average)[k]);
    atomic_write(dir / (std::string("chart_") + kNames[k] + ".svg"), bar_chart_svg(kNames[k], labels, values));
  }
  out << txt;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"darthkit: test-time adaptation for appearance-based multi-object tracking"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed_value = 0;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "INI run config");
    if (config_required) c->required();
    sub->add_option("--seed", seed_value, "override the global seed");
    sub->add_option("--out", o.out, "output directory")->required();
  };
  auto* synth = app.add_subcommand("synth", "generate the source/target benchmark");
  common(synth, true);
  auto* pretrain = app.add_subcommand("pretrain", "supervised training on a labeled source dataset");
  common(pretrain, true);
  pretrain->add_option("--data", o.data, "source dataset directory")->required();
  auto* adapt = app.add_subcommand("adapt", "test-time adaptation on target frames");
  auto* sfod = app.add_subcommand("sfod", "pseudo-label self-training baseline");
  for (auto* sub : {adapt, sfod}) {
    common(sub, true);
    sub->add_option("--checkpoint", o.checkpoint, "source checkpoint directory")->required();
    sub->add_option("--data", o.data, "target dataset directory (labels unused)")->required();
  }
  auto* track = app.add_subcommand("track", "run the tracker and write MOT CSVs");
  common(track, true);
  track->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  track->add_option("--data", o.data, "dataset directory")->required();
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  common(eval, false);
  eval->add_option("--gt", o.gt, "dataset directory or directory of gt CSVs")->required();
  eval->add_option("--pred", o.pred, "track output directory or directory of CSVs")->required();
  auto* compare = app.add_subcommand("compare", "tabulate and chart several metric reports");
  common(compare, false);
  compare->add_option("--reports", o.reports, "metrics.json files or eval output directories")->required();
  compare->add_option("--labels", o.labels, "method names, one per report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->get_option("--seed")->count() > 0) o.seed = seed_value;

  try {
    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "synth") return cmd_synth(o, out);
    if (verb == "pretrain") return cmd_pretrain(o, out);
    if (verb == "adapt") return cmd_adapt(o, out, false);
    if (verb == "sfod") return cmd_adapt(o, out, true);
    if (verb == "track") return cmd_track(o, out);
    if (verb == "eval") return cmd_eval(o, out);
    return cmd_compare(o, out);
  } catch (const ConfigError& e) {
    err << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointMissing& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingCheckpoint;
  } catch (const SequenceMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitSequenceMismatch;
  } catch (const ClassMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitClassMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace darthkit
