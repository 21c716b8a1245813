#include "darthkit/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "darthkit/errors.hpp"
#include "fsutil.hpp"

namespace darthkit {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key, "config key '" + key + "': cannot parse '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key, "config key '" + key + "': expected true/false, got '" + s + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  if (s == "all" || s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string format_palette(const std::vector<std::array<std::uint8_t, 3>>& p) {
  std::string out;
  for (const auto& c : p) {
    if (!out.empty()) out += ' ';
    out += std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]);
  }
  return out;
}

std::vector<std::array<std::uint8_t, 3>> parse_palette(const std::string& key, const std::string& s) {
  std::vector<std::array<std::uint8_t, 3>> out;
  std::stringstream ss(s);
  std::string triple;
  while (ss >> triple) {
    const auto v = parse_int_list(key, triple);
    if (v.size() != 3) throw ConfigError(key, "config key '" + key + "': colors are r,g,b triples");
    std::array<std::uint8_t, 3> c{};
    for (int i = 0; i < 3; ++i) {
      if (v[i] < 0 || v[i] > 255) throw ConfigError(key, "config key '" + key + "': channel out of [0,255]");
      c[i] = static_cast<std::uint8_t>(v[i]);
    }
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError(key, "config key '" + key + "': palette is empty");
  return out;
}

struct Field {
  std::string section, name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

// Member accessors are written as lambdas over the whole config so nested
// structs need no pointer-to-member gymnastics.
#define DK_NUM(SEC, NAME, TYPE, EXPR)                                                     \
  Field {                                                                                 \
    SEC, NAME, [](const RunConfig& c) { return fmt(static_cast<double>(c.EXPR)); },       \
        [](RunConfig& c, const std::string& k, const std::string& v) {                    \
          c.EXPR = parse_number<TYPE>(k, v);                                              \
        }                                                                                 \
  }
#define DK_INT(SEC, NAME, TYPE, EXPR)                                                     \
  Field {                                                                                 \
    SEC, NAME, [](const RunConfig& c) { return std::to_string(c.EXPR); },                 \
        [](RunConfig& c, const std::string& k, const std::string& v) {                    \
          c.EXPR = parse_number<TYPE>(k, v);                                              \
        }                                                                                 \
  }
#define DK_BOOL(SEC, NAME, EXPR)                                                          \
  Field {                                                                                 \
    SEC, NAME, [](const RunConfig& c) { return std::string(c.EXPR ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.EXPR = parse_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      DK_INT("run", "seed", std::uint64_t, seed),

      DK_INT("synth", "source_sequences", int, bench.source_sequences),
      DK_INT("synth", "target_sequences", int, bench.target_sequences),
      DK_INT("synth", "frames_per_sequence", int, bench.frames_per_sequence),
      DK_INT("synth", "min_objects", int, bench.min_objects),
      DK_INT("synth", "max_objects", int, bench.max_objects),
      DK_INT("synth", "width", int, bench.width),
      DK_INT("synth", "height", int, bench.height),
      DK_NUM("synth", "source_background", double, source_style.background_intensity),
      DK_NUM("synth", "source_noise_sigma", double, source_style.noise_sigma),
      DK_NUM("synth", "source_hue_shift", double, source_style.global_hue_shift),
      DK_NUM("synth", "source_blur_radius", double, source_style.blur_radius),
      DK_NUM("synth", "target_background", double, target_style.background_intensity),
      DK_NUM("synth", "target_noise_sigma", double, target_style.noise_sigma),
      DK_NUM("synth", "target_hue_shift", double, target_style.global_hue_shift),
      DK_NUM("synth", "target_blur_radius", double, target_style.blur_radius),
      Field{"synth", "palette", [](const RunConfig& c) { return format_palette(c.source_style.object_palette); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.source_style.object_palette = c.target_style.object_palette = parse_palette(k, v);
            }},

      DK_INT("model", "embed_dim", int, model.embed_dim),
      DK_INT("model", "roi_hidden", int, model.roi_hidden),
      DK_INT("model", "embed_hidden", int, model.embed_hidden),
      DK_NUM("model", "anchor_size", double, model.anchor_size),
      DK_INT("model", "post_nms_top_k", int, model.post_nms_top_k),

      DK_INT("pretrain", "epochs", int, pretrain.epochs),
      DK_NUM("pretrain", "lr", double, pretrain.lr),
      DK_NUM("pretrain", "momentum", double, pretrain.momentum),
      DK_NUM("pretrain", "weight_decay", double, pretrain.weight_decay),
      DK_NUM("pretrain", "grad_clip_norm", double, pretrain.grad_clip_norm),
      DK_INT("pretrain", "lr_decay_step", int, pretrain.lr_decay_step),
      DK_NUM("pretrain", "lr_decay_factor", double, pretrain.lr_decay_factor),
      DK_BOOL("pretrain", "photometric", pretrain.aug.student_photometric),
      DK_INT("pretrain", "ref_window", int, pretrain.ref_window),

      DK_NUM("adapt", "tau", double, adapt.tau),
      DK_NUM("adapt", "gamma_conf", double, adapt.gamma_conf),
      DK_NUM("adapt", "lr", double, adapt.lr),
      DK_NUM("adapt", "momentum", double, adapt.momentum),
      DK_NUM("adapt", "grad_clip_norm", double, adapt.grad_clip_norm),
      DK_INT("adapt", "epochs", int, adapt.epochs),
      DK_INT("adapt", "lr_decay_step", int, adapt.lr_decay_step),
      DK_NUM("adapt", "lr_decay_factor", double, adapt.lr_decay_factor),
      DK_NUM("adapt", "epsilon", double, adapt.epsilon),
      DK_BOOL("adapt", "dc_rpn_probabilities", adapt.dc_rpn_probabilities),
      DK_BOOL("adapt", "dc_roi_probabilities", adapt.dc_roi_probabilities),
      DK_NUM("adapt", "weight_embed", double, adapt.gammas.embed),
      DK_NUM("adapt", "weight_aux", double, adapt.gammas.aux),
      DK_NUM("adapt", "weight_dc_rpn", double, adapt.gammas.dc_rpn),
      DK_NUM("adapt", "weight_dc_roi", double, adapt.gammas.dc_roi),
      DK_NUM("adapt", "pos_iou", double, adapt.matching.pos_iou),
      DK_NUM("adapt", "neg_iou", double, adapt.matching.neg_iou),
      DK_INT("adapt", "student_samples", int, adapt.matching.student_samples),
      DK_INT("adapt", "contrastive_samples", int, adapt.matching.contrastive_samples),
      DK_BOOL("adapt", "teacher_geometric", adapt.aug.teacher_geometric),
      DK_BOOL("adapt", "student_photometric", adapt.aug.student_photometric),
      DK_BOOL("adapt", "contrastive_geometric", adapt.aug.contrastive_geometric),
      DK_BOOL("adapt", "contrastive_photometric", adapt.aug.contrastive_photometric),
      DK_NUM("adapt", "teacher_score_thr", double, adapt.teacher_detect.score_thr),
      DK_BOOL("adapt", "teacher_single_label", adapt.teacher_detect.single_label),

      DK_NUM("sfod", "conf_thr", double, sfod_conf_thr),

      DK_NUM("tracker", "match_score_thr", double, tracker.match_score_thr),
      DK_NUM("tracker", "init_conf_thr", double, tracker.init_conf_thr),
      DK_INT("tracker", "max_age", int, tracker.max_age),
      DK_NUM("tracker", "embed_momentum", double, tracker.embed_momentum),
      DK_NUM("tracker", "temperature", double, tracker.temperature),
      DK_BOOL("tracker", "hungarian", tracker.hungarian),
      DK_NUM("tracker", "score_thr", double, tracker.detect.score_thr),
      DK_NUM("tracker", "nms_iou", double, tracker.detect.nms_iou),
      DK_INT("tracker", "max_detections", int, tracker.detect.max_detections),
      DK_BOOL("tracker", "single_label", tracker.detect.single_label),

      Field{"eval", "classes",
            [](const RunConfig& c) {
              if (c.eval_classes.empty()) return std::string("all");
              std::string s;
              for (int id : c.eval_classes) s += (s.empty() ? "" : ",") + std::to_string(id);
              return s;
            },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_classes = parse_int_list(k, v); }},
  };
  return kFields;
}

#undef DK_NUM
#undef DK_INT
#undef DK_BOOL

void check_ranges(const RunConfig& c) {
  auto unit = [](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(key, std::string("config key '") + key + "' must lie in [0,1]");
  };
  unit(c.adapt.tau, "adapt.tau");
  unit(c.adapt.gamma_conf, "adapt.gamma_conf");
  unit(c.tracker.match_score_thr, "tracker.match_score_thr");
  unit(c.tracker.init_conf_thr, "tracker.init_conf_thr");
  unit(c.tracker.embed_momentum, "tracker.embed_momentum");
  unit(c.sfod_conf_thr, "sfod.conf_thr");
  if (c.adapt.matching.neg_iou > c.adapt.matching.pos_iou)
    throw ConfigError("adapt.neg_iou", "config key 'adapt.neg_iou' exceeds adapt.pos_iou");
  if (c.bench.max_objects < c.bench.min_objects)
    throw ConfigError("synth.max_objects", "config key 'synth.max_objects' is below synth.min_objects");
  if (c.bench.width < ModelConfig::kStride || c.bench.height < ModelConfig::kStride)
    throw ConfigError("synth.width", "config key 'synth.width' / 'synth.height' is below the encoder stride");
  if (c.tracker.temperature <= 0.0)
    throw ConfigError("tracker.temperature", "config key 'tracker.temperature' must be positive");
  if (c.adapt.epochs < 0 || c.pretrain.epochs < 0) throw ConfigError(c.adapt.epochs < 0 ? "adapt.epochs" : "pretrain.epochs", "epoch counts must be >= 0");
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  pretrain.seed = s;
  adapt.seed = s;
}

RunConfig default_run_config() {
  RunConfig c;
  // The toy target sees a few hundred frames rather than a full dataset, so
  // adaptation runs several passes at a higher rate than the paper's schedule.
  c.adapt.lr = 0.003;
  c.adapt.epochs = 3;
  c.apply_seed(0);
  return c;
}

RunConfig parse_run_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("config parse error: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  std::set<std::string> known;
  for (const auto& f : fields()) known.insert(f.section + "." + f.name);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(section, "config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known.count(full)) throw ConfigError(full, "unknown config key '" + full + "'");
    }
  }
  RunConfig c = default_run_config();
  for (const auto& f : fields()) {
    const std::string full = f.section + "." + f.name;
    const auto value = tree.get_optional<std::string>(pt::ptree::path_type(full, '.'));
    if (!value) throw ConfigError(full, "missing config key '" + full + "'");
    f.set(c, full, *value);
  }
  check_ranges(c);
  c.apply_seed(c.seed);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.name + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace darthkit
