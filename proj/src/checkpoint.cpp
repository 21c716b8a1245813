#include <cstring>
#include <fstream>

#include <json.hpp>

#include "darthkit/errors.hpp"
#include "darthkit/model.hpp"
#include "fsutil.hpp"

namespace darthkit {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"num_classes", c.num_classes},
              {"embed_dim", c.embed_dim},
              {"encoder_channels", c.encoder_channels},
              {"rpn_channels", c.rpn_channels},
              {"roi_hidden", c.roi_hidden},
              {"embed_hidden", c.embed_hidden},
              {"pool_size", c.pool_size},
              {"anchor_size", c.anchor_size},
              {"anchor_ratios", c.anchor_ratios},
              {"pre_nms_top_k", c.pre_nms_top_k},
              {"post_nms_top_k", c.post_nms_top_k},
              {"rpn_nms_iou", c.rpn_nms_iou},
              {"min_proposal_size", c.min_proposal_size}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  j.at("num_classes").get_to(c.num_classes);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("encoder_channels").get_to(c.encoder_channels);
  j.at("rpn_channels").get_to(c.rpn_channels);
  j.at("roi_hidden").get_to(c.roi_hidden);
  j.at("embed_hidden").get_to(c.embed_hidden);
  j.at("pool_size").get_to(c.pool_size);
  j.at("anchor_size").get_to(c.anchor_size);
  j.at("anchor_ratios").get_to(c.anchor_ratios);
  j.at("pre_nms_top_k").get_to(c.pre_nms_top_k);
  j.at("post_nms_top_k").get_to(c.post_nms_top_k);
  j.at("rpn_nms_iou").get_to(c.rpn_nms_iou);
  j.at("min_proposal_size").get_to(c.min_proposal_size);
  return c;
}

void put_le64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  json arrays = json::array();
  std::string payload;
  payload.reserve(ckpt.weights.num_values() * 8);
  std::size_t offset = 0;
  for (const auto& a : ckpt.weights.arrays) {
    const auto n = static_cast<std::size_t>(a.values.size());
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", n}});
    for (Eigen::Index i = 0; i < a.values.size(); ++i) put_le64(payload, a.values[i]);
    offset += n * 8;
  }
  json manifest{{"format", "darthkit-checkpoint"},
                {"version", 1},
                {"dtype", "float64-le"},
                {"step", ckpt.step},
                {"model", config_to_json(ckpt.model)},
                {"arrays", std::move(arrays)}};

  std::filesystem::create_directories(dir);
  atomic_write(dir / "weights.bin", payload);
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto weights_path = dir / "weights.bin";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(weights_path))
    throw IoError("checkpoint not found: " + dir.string());

  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  const std::string payload = read_file(weights_path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());

  Checkpoint ckpt;
  try {
    if (manifest.at("dtype").get<std::string>() != "float64-le")
      throw IoError("unsupported checkpoint dtype");
    ckpt.step = manifest.at("step").get<std::int64_t>();
    ckpt.model = config_from_json(manifest.at("model"));
    for (const auto& entry : manifest.at("arrays")) {
      ParamArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<std::vector<int>>();
      const auto off = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (off + count * 8 > payload.size()) throw IoError("checkpoint payload truncated at " + a.name);
      a.values.resize(static_cast<Eigen::Index>(count));
      for (std::size_t i = 0; i < count; ++i) a.values[static_cast<Eigen::Index>(i)] = get_le64(bytes + off + 8 * i);
      ckpt.weights.arrays.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace darthkit
