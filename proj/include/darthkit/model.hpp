#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "darthkit/geometry.hpp"
#include "darthkit/image.hpp"
#include "darthkit/tensor.hpp"

namespace darthkit {

struct ParamArray {
  std::string name;
  std::vector<int> shape;
  Vector values;

  friend bool operator==(const ParamArray& a, const ParamArray& b) {
    return a.name == b.name && a.shape == b.shape && a.values.size() == b.values.size() &&
           a.values == b.values;
  }
};

/// Ordered, named parameter arrays. Also used as the gradient container.
class ModelWeights {
 public:
  std::vector<ParamArray> arrays;

  ModelWeights zeros_like() const;
  std::size_t num_values() const noexcept;
  bool same_structure(const ModelWeights& other) const noexcept;
  bool all_finite() const noexcept;
  double squared_norm() const noexcept;
  const ParamArray& at(std::string_view name) const;
  ParamArray& at(std::string_view name);

  /// this += alpha * x (structures must match).
  void axpy(double alpha, const ModelWeights& x);
  void scale(double factor) noexcept;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Elementwise tau * a + (1 - tau) * b. Throws ShapeError on layout mismatch.
ModelWeights blend_weights(const ModelWeights& a, const ModelWeights& b, double tau);

struct ModelConfig {
  int num_classes = 3;  // foreground classes; logits carry one extra background column
  int embed_dim = 64;
  std::array<int, 3> encoder_channels{16, 32, 32};
  int rpn_channels = 32;
  int roi_hidden = 128;
  int embed_hidden = 128;
  int pool_size = 4;
  double anchor_size = 20.0;
  std::vector<double> anchor_ratios{1.0, 0.5};  // height / width
  int pre_nms_top_k = 200;
  int post_nms_top_k = 48;
  double rpn_nms_iou = 0.7;
  double min_proposal_size = 2.0;

  static constexpr int kStride = 8;
  int num_anchors_per_cell() const noexcept { return static_cast<int>(anchor_ratios.size()); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DetectConfig {
  double score_thr = 0.3;
  double nms_iou = 0.5;
  int max_detections = 50;
  // Keep only each RoI's best foreground class; otherwise every class above
  // score_thr yields its own detection.
  bool single_label = true;
};

/// Raw head outputs. rpn_cls: [N] anchor logits, rpn_reg: [N,4] anchor
/// deltas, roi_cls: [K,C+1] logits (column 0 = background), roi_reg: [K,4]
/// class-agnostic deltas, embeddings: [K,E]; `proposals` are the K RoIs.
struct DetectorOutputs {
  Vector rpn_cls;
  Matrix rpn_reg;
  Matrix roi_cls;
  Matrix roi_reg;
  Matrix embeddings;
  std::vector<BoundingBox> proposals;
};

namespace detail {
struct EncoderCache;
struct RoiCache;
}  // namespace detail

/// Encoder + RPN evaluation of one image; keeps activations for backward.
struct Encoded {
  int image_width = 0;
  int image_height = 0;
  int feat_width = 0;
  int feat_height = 0;
  Vector rpn_cls;
  Matrix rpn_reg;
  std::vector<BoundingBox> anchors;
  std::shared_ptr<const detail::EncoderCache> cache;
};

struct RoiHeadOutputs {
  std::vector<BoundingBox> rois;
  Matrix cls;
  Matrix reg;
  Matrix embeddings;
  std::shared_ptr<const detail::RoiCache> cache;
};

/// Upstream gradients for backward. Empty members count as zero.
struct OutputGrads {
  Vector rpn_cls;
  Matrix rpn_reg;
  Matrix roi_cls;
  Matrix roi_reg;
  Matrix embeddings;
};

struct EmbeddedDetections {
  std::vector<Detection> detections;
  Matrix embeddings;  // row-aligned with detections
};

inline constexpr std::array<double, 4> kRpnDeltaStds{1.0, 1.0, 1.0, 1.0};
inline constexpr std::array<double, 4> kRoiDeltaStds{0.1, 0.1, 0.2, 0.2};

std::array<double, 4> encode_box(const BoundingBox& ref, const BoundingBox& target,
                                 const std::array<double, 4>& stds);
BoundingBox decode_box(const BoundingBox& ref, const double* delta,
                       const std::array<double, 4>& stds);

/// Minimal two-stage detector with an embedding head: three stride-2 conv
/// blocks, an RPN with one anchor scale, pooled RoI features feeding a
/// classification/regression head and a two-layer embedding head.
class Detector {
 public:
  explicit Detector(ModelConfig cfg = {});

  const ModelConfig& config() const noexcept { return cfg_; }
  ModelWeights init_weights(std::uint64_t seed) const;

  Encoded encode(const ModelWeights& w, const Image& img) const;
  std::vector<BoundingBox> propose(const Encoded& enc) const;
  RoiHeadOutputs roi_heads(const ModelWeights& w, const Encoded& enc,
                           std::span<const BoundingBox> rois) const;

  /// Accumulates d(loss)/d(weights) into `grads` given output gradients.
  /// `roi` may be null when no RoI outputs carry gradient.
  void backward(const ModelWeights& w, const Encoded& enc, const RoiHeadOutputs* roi,
                const OutputGrads& upstream, ModelWeights& grads) const;

  /// With `rois`, the heads run exactly on those boxes; otherwise on the
  /// model's own score-ranked, NMS-filtered proposals.
  DetectorOutputs forward(const ModelWeights& w, const Image& img,
                          std::optional<std::span<const BoundingBox>> rois = std::nullopt) const;

  std::vector<Detection> postprocess(const RoiHeadOutputs& heads, const Encoded& enc,
                                     const DetectConfig& cfg) const;
  std::vector<Detection> detect(const ModelWeights& w, const Image& img,
                                const DetectConfig& cfg) const;
  EmbeddedDetections detect_with_embeddings(const ModelWeights& w, const Image& img,
                                            const DetectConfig& cfg) const;

  std::vector<BoundingBox> anchors(int feat_width, int feat_height) const;

 private:
  ModelConfig cfg_;
};

struct Checkpoint {
  ModelConfig model;
  ModelWeights weights;
  std::int64_t step = 0;
};

/// Checkpoint directory: `manifest.json` (names, shapes, dtype, offsets,
/// step, model config) plus `weights.bin` (little-endian float64 payload).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace darthkit
