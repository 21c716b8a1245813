#include "darthkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "darthkit/errors.hpp"
#include "darthkit/rng.hpp"
#include "nn.hpp"

namespace darthkit {

// ---------------------------------------------------------------------------
// ModelWeights

ModelWeights ModelWeights::zeros_like() const {
  ModelWeights out;
  out.arrays.reserve(arrays.size());
  for (const auto& a : arrays) out.arrays.push_back({a.name, a.shape, Vector::Zero(a.values.size())});
  return out;
}

std::size_t ModelWeights::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& a : arrays) n += static_cast<std::size_t>(a.values.size());
  return n;
}

bool ModelWeights::same_structure(const ModelWeights& other) const noexcept {
  if (arrays.size() != other.arrays.size()) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != other.arrays[i].name || arrays[i].shape != other.arrays[i].shape ||
        arrays[i].values.size() != other.arrays[i].values.size())
      return false;
  }
  return true;
}

bool ModelWeights::all_finite() const noexcept {
  for (const auto& a : arrays)
    if (!a.values.allFinite()) return false;
  return true;
}

double ModelWeights::squared_norm() const noexcept {
  double s = 0.0;
  for (const auto& a : arrays) s += a.values.squaredNorm();
  return s;
}

const ParamArray& ModelWeights::at(std::string_view name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw ShapeError("no parameter array named " + std::string(name));
}

ParamArray& ModelWeights::at(std::string_view name) {
  return const_cast<ParamArray&>(static_cast<const ModelWeights&>(*this).at(name));
}

void ModelWeights::axpy(double alpha, const ModelWeights& x) {
  if (!same_structure(x)) throw ShapeError("axpy: weight layouts differ");
  for (std::size_t i = 0; i < arrays.size(); ++i) arrays[i].values += alpha * x.arrays[i].values;
}

void ModelWeights::scale(double factor) noexcept {
  for (auto& a : arrays) a.values *= factor;
}

ModelWeights blend_weights(const ModelWeights& a, const ModelWeights& b, double tau) {
  if (!a.same_structure(b)) throw ShapeError("blend_weights: weight layouts differ");
  if (!(tau >= 0.0 && tau <= 1.0)) throw NumericError("blend_weights: tau outside [0,1]");
  ModelWeights out = a;
  if (tau == 1.0) return out;
  for (std::size_t i = 0; i < out.arrays.size(); ++i) {
    if (tau == 0.0) {
      out.arrays[i].values = b.arrays[i].values;
    } else {
      // Written as a step from a so that blending a with itself is exact.
      out.arrays[i].values = a.arrays[i].values + (1.0 - tau) * (b.arrays[i].values - a.arrays[i].values);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Box coding

std::array<double, 4> encode_box(const BoundingBox& ref, const BoundingBox& t,
                                 const std::array<double, 4>& stds) {
  const double pw = std::max(ref.width(), 1e-6), ph = std::max(ref.height(), 1e-6);
  const double gw = std::max(t.width(), 1e-6), gh = std::max(t.height(), 1e-6);
  return {(t.center_x() - ref.center_x()) / pw / stds[0],
          (t.center_y() - ref.center_y()) / ph / stds[1],
          std::log(gw / pw) / stds[2], std::log(gh / ph) / stds[3]};
}

BoundingBox decode_box(const BoundingBox& ref, const double* d, const std::array<double, 4>& stds) {
  static const double kMaxLogRatio = std::log(1000.0 / 16.0);
  const double pw = ref.width(), ph = ref.height();
  const double cx = ref.center_x() + d[0] * stds[0] * pw;
  const double cy = ref.center_y() + d[1] * stds[1] * ph;
  const double w = pw * std::exp(std::clamp(d[2] * stds[2], -kMaxLogRatio, kMaxLogRatio));
  const double h = ph * std::exp(std::clamp(d[3] * stds[3], -kMaxLogRatio, kMaxLogRatio));
  BoundingBox out = ref;
  out.x1 = cx - 0.5 * w;
  out.x2 = cx + 0.5 * w;
  out.y1 = cy - 0.5 * h;
  out.y2 = cy + 0.5 * h;
  return out;
}

// ---------------------------------------------------------------------------
// Detector

namespace {

// Fixed parameter order; indices into ModelWeights::arrays.
enum Param : int {
  kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B,
  kRpnConvW, kRpnConvB, kRpnClsW, kRpnClsB, kRpnRegW, kRpnRegB,
  kRoiFcW, kRoiFcB, kRoiClsW, kRoiClsB, kRoiRegW, kRoiRegB,
  kEmbFc1W, kEmbFc1B, kEmbFc2W, kEmbFc2B,
  kNumParams
};

constexpr double kImageMean[3] = {123.675, 116.28, 103.53};
constexpr double kImageStd[3] = {58.395, 57.12, 57.375};
constexpr double kLayerNormEps = 1e-5;

const double* P(const ModelWeights& w, Param p) { return w.arrays[p].values.data(); }
double* G(ModelWeights& g, Param p) { return g.arrays[p].values.data(); }

Eigen::Map<const Matrix> fc_weight(const ModelWeights& w, Param p) {
  const auto& a = w.arrays[p];
  return Eigen::Map<const Matrix>(a.values.data(), a.shape[0], a.shape[1]);
}

Eigen::Map<Matrix> fc_grad(ModelWeights& g, Param p) {
  auto& a = g.arrays[p];
  return Eigen::Map<Matrix>(a.values.data(), a.shape[0], a.shape[1]);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

namespace detail {

struct EncoderCache {
  nn::ConvShape s1, s2, s3, s4, s_cls, s_reg;
  Matrix cols1, cols2, cols3, cols4;
  Matrix a1, a2, a3, a4;
};

struct RoiCache {
  std::vector<nn::RoiSamplingPlan> plans;
  Matrix pooled;   // [K, C*bins]
  Matrix hidden;   // [K, roi_hidden] post-ReLU
  Matrix emb_norm; // [K, embed_hidden] layer-normalised, pre-ReLU
  Vector emb_inv_std;
  Matrix emb_act;  // [K, embed_hidden] post-ReLU
};

}  // namespace detail

Detector::Detector(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.anchor_ratios.empty()) throw ConfigError("model.anchor_ratios", "at least one anchor ratio required");
}

ModelWeights Detector::init_weights(std::uint64_t seed) const {
  KeyedRng rng(seed, 0, StreamRole::kInit);
  const int c0 = 3;
  const auto [c1, c2, c3] = cfg_.encoder_channels;
  const int a = cfg_.num_anchors_per_cell();
  const int pooled = c3 * cfg_.pool_size * cfg_.pool_size;
  const int ncls = cfg_.num_classes + 1;

  ModelWeights w;
  auto add = [&](std::string name, std::vector<int> shape, double stddev) {
    const int n = std::accumulate(shape.begin(), shape.end(), 1, std::multiplies<>());
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = stddev * rng.normal();
    w.arrays.push_back({std::move(name), std::move(shape), std::move(v)});
  };
  auto he = [](int fan_in) { return std::sqrt(2.0 / fan_in); };

  add("encoder.conv1.weight", {c1, c0 * 9}, he(c0 * 9));
  add("encoder.conv1.bias", {c1}, 0.0);
  add("encoder.conv2.weight", {c2, c1 * 9}, he(c1 * 9));
  add("encoder.conv2.bias", {c2}, 0.0);
  add("encoder.conv3.weight", {c3, c2 * 9}, he(c2 * 9));
  add("encoder.conv3.bias", {c3}, 0.0);
  add("rpn.conv.weight", {cfg_.rpn_channels, c3 * 9}, he(c3 * 9));
  add("rpn.conv.bias", {cfg_.rpn_channels}, 0.0);
  add("rpn.cls.weight", {a, cfg_.rpn_channels}, 0.01);
  add("rpn.cls.bias", {a}, 0.0);
  add("rpn.reg.weight", {4 * a, cfg_.rpn_channels}, 0.01);
  add("rpn.reg.bias", {4 * a}, 0.0);
  add("roi.fc.weight", {cfg_.roi_hidden, pooled}, he(pooled));
  add("roi.fc.bias", {cfg_.roi_hidden}, 0.0);
  add("roi.cls.weight", {ncls, cfg_.roi_hidden}, 0.01);
  add("roi.cls.bias", {ncls}, 0.0);
  add("roi.reg.weight", {4, cfg_.roi_hidden}, 0.001);
  add("roi.reg.bias", {4}, 0.0);
  add("embed.fc1.weight", {cfg_.embed_hidden, pooled}, he(pooled));
  add("embed.fc1.bias", {cfg_.embed_hidden}, 0.0);
  add("embed.fc2.weight", {cfg_.embed_dim, cfg_.embed_hidden}, std::sqrt(1.0 / cfg_.embed_hidden));
  add("embed.fc2.bias", {cfg_.embed_dim}, 0.0);
  return w;
}

std::vector<BoundingBox> Detector::anchors(int fw, int fh) const {
  std::vector<BoundingBox> out;
  out.reserve(static_cast<std::size_t>(fw) * fh * cfg_.anchor_ratios.size());
  const double s = ModelConfig::kStride;
  for (int i = 0; i < fh; ++i) {
    for (int j = 0; j < fw; ++j) {
      const double cx = (j + 0.5) * s, cy = (i + 0.5) * s;
      for (double r : cfg_.anchor_ratios) {
        const double w = cfg_.anchor_size / std::sqrt(r);
        const double h = cfg_.anchor_size * std::sqrt(r);
        out.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h, 0, 1.0});
      }
    }
  }
  return out;
}

Encoded Detector::encode(const ModelWeights& w, const Image& img) const {
  if (static_cast<int>(w.arrays.size()) != kNumParams) throw ShapeError("encode: unexpected weight layout");
  if (img.channels != 3) throw ShapeError("encode: expected a 3-channel image");
  if (img.empty() || img.width % ModelConfig::kStride || img.height % ModelConfig::kStride)
    throw ShapeError("encode: image dimensions must be positive multiples of the encoder stride");

  auto cache = std::make_shared<detail::EncoderCache>();
  auto& c = *cache;
  const auto [c1, c2, c3] = cfg_.encoder_channels;
  const int hw = img.width * img.height;

  Matrix x(3, hw);
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch)
      x(ch, p) = (img.data[static_cast<std::size_t>(p) * 3 + ch] - kImageMean[ch]) / kImageStd[ch];

  c.s1 = nn::conv_shape(3, img.height, img.width, c1, 3, 2, 1);
  c.a1 = nn::conv_forward(x, c.s1, P(w, kConv1W), P(w, kConv1B), c.cols1);
  nn::relu_inplace(c.a1);
  c.s2 = nn::conv_shape(c1, c.s1.out_height, c.s1.out_width, c2, 3, 2, 1);
  c.a2 = nn::conv_forward(c.a1, c.s2, P(w, kConv2W), P(w, kConv2B), c.cols2);
  nn::relu_inplace(c.a2);
  c.s3 = nn::conv_shape(c2, c.s2.out_height, c.s2.out_width, c3, 3, 2, 1);
  c.a3 = nn::conv_forward(c.a2, c.s3, P(w, kConv3W), P(w, kConv3B), c.cols3);
  nn::relu_inplace(c.a3);
  c.s4 = nn::conv_shape(c3, c.s3.out_height, c.s3.out_width, cfg_.rpn_channels, 3, 1, 1);
  c.a4 = nn::conv_forward(c.a3, c.s4, P(w, kRpnConvW), P(w, kRpnConvB), c.cols4);
  nn::relu_inplace(c.a4);

  const int fh = c.s3.out_height, fw = c.s3.out_width;
  const int a = cfg_.num_anchors_per_cell();
  c.s_cls = nn::conv_shape(cfg_.rpn_channels, fh, fw, a, 1, 1, 0);
  c.s_reg = nn::conv_shape(cfg_.rpn_channels, fh, fw, 4 * a, 1, 1, 0);
  Matrix unused;
  const Matrix cls_map = nn::conv_forward(c.a4, c.s_cls, P(w, kRpnClsW), P(w, kRpnClsB), unused);
  const Matrix reg_map = nn::conv_forward(c.a4, c.s_reg, P(w, kRpnRegW), P(w, kRpnRegB), unused);

  Encoded enc;
  enc.image_width = img.width;
  enc.image_height = img.height;
  enc.feat_width = fw;
  enc.feat_height = fh;
  const int cells = fw * fh;
  enc.rpn_cls.resize(static_cast<Eigen::Index>(cells) * a);
  enc.rpn_reg.resize(static_cast<Eigen::Index>(cells) * a, 4);
  for (int p = 0; p < cells; ++p) {
    for (int k = 0; k < a; ++k) {
      enc.rpn_cls[p * a + k] = cls_map(k, p);
      for (int d = 0; d < 4; ++d) enc.rpn_reg(p * a + k, d) = reg_map(k * 4 + d, p);
    }
  }
  enc.anchors = anchors(fw, fh);
  enc.cache = std::move(cache);
  return enc;
}

std::vector<BoundingBox> Detector::propose(const Encoded& enc) const {
  const int n = static_cast<int>(enc.rpn_cls.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int top = std::min(n, cfg_.pre_nms_top_k);
  std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](int a, int b) {
    const double sa = enc.rpn_cls[a], sb = enc.rpn_cls[b];
    return sa > sb || (sa == sb && a < b);
  });
  std::vector<BoundingBox> cand;
  cand.reserve(top);
  for (int i = 0; i < top; ++i) {
    const int idx = order[i];
    const double delta[4] = {enc.rpn_reg(idx, 0), enc.rpn_reg(idx, 1), enc.rpn_reg(idx, 2), enc.rpn_reg(idx, 3)};
    BoundingBox b = clip_box(decode_box(enc.anchors[idx], delta, kRpnDeltaStds), enc.image_width,
                             enc.image_height);
    if (b.width() < cfg_.min_proposal_size || b.height() < cfg_.min_proposal_size) continue;
    b.confidence = sigmoid(enc.rpn_cls[idx]);
    b.class_id = 0;
    cand.push_back(b);
  }
  const auto keep = nms(cand, cfg_.rpn_nms_iou, cfg_.post_nms_top_k);
  std::vector<BoundingBox> out;
  out.reserve(keep.size());
  for (int k : keep) out.push_back(cand[k]);
  return out;
}

RoiHeadOutputs Detector::roi_heads(const ModelWeights& w, const Encoded& enc,
                                   std::span<const BoundingBox> rois) const {
  const auto& feat = enc.cache->a3;
  const int k = static_cast<int>(rois.size());
  const int bins = cfg_.pool_size * cfg_.pool_size;
  const int pooled_dim = static_cast<int>(feat.rows()) * bins;

  auto cache = std::make_shared<detail::RoiCache>();
  auto& c = *cache;
  c.plans.reserve(k);
  c.pooled.resize(k, pooled_dim);
  for (int i = 0; i < k; ++i) {
    c.plans.push_back(nn::plan_roi_sampling(rois[i], enc.feat_width, enc.feat_height,
                                            ModelConfig::kStride, cfg_.pool_size));
    nn::roi_pool_forward(feat, c.plans.back(), c.pooled.row(i).data());
  }

  RoiHeadOutputs out;
  out.rois.assign(rois.begin(), rois.end());
  const auto fc = fc_weight(w, kRoiFcW);
  const auto fcb = Eigen::Map<const Vector>(P(w, kRoiFcB), fc.rows());
  c.hidden = c.pooled * fc.transpose();
  c.hidden.rowwise() += fcb.transpose();
  nn::relu_inplace(c.hidden);

  const auto wc = fc_weight(w, kRoiClsW);
  out.cls = c.hidden * wc.transpose();
  out.cls.rowwise() += Eigen::Map<const Vector>(P(w, kRoiClsB), wc.rows()).transpose();
  const auto wr = fc_weight(w, kRoiRegW);
  out.reg = c.hidden * wr.transpose();
  out.reg.rowwise() += Eigen::Map<const Vector>(P(w, kRoiRegB), wr.rows()).transpose();

  const auto e1 = fc_weight(w, kEmbFc1W);
  Matrix pre = c.pooled * e1.transpose();
  pre.rowwise() += Eigen::Map<const Vector>(P(w, kEmbFc1B), e1.rows()).transpose();
  c.emb_norm.resize(k, pre.cols());
  c.emb_inv_std.resize(k);
  for (int i = 0; i < k; ++i) {
    const double mu = pre.row(i).mean();
    const double var = (pre.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.emb_inv_std[i] = inv;
    c.emb_norm.row(i) = (pre.row(i).array() - mu) * inv;
  }
  c.emb_act = c.emb_norm.cwiseMax(0.0);
  const auto e2 = fc_weight(w, kEmbFc2W);
  out.embeddings = c.emb_act * e2.transpose();
  out.embeddings.rowwise() += Eigen::Map<const Vector>(P(w, kEmbFc2B), e2.rows()).transpose();

  out.cache = std::move(cache);
  return out;
}

void Detector::backward(const ModelWeights& w, const Encoded& enc, const RoiHeadOutputs* roi,
                        const OutputGrads& up, ModelWeights& grads) const {
  if (!grads.same_structure(w)) throw ShapeError("backward: gradient layout differs from weights");
  const auto& c = *enc.cache;
  Matrix d_feat = Matrix::Zero(c.a3.rows(), c.a3.cols());

  if (roi && roi->cache && !roi->rois.empty()) {
    const auto& rc = *roi->cache;
    const int k = static_cast<int>(roi->rois.size());
    Matrix d_pooled = Matrix::Zero(k, rc.pooled.cols());

    if (up.roi_cls.size() || up.roi_reg.size()) {
      Matrix d_hidden = Matrix::Zero(k, rc.hidden.cols());
      if (up.roi_cls.size()) {
        if (up.roi_cls.rows() != k) throw ShapeError("backward: roi_cls gradient rows");
        fc_grad(grads, kRoiClsW).noalias() += up.roi_cls.transpose() * rc.hidden;
        Eigen::Map<Vector>(G(grads, kRoiClsB), up.roi_cls.cols()) += up.roi_cls.colwise().sum().transpose();
        d_hidden.noalias() += up.roi_cls * fc_weight(w, kRoiClsW);
      }
      if (up.roi_reg.size()) {
        if (up.roi_reg.rows() != k) throw ShapeError("backward: roi_reg gradient rows");
        fc_grad(grads, kRoiRegW).noalias() += up.roi_reg.transpose() * rc.hidden;
        Eigen::Map<Vector>(G(grads, kRoiRegB), 4) += up.roi_reg.colwise().sum().transpose();
        d_hidden.noalias() += up.roi_reg * fc_weight(w, kRoiRegW);
      }
      nn::relu_backward(rc.hidden, d_hidden);
      fc_grad(grads, kRoiFcW).noalias() += d_hidden.transpose() * rc.pooled;
      Eigen::Map<Vector>(G(grads, kRoiFcB), d_hidden.cols()) += d_hidden.colwise().sum().transpose();
      d_pooled.noalias() += d_hidden * fc_weight(w, kRoiFcW);
    }

    if (up.embeddings.size()) {
      if (up.embeddings.rows() != k) throw ShapeError("backward: embedding gradient rows");
      fc_grad(grads, kEmbFc2W).noalias() += up.embeddings.transpose() * rc.emb_act;
      Eigen::Map<Vector>(G(grads, kEmbFc2B), up.embeddings.cols()) +=
          up.embeddings.colwise().sum().transpose();
      Matrix d_norm = up.embeddings * fc_weight(w, kEmbFc2W);
      nn::relu_backward(rc.emb_norm, d_norm);
      Matrix d_pre(k, d_norm.cols());
      for (int i = 0; i < k; ++i) {
        const double mean_d = d_norm.row(i).mean();
        const double mean_dn = (d_norm.row(i).array() * rc.emb_norm.row(i).array()).mean();
        d_pre.row(i) = rc.emb_inv_std[i] *
                       (d_norm.row(i).array() - mean_d - rc.emb_norm.row(i).array() * mean_dn);
      }
      fc_grad(grads, kEmbFc1W).noalias() += d_pre.transpose() * rc.pooled;
      Eigen::Map<Vector>(G(grads, kEmbFc1B), d_pre.cols()) += d_pre.colwise().sum().transpose();
      d_pooled.noalias() += d_pre * fc_weight(w, kEmbFc1W);
    }

    for (int i = 0; i < k; ++i) nn::roi_pool_backward(d_pooled.row(i).data(), rc.plans[i], d_feat);
  }

  const int a = cfg_.num_anchors_per_cell();
  const int cells = enc.feat_width * enc.feat_height;
  if (up.rpn_cls.size() || up.rpn_reg.size()) {
    Matrix d_a4 = Matrix::Zero(c.a4.rows(), c.a4.cols());
    if (up.rpn_cls.size()) {
      if (up.rpn_cls.size() != static_cast<Eigen::Index>(cells) * a) throw ShapeError("backward: rpn_cls gradient size");
      Matrix d_map(a, cells);
      for (int p = 0; p < cells; ++p)
        for (int k = 0; k < a; ++k) d_map(k, p) = up.rpn_cls[p * a + k];
      Matrix d_in;
      nn::conv_backward(d_map, c.a4, c.s_cls, P(w, kRpnClsW), G(grads, kRpnClsW), G(grads, kRpnClsB), &d_in);
      d_a4 += d_in;
    }
    if (up.rpn_reg.size()) {
      if (up.rpn_reg.rows() != static_cast<Eigen::Index>(cells) * a) throw ShapeError("backward: rpn_reg gradient size");
      Matrix d_map(4 * a, cells);
      for (int p = 0; p < cells; ++p)
        for (int k = 0; k < a; ++k)
          for (int d = 0; d < 4; ++d) d_map(k * 4 + d, p) = up.rpn_reg(p * a + k, d);
      Matrix d_in;
      nn::conv_backward(d_map, c.a4, c.s_reg, P(w, kRpnRegW), G(grads, kRpnRegW), G(grads, kRpnRegB), &d_in);
      d_a4 += d_in;
    }
    nn::relu_backward(c.a4, d_a4);
    Matrix d_a3;
    nn::conv_backward(d_a4, c.cols4, c.s4, P(w, kRpnConvW), G(grads, kRpnConvW), G(grads, kRpnConvB), &d_a3);
    d_feat += d_a3;
  }

  nn::relu_backward(c.a3, d_feat);
  Matrix d_a2;
  nn::conv_backward(d_feat, c.cols3, c.s3, P(w, kConv3W), G(grads, kConv3W), G(grads, kConv3B), &d_a2);
  nn::relu_backward(c.a2, d_a2);
  Matrix d_a1;
  nn::conv_backward(d_a2, c.cols2, c.s2, P(w, kConv2W), G(grads, kConv2W), G(grads, kConv2B), &d_a1);
  nn::relu_backward(c.a1, d_a1);
  nn::conv_backward(d_a1, c.cols1, c.s1, P(w, kConv1W), G(grads, kConv1W), G(grads, kConv1B), nullptr);
}

DetectorOutputs Detector::forward(const ModelWeights& w, const Image& img,
                                  std::optional<std::span<const BoundingBox>> rois) const {
  const Encoded enc = encode(w, img);
  std::vector<BoundingBox> boxes = rois ? std::vector<BoundingBox>(rois->begin(), rois->end())
                                        : propose(enc);
  const RoiHeadOutputs heads = roi_heads(w, enc, boxes);
  DetectorOutputs out;
  out.rpn_cls = enc.rpn_cls;
  out.rpn_reg = enc.rpn_reg;
  out.roi_cls = heads.cls;
  out.roi_reg = heads.reg;
  out.embeddings = heads.embeddings;
  out.proposals = std::move(boxes);
  return out;
}

std::vector<Detection> Detector::postprocess(const RoiHeadOutputs& heads, const Encoded& enc,
                                             const DetectConfig& cfg) const {
  const int k = static_cast<int>(heads.rois.size());
  const int ncls = cfg_.num_classes;
  std::vector<std::vector<Detection>> per_class(ncls + 1);
  for (int i = 0; i < k; ++i) {
    const auto row = heads.cls.row(i);
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp();
    const double z = e.sum();
    const double delta[4] = {heads.reg(i, 0), heads.reg(i, 1), heads.reg(i, 2), heads.reg(i, 3)};
    const BoundingBox box = clip_box(decode_box(heads.rois[i], delta, kRoiDeltaStds),
                                     enc.image_width, enc.image_height);
    if (box.degenerate()) continue;
    int best = 1;
    for (int cls = 2; cls <= ncls; ++cls)
      if (e[cls] > e[best]) best = cls;
    for (int cls = 1; cls <= ncls; ++cls) {
      if (cfg.single_label && cls != best) continue;
      const double score = e[cls] / z;
      if (score > cfg.score_thr) {
        Detection d = box;
        d.class_id = cls;
        d.confidence = score;
        per_class[cls].push_back(d);
      }
    }
  }
  std::vector<Detection> out;
  for (int cls = 1; cls <= ncls; ++cls) {
    for (int idx : nms(per_class[cls], cfg.nms_iou)) out.push_back(per_class[cls][idx]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  if (cfg.max_detections > 0 && static_cast<int>(out.size()) > cfg.max_detections)
    out.resize(cfg.max_detections);
  return out;
}

std::vector<Detection> Detector::detect(const ModelWeights& w, const Image& img,
                                        const DetectConfig& cfg) const {
  const Encoded enc = encode(w, img);
  const auto props = propose(enc);
  return postprocess(roi_heads(w, enc, props), enc, cfg);
}

EmbeddedDetections Detector::detect_with_embeddings(const ModelWeights& w, const Image& img,
                                                    const DetectConfig& cfg) const {
  const Encoded enc = encode(w, img);
  const auto props = propose(enc);
  EmbeddedDetections out;
  out.detections = postprocess(roi_heads(w, enc, props), enc, cfg);
  out.embeddings = roi_heads(w, enc, out.detections).embeddings;
  return out;
}

}  // namespace darthkit
