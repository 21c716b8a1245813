#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "darthkit/matching.hpp"
#include "darthkit/rng.hpp"
#include "darthkit/tensor.hpp"

namespace darthkit {

/// Loss weights for embed, aux, dc_rpn, dc_roi.
struct LossWeights {
  double embed = 0.25;
  double aux = 1.0;
  double dc_rpn = 1.0;
  double dc_roi = 1.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossParts {
  double embed = 0.0;
  double aux = 0.0;
  double dc_rpn = 0.0;
  double dc_roi = 0.0;
};

struct LossBreakdown {
  double embed = 0.0;
  double aux = 0.0;
  double dc_rpn = 0.0;
  double dc_roi = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct SampledPair {
  int i = 0;  // student row
  int j = 0;  // contrastive row
  bool positive = false;

  friend bool operator==(const SampledPair&, const SampledPair&) = default;
};

// Every loss optionally writes the gradient with respect to its student-side
// inputs. Gradient outputs are overwritten, not accumulated.

/// Mean over anchors of log(1 + sum_{k+} sum_{k-} exp(v.k- - v.k+)).
/// Throws Error if an anchor row has no positive.
double pcl_embed(const Matrix& v, const Matrix& k, const PairLabels& labels,
                 Matrix* grad_v = nullptr, Matrix* grad_k = nullptr);

/// Multi-positive softmax cross-entropy form; reference only.
double pcl_embed_multi(const Matrix& v, const Matrix& k, const PairLabels& labels);

/// All positive pairs plus up to `neg_per_pos` times as many negatives drawn
/// uniformly without replacement.
std::vector<SampledPair> sample_aux_pairs(const PairLabels& labels, KeyedRng& rng,
                                          int neg_per_pos = 3);

/// Mean over pairs of (cos(v_i, k_j) - [positive])^2. Throws NumericError
/// for a zero-norm embedding.
double pcl_aux(const Matrix& v, const Matrix& k, const std::vector<SampledPair>& pairs,
               Matrix* grad_v = nullptr, Matrix* grad_k = nullptr);

/// (1/N) sum [(s_t - s_s)^2 + [s_t > s_s + eps] |r_t - r_s|^2].
double dc_rpn(const Vector& s_t, const Matrix& r_t, const Vector& s_s, const Matrix& r_s,
              double epsilon, Vector* grad_s = nullptr, Matrix* grad_r = nullptr);

/// (1/(K*C)) sum [|p~_t - p~_s|^2 + |t_t - t_s|^2], p~ = per-row zero-mean logits.
double dc_roi(const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s,
              Matrix* grad_p = nullptr, Matrix* grad_t = nullptr);

/// dc_roi on per-row softmax probabilities of the class logits; grad_p is
/// taken with respect to the student logits.
double dc_roi_softmax(const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s,
                      Matrix* grad_p = nullptr, Matrix* grad_t = nullptr);

/// Weighted sum. Throws NumericError naming the first non-finite component.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights = {});

/// One JSON object (no trailing newline) for the loss log.
std::string loss_log_line(std::int64_t step, const LossBreakdown& b);

}  // namespace darthkit
