#include "darthkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "darthkit/errors.hpp"

namespace darthkit {

namespace {

void check_pcl_shapes(const Matrix& v, const Matrix& k, const PairLabels& labels) {
  if (v.cols() != k.cols() && v.rows() > 0 && k.rows() > 0)
    throw ShapeError("pcl: embedding widths differ");
  if (labels.rows() != v.rows() || labels.cols() != k.rows())
    throw ShapeError("pcl: pair labels do not match embedding counts");
}

}  // namespace

double pcl_embed(const Matrix& v, const Matrix& k, const PairLabels& labels, Matrix* grad_v,
                 Matrix* grad_k) {
  check_pcl_shapes(v, k, labels);
  if (grad_v) grad_v->setZero(v.rows(), v.cols());
  if (grad_k) grad_k->setZero(k.rows(), k.cols());
  const Eigen::Index n_anchor = v.rows();
  if (n_anchor == 0) return 0.0;

  const Matrix dots = v * k.transpose();
  double total = 0.0;
  std::vector<Eigen::Index> pos, neg;
  std::vector<double> x;
  for (Eigen::Index i = 0; i < n_anchor; ++i) {
    pos.clear();
    neg.clear();
    for (Eigen::Index j = 0; j < k.rows(); ++j) (labels(i, j) ? pos : neg).push_back(j);
    if (pos.empty()) throw Error("pcl_embed: anchor " + std::to_string(i) + " has no positive target");
    if (neg.empty()) continue;

    // logsumexp over {0} U {v.k- - v.k+}.
    x.resize(pos.size() * neg.size());
    double m = 0.0;
    for (std::size_t a = 0; a < pos.size(); ++a)
      for (std::size_t b = 0; b < neg.size(); ++b) {
        x[a * neg.size() + b] = dots(i, neg[b]) - dots(i, pos[a]);
        m = std::max(m, x[a * neg.size() + b]);
      }
    double z = std::exp(-m);
    for (double xi : x) z += std::exp(xi - m);
    const double lse = m + std::log(z);
    total += lse;

    if (grad_v || grad_k) {
      const double scale = 1.0 / static_cast<double>(n_anchor);
      for (std::size_t a = 0; a < pos.size(); ++a)
        for (std::size_t b = 0; b < neg.size(); ++b) {
          const double w = std::exp(x[a * neg.size() + b] - lse) * scale;
          if (grad_v) grad_v->row(i) += w * (k.row(neg[b]) - k.row(pos[a]));
          if (grad_k) {
            grad_k->row(neg[b]) += w * v.row(i);
            grad_k->row(pos[a]) -= w * v.row(i);
          }
        }
    }
  }
  return total / static_cast<double>(n_anchor);
}

double pcl_embed_multi(const Matrix& v, const Matrix& k, const PairLabels& labels) {
  check_pcl_shapes(v, k, labels);
  if (v.rows() == 0) return 0.0;
  const Matrix dots = v * k.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    std::vector<double> negs;
    bool any_pos = false;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      if (labels(i, j)) any_pos = true;
      else negs.push_back(dots(i, j));
    }
    if (!any_pos) throw Error("pcl_embed_multi: anchor " + std::to_string(i) + " has no positive target");
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      if (!labels(i, j)) continue;
      const double sp = dots(i, j);
      double m = sp;
      for (double sn : negs) m = std::max(m, sn);
      double z = std::exp(sp - m);
      for (double sn : negs) z += std::exp(sn - m);
      total -= sp - (m + std::log(z));
    }
  }
  return total / static_cast<double>(v.rows());
}

std::vector<SampledPair> sample_aux_pairs(const PairLabels& labels, KeyedRng& rng, int neg_per_pos) {
  std::vector<SampledPair> pos, neg;
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    for (Eigen::Index j = 0; j < labels.cols(); ++j)
      (labels(i, j) ? pos : neg).push_back({static_cast<int>(i), static_cast<int>(j), labels(i, j)});
  const std::size_t want = std::min(neg.size(), pos.size() * static_cast<std::size_t>(std::max(neg_per_pos, 0)));
  for (std::size_t a = 0; a < want; ++a) std::swap(neg[a], neg[a + rng.below(neg.size() - a)]);
  neg.resize(want);
  std::sort(neg.begin(), neg.end(), [](const SampledPair& a, const SampledPair& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

double pcl_aux(const Matrix& v, const Matrix& k, const std::vector<SampledPair>& pairs,
               Matrix* grad_v, Matrix* grad_k) {
  if (grad_v) grad_v->setZero(v.rows(), v.cols());
  if (grad_k) grad_k->setZero(k.rows(), k.cols());
  if (pairs.empty()) return 0.0;
  if (v.cols() != k.cols()) throw ShapeError("pcl_aux: embedding widths differ");
  const double scale = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.i < 0 || p.i >= v.rows() || p.j < 0 || p.j >= k.rows())
      throw ShapeError("pcl_aux: pair index out of range");
    const auto vi = v.row(p.i);
    const auto kj = k.row(p.j);
    const double nv = vi.norm(), nk = kj.norm();
    if (!(nv > 0.0) || !(nk > 0.0)) throw NumericError("pcl_aux: zero-norm embedding");
    const double c = vi.dot(kj) / (nv * nk);
    const double r = c - (p.positive ? 1.0 : 0.0);
    total += r * r;
    const double g = 2.0 * r * scale;
    if (grad_v) grad_v->row(p.i) += g * (kj / (nv * nk) - c * vi / (nv * nv));
    if (grad_k) grad_k->row(p.j) += g * (vi / (nv * nk) - c * kj / (nk * nk));
  }
  return total * scale;
}

double dc_rpn(const Vector& s_t, const Matrix& r_t, const Vector& s_s, const Matrix& r_s,
              double epsilon, Vector* grad_s, Matrix* grad_r) {
  const Eigen::Index n = s_t.size();
  if (s_s.size() != n || r_t.rows() != n || r_s.rows() != n || r_t.cols() != r_s.cols())
    throw ShapeError("dc_rpn: teacher and student shapes differ");
  if (grad_s) grad_s->setZero(n);
  if (grad_r) grad_r->setZero(n, r_s.cols());
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const double ds = s_t[a] - s_s[a];
    total += ds * ds;
    if (grad_s) (*grad_s)[a] = -2.0 * ds * inv_n;
    if (s_t[a] > s_s[a] + epsilon) {
      const auto dr = r_t.row(a) - r_s.row(a);
      total += dr.squaredNorm();
      if (grad_r) grad_r->row(a) = -2.0 * dr * inv_n;
    }
  }
  return total * inv_n;
}

double dc_roi(const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s,
              Matrix* grad_p, Matrix* grad_t) {
  const Eigen::Index k = p_t.rows(), c = p_t.cols();
  if (p_s.rows() != k || p_s.cols() != c || t_t.rows() != k || t_s.rows() != k ||
      t_t.cols() != t_s.cols())
    throw ShapeError("dc_roi: teacher and student shapes differ");
  if (grad_p) grad_p->setZero(k, c);
  if (grad_t) grad_t->setZero(k, t_s.cols());
  if (k == 0 || c == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(k * c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::RowVectorXd pt = p_t.row(i).array() - p_t.row(i).mean();
    const Eigen::RowVectorXd ps = p_s.row(i).array() - p_s.row(i).mean();
    const Eigen::RowVectorXd dp = ps - pt;  // zero-mean, so centering passes it through unchanged
    const Eigen::RowVectorXd dt = t_s.row(i) - t_t.row(i);
    total += dp.squaredNorm() + dt.squaredNorm();
    if (grad_p) grad_p->row(i) = 2.0 * inv * dp;
    if (grad_t) grad_t->row(i) = 2.0 * inv * dt;
  }
  return total * inv;
}

namespace {

Matrix softmax_rows(const Matrix& x) {
  Matrix p(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

}  // namespace

double dc_roi_softmax(const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s,
                      Matrix* grad_p, Matrix* grad_t) {
  if (p_s.rows() != p_t.rows() || p_s.cols() != p_t.cols()) throw ShapeError("dc_roi: teacher and student shapes differ");
  const Matrix q_s = softmax_rows(p_s);
  Matrix g;
  const double loss = dc_roi(softmax_rows(p_t), t_t, q_s, t_s, grad_p ? &g : nullptr, grad_t);
  if (grad_p) {
    // Softmax Jacobian per row: q * (g - <g, q>).
    const Vector dot = g.cwiseProduct(q_s).rowwise().sum();
    *grad_p = q_s.cwiseProduct(g - dot.replicate(1, g.cols()));
  }
  return loss;
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {
      {"embed", parts.embed}, {"aux", parts.aux}, {"dc_rpn", parts.dc_rpn}, {"dc_roi", parts.dc_roi}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite loss component: ") + name);
  LossBreakdown b;
  b.embed = parts.embed;
  b.aux = parts.aux;
  b.dc_rpn = parts.dc_rpn;
  b.dc_roi = parts.dc_roi;
  b.weights = w;
  b.total = w.embed * parts.embed + w.aux * parts.aux + w.dc_rpn * parts.dc_rpn + w.dc_roi * parts.dc_roi;
  return b;
}

std::string loss_log_line(std::int64_t step, const LossBreakdown& b) {
  nlohmann::ordered_json j{{"step", step},     {"embed", b.embed},   {"aux", b.aux},
                           {"dc_rpn", b.dc_rpn}, {"dc_roi", b.dc_roi}, {"total", b.total}};
  return j.dump();
}

}  // namespace darthkit
