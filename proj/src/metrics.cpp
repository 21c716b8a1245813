#include "darthkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "darthkit/assignment.hpp"

namespace darthkit {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<const TrackRow*> frame_rows(const SequenceTracks& s, int frame, int class_id) {
  std::vector<const TrackRow*> out;
  auto it = std::lower_bound(s.rows.begin(), s.rows.end(), frame,
                             [](const TrackRow& r, int f) { return r.frame < f; });
  for (; it != s.rows.end() && it->frame == frame; ++it)
    if (class_id == 0 || it->box.class_id == class_id) out.push_back(&*it);
  return out;
}

std::vector<TrackRow> sorted_rows(const SequenceTracks& s) {
  std::vector<TrackRow> rows = s.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.track_id < b.track_id;
  });
  return rows;
}

}  // namespace

double hota_alpha(int index) noexcept { return 0.05 * (index + 1); }

SequenceData prepare_sequence(const SequenceTracks& gt_in, const SequenceTracks& pred_in, int class_id) {
  SequenceTracks gt = gt_in, pred = pred_in;
  gt.rows = sorted_rows(gt_in);
  pred.rows = sorted_rows(pred_in);
  int num_frames = std::max(gt.num_frames, pred.num_frames);
  for (const auto& r : gt.rows) num_frames = std::max(num_frames, r.frame);
  for (const auto& r : pred.rows) num_frames = std::max(num_frames, r.frame);

  struct Raw {
    std::vector<int> gt_ids, pred_ids;
    std::vector<BoundingBox> gt_boxes, pred_boxes;
  };
  std::vector<Raw> raw(static_cast<std::size_t>(num_frames));
  std::set<int> gt_set, pred_set;
  for (int f = 1; f <= num_frames; ++f) {
    const auto g = frame_rows(gt, f, class_id);
    const auto p = frame_rows(pred, f, class_id);
    // Predictions overlapping an ignore region are dropped with it.
    std::vector<char> drop(p.size(), 0);
    const bool has_ignore = std::any_of(g.begin(), g.end(), [](const TrackRow* r) { return r->box.confidence == 0.0; });
    if (has_ignore && !p.empty()) {
      Matrix sim(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(p.size()));
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) {
          const double v = iou(g[i]->box, p[j]->box);
          sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v >= 0.5 - kEps ? v : 0.0;
        }
      const auto m = hungarian_max(sim, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (m[i] >= 0 && g[i]->box.confidence == 0.0) drop[m[i]] = 1;
    }
    Raw& r = raw[static_cast<std::size_t>(f - 1)];
    for (const auto* row : g) {
      if (row->box.confidence == 0.0) continue;
      r.gt_ids.push_back(row->track_id);
      r.gt_boxes.push_back(row->box);
      gt_set.insert(row->track_id);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (drop[j]) continue;
      r.pred_ids.push_back(p[j]->track_id);
      r.pred_boxes.push_back(p[j]->box);
      pred_set.insert(p[j]->track_id);
    }
  }

  std::map<int, int> gt_map, pred_map;
  for (int id : gt_set) gt_map.emplace(id, static_cast<int>(gt_map.size()));
  for (int id : pred_set) pred_map.emplace(id, static_cast<int>(pred_map.size()));
  SequenceData d;
  d.num_gt_ids = static_cast<int>(gt_map.size());
  d.num_pred_ids = static_cast<int>(pred_map.size());
  d.frames.resize(raw.size());
  for (std::size_t f = 0; f < raw.size(); ++f) {
    FrameData& fd = d.frames[f];
    for (int id : raw[f].gt_ids) fd.gt_ids.push_back(gt_map.at(id));
    for (int id : raw[f].pred_ids) fd.pred_ids.push_back(pred_map.at(id));
    fd.similarity.resize(static_cast<Eigen::Index>(fd.gt_ids.size()), static_cast<Eigen::Index>(fd.pred_ids.size()));
    for (std::size_t i = 0; i < fd.gt_ids.size(); ++i)
      for (std::size_t j = 0; j < fd.pred_ids.size(); ++j)
        fd.similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            iou(raw[f].gt_boxes[i], raw[f].pred_boxes[j]);
  }
  return d;
}

ClearCounts clear_counts(const SequenceData& d, double thr) {
  ClearCounts c;
  std::vector<int> prev_tracker(d.num_gt_ids, -1);    // last ever matched
  std::vector<int> prev_timestep(d.num_gt_ids, -1);   // matched in the previous evaluated step
  for (const auto& fd : d.frames) {
    const auto ng = static_cast<Eigen::Index>(fd.gt_ids.size());
    const auto np = static_cast<Eigen::Index>(fd.pred_ids.size());
    if (ng == 0) {
      c.fp += np;
      continue;
    }
    if (np == 0) {
      c.fn += ng;
      continue;
    }
    Matrix score(ng, np);
    for (Eigen::Index i = 0; i < ng; ++i)
      for (Eigen::Index j = 0; j < np; ++j) {
        const double sim = fd.similarity(i, j);
        const bool continued = prev_timestep[fd.gt_ids[i]] == fd.pred_ids[j];
        score(i, j) = sim < thr - kEps ? 0.0 : 1000.0 * continued + sim;
      }
    const auto m = hungarian_max(score, 0.0);
    std::int64_t matches = 0;
    std::vector<int> next_timestep(d.num_gt_ids, -1);
    for (Eigen::Index i = 0; i < ng; ++i) {
      if (m[i] < 0) continue;
      const int g = fd.gt_ids[i];
      const int p = fd.pred_ids[m[i]];
      if (prev_tracker[g] >= 0 && prev_tracker[g] != p) ++c.idsw;
      if (prev_timestep[g] < 0) ++c.frag;
      prev_tracker[g] = p;
      next_timestep[g] = p;
      c.motp_sum += fd.similarity(i, m[i]);
      ++matches;
    }
    prev_timestep = std::move(next_timestep);
    c.tp += matches;
    c.fn += ng - matches;
    c.fp += np - matches;
  }
  return c;
}

IdentityCounts identity_counts(const SequenceData& d, double thr) {
  IdentityCounts c;
  Matrix potential = Matrix::Zero(d.num_gt_ids, d.num_pred_ids);
  double gt_total = 0.0, pred_total = 0.0;
  for (const auto& fd : d.frames) {
    gt_total += static_cast<double>(fd.gt_ids.size());
    pred_total += static_cast<double>(fd.pred_ids.size());
    for (std::size_t i = 0; i < fd.gt_ids.size(); ++i)
      for (std::size_t j = 0; j < fd.pred_ids.size(); ++j)
        if (fd.similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= thr - kEps)
          potential(fd.gt_ids[i], fd.pred_ids[j]) += 1.0;
  }
  double idtp = 0.0;
  if (d.num_gt_ids > 0 && d.num_pred_ids > 0) {
    const auto m = hungarian_max(potential, 0.0);
    for (int i = 0; i < d.num_gt_ids; ++i)
      if (m[i] >= 0) idtp += potential(i, m[i]);
  }
  c.idtp = idtp;
  c.idfn = gt_total - idtp;
  c.idfp = pred_total - idtp;
  return c;
}

HotaCounts hota_counts(const SequenceData& d) {
  HotaCounts c;
  const int ng = d.num_gt_ids, np = d.num_pred_ids;
  Matrix potential = Matrix::Zero(ng, np);
  Vector gt_count = Vector::Zero(ng), pred_count = Vector::Zero(np);
  for (const auto& fd : d.frames) {
    const Matrix& sim = fd.similarity;
    if (sim.size() > 0) {
      const Eigen::RowVectorXd col_sum = sim.colwise().sum();
      const Eigen::VectorXd row_sum = sim.rowwise().sum();
      for (Eigen::Index i = 0; i < sim.rows(); ++i)
        for (Eigen::Index j = 0; j < sim.cols(); ++j) {
          const double denom = col_sum[j] + row_sum[i] - sim(i, j);
          potential(fd.gt_ids[i], fd.pred_ids[j]) += denom > kEps ? sim(i, j) / denom : 0.0;
        }
    }
    for (int g : fd.gt_ids) gt_count[g] += 1.0;
    for (int p : fd.pred_ids) pred_count[p] += 1.0;
  }
  Matrix global(ng, np);
  for (int i = 0; i < ng; ++i)
    for (int j = 0; j < np; ++j) global(i, j) = potential(i, j) / (gt_count[i] + pred_count[j] - potential(i, j));

  std::vector<Matrix> match_counts(kNumHotaAlphas, Matrix::Zero(ng, np));
  for (const auto& fd : d.frames) {
    const auto n_g = static_cast<Eigen::Index>(fd.gt_ids.size());
    const auto n_p = static_cast<Eigen::Index>(fd.pred_ids.size());
    if (n_g == 0 || n_p == 0) {
      for (int a = 0; a < kNumHotaAlphas; ++a) {
        c.fp[a] += static_cast<double>(n_p);
        c.fn[a] += static_cast<double>(n_g);
      }
      continue;
    }
    Matrix score(n_g, n_p);
    for (Eigen::Index i = 0; i < n_g; ++i)
      for (Eigen::Index j = 0; j < n_p; ++j)
        score(i, j) = global(fd.gt_ids[i], fd.pred_ids[j]) * fd.similarity(i, j);
    const auto m = hungarian_min(-score);
    for (int a = 0; a < kNumHotaAlphas; ++a) {
      const double alpha = hota_alpha(a);
      double matches = 0.0;
      for (Eigen::Index i = 0; i < n_g; ++i) {
        if (m[i] < 0) continue;
        const double s = fd.similarity(i, m[i]);
        if (s < alpha - kEps) continue;
        matches += 1.0;
        c.loca_sum[a] += s;
        match_counts[a](fd.gt_ids[i], fd.pred_ids[m[i]]) += 1.0;
      }
      c.tp[a] += matches;
      c.fn[a] += static_cast<double>(n_g) - matches;
      c.fp[a] += static_cast<double>(n_p) - matches;
    }
  }
  for (int a = 0; a < kNumHotaAlphas; ++a) {
    double acc = 0.0;
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < np; ++j) {
        const double mc = match_counts[a](i, j);
        if (mc == 0.0) continue;
        acc += mc * mc / std::max(1.0, gt_count[i] + pred_count[j] - mc);
      }
    // Summed over matches, so AssA = assa_tp / TP even after pooling.
    c.assa_tp[a] = acc;
  }
  return c;
}

void MetricCounts::add(const MetricCounts& o) {
  clear.tp += o.clear.tp;
  clear.fp += o.clear.fp;
  clear.fn += o.clear.fn;
  clear.idsw += o.clear.idsw;
  clear.frag += o.clear.frag;
  clear.motp_sum += o.clear.motp_sum;
  identity.idtp += o.identity.idtp;
  identity.idfp += o.identity.idfp;
  identity.idfn += o.identity.idfn;
  for (int a = 0; a < kNumHotaAlphas; ++a) {
    hota.tp[a] += o.hota.tp[a];
    hota.fn[a] += o.hota.fn[a];
    hota.fp[a] += o.hota.fp[a];
    hota.assa_tp[a] += o.hota.assa_tp[a];
    hota.loca_sum[a] += o.hota.loca_sum[a];
  }
}

MetricCounts evaluate_counts(const SequenceData& d) {
  MetricCounts c;
  c.clear = clear_counts(d);
  c.identity = identity_counts(d);
  c.hota = hota_counts(d);
  return c;
}

MetricValues finalize(const MetricCounts& c) {
  MetricValues v;
  v.tp = c.clear.tp;
  v.fp = c.clear.fp;
  v.fn = c.clear.fn;
  v.idsw = c.clear.idsw;
  const auto num_gt = c.clear.tp + c.clear.fn;
  if (num_gt == 0) {
    v.defined = false;
    v.deta = v.mota = v.hota = v.idf1 = v.assa = kNaN;
    return v;
  }
  v.mota = static_cast<double>(c.clear.tp - c.clear.fp - c.clear.idsw) / static_cast<double>(num_gt);
  const auto& id = c.identity;
  v.idf1 = id.idtp / std::max(1.0, id.idtp + 0.5 * id.idfp + 0.5 * id.idfn);
  double deta = 0.0, assa = 0.0, hota_sum = 0.0;
  for (int a = 0; a < kNumHotaAlphas; ++a) {
    const auto& h = c.hota;
    const double det_a = h.tp[a] / std::max(1.0, h.tp[a] + h.fn[a] + h.fp[a]);
    const double ass_a = h.assa_tp[a] / std::max(1.0, h.tp[a]);
    deta += det_a;
    assa += ass_a;
    hota_sum += std::sqrt(det_a * ass_a);
  }
  v.deta = deta / kNumHotaAlphas;
  v.assa = assa / kNumHotaAlphas;
  v.hota = hota_sum / kNumHotaAlphas;
  return v;
}

ClearResult clear_mot(const SequenceTracks& gt, const SequenceTracks& pred, double iou_thr) {
  const auto c = clear_counts(prepare_sequence(gt, pred), iou_thr);
  ClearResult r;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.idsw = c.idsw;
  const auto num_gt = c.tp + c.fn;
  r.defined = num_gt > 0;
  r.mota = r.defined ? static_cast<double>(c.tp - c.fp - c.idsw) / static_cast<double>(num_gt) : kNaN;
  return r;
}

double idf1(const SequenceTracks& gt, const SequenceTracks& pred, double iou_thr) {
  const auto d = prepare_sequence(gt, pred);
  const auto c = identity_counts(d, iou_thr);
  if (c.idtp + c.idfn == 0.0) return kNaN;
  return c.idtp / std::max(1.0, c.idtp + 0.5 * c.idfp + 0.5 * c.idfn);
}

HotaResult hota(const SequenceTracks& gt, const SequenceTracks& pred) {
  MetricCounts c;
  const auto d = prepare_sequence(gt, pred);
  c.clear = clear_counts(d);
  c.hota = hota_counts(d);
  const auto v = finalize(c);
  return {v.hota, v.deta, v.assa, v.defined};
}

MetricValues aggregate(const std::vector<ClassReport>& reports, AggregateMode mode) {
  if (mode == AggregateMode::kOverall) {
    MetricCounts pooled;
    for (const auto& r : reports) pooled.add(r.counts);
    return finalize(pooled);
  }
  MetricValues out;
  out.deta = out.mota = out.hota = out.idf1 = out.assa = 0.0;
  int n = 0;
  for (const auto& r : reports) {
    out.tp += r.counts.clear.tp;
    out.fp += r.counts.clear.fp;
    out.fn += r.counts.clear.fn;
    out.idsw += r.counts.clear.idsw;
    if (!r.values.defined) continue;
    out.deta += r.values.deta;
    out.mota += r.values.mota;
    out.hota += r.values.hota;
    out.idf1 += r.values.idf1;
    out.assa += r.values.assa;
    ++n;
  }
  if (n == 0) {
    out.defined = false;
    out.deta = out.mota = out.hota = out.idf1 = out.assa = kNaN;
    return out;
  }
  out.deta /= n;
  out.mota /= n;
  out.hota /= n;
  out.idf1 /= n;
  out.assa /= n;
  return out;
}

MetricsReport evaluate(const TrackingResult& gt, const TrackingResult& pred, std::vector<int> class_ids) {
  if (gt.sequences.size() != pred.sequences.size())
    throw SequenceMismatch("prediction covers " + std::to_string(pred.sequences.size()) +
                           " sequences, ground truth " + std::to_string(gt.sequences.size()));
  for (const auto& s : gt.sequences)
    if (!pred.find(s.name)) throw SequenceMismatch("no prediction for sequence " + s.name);
  if (class_ids.empty()) {
    std::set<int> ids;
    for (const auto& s : gt.sequences)
      for (const auto& r : s.rows) ids.insert(r.box.class_id);
    class_ids.assign(ids.begin(), ids.end());
  }
  MetricsReport report;
  report.class_ids = class_ids;
  std::vector<MetricCounts> pooled(class_ids.size());
  for (const auto& s : gt.sequences) {
    const SequenceTracks& p = *pred.find(s.name);
    SequenceReport sr;
    sr.name = s.name;
    for (std::size_t k = 0; k < class_ids.size(); ++k) {
      ClassReport cr;
      cr.class_id = class_ids[k];
      cr.counts = evaluate_counts(prepare_sequence(s, p, class_ids[k]));
      cr.values = finalize(cr.counts);
      pooled[k].add(cr.counts);
      sr.classes.push_back(cr);
    }
    sr.average = aggregate(sr.classes, AggregateMode::kAverage);
    sr.overall = aggregate(sr.classes, AggregateMode::kOverall);
    report.sequences.push_back(std::move(sr));
  }
  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    ClassReport cr;
    cr.class_id = class_ids[k];
    cr.counts = pooled[k];
    cr.values = finalize(pooled[k]);
    report.classes.push_back(cr);
  }
  report.average = aggregate(report.classes, AggregateMode::kAverage);
  report.overall = aggregate(report.classes, AggregateMode::kOverall);
  return report;
}

namespace {

using nlohmann::ordered_json;

ordered_json values_json(const MetricValues& v) {
  auto pct = [&](double x) { return v.defined && std::isfinite(x) ? ordered_json(100.0 * x) : ordered_json(nullptr); };
  return ordered_json{{"DetA", pct(v.deta)}, {"MOTA", pct(v.mota)}, {"HOTA", pct(v.hota)},
                      {"IDF1", pct(v.idf1)}, {"AssA", pct(v.assa)}, {"TP", v.tp},
                      {"FP", v.fp},          {"FN", v.fn},          {"IDSW", v.idsw},
                      {"defined", v.defined}};
}

MetricValues values_from_json(const nlohmann::json& j) {
  MetricValues v;
  auto get = [&](const char* k) { return j.at(k).is_null() ? kNaN : j.at(k).get<double>() / 100.0; };
  v.deta = get("DetA");
  v.mota = get("MOTA");
  v.hota = get("HOTA");
  v.idf1 = get("IDF1");
  v.assa = get("AssA");
  v.tp = j.at("TP").get<std::int64_t>();
  v.fp = j.at("FP").get<std::int64_t>();
  v.fn = j.at("FN").get<std::int64_t>();
  v.idsw = j.at("IDSW").get<std::int64_t>();
  v.defined = j.at("defined").get<bool>();
  return v;
}

}  // namespace

std::string MetricsReport::to_json() const {
  ordered_json j;
  j["classes"] = class_ids;
  j["average"] = values_json(average);
  j["overall"] = values_json(overall);
  ordered_json per_class = ordered_json::array();
  for (const auto& c : classes) {
    auto e = values_json(c.values);
    e["class_id"] = c.class_id;
    per_class.push_back(std::move(e));
  }
  j["per_class"] = std::move(per_class);
  ordered_json seqs = ordered_json::array();
  for (const auto& s : sequences) {
    ordered_json e{{"name", s.name}, {"average", values_json(s.average)}, {"overall", values_json(s.overall)}};
    ordered_json pc = ordered_json::array();
    for (const auto& c : s.classes) {
      auto ce = values_json(c.values);
      ce["class_id"] = c.class_id;
      pc.push_back(std::move(ce));
    }
    e["per_class"] = std::move(pc);
    seqs.push_back(std::move(e));
  }
  j["sequences"] = std::move(seqs);
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.class_ids = j.at("classes").get<std::vector<int>>();
  r.average = values_from_json(j.at("average"));
  r.overall = values_from_json(j.at("overall"));
  for (const auto& c : j.at("per_class")) {
    ClassReport cr;
    cr.class_id = c.at("class_id").get<int>();
    cr.values = values_from_json(c);
    r.classes.push_back(cr);
  }
  for (const auto& s : j.at("sequences")) {
    SequenceReport sr;
    sr.name = s.at("name").get<std::string>();
    sr.average = values_from_json(s.at("average"));
    sr.overall = values_from_json(s.at("overall"));
    for (const auto& c : s.at("per_class")) {
      ClassReport cr;
      cr.class_id = c.at("class_id").get<int>();
      cr.values = values_from_json(c);
      sr.classes.push_back(cr);
    }
    r.sequences.push_back(std::move(sr));
  }
  return r;
}

}  // namespace darthkit
