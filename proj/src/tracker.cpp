#include "darthkit/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "darthkit/assignment.hpp"
#include "darthkit/errors.hpp"
#include "darthkit/parallel.hpp"

namespace darthkit {

namespace {

Eigen::RowVectorXd unit(const Eigen::RowVectorXd& x) {
  const double n = x.norm();
  return n > 0.0 ? Eigen::RowVectorXd(x / n) : x;
}

}  // namespace

Matrix bisoftmax_scores(std::span<const Track> tracks, std::span<const Detection> dets,
                        const Matrix& det_embeds, double temperature) {
  const auto t = static_cast<Eigen::Index>(tracks.size());
  const auto d = static_cast<Eigen::Index>(dets.size());
  Matrix scores = Matrix::Zero(t, d);
  if (t == 0 || d == 0) return scores;
  if (det_embeds.rows() != d) throw ShapeError("associate: embeddings not row-aligned with detections");
  Matrix logits(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    const Eigen::RowVectorXd te = unit(tracks[i].embedding.transpose());
    for (Eigen::Index j = 0; j < d; ++j)
      logits(i, j) = te.dot(unit(det_embeds.row(j))) / temperature;
  }
  // softmax over tracks per detection (columns) and over detections per track (rows)
  Matrix over_tracks(t, d), over_dets(t, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double m = logits.col(j).maxCoeff();
    const Eigen::VectorXd e = (logits.col(j).array() - m).exp();
    over_tracks.col(j) = e / e.sum();
  }
  for (Eigen::Index i = 0; i < t; ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    over_dets.row(i) = e / e.sum();
  }
  scores = 0.5 * (over_tracks + over_dets);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (tracks[i].last_box.class_id != dets[j].class_id) scores(i, j) = 0.0;
  return scores;
}

Association associate(std::span<const Track> tracks, std::span<const Detection> dets,
                      const Matrix& det_embeds, int frame, const TrackerConfig& cfg) {
  Association a;
  a.scores = bisoftmax_scores(tracks, dets, det_embeds, cfg.temperature);
  const auto t = static_cast<int>(tracks.size());
  const auto d = static_cast<int>(dets.size());
  std::vector<char> track_used(t, 0), det_used(d, 0);

  if (cfg.hungarian) {
    Matrix gated = a.scores;
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j)
        if (gated(i, j) < cfg.match_score_thr) gated(i, j) = 0.0;
    const auto row = hungarian_max(gated, 0.0);
    for (int i = 0; i < t; ++i) {
      if (row[i] < 0) continue;
      a.matches.emplace_back(i, row[i]);
      track_used[i] = 1;
      det_used[row[i]] = 1;
    }
  } else {
    std::vector<std::tuple<double, int, int>> pairs;
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j)
        if (a.scores(i, j) >= cfg.match_score_thr && a.scores(i, j) > 0.0) pairs.emplace_back(a.scores(i, j), i, j);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
      if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
      if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
      return std::get<2>(x) < std::get<2>(y);
    });
    for (const auto& [s, i, j] : pairs) {
      if (track_used[i] || det_used[j]) continue;
      track_used[i] = det_used[j] = 1;
      a.matches.emplace_back(i, j);
    }
  }
  std::sort(a.matches.begin(), a.matches.end());
  for (int j = 0; j < d; ++j)
    if (!det_used[j] && dets[j].confidence >= cfg.init_conf_thr) a.births.push_back(j);
  for (int i = 0; i < t; ++i)
    if (!track_used[i] && frame - tracks[i].last_seen_frame > cfg.max_age) a.deaths.push_back(i);
  return a;
}

std::vector<TrackRow> Tracker::step(int frame, std::span<const Detection> dets, const Matrix& det_embeds) {
  const Association a = associate(tracks_, dets, det_embeds, frame, cfg_);
  std::vector<TrackRow> rows;
  for (const auto& [ti, di] : a.matches) {
    Track& tr = tracks_[ti];
    tr.last_box = dets[di];
    tr.embedding = cfg_.embed_momentum * tr.embedding + (1.0 - cfg_.embed_momentum) * det_embeds.row(di).transpose();
    tr.last_seen_frame = frame;
    tr.age = 0;
    rows.push_back({frame, tr.track_id, dets[di]});
  }
  std::vector<char> dead(tracks_.size(), 0);
  for (int i : a.deaths) dead[i] = 1;
  for (std::size_t i = 0; i < tracks_.size(); ++i)
    if (tracks_[i].last_seen_frame != frame) tracks_[i].age = frame - tracks_[i].last_seen_frame;
  std::vector<Track> kept;
  for (std::size_t i = 0; i < tracks_.size(); ++i)
    if (!dead[i]) kept.push_back(std::move(tracks_[i]));
  tracks_ = std::move(kept);
  for (int di : a.births) {
    Track tr;
    tr.track_id = next_id_++;
    tr.last_box = dets[di];
    tr.embedding = det_embeds.row(di).transpose();
    tr.last_seen_frame = frame;
    tracks_.push_back(std::move(tr));
    rows.push_back({frame, tracks_.back().track_id, dets[di]});
  }
  std::sort(rows.begin(), rows.end(), [](const TrackRow& x, const TrackRow& y) { return x.track_id < y.track_id; });
  return rows;
}

TrackingResult track_sequence(const Detector& det, const ModelWeights& weights, const VideoSet& frames,
                              const TrackerConfig& cfg) {
  TrackingResult out;
  out.sequences.resize(frames.sequences.size());
  parallel_for(frames.sequences.size(), [&](std::size_t s) {
    const auto& seq = frames.sequences[s];
    SequenceTracks& res = out.sequences[s];
    res.name = seq.name;
    res.num_frames = static_cast<int>(seq.frames.size());
    Tracker tracker(cfg);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const Image img = pad_to_multiple(seq.frames[f], ModelConfig::kStride);
      const auto ed = det.detect_with_embeddings(weights, img, cfg.detect);
      // Boxes reaching into the padding are clipped back to the frame.
      std::vector<Detection> dets;
      std::vector<Eigen::Index> keep;
      for (std::size_t i = 0; i < ed.detections.size(); ++i) {
        const Detection d = clip_box(ed.detections[i], seq.frames[f].width, seq.frames[f].height);
        if (d.degenerate()) continue;
        dets.push_back(d);
        keep.push_back(static_cast<Eigen::Index>(i));
      }
      Matrix embeds(static_cast<Eigen::Index>(keep.size()), ed.embeddings.cols());
      for (std::size_t i = 0; i < keep.size(); ++i) embeds.row(static_cast<Eigen::Index>(i)) = ed.embeddings.row(keep[i]);
      const auto rows = tracker.step(static_cast<int>(f) + 1, dets, embeds);
      res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    }
  });
  return out;
}

}  // namespace darthkit
