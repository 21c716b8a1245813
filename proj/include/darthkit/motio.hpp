#pragma once

#include <filesystem>
#include <string>

#include "darthkit/dataset.hpp"

namespace darthkit {

/// MOTChallenge rows `frame,id,x,y,w,h,conf,class,vis` with a header line,
/// sorted by (frame, id). `vis` is always written as 1.
std::string format_mot_csv(const SequenceTracks& seq);
SequenceTracks parse_mot_csv(const std::string& text, const std::string& name, int num_frames = 0);

void write_mot_csv(const SequenceTracks& seq, const std::filesystem::path& path);
SequenceTracks read_mot_csv(const std::filesystem::path& path, int num_frames = 0);

/// One `<name>.csv` per sequence.
void save_tracking_result(const TrackingResult& result, const std::filesystem::path& dir);
/// Reads every `*.csv` in `dir`, ordered by file name.
TrackingResult load_tracking_result(const std::filesystem::path& dir);

/// Layout: `dir/<seq>/img/000001.png ...`, `dir/<seq>/gt.csv`,
/// `dir/<seq>/manifest.json`, and `dir/manifest.json` listing the sequences.
/// `extra` (a JSON object, may be empty) is merged into every manifest.
void save_dataset(const LabeledVideoSet& set, const std::filesystem::path& dir, const std::string& extra_json = "");
LabeledVideoSet load_dataset(const std::filesystem::path& dir);
/// Ground truth only; no images are decoded.
TrackingResult load_dataset_gt(const std::filesystem::path& dir);

/// Tracks from a dataset directory (its gt), a run directory holding
/// `results/`, or a bare directory of per-sequence CSVs.
TrackingResult load_tracks(const std::filesystem::path& dir);

/// Stable content digest (FNV-1a 64, hex) of a dataset's pixels and labels.
std::string dataset_hash(const LabeledVideoSet& set);

}  // namespace darthkit
