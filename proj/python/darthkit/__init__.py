"""Python bindings for the darthkit C++ core."""

import json as _json

from ._darthkit import (
    BoundingBox,
    Error,
    WarpRecord,
    dc_roi,
    dc_roi_softmax,
    dc_rpn,
    evaluate_dirs,
    inverse_warp_box,
    iou,
    pcl_embed,
    pcl_embed_multi,
    run_cli,
    total_loss,
    warp_box,
)


def evaluate(gt_dir, pred_dir, classes=()):
    """Metrics report for a ground-truth dataset and a results directory, as a dict."""
    return _json.loads(evaluate_dirs(str(gt_dir), str(pred_dir), list(classes)))


__all__ = [
    "BoundingBox",
    "Error",
    "WarpRecord",
    "dc_roi",
    "dc_roi_softmax",
    "dc_rpn",
    "evaluate",
    "evaluate_dirs",
    "inverse_warp_box",
    "iou",
    "pcl_embed",
    "pcl_embed_multi",
    "run_cli",
    "total_loss",
    "warp_box",
]
