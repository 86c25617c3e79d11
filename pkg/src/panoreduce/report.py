"""Run report: per-column band table, plane table and a matplotlib summary figure."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

from .mask import overlay  # noqa: E402

_PREVIEW_WIDTH = 1024


def band_columns(mask) -> np.ndarray:
    """Per column: first buffer row, first plane row and end row of the band (-1 if none)."""
    rows = np.arange(mask.height)[:, None]
    out = np.full((mask.width, 3), -1, dtype=np.int64)
    has_buf = mask.buffer_region.any(axis=0)
    has_plane = mask.plane_region.any(axis=0)
    out[has_buf, 0] = np.argmax(mask.buffer_region, axis=0)[has_buf]
    out[has_plane, 1] = np.argmax(mask.plane_region, axis=0)[has_plane]
    last = np.where(mask.plane_region, rows, -1).max(axis=0)
    out[has_plane, 2] = last[has_plane] + 1
    return out


def write_columns_csv(path, mask) -> None:
    table = band_columns(mask)
    processed = mask.bitmap.sum(axis=0)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["u", "buffer_top", "plane_top", "band_end", "processed_rows"])
        for u in range(mask.width):
            w.writerow([u, *table[u].tolist(), int(processed[u])])


def write_planes_csv(path, planes) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rank", "orientation", "inliers", "nx", "ny", "nz", "offset_m", "tilt_deg"])
        for i, p in enumerate(planes):
            w.writerow([i, p.orientation, p.inlier_count, *(f"{c:.6f}" for c in p.normal),
                        f"{p.offset:.6f}", f"{p.tilt_deg():.3f}"])


def _boxes(ax, boxes, scale, width, **style):
    for u0, v0, u1, v1 in boxes:
        pieces = [(u0, u1)] if u1 <= width else [(u0, width), (0, u1 - width)]
        for a, b in pieces:
            ax.add_patch(Rectangle((a * scale, v0 * scale), (b - a) * scale, (v1 - v0) * scale,
                                   fill=False, **style))


def summary_figure(rgb: np.ndarray, result):
    mask = result.mask
    height, width = mask.height, mask.width
    step = max(1, width // _PREVIEW_WIDTH)
    scale = 1.0 / step
    preview = overlay(rgb, mask)[::step, ::step]

    fig, (ax_img, ax_col) = plt.subplots(2, 1, figsize=(10, 7.5),
                                         gridspec_kw={"height_ratios": [2, 1]})
    ax_img.imshow(preview, interpolation="nearest")
    _boxes(ax_img, [(p.u0, p.v0, p.u0 + p.width, p.v0 + p.height) for p in result.patches],
           scale, width, edgecolor="white", linewidth=0.8, linestyle="--")
    _boxes(ax_img, [d.box for d in result.detections], scale, width,
           edgecolor="magenta", linewidth=1.2)
    ax_img.set_title(f"coverage {mask.coverage:.1%}, {len(result.patches)} patches, "
                     f"{len(result.detections)} detections")
    ax_img.set_axis_off()

    cols = band_columns(mask)
    u = np.arange(width)
    for idx, label, color in ((0, "buffer top", "tab:green"), (1, "plane top", "goldenrod"),
                              (2, "band end", "tab:gray")):
        vals = np.where(cols[:, idx] >= 0, cols[:, idx], np.nan)
        ax_col.plot(u, vals, color=color, label=label, linewidth=1)
    ego_rows = np.flatnonzero(mask.ego_region.all(axis=1))
    if len(ego_rows):
        ax_col.axhspan(ego_rows[0], height, color="tab:red", alpha=0.2, label="ego")
    ax_col.set_xlim(0, width)
    ax_col.set_ylim(height, 0)
    ax_col.set_xlabel("column u (px)")
    ax_col.set_ylabel("row v (px)")
    ax_col.legend(loc="lower right", fontsize=8, ncol=4)
    fig.tight_layout()
    return fig


def write_report(directory, rgb: np.ndarray, result) -> list[str]:
    """Write ``report.png``, ``columns.csv`` and ``planes.csv``; return their names."""
    write_columns_csv(os.path.join(directory, "columns.csv"), result.mask)
    write_planes_csv(os.path.join(directory, "planes.csv"), result.planes)
    fig = summary_figure(rgb, result)
    fig.savefig(os.path.join(directory, "report.png"), dpi=110)
    plt.close(fig)
    return ["columns.csv", "planes.csv", "report.png"]


def baseline_figure(mask_a: np.ndarray, mask_b: np.ndarray, report: dict, path) -> None:
    """Side-by-side view of two masks with their coverages."""
    step = max(1, mask_a.shape[1] // _PREVIEW_WIDTH)
    fig, axes = plt.subplots(1, 3, figsize=(13, 2.8))
    views = ((mask_a, f"A: {report['coverage_a']:.1%}"),
             (mask_b, f"B: {report['coverage_b']:.1%}"),
             (mask_a ^ mask_b, f"A xor B (ratio B/A = {report['ratio']:.3f})"))
    for ax, (img, title) in zip(axes, views):
        ax.imshow(img[::step, ::step], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
