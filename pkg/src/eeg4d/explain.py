"""Electrode-activity heatmaps over the last convolutional stage.

For a target class, the gradient of its pre-softmax logit is taken with
respect to the final conv-stage activations (post-attention, before
pooling, so the map is natively grid-sized). Pixel weights follow the
squared/cubed first-gradient closed form; weighted channel maps are summed,
rectified, averaged over the temporal slices, and max-normalized to [0,1].
"""

import csv
from dataclasses import dataclass

import numpy as np

from .diff import backward, pick
from .model import forward_graph


@dataclass
class Heatmap:
    values: np.ndarray            # [grid_h, grid_w], in [0, 1]
    target_class: int
    slice_policy: str = "mean"


def _cam_from_tap(activation, gradient):
    """One slice's raw (unnormalized) class-activation map.

    activation/gradient: [H, W, C]. Pixel weights use
    g^2 / (2 g^2 + sum_spatial(A) * g^3), zero where the denominator
    vanishes; channel weights sum rectified positive gradients.
    """
    a = activation.astype(np.float64)
    g = gradient.astype(np.float64)
    g2 = g * g
    g3 = g2 * g
    denom = 2.0 * g2 + a.sum(axis=(0, 1), keepdims=True) * g3
    alpha = np.where(denom != 0.0, g2 / np.where(denom == 0.0, 1.0, denom), 0.0)
    weights = (alpha * np.maximum(g, 0.0)).sum(axis=(0, 1))    # [C]
    cam = (weights[None, None, :] * a).sum(axis=2)
    return np.maximum(cam, 0.0)


def gradcam_from_graph(tap, logit):
    """Grad-CAM++ map from already-built graph nodes.

    tap: activation node stacking the per-slice maps [2T,H,W,C]; logit:
    the scalar class-score node. Returns the slice-averaged,
    max-normalized [H, W] map.
    """
    tap.grad = None
    backward(logit)
    grad = tap.grad if tap.grad is not None else np.zeros_like(tap.value)
    cams = [
        _cam_from_tap(tap.value[t], grad[t]) for t in range(tap.value.shape[0])
    ]
    cam = np.mean(cams, axis=0)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return cam


def gradcam_pp(params, cfg, sample, target_class):
    """Heatmap of one sample for one target class."""
    if not (0 <= target_class < cfg.classes):
        raise ValueError(f"target class {target_class} out of range")
    out = forward_graph(sample.values, params, cfg)
    logit = pick(out.logits, target_class)
    cam = gradcam_from_graph(out.conv_tap, logit)
    return Heatmap(values=cam, target_class=target_class)


def top_channels(heatmap, layout, n=3):
    """Electrode names at the n hottest occupied cells, hottest first."""
    rows, cols = layout.rows, layout.cols
    cell_vals = heatmap.values[rows, cols]
    order = np.argsort(-cell_vals, kind="stable")[:n]
    return [(layout.channels[i], float(cell_vals[i])) for i in order]


def write_heatmap_csv(path, heatmap):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in heatmap.values:
            writer.writerow([f"{v:.8g}" for v in row])


def read_heatmap_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def render_heatmap(heatmap, layout, out_base):
    """Write <base>.csv, <base>.png and a <base>_top.txt channel report."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = f"{out_base}.csv"
    png_path = f"{out_base}.png"
    txt_path = f"{out_base}_top.txt"

    write_heatmap_csv(csv_path, heatmap)

    fig, ax = plt.subplots(figsize=(7, 7))
    im = ax.imshow(heatmap.values, cmap="jet", vmin=0.0, vmax=1.0)
    for ch in layout.channels:
        r, c = layout.placements[ch]
        ax.text(c, r, ch, ha="center", va="center", fontsize=5, color="black")
    ax.set_title(f"class {heatmap.target_class} activity")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.savefig(png_path, dpi=150, bbox_inches="tight")
    plt.close(fig)

    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"target_class={heatmap.target_class}\n")
        for name, val in top_channels(heatmap, layout):
            fh.write(f"{name}\t{val:.6f}\n")

    return csv_path, png_path, txt_path
