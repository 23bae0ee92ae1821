"""Line charts for guidance-strength sweep curves."""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..errors import ValidationError  # noqa: E402

CURVE_METRICS = ("psnr", "ssim", "ber")


def read_curve_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    return rows


def emit_plots(curve_csv, out_dir) -> list[str]:
    """One chart per metric against eta, plus a JSON sidecar with the exact
    plotted points so chart content can be verified without parsing PNGs."""
    rows = read_curve_csv(curve_csv)
    if not rows:
        raise ValidationError(f"curve file {curve_csv} has no data rows")
    os.makedirs(out_dir, exist_ok=True)
    etas = [row["eta"] for row in rows]

    written = []
    sidecar = {"eta": etas}
    for metric in CURVE_METRICS:
        if metric not in rows[0]:
            continue
        values = [row[metric] for row in rows]
        sidecar[metric] = values
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(etas, values, marker="o")
        ax.set_xlabel("eta")
        ax.set_ylabel(metric.upper())
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = os.path.join(out_dir, f"curve_{metric}.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    sidecar_path = os.path.join(out_dir, "curve_points.json")
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    written.append(sidecar_path)
    return written


def save_image_grid(path, clean, originals, amplify: float = 15.0, max_images: int = 8):
    """Two rows: cleaned images and the amplified absolute residual
    ``amplify * |clean - original|`` (clipped to [0, 1])."""
    n = min(max_images, clean.shape[0])
    residual = (amplify * (clean[:n] - originals[:n]).abs()).clamp(0, 1)
    fig, axes = plt.subplots(2, n, figsize=(1.2 * n, 2.6))
    if n == 1:
        axes = axes.reshape(2, 1)
    for i in range(n):
        axes[0, i].imshow(clean[i].permute(1, 2, 0).numpy())
        axes[1, i].imshow(residual[i].permute(1, 2, 0).numpy())
        axes[0, i].axis("off")
        axes[1, i].axis("off")
    fig.tight_layout(pad=0.2)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
