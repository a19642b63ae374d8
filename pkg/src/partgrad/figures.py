"""Matplotlib rendering of report figures next to the delimited output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_error_curves(report, path):
    """Sorted normalized localization errors, one curve per part."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for part_id in sorted(report.parts):
        errs = report.parts[part_id].sorted_errors
        if not errs:
            continue
        ax.plot(range(len(errs)), errs, label=str(part_id))
    ax.set_xlabel("image rank")
    ax.set_ylabel("normalized localization error")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_heatmap_figure(image, gmap, mask, path):
    """Input image, gradient heatmap and thresholded overlay side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(9, 3))
    axes[0].imshow(np.transpose(image, (1, 2, 0)))
    axes[0].set_title("input")
    axes[1].imshow(gmap, cmap="hot")
    axes[1].set_title("gradient map")
    overlay = np.transpose(image, (1, 2, 0)).copy()
    overlay[mask] = [1.0, 0.0, 0.0]
    axes[2].imshow(overlay)
    axes[2].set_title("thresholded")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
