"""Figure rendering: PNG report plots and the deterministic 2-d ball SVG.

The SVG path is hand-assembled text with fixed number formatting so that
identical inputs produce byte-identical files. The PNG helpers are
conveniences for run reports and make no determinism promises.
"""

from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import POINCARE

VIEW = 600
CENTER = VIEW / 2
RADIUS = 290.0


def _svg_coord(value):
    return f"{value:.4f}"


def _to_screen(point):
    x = CENTER + RADIUS * point[0]
    y = CENTER - RADIUS * point[1]
    return _svg_coord(x), _svg_coord(y)


def render_ball_svg(matrix, vocab, edges=None):
    """SVG of a 2-d ball-kind matrix: boundary circle, one labeled marker
    per symbol, one straight chord per edge.

    Markers carry the symbol as a <title> child. Raises for matrices that
    are not 2-dimensional or not ball-kind.
    """
    if matrix.score_kind != POINCARE:
        raise ValueError("the ball plot requires a poincare-kind checkpoint")
    if matrix.dim != 2:
        raise ValueError(f"the ball plot requires dim=2, got dim={matrix.dim}")
    if len(vocab) != matrix.count:
        raise ValueError("vocabulary size does not match the matrix")

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{VIEW}" height="{VIEW}" viewBox="0 0 {VIEW} {VIEW}">',
        f'<rect width="{VIEW}" height="{VIEW}" fill="#ffffff"/>',
        f'<circle cx="{CENTER:g}" cy="{CENTER:g}" r="{RADIUS:g}" '
        'fill="none" stroke="#444444" stroke-width="1.5"/>',
    ]
    if edges is not None and len(edges):
        lines.append('<g stroke="#88aacc" stroke-width="0.8" opacity="0.7">')
        for u, v in edges.pairs:
            x1, y1 = _to_screen(matrix.rows[u])
            x2, y2 = _to_screen(matrix.rows[v])
            lines.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>')
        lines.append("</g>")
    lines.append('<g fill="#cc3333">')
    for idx, symbol in enumerate(vocab):
        cx, cy = _to_screen(matrix.rows[idx])
        lines.append(
            f'<circle cx="{cx}" cy="{cy}" r="3">'
            f"<title>{escape(symbol)}</title></circle>"
        )
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def save_loss_curve(epoch_losses, learning_rates, path):
    """Mean loss per epoch with the rate schedule on a twin axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = np.arange(len(epoch_losses))
    ax.plot(epochs, epoch_losses, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(epochs, learning_rates, color="tab:orange", alpha=0.6)
    ax2.set_ylabel("learning rate", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_rank_histogram(ranks, path):
    """Distribution of evaluation ranks on a log-scaled count axis."""
    ranks = np.asarray(ranks)
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = min(50, max(10, int(ranks.max()) // 2 + 1))
    ax.hist(ranks, bins=bins, color="tab:blue", edgecolor="white")
    ax.set_xlabel("rank")
    ax.set_ylabel("relations")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_entailment_scatter(scores, gold, path):
    """Model entailment score against the gold rating per pair."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(gold, scores, s=12, alpha=0.7, color="tab:blue")
    ax.set_xlabel("gold rating")
    ax.set_ylabel("model score")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
