"""Matplotlib figures written next to the TSV reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "subtree2vec",
    "svg.fonttype": "none",
}

# no timestamps, so reruns write identical files
_METADATA = {"svg": {"Date": None}, "png": {"Software": None}}


def figsize(width=4.5, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    return width, height or width * golden


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".") or "png"
    fig.savefig(path, format=fmt, metadata=_METADATA.get(fmt), bbox_inches="tight", dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(epoch_losses, path, title="pretext loss") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.plot(range(1, len(epoch_losses) + 1), epoch_losses, marker="o", ms=3, color="0.2")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean cross-entropy")
        ax.set_title(title)
        return _save(fig, path)


def plot_delta_vs_attention(records, path, title="") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.scatter([r.attention_mass for r in records], [r.delta for r in records],
                   s=14, color="0.25")
        for r in records:
            ax.annotate(r.type_label, (r.attention_mass, r.delta), fontsize=6, color="0.4",
                        xytext=(2, 2), textcoords="offset points")
        ax.set_xlabel("attention mass of deleted component")
        ax.set_ylabel("confidence delta")
        ax.set_title(title)
        return _save(fig, path)


def plot_metric_bars(values: dict, path, ylabel="ARI", title="") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        names = list(values)
        ax.bar(names, [values[n] for n in names], color="0.45")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.axhline(0, color="0.2", lw=0.6)
        return _save(fig, path)


def _layout(ast):
    """x position by leaf order (parents centred over children), y by depth."""
    pos = {}
    next_x = [0]

    def place(nid, depth):
        children = ast.nodes[nid].children
        if not children:
            pos[nid] = (next_x[0], -depth)
            next_x[0] += 1
        else:
            for c in children:
                place(c, depth + 1)
            xs = [pos[c][0] for c in children]
            pos[nid] = ((min(xs) + max(xs)) / 2, -depth)

    place(ast.root, 0)
    return pos


def render_tree_svg(ast, scores: dict, path, title="") -> Path:
    """Draw the AST with node fill darkness proportional to score."""
    pos = _layout(ast)
    width = max(4.0, 0.45 * (max(x for x, _ in pos.values()) + 1))
    height = max(2.5, 0.55 * (1 - min(y for _, y in pos.values())))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
        for nid, node in ast.nodes.items():
            for c in node.children:
                (x0, y0), (x1, y1) = pos[nid], pos[c]
                ax.plot([x0, x1], [y0, y1], color="0.6", lw=0.6, zorder=1)
        for nid in ast.preorder():
            node = ast.nodes[nid]
            x, y = pos[nid]
            grey = 1.0 - float(scores[nid])
            ax.scatter([x], [y], s=160, c=[[grey, grey, grey]], edgecolors="0.3",
                       linewidths=0.5, zorder=2)
            label = node.token if node.token is not None else node.type_label
            ax.annotate(label, (x, y), xytext=(0, -11), textcoords="offset points",
                        ha="center", fontsize=5.5, color="0.1")
        ax.set_axis_off()
        ax.set_title(title)
        return _save(fig, path)
