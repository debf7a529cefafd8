"""Attention scores, deletion-based perturbation, and their agreement."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .downstream import class_probabilities
from .encoder import encode
from .trainer import Checkpoint
from .trees import Ast, delete_component
from .vocab import SELECTABLE_TYPES

SHADES = " ░▒▓█"


class UndefinedCorrelation(ValueError):
    pass


@dataclass
class PerturbationRecord:
    node_id: int
    type_label: str
    delta: float
    attention_mass: float


@dataclass
class ExplanationReport:
    source_id: str
    correct_class: str
    records: list
    correlation: Optional[float]
    display_scores: dict  # node id -> score in [0, 1]
    raw_alpha: dict = field(default_factory=dict)
    method: str = "spearman"
    note: str = ""

    def to_json(self) -> str:
        doc = {
            "source_id": self.source_id,
            "correct_class": self.correct_class,
            "records": [
                {"node_id": r.node_id, "type": r.type_label, "delta": r.delta,
                 "attention_mass": r.attention_mass}
                for r in self.records
            ],
            "correlation": {"method": self.method, "value": self.correlation},
            "display_scores": {str(k): v for k, v in sorted(self.display_scores.items())},
        }
        if self.note:
            doc["correlation"]["note"] = self.note
        return json.dumps(doc, indent=2) + "\n"


def _require_classifier(ckpt: Checkpoint):
    if ckpt.head_kind != "classifier":
        raise ValueError(f"checkpoint holds a {ckpt.head_kind!r} head, not a classifier")


def raw_attention(ast: Ast, ckpt: Checkpoint) -> dict[int, float]:
    cfg = ckpt.config
    if cfg.aggregate_mode != "attention":
        raise ValueError("attention scores need aggregate_mode='attention'")
    _, alpha = encode(ast, ckpt.params, cfg.init_mode, cfg.aggregate_mode)
    return dict(zip(ast.preorder(), alpha.tolist()))


def node_attention_scores(ast: Ast, ckpt: Checkpoint) -> dict[int, float]:
    """Attention weights divided by their maximum, keyed by node id."""
    return normalize_scores(raw_attention(ast, ckpt))


def normalize_scores(alpha: dict[int, float]) -> dict[int, float]:
    top = max(alpha.values())
    return {k: (1.0 if v == top else v / top) for k, v in alpha.items()}


def perturb_all(ast: Ast) -> list[tuple[int, Ast]]:
    """One copy of ``ast`` per deletable component, in pre-order."""
    return [(nid, delete_component(ast, nid)) for nid in ast.preorder()
            if nid != ast.root and ast.nodes[nid].type_label in SELECTABLE_TYPES]


def confidence(ckpt: Checkpoint, ast: Ast, correct_class: int) -> float:
    _require_classifier(ckpt)
    if not 0 <= correct_class < len(ckpt.head_labels):
        raise IndexError(f"class index {correct_class} out of range")
    cfg = ckpt.config
    v, _ = encode(ast, ckpt.params, cfg.init_mode, cfg.aggregate_mode)
    return float(class_probabilities(v, ckpt.head)[correct_class])


def confidence_delta(ckpt: Checkpoint, original: Ast, perturbed: Ast, correct_class: int) -> float:
    return confidence(ckpt, original, correct_class) - confidence(ckpt, perturbed, correct_class)


def delta_attention_correlation(records: Sequence[PerturbationRecord]) -> float:
    """Spearman rank correlation of delta against attention mass (average ranks for ties)."""
    if len(records) < 3:
        raise UndefinedCorrelation("need at least three perturbation records")
    return spearman([r.delta for r in records], [r.attention_mass for r in records])


def spearman(x, y) -> float:
    rx, ry = rankdata(x), rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise UndefinedCorrelation("correlation undefined for a constant sequence")
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float(np.clip(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)), -1.0, 1.0))


def explain(ckpt: Checkpoint, ast: Ast, correct_class) -> ExplanationReport:
    _require_classifier(ckpt)
    if isinstance(correct_class, str):
        if correct_class not in ckpt.head_labels:
            raise ValueError(f"unknown class {correct_class!r}")
        class_idx = ckpt.head_labels.index(correct_class)
    else:
        class_idx = int(correct_class)
    alpha = raw_attention(ast, ckpt)
    base = confidence(ckpt, ast, class_idx)
    records = []
    for nid, perturbed in perturb_all(ast):
        mass = float(sum(alpha[i] for i in ast.preorder(nid)))
        delta = base - confidence(ckpt, perturbed, class_idx)
        records.append(PerturbationRecord(nid, ast.nodes[nid].type_label, delta, min(mass, 1.0)))
    records.sort(key=lambda r: r.node_id)
    try:
        corr, note = delta_attention_correlation(records), ""
    except UndefinedCorrelation as exc:
        corr, note = None, str(exc)
    return ExplanationReport(ast.source_id, ckpt.head_labels[class_idx], records, corr,
                             normalize_scores(alpha), alpha, note=note)


def shade(score: float) -> str:
    """Five grey levels: 0 is blank, 1 is the darkest block."""
    return SHADES[min(len(SHADES) - 1, int(score * len(SHADES)))]


def render_heat(ast: Ast, scores: dict[int, float], source: Optional[str] = None) -> str:
    """Text heat map.

    With ``source`` (and parse spans) each source line is followed by a line of
    shade characters, taking each character's shade from the deepest node
    covering it.  Otherwise an indented tree listing with scores is produced.
    """
    if set(scores) != set(ast.nodes):
        raise ValueError("scores are not aligned with the tree's nodes")
    if source is not None and ast.spans is not None:
        return _render_source(ast, scores, source)
    lines = []

    def walk(nid, depth):
        node = ast.nodes[nid]
        label = node.type_label + (f" {node.token}" if node.token is not None else "")
        lines.append(f"{shade(scores[nid])} {scores[nid]:.3f} {'  ' * depth}{label}")
        for c in node.children:
            walk(c, depth + 1)

    walk(ast.root, 0)
    return "\n".join(lines) + "\n"


def _render_source(ast: Ast, scores: dict[int, float], source: str) -> str:
    data = source.encode("utf-8")
    owner = [None] * len(data)
    for nid in ast.preorder():  # later (deeper) nodes overwrite their ancestors
        span = ast.spans.get(nid)
        if span is not None:
            for b in range(span.start, min(span.end, len(data))):
                owner[b] = nid
    out = []
    pos = 0
    rows = data.split(b"\n")
    if len(rows) > 1 and rows[-1] == b"":
        rows.pop()
    for raw in rows:
        text = raw.decode("utf-8", errors="replace")
        marks = []
        for b in range(pos, pos + len(raw)):
            # one mark per character: skip UTF-8 continuation bytes
            if data[b] & 0xC0 == 0x80:
                continue
            nid = owner[b]
            marks.append(" " if nid is None or data[b:b + 1].isspace() else shade(scores[nid]))
        out.append(text)
        out.append("".join(marks).rstrip())
        pos += len(raw) + 1
    return "\n".join(out) + "\n"
