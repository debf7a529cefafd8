"""Uses of a trained encoder: clustering, clone detection, search, fine-tuning,
and method-name prediction."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import encode, init_params, prepare_tree, uniform_tensor
from .metrics import cosine_similarity, subword_counts, precision_recall_f1
from .trainer import Checkpoint, TrainConfig, fit
from .trees import Ast
from .vocab import function_names, mask_method_names

log = logging.getLogger(__name__)


class FinetuneError(ValueError):
    pass


# -- embedding index ----------------------------------------------------------

@dataclass
class IndexEntry:
    source_id: str
    language: str
    vector: np.ndarray
    task_id: Optional[str] = None


@dataclass
class EmbeddingIndex:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        ids = [e.source_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate source ids in embedding index")
        dims = {len(e.vector) for e in self.entries}
        if len(dims) > 1:
            raise ValueError(f"mixed vector dimensions {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def D(self) -> int:
        return len(self.entries[0].vector) if self.entries else 0

    def matrix(self) -> np.ndarray:
        return np.array([e.vector for e in self.entries])

    def ids(self) -> list[str]:
        return [e.source_id for e in self.entries]

    def get(self, source_id: str) -> IndexEntry:
        for e in self.entries:
            if e.source_id == source_id:
                return e
        raise KeyError(source_id)

    def to_tsv(self) -> str:
        lines = []
        for e in self.entries:
            vec = " ".join(repr(float(x)) for x in e.vector)
            lines.append(f"{e.source_id}\t{e.language}\t{e.task_id or ''}\t{vec}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "EmbeddingIndex":
        entries = []
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"embedding line {n}: expected 4 tab-separated fields")
            try:
                vec = np.array([float(x) for x in parts[3].split()])
            except ValueError:
                raise ValueError(f"embedding line {n}: bad vector") from None
            entries.append(IndexEntry(parts[0], parts[1], vec, parts[2] or None))
        return cls(entries)


def embed_corpus(asts: Sequence[Ast], params, init_mode="combine", aggregate_mode="attention",
                 languages=None, task_ids=None, jobs: int = 1) -> EmbeddingIndex:
    """Encode every AST.  ``jobs > 1`` encodes on a thread pool; order is kept."""
    languages = languages or {}
    task_ids = task_ids or {}

    def one(ast):
        v, _ = encode(ast, params, init_mode, aggregate_mode)
        return IndexEntry(ast.source_id, languages.get(ast.source_id, "minilang"),
                          v.values, task_ids.get(ast.source_id))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return EmbeddingIndex(list(pool.map(one, asts)))
    return EmbeddingIndex([one(a) for a in asts])


# -- clustering ---------------------------------------------------------------

@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def kmeans(X, k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's algorithm on squared Euclidean distance with k-means++ seeding."""
    if isinstance(X, EmbeddingIndex):
        X = X.matrix()
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(remaining))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    centers = X[chosen].copy()
    labels = None
    for it in range(1, max_iters + 1):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = X[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return KMeansResult(labels, centers, inertia, it)


# -- clone detection and search ----------------------------------------------

def clone_pairs(index: EmbeddingIndex) -> list[tuple[str, str, float]]:
    """Every unordered pair of entries with its cosine similarity, in index order."""
    out = []
    entries = index.entries
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            out.append((entries[i].source_id, entries[j].source_id,
                        cosine_similarity(entries[i].vector, entries[j].vector)))
    return out


def search(query, index: EmbeddingIndex, K: int = 10, exclude_language: Optional[str] = None,
           exclude_ids=()) -> list[tuple[str, float]]:
    """Top-K entries by cosine similarity, ties broken by source id."""
    if not len(index):
        raise ValueError("empty index")
    if K < 1:
        raise ValueError("K must be at least 1")
    excluded = set(exclude_ids)
    scored = [
        (e.source_id, cosine_similarity(query, e.vector))
        for e in index.entries
        if e.source_id not in excluded and (exclude_language is None or e.language != exclude_language)
    ]
    scored.sort(key=lambda s: (-s[1], s[0]))
    return scored[:K]


# -- fine-tuning --------------------------------------------------------------

def stratified_sample(labels: Sequence[str], fraction: float, rng: np.random.Generator) -> list[int]:
    """Indices of a class-proportional sample of ``max(1, round(fraction * n))`` items.

    Raises FinetuneError when some class would get no example.
    """
    if not 0 < fraction <= 1:
        raise FinetuneError("fraction must lie in (0, 1]")
    n = len(labels)
    if n == 0:
        raise FinetuneError("empty labeled corpus")
    target = max(1, int(round(fraction * n)))
    by_class: dict[str, list[int]] = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    quotas = {c: fraction * len(idx) for c, idx in by_class.items()}
    alloc = {c: int(q) for c, q in quotas.items()}
    spare = target - sum(alloc.values())
    for c in sorted(quotas, key=lambda c: (-(quotas[c] - alloc[c]), c))[:max(spare, 0)]:
        alloc[c] += 1
    missing = sorted(c for c, a in alloc.items() if a == 0)
    if missing:
        raise FinetuneError(
            f"classes {missing} absent from the {fraction:g} sample of {n} examples; "
            "use a larger fraction or another seed")
    picked = []
    for c in sorted(by_class):
        picked.extend(int(i) for i in rng.choice(by_class[c], size=alloc[c], replace=False))
    return sorted(picked)


def train_test_split(labels: Sequence[str], test_ratio: float, rng) -> tuple[list[int], list[int]]:
    test = set(stratified_sample(labels, test_ratio, rng)) if test_ratio > 0 else set()
    return [i for i in range(len(labels)) if i not in test], sorted(test)


def _encoder_for(checkpoint: Checkpoint, init: str, seed: int):
    if init == "pretrained":
        return checkpoint.params.copy()
    if init == "random":
        p = checkpoint.params
        return init_params(p.type_vocab, p.token_vocab, p.D, p.num_conv_layers, seed)
    raise ValueError(f"init must be 'pretrained' or 'random', got {init!r}")


def class_probabilities(v, head: dict) -> np.ndarray:
    logits = head["W_cls"].value @ np.asarray(getattr(v, "values", v)) + head["b_cls"].value
    return ad.softmax(Tensor(logits)).value


@dataclass
class FinetuneResult:
    checkpoint: Checkpoint  # head_kind "classifier", head_labels = classes
    accuracy: float
    n_train: int
    n_test: int
    predictions: list


def finetune(checkpoint: Checkpoint, items: Sequence[tuple[Ast, str]], fraction: float = 1.0,
             init: str = "pretrained", config: Optional[TrainConfig] = None,
             test_items: Optional[Sequence[tuple[Ast, str]]] = None,
             test_ratio: float = 0.3) -> FinetuneResult:
    """Train a softmax classifier on code vectors jointly with the encoder.

    Without ``test_items`` a stratified ``test_ratio`` split is held out first,
    then ``fraction`` of the remaining items is sampled for training.
    """
    config = config or TrainConfig()
    enc_cfg = checkpoint.config
    config = replace(config, init_mode=enc_cfg.init_mode, aggregate_mode=enc_cfg.aggregate_mode,
                     D=enc_cfg.D, num_conv_layers=enc_cfg.num_conv_layers)
    rng = np.random.default_rng(config.seed)
    items = list(items)
    if test_items is None:
        train_idx, test_idx = train_test_split([y for _, y in items], test_ratio, rng)
        test_items = [items[i] for i in test_idx]
        items = [items[i] for i in train_idx]
    sample = stratified_sample([y for _, y in items], fraction, rng)
    train_items = [items[i] for i in sample]
    classes = sorted({y for _, y in train_items})
    if len(classes) < 2:
        raise FinetuneError("fine-tuning needs at least two classes")
    cls_index = {c: i for i, c in enumerate(classes)}

    params = _encoder_for(checkpoint, init, config.seed)
    head = {
        "W_cls": uniform_tensor("W_cls", (len(classes), params.D), config.seed),
        "b_cls": Tensor(np.zeros(len(classes)), requires_grad=True, name="b_cls"),
    }
    examples = [(prepare_tree(a, params.type_vocab, params.token_vocab), cls_index[y])
                for a, y in train_items]

    def loss_fn(v, h, y):
        return ad.cross_entropy(ad.add(ad.matmul(h["W_cls"], v), h["b_cls"]), y)

    result = fit(examples, params, head, loss_fn, config)
    ckpt = Checkpoint(config, params, head, None, result.step, result.epoch_losses[-1],
                      result.epoch_losses, "classifier", classes)
    predictions = []
    correct = 0
    for ast, y in test_items:
        v, _ = encode(ast, params, config.init_mode, config.aggregate_mode)
        pred = classes[int(np.argmax(class_probabilities(v, head)))]
        predictions.append((ast.source_id, y, pred))
        correct += pred == y
    accuracy = correct / len(test_items) if test_items else float("nan")
    return FinetuneResult(ckpt, accuracy, len(train_items), len(test_items), predictions)


# -- method names -------------------------------------------------------------

@dataclass
class NameTable:
    names: list
    embeddings: np.ndarray  # len(names) x D


def predict_method_name(v, table: NameTable) -> list[tuple[str, float]]:
    """Names ranked by softmax(E v), ties broken by name."""
    if not table.names:
        raise ValueError("empty name table")
    v = np.asarray(getattr(v, "values", v), dtype=np.float64)
    probs = ad.softmax(Tensor(table.embeddings @ v)).value
    return sorted(zip(table.names, probs.tolist()), key=lambda s: (-s[1], s[0]))


@dataclass
class NameResult:
    checkpoint: Checkpoint
    table: NameTable
    precision: float
    recall: float
    f1: float
    predictions: list  # (source_id, truth, predicted)


def _method_name(ast: Ast) -> str:
    names = function_names(ast)
    if not names:
        raise FinetuneError(f"{ast.source_id!r} has no function to name")
    return names[0]


def train_name_model(checkpoint: Checkpoint, asts: Sequence[Ast], fraction: float = 1.0,
                     init: str = "pretrained", config: Optional[TrainConfig] = None,
                     test_ratio: float = 0.3) -> NameResult:
    """Fine-tune encoder + name lookup table; score top-1 names on held-out code
    with micro-averaged sub-word precision/recall/F1."""
    config = config or TrainConfig()
    enc_cfg = checkpoint.config
    config = replace(config, init_mode=enc_cfg.init_mode, aggregate_mode=enc_cfg.aggregate_mode,
                     D=enc_cfg.D, num_conv_layers=enc_cfg.num_conv_layers)
    rng = np.random.default_rng(config.seed)
    asts = list(asts)
    names = [_method_name(a) for a in asts]
    perm = rng.permutation(len(asts))
    n_test = int(round(test_ratio * len(asts)))
    test_idx, train_idx = sorted(perm[:n_test]), sorted(perm[n_test:])
    if fraction < 1:
        keep = max(1, int(round(fraction * len(train_idx))))
        train_idx = sorted(rng.choice(train_idx, size=keep, replace=False))
    table_names = sorted({names[i] for i in train_idx})
    name_index = {n: i for i, n in enumerate(table_names)}
    params = _encoder_for(checkpoint, init, config.seed)
    head = {"W_names": uniform_tensor("W_names", (len(table_names), params.D), config.seed)}
    examples = [(prepare_tree(mask_method_names(asts[i]), params.type_vocab, params.token_vocab),
                 name_index[names[i]]) for i in train_idx]
    result = fit(examples, params, head,
                 lambda v, h, y: ad.cross_entropy(ad.matmul(h["W_names"], v), y), config)
    table = NameTable(table_names, head["W_names"].value.copy())
    overlap = n_pred = n_gold = 0
    predictions = []
    for i in test_idx:
        v, _ = encode(mask_method_names(asts[i]), params, config.init_mode, config.aggregate_mode)
        pred = predict_method_name(v, table)[0][0]
        o, p, g = subword_counts(pred, names[i])
        overlap, n_pred, n_gold = overlap + o, n_pred + p, n_gold + g
        predictions.append((asts[i].source_id, names[i], pred))
    p, r, f1 = precision_recall_f1(overlap, n_pred - overlap, n_gold - overlap)
    ckpt = Checkpoint(config, params, head, None, result.step, result.epoch_losses[-1],
                      result.epoch_losses, "names", table_names)
    return NameResult(ckpt, table, p, r, f1, predictions)


def truth_pairs(index: EmbeddingIndex, groups: dict) -> list[tuple[str, str, bool]]:
    """Pairs of indexed ids with whether they share a ground-truth group."""
    ids = index.ids()
    return [(ids[i], ids[j], groups.get(ids[i]) is not None and groups.get(ids[i]) == groups.get(ids[j]))
            for i in range(len(ids)) for j in range(i + 1, len(ids))]

