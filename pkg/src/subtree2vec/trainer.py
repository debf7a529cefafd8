"""Subtree-prediction pretraining, the Adam optimizer, and checkpoint files."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .encoder import (
    AGGREGATE_MODES, ENCODER_TENSORS, INIT_MODES, EncoderParams, PreparedTree,
    forward, init_params, prepare_tree, uniform_tensor,
)
from .trees import Ast
from .vocab import (
    LABEL_MODES, SubtreeVocab, Vocab, build_token_vocab, build_type_vocab, label_set,
    mask_method_names, sha256_text,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    D: int = 100
    num_conv_layers: int = 2
    init_mode: str = "combine"
    label_mode: str = "subtree"
    aggregate_mode: str = "attention"
    min_count: int = 2
    with_operators: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.D < 1 or self.num_conv_layers < 0:
            raise ValueError("epochs, batch_size and D must be at least 1")
        if self.min_count < 1:
            raise ValueError("min_count must be at least 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}")
        if self.aggregate_mode not in AGGREGATE_MODES:
            raise ValueError(f"aggregate_mode must be one of {AGGREGATE_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    def __init__(self, tensors: Sequence[Tensor], lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(t.value) for t in self.tensors]
        self.v = [np.zeros_like(t.value) for t in self.tensors]
        self.t = 0

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, t in enumerate(self.tensors):
            if t.grad is None:
                continue
            g = t.grad
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            t.value = t.value - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# -- pretext head -----------------------------------------------------------

def predict_subtree_distribution(v, W_subtrees) -> np.ndarray:
    """Softmax over ``W_subtrees @ v``: probability of each vocabulary label."""
    W = ad.constant(W_subtrees).value
    if W.shape[0] == 0:
        raise ValueError("empty subtree vocabulary")
    return ad.softmax(Tensor(W @ np.asarray(getattr(v, "values", v), dtype=np.float64))).value


def label_loss(v: Tensor, W_subtrees: Tensor, labels) -> Tensor:
    if len(labels) == 0:
        raise ValueError("example has no labels")
    return ad.cross_entropy(ad.matmul(W_subtrees, v), labels)


def example_loss(ast: Ast, labels, params: EncoderParams, W_subtrees: Tensor,
                 init_mode: str = "combine", aggregate_mode: str = "attention") -> Tensor:
    """Mean of -log q(label) over the AST's labels."""
    tree = prepare_tree(ast, params.type_vocab, params.token_vocab)
    v, _, _ = forward(tree, params, init_mode, aggregate_mode)
    return label_loss(v, W_subtrees, labels)


# -- generic fitting loop ---------------------------------------------------

@dataclass
class FitResult:
    step: int
    epoch_losses: list


def fit(examples: Sequence[tuple[PreparedTree, object]], params: EncoderParams,
        head: dict[str, Tensor], loss_fn: Callable, config: TrainConfig,
        on_epoch: Optional[Callable[[int, float], None]] = None) -> FitResult:
    """Minibatch Adam over encoder + head tensors.

    ``loss_fn(v, head, target)`` returns the scalar loss of one example; the
    batch loss is the mean over the batch.
    """
    tensors = list(params.tensors().values()) + list(head.values())
    opt = Adam(tensors, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    rng = np.random.default_rng(config.seed)
    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            with Tape() as tape:
                batch_loss = None
                for i in batch:
                    tree, target = examples[i]
                    v, _, _ = forward(tree, params, config.init_mode, config.aggregate_mode)
                    loss = loss_fn(v, head, target)
                    total += float(loss.value)
                    batch_loss = loss if batch_loss is None else ad.add(batch_loss, loss)
                batch_loss = ad.scale(batch_loss, 1.0 / len(batch))
            if not math.isfinite(float(batch_loss.value)):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {opt.t}")
            tape.backward(batch_loss)
            opt.step()
        epoch_losses.append(total / len(examples))
        if on_epoch is not None:
            on_epoch(epoch, epoch_losses[-1])
    return FitResult(opt.t, epoch_losses)


# -- pretraining ------------------------------------------------------------

@dataclass
class Checkpoint:
    config: TrainConfig
    params: EncoderParams
    head: dict  # name -> Tensor
    label_vocab: Optional[SubtreeVocab]
    step: int = 0
    final_loss: float = float("nan")
    epoch_losses: list = field(default_factory=list)
    head_kind: str = "subtrees"
    head_labels: list = field(default_factory=list)
    version: int = CHECKPOINT_VERSION

    @property
    def W_subtrees(self) -> Tensor:
        return self.head["W_subtrees"]


def prepare_input(ast: Ast, label_mode: str) -> Ast:
    # function names would leak method_name labels into the token embeddings
    return mask_method_names(ast) if label_mode == "method_name" else ast


def train(corpus: Sequence[Ast], vocab: SubtreeVocab, config: TrainConfig,
          type_vocab: Optional[Vocab] = None, token_vocab: Optional[Vocab] = None,
          on_epoch: Optional[Callable[[int, float], None]] = None) -> Checkpoint:
    """Pretrain the encoder by predicting each AST's labels from its code vector."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    inputs = [prepare_input(a, config.label_mode) for a in corpus]
    type_vocab = type_vocab or build_type_vocab(inputs)
    token_vocab = token_vocab or build_token_vocab(inputs)
    examples = []
    skipped = 0
    for ast, inp in zip(corpus, inputs):
        try:
            labels = label_set(ast, vocab, config.label_mode, config.with_operators)
        except ValueError:
            labels = []
        if not labels:
            skipped += 1
            continue
        examples.append((prepare_tree(inp, type_vocab, token_vocab), np.array(labels)))
    if skipped:
        log.info("skipped %d of %d ASTs without in-vocabulary labels", skipped, len(corpus))
    if not examples:
        raise ValueError("no AST in the corpus has an in-vocabulary label")
    params = init_params(type_vocab, token_vocab, config.D, config.num_conv_layers, config.seed)
    head = {"W_subtrees": uniform_tensor("W_subtrees", (len(vocab), config.D), config.seed)}
    result = fit(examples, params, head, lambda v, h, y: label_loss(v, h["W_subtrees"], y),
                 config, on_epoch)
    return Checkpoint(config, params, head, vocab, result.step, result.epoch_losses[-1],
                      result.epoch_losses)


# -- checkpoint files -------------------------------------------------------

def vocab_paths(path) -> dict[str, Path]:
    path = Path(path)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    return {kind: path.with_name(f"{stem}.{kind}.tsv") for kind in ("subtree", "token", "type")}


def _tensor_doc(t: Tensor) -> dict:
    return {"shape": list(t.shape), "data": t.value.ravel().tolist()}


def checkpoint_bytes(ckpt: Checkpoint, vocab_texts: dict[str, str], vocab_files: dict[str, str]) -> bytes:
    tensors = {k: _tensor_doc(t) for k, t in ckpt.params.tensors().items()}
    tensors.update({k: _tensor_doc(t) for k, t in ckpt.head.items()})
    doc = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "vocab_sha256": {k: sha256_text(v) for k, v in vocab_texts.items()},
        "vocab_files": vocab_files,
        "step": ckpt.step,
        "final_loss": ckpt.final_loss,
        "epoch_losses": ckpt.epoch_losses,
        "head": {"kind": ckpt.head_kind, "labels": ckpt.head_labels},
        "tensors": tensors,
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write the checkpoint JSON and its vocabulary files next to it."""
    path = Path(path)
    texts = {"token": ckpt.params.token_vocab.to_tsv(), "type": ckpt.params.type_vocab.to_tsv()}
    if ckpt.label_vocab is not None:
        texts["subtree"] = ckpt.label_vocab.to_tsv()
    texts = {k: texts[k] for k in ("subtree", "token", "type") if k in texts}
    paths = vocab_paths(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    for kind, text in texts.items():
        paths[kind].write_text(text, encoding="utf-8")
    path.write_bytes(checkpoint_bytes(ckpt, texts, {k: paths[k].name for k in texts}))
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        doc = json.loads(path.read_bytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"corrupt checkpoint {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        texts = {}
        for kind, name in doc["vocab_files"].items():
            text = (path.parent / name).read_text(encoding="utf-8")
            if sha256_text(text) != doc["vocab_sha256"][kind]:
                raise CheckpointError(f"vocabulary file {name} does not match checkpoint fingerprint")
            texts[kind] = text
        config = TrainConfig.from_dict(doc["config"])
        tensors = {}
        for name, td in doc["tensors"].items():
            data = np.array(td["data"], dtype=np.float64)
            tensors[name] = Tensor(data.reshape(td["shape"]), requires_grad=True, name=name)
        params = EncoderParams(**{k: tensors.pop(k) for k in ENCODER_TENSORS},
                               type_vocab=Vocab.from_tsv(texts["type"]),
                               token_vocab=Vocab.from_tsv(texts["token"]),
                               num_conv_layers=config.num_conv_layers)
        label_vocab = SubtreeVocab.from_tsv(texts["subtree"]) if "subtree" in texts else None
        return Checkpoint(config, params, tensors, label_vocab, doc["step"], doc["final_loss"],
                          doc["epoch_losses"], doc["head"]["kind"], doc["head"]["labels"],
                          doc["version"])
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
