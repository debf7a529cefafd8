"""Tree-based convolutional encoder with attention aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .trees import Ast
from .vocab import Vocab

INIT_MODES = ("type", "token", "combine")
AGGREGATE_MODES = ("attention", "max")

ENCODER_TENSORS = ("W_type", "W_token", "W_fuse", "b_fuse", "W_t", "W_l", "W_r", "b_conv", "a")


@dataclass
class EncoderParams:
    W_type: Tensor
    W_token: Tensor
    W_fuse: Tensor
    b_fuse: Tensor
    W_t: Tensor
    W_l: Tensor
    W_r: Tensor
    b_conv: Tensor
    a: Tensor
    type_vocab: Vocab
    token_vocab: Vocab
    num_conv_layers: int = 2

    @property
    def D(self) -> int:
        return self.W_t.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in ENCODER_TENSORS}

    def copy(self) -> "EncoderParams":
        copied = {k: Tensor(t.value.copy(), True, k) for k, t in self.tensors().items()}
        return EncoderParams(**copied, type_vocab=self.type_vocab, token_vocab=self.token_vocab,
                             num_conv_layers=self.num_conv_layers)


def uniform_tensor(name: str, shape, seed: int, scale: float = 0.05) -> Tensor:
    # one child stream per tensor name so shapes of other tensors never shift the draw
    digest = [ord(c) for c in name]
    rng = np.random.default_rng([seed, *digest])
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True, name=name)


def init_params(type_vocab: Vocab, token_vocab: Vocab, D: int = 100, num_conv_layers: int = 2,
                seed: int = 0) -> EncoderParams:
    shapes = {
        "W_type": (len(type_vocab), D),
        "W_token": (len(token_vocab), D),
        "W_fuse": (2 * D, D),
        "b_fuse": (D,),
        "W_t": (D, D),
        "W_l": (D, D),
        "W_r": (D, D),
        "b_conv": (D,),
        "a": (D,),
    }
    tensors = {k: uniform_tensor(k, s, seed) for k, s in shapes.items()}
    return EncoderParams(**tensors, type_vocab=type_vocab, token_vocab=token_vocab,
                         num_conv_layers=num_conv_layers)


@dataclass
class CodeVector:
    source_id: str
    values: np.ndarray


@dataclass
class PreparedTree:
    """Index arrays and window coefficients for one AST, in pre-order."""

    order: list
    type_idx: np.ndarray
    token_idx: np.ndarray
    left: np.ndarray   # n x n, left[p, i] = eta^l of node i in p's window
    right: np.ndarray  # n x n
    # eta^t is 1 for the window's parent and 0 for children, i.e. the identity


def window_coefficients(num_children: int) -> list[tuple[float, float, float]]:
    """(eta_t, eta_l, eta_r) for each child of a node with ``num_children`` children."""
    out = []
    for pos in range(1, num_children + 1):
        eta_t = 0.0
        if num_children == 1:
            eta_r = 0.5
        else:
            eta_r = (1.0 - eta_t) * (pos - 1) / (num_children - 1)
        eta_l = (1.0 - eta_t) * (1.0 - eta_r)
        out.append((eta_t, eta_l, eta_r))
    return out


def prepare_tree(ast: Ast, type_vocab: Vocab, token_vocab: Vocab) -> PreparedTree:
    order = ast.preorder()
    row = {nid: i for i, nid in enumerate(order)}
    n = len(order)
    left = np.zeros((n, n))
    right = np.zeros((n, n))
    for nid in order:
        children = ast.nodes[nid].children
        for c, (_, eta_l, eta_r) in zip(children, window_coefficients(len(children))):
            left[row[nid], row[c]] = eta_l
            right[row[nid], row[c]] = eta_r
    nodes = [ast.nodes[i] for i in order]
    return PreparedTree(
        order,
        np.array([type_vocab.lookup(n.type_label) for n in nodes], dtype=np.int64),
        np.array([token_vocab.lookup(n.token) for n in nodes], dtype=np.int64),
        left,
        right,
    )


def init_node_embeddings(tree: PreparedTree, params: EncoderParams, init_mode: str = "combine") -> Tensor:
    if init_mode == "type":
        return ad.embedding_lookup(params.W_type, tree.type_idx)
    if init_mode == "token":
        return ad.embedding_lookup(params.W_token, tree.token_idx)
    if init_mode == "combine":
        both = ad.concat(ad.embedding_lookup(params.W_type, tree.type_idx),
                         ad.embedding_lookup(params.W_token, tree.token_idx))
        return ad.tanh(ad.add(ad.matmul(both, params.W_fuse), params.b_fuse))
    raise ValueError(f"unknown init mode {init_mode!r}")


def tbcnn_conv_layer(tree: PreparedTree, states: Tensor, params: EncoderParams) -> Tensor:
    """One depth-2 convolution over every (parent, children) window."""
    top = ad.matmul(states, params.W_t)
    lft = ad.matmul(ad.matmul(Tensor(tree.left), states), params.W_l)
    rgt = ad.matmul(ad.matmul(Tensor(tree.right), states), params.W_r)
    return ad.tanh(ad.add(ad.add(ad.add(top, lft), rgt), params.b_conv))


def attention_aggregate(states: Tensor, params: EncoderParams) -> tuple[Tensor, Tensor]:
    alpha = ad.softmax(ad.matmul(states, params.a))
    return alpha, ad.weighted_sum(alpha, states)


def forward(tree: PreparedTree, params: EncoderParams, init_mode: str = "combine",
            aggregate_mode: str = "attention") -> tuple[Tensor, Optional[Tensor], Tensor]:
    """Return (code vector, alpha or None, final node states) as tensors."""
    h = init_node_embeddings(tree, params, init_mode)
    for _ in range(params.num_conv_layers):
        h = tbcnn_conv_layer(tree, h, params)
    if aggregate_mode == "attention":
        alpha, v = attention_aggregate(h, params)
        return v, alpha, h
    if aggregate_mode == "max":
        return ad.reduce_max(h, axis=0), None, h
    raise ValueError(f"unknown aggregate mode {aggregate_mode!r}")


def encode(ast: Ast, params: EncoderParams, init_mode: str = "combine",
           aggregate_mode: str = "attention") -> tuple[CodeVector, Optional[np.ndarray]]:
    """Embed one AST. Alpha is aligned with ``ast.preorder()``."""
    tree = prepare_tree(ast, params.type_vocab, params.token_vocab)
    v, alpha, _ = forward(tree, params, init_mode, aggregate_mode)
    return CodeVector(ast.source_id, v.value.copy()), None if alpha is None else alpha.value.copy()
