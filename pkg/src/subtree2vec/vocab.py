"""Subtree pseudo-labels, label vocabularies, and embedding vocabularies."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .trees import Ast

SUBTREE_ROOT_TYPES = frozenset({"expr_stmt", "decl_stmt", "expr", "condition"})
KEYWORD_TYPES = frozenset({"if", "for", "while"})
SELECTABLE_TYPES = SUBTREE_ROOT_TYPES | KEYWORD_TYPES
OPERATOR_TYPES = frozenset({"binop", "unaryop"})

LABEL_MODES = ("subtree", "token", "method_name")
UNK = "<unk>"
METHOD_NAME_MASK = "<method>"


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class SubtreeRef:
    source_id: str
    root: int
    canonical_id: str
    size: int


def canonical_id(ast: Ast, root: int, with_operators: bool = False) -> str:
    """Pre-order serialization of the subtree at ``root`` using type labels only.

    With ``with_operators`` the operator spelling of binop/unaryop nodes is kept,
    e.g. ``binop[+]``; identifiers and literals are never included.
    """
    node = ast[root]
    label = node.type_label
    if with_operators and label in OPERATOR_TYPES and node.token:
        label = f"{label}[{node.token}]"
    if not node.children:
        return label
    inner = ",".join(canonical_id(ast, c, with_operators) for c in node.children)
    return f"{label}({inner})"


def identify_subtrees(ast: Ast, with_operators: bool = False) -> list[SubtreeRef]:
    out = []
    for nid in ast.preorder():
        label = ast.nodes[nid].type_label
        if label in SUBTREE_ROOT_TYPES:
            out.append(SubtreeRef(ast.source_id, nid, canonical_id(ast, nid, with_operators),
                                  ast.subtree_size(nid)))
        elif label in KEYWORD_TYPES:
            # keyword nodes stand for themselves, not for the whole statement
            out.append(SubtreeRef(ast.source_id, nid, label, 1))
    return out


_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def split_subtokens(name: str) -> list[str]:
    """Split on underscores and lower-to-upper camel boundaries; lowercase."""
    parts = []
    for chunk in name.split("_"):
        parts.extend(p.lower() for p in _CAMEL.split(chunk) if p)
    return parts


def function_names(ast: Ast) -> list[str]:
    """Names of every function node (its first ident child), in pre-order."""
    names = []
    for node in ast.iter_nodes():
        if node.type_label == "function":
            for c in node.children:
                if ast.nodes[c].type_label == "ident":
                    names.append(ast.nodes[c].token)
                    break
    return names


def mask_method_names(ast: Ast) -> Ast:
    """Hide function names so name labels cannot be read off the input."""
    tokens = {}
    for node in ast.iter_nodes():
        if node.type_label == "function":
            for c in node.children:
                if ast.nodes[c].type_label == "ident":
                    tokens[c] = METHOD_NAME_MASK
                    break
    return ast.with_tokens(tokens) if tokens else ast


def raw_labels(ast: Ast, label_mode: str, with_operators: bool = False) -> list[str]:
    """Label strings of one AST before vocabulary lookup (duplicates kept)."""
    if label_mode == "subtree":
        return [ref.canonical_id for ref in identify_subtrees(ast, with_operators)]
    if label_mode == "token":
        return [n.token for n in ast.iter_nodes()
                if n.token is not None and n.token != METHOD_NAME_MASK]
    if label_mode == "method_name":
        names = function_names(ast)
        if not names:
            raise VocabError(f"{ast.source_id!r} has no function node for method_name labels")
        return [sub for name in names for sub in split_subtokens(name)]
    raise VocabError(f"unknown label mode {label_mode!r}")


@dataclass
class SubtreeVocab:
    """Dense bijection between label strings and indices, with corpus counts.

    Despite the name the same structure holds token and method-name labels;
    ``kind`` records which.
    """

    entries: list[str]
    counts: list[int]
    min_count: int
    kind: str = "subtree"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index = {k: i for i, k in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise VocabError("duplicate vocabulary entries")
        if any(c < self.min_count for c in self.counts):
            raise VocabError("entry below min_count")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def index(self, key: str) -> int:
        return self._index[key]

    def get(self, key: str) -> Optional[int]:
        return self._index.get(key)

    def to_tsv(self) -> str:
        lines = [f"#{self.kind}-vocab v1 min_count={self.min_count}"]
        lines += [f"{i}\t{c}\t{k}" for i, (k, c) in enumerate(zip(self.entries, self.counts))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "SubtreeVocab":
        lines = text.splitlines()
        m = re.fullmatch(r"#(\w+)-vocab v1 min_count=(\d+)", lines[0] if lines else "")
        if not m:
            raise VocabError("missing or malformed vocabulary header")
        entries, counts = [], []
        for n, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != len(entries):
                raise VocabError(f"malformed vocabulary line {n}")
            counts.append(int(parts[1]))
            entries.append(parts[2])
        return cls(entries, counts, int(m.group(2)), m.group(1))


def count_labels(corpus: Iterable[Ast], label_mode: str = "subtree",
                 with_operators: bool = False) -> Counter:
    counts: Counter = Counter()
    for ast in corpus:
        counts.update(raw_labels(ast, label_mode, with_operators))
    return counts


def vocab_from_counts(counts: Counter, min_count: int, kind: str = "subtree") -> SubtreeVocab:
    if min_count < 1:
        raise VocabError("min_count must be positive")
    kept = sorted(((k, c) for k, c in counts.items() if c >= min_count),
                  key=lambda kc: (-kc[1], kc[0]))
    if not kept:
        raise VocabError(f"vocabulary is empty after applying min_count={min_count}")
    return SubtreeVocab([k for k, _ in kept], [c for _, c in kept], min_count, kind)


def build_vocab(corpus: Iterable[Ast], min_count: int = 2, label_mode: str = "subtree",
                with_operators: bool = False) -> SubtreeVocab:
    corpus = list(corpus)
    if not corpus:
        raise VocabError("empty corpus")
    if label_mode == "method_name":
        corpus = [a for a in corpus if function_names(a)]
    return vocab_from_counts(count_labels(corpus, label_mode, with_operators), min_count, label_mode)


def label_set(ast: Ast, vocab: SubtreeVocab, label_mode: str = "subtree",
              with_operators: bool = False) -> list[int]:
    """Label indices of ``ast``; out-of-vocabulary labels are skipped."""
    if label_mode not in LABEL_MODES:
        raise VocabError(f"unknown label mode {label_mode!r}")
    return [i for i in (vocab.get(k) for k in raw_labels(ast, label_mode, with_operators))
            if i is not None]


@dataclass
class Vocab:
    """Embedding-row vocabulary: row 0 is reserved for unknown symbols."""

    symbols: list[str]
    kind: str = "type"

    def __post_init__(self):
        if not self.symbols or self.symbols[0] != UNK:
            self.symbols = [UNK] + [s for s in self.symbols if s != UNK]
        self._index = {s: i for i, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def lookup(self, symbol: Optional[str]) -> int:
        return 0 if symbol is None else self._index.get(symbol, 0)

    def to_tsv(self) -> str:
        return f"#{self.kind}-symbols v1\n" + "".join(f"{i}\t{s}\n" for i, s in enumerate(self.symbols))

    @classmethod
    def from_tsv(cls, text: str) -> "Vocab":
        lines = text.splitlines()
        m = re.fullmatch(r"#(\w+)-symbols v1", lines[0] if lines else "")
        if not m:
            raise VocabError("missing or malformed symbol table header")
        symbols = []
        for n, line in enumerate(lines[1:], start=2):
            idx, _, sym = line.partition("\t")
            if not idx.isdigit() or int(idx) != len(symbols):
                raise VocabError(f"malformed symbol table line {n}")
            symbols.append(sym)
        return cls(symbols, m.group(1))


def build_type_vocab(corpus: Iterable[Ast]) -> Vocab:
    return Vocab(sorted({n.type_label for a in corpus for n in a.nodes.values()}), "type")


def build_token_vocab(corpus: Iterable[Ast], min_count: int = 1) -> Vocab:
    counts = Counter(n.token for a in corpus for n in a.nodes.values() if n.token is not None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(kept, "token")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
