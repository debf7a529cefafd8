"""Seeded generators for the desk-scale MiniLang corpora.

``generate_corpus`` produces three structurally distinct program families
(nested-loop sorting, digit loops, recursion).  ``generate_discriminative``
produces two classes that differ in exactly one statement, which is what the
perturbation experiments need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTIFIERS = (
    "a", "b", "c", "x", "y", "z", "n", "m", "k", "t", "acc", "tmp", "val", "arr", "data",
    "items", "buf", "count", "total", "lo", "hi", "mid", "cur", "prev", "res", "num",
    "left", "right", "size", "len", "key", "q", "w", "p", "r", "s",
)

FUNCTION_NAMES = {
    "sort": ("bubbleSort", "sortArray", "sort_values", "sortList", "swapSort", "orderItems"),
    "digits": ("sumDigits", "digit_sum", "countDigits", "reverseNumber", "digitTotal", "sum_of_digits"),
    "recursion": ("fibonacci", "factorial", "computePower", "recursive_sum", "fibValue", "powerOf"),
}
CLASSES = tuple(FUNCTION_NAMES)


@dataclass(frozen=True)
class Program:
    source_id: str
    source: str
    label: str
    name: str


class _Gen:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def names(self, k: int) -> list[str]:
        return [str(s) for s in self.rng.choice(IDENTIFIERS, size=k, replace=False)]

    def lit(self, lo: int = 0, hi: int = 10) -> int:
        return int(self.rng.integers(lo, hi))

    def coin(self, p: float = 0.5) -> bool:
        return bool(self.rng.random() < p)

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def filler(self, avoid: list[str]) -> str:
        v = next(s for s in self.names(len(avoid) + 1) if s not in avoid)
        kind = int(self.rng.integers(3))
        if kind == 0:
            return f"int {v} = {self.lit()};"
        if kind == 1:
            return f"log({self.pick(avoid)});"
        return f"int {v} = {self.pick(avoid)} * {self.lit(1, 5)};"


def _sort_program(g: _Gen, name: str) -> str:
    arr, n, i, j, t = g.names(5)
    cmp = g.pick((">", "<"))
    body = [
        f"int {t} = {arr}[{j}];",
        f"{arr}[{j}] = {arr}[{j} + 1];",
        f"{arr}[{j} + 1] = {t};",
    ]
    inner = f"for (int {j} = 0; {j} < {n} - {i} - 1; {j}++) {{ if ({arr}[{j}] {cmp} {arr}[{j} + 1]) {{ {' '.join(body)} }} }}"
    stmts = [f"for (int {i} = 0; {i} < {n}; {i}++) {{ {inner} }}"]
    if g.coin(0.5):
        stmts.insert(0, g.filler([arr, n]))
    if g.coin(0.3):
        stmts.append(g.filler([arr, n]))
    return f"void {name}(int[] {arr}, int {n}) {{ {' '.join(stmts)} }}"


def _digits_program(g: _Gen, name: str) -> str:
    n, s, d = g.names(3)
    base = g.pick((10, 10, 2, 8))
    update = g.pick((f"{s} = {s} + {n} % {base};", f"{s} = {s} * {base} + {n} % {base};",
                     f"{s} += {n} % {base};"))
    loop = [update, f"{n} = {n} / {base};"]
    if g.coin(0.4):
        loop.insert(0, f"int {d} = {n} % {base};")
    stmts = [f"int {s} = 0;", f"while ({n} > 0) {{ {' '.join(loop)} }}"]
    if g.coin(0.4):
        stmts.insert(1, g.filler([n, s]))
    stmts.append(f"return {s};")
    return f"int {name}(int {n}) {{ {' '.join(stmts)} }}"


def _recursion_program(g: _Gen, name: str) -> str:
    (n,) = g.names(1)
    k = g.lit(1, 3)
    base_ret = g.pick((n, "1", "0"))
    rec = g.pick((
        f"return {name}({n} - 1) + {name}({n} - 2);",
        f"return {n} * {name}({n} - 1);",
        f"return {name}({n} - 1) + {n};",
    ))
    stmts = [f"if ({n} < {k}) {{ return {base_ret}; }}", rec]
    if g.coin(0.4):
        stmts.insert(0, g.filler([n]))
    return f"int {name}(int {n}) {{ {' '.join(stmts)} }}"


_FAMILIES = {"sort": _sort_program, "digits": _digits_program, "recursion": _recursion_program}


def generate_corpus(n_per_class: int = 50, seed: int = 0) -> list[Program]:
    """Three program families, ``n_per_class`` programs each, interleaved."""
    g = _Gen(np.random.default_rng(seed))
    out = []
    for i in range(n_per_class):
        for label in CLASSES:
            name = g.pick(FUNCTION_NAMES[label])
            out.append(Program(f"{label}/{i:03d}", _FAMILIES[label](g, name), label, name))
    return out


MARKERS = {
    "loop": "while ({x} > {k}) {{ {body} }}",
    "branch": "if ({x} > {k}) {{ {body} }}",
    "count": "for ({x} = 0; {x} < {k}; {x}++) {{ {body} }}",
}


def generate_discriminative(n_per_class: int = 50, seed: int = 0, classes=("loop", "branch")) -> list[Program]:
    """Classes share random filler statements and differ in exactly one marker
    statement (while, if, or for) inserted at a random position."""
    g = _Gen(np.random.default_rng(seed))
    out = []
    for i in range(n_per_class):
        for label in classes:
            x, y = g.names(2)
            # the marker body comes from the shared filler pool so only the keyword differs
            key = MARKERS[label].format(x=x, k=g.lit(1, 4), body=g.filler([x, y]))
            stmts = [g.filler([x, y]) for _ in range(int(g.rng.integers(2, 5)))]
            stmts.insert(int(g.rng.integers(len(stmts) + 1)), key)
            name = g.pick(("run", "apply", "process", "handle"))
            src = f"int {name}(int {x}, int {y}) {{ {' '.join(stmts)} return {y}; }}"
            out.append(Program(f"{label}/{i:03d}", src, label, name))
    return out
