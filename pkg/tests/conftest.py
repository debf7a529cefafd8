import numpy as np
import pytest
from hypothesis import strategies as st

from subtree2vec.minilang import parse_minilang
from subtree2vec.synthetic import generate_corpus
from subtree2vec.trainer import TrainConfig, train
from subtree2vec.trees import AstNode, build_ast
from subtree2vec.vocab import build_vocab

INNER_TYPES = ("block", "expr_stmt", "decl_stmt", "expr", "condition", "if", "while",
               "for", "binop", "unaryop", "call", "index", "return")
NAMES = ("a", "b", "n", "acc", "tmp")


@st.composite
def random_asts(draw, max_nodes=8, tokens=NAMES):
    """Random well-formed trees rooted at ``program``.

    Node i > 0 picks a parent among the earlier non-leaf nodes, so ids form a
    valid tree; leaves become ident or literal with a token.
    """
    n = draw(st.integers(2, max_nodes))
    parents = [None]
    types = ["program"]
    for i in range(1, n):
        candidates = [j for j in range(i) if types[j] not in ("ident", "literal")]
        parents.append(draw(st.sampled_from(candidates)))
        types.append(draw(st.sampled_from(INNER_TYPES + ("ident", "literal"))))
    children = {i: [j for j in range(n) if parents[j] == i] for i in range(n)}
    nodes = []
    for i in range(n):
        t = types[i]
        if t in ("ident", "literal") and children[i]:
            t = "expr"
        token = None
        if t == "ident":
            token = draw(st.sampled_from(tokens))
        elif t == "literal":
            token = str(draw(st.integers(0, 9)))
        elif t == "binop":
            token = draw(st.sampled_from(("+", "<", "=")))
        nodes.append(AstNode(i, t, token, tuple(children[i])))
    return build_ast(nodes, 0, f"rand/{n}")


@pytest.fixture(scope="session")
def programs():
    return generate_corpus(12, seed=3)


@pytest.fixture(scope="session")
def asts(programs):
    return [parse_minilang(p.source, p.source_id) for p in programs]


@pytest.fixture(scope="session")
def small_ckpt(asts):
    """A quickly trained encoder: D=16, 3 epochs."""
    cfg = TrainConfig(D=16, epochs=3, batch_size=8, seed=1)
    return train(asts, build_vocab(asts, 2), cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
