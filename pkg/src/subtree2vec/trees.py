"""AST data model, the JSON interchange format, and component deletion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping, Optional

# Labels produced by the MiniLang parser. Ingested trees may use any label.
NODE_TYPES = (
    "program", "function", "block", "decl_stmt", "expr_stmt", "expr",
    "condition", "if", "while", "for", "return", "binop", "unaryop",
    "index", "call", "ident", "literal", "type_name",
)

LEAF_TYPES = frozenset({"ident", "literal"})


class AstError(ValueError):
    """Raised for trees that violate the Ast invariants."""


class AstFormatError(AstError):
    """Raised when an interchange document cannot be decoded."""


@dataclass(frozen=True)
class AstNode:
    id: int
    type_label: str
    token: Optional[str] = None
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class SourceSpan:
    node_id: int
    start: int
    end: int


@dataclass(frozen=True, eq=False)
class Ast:
    """Ordered rooted tree of typed nodes.

    ``nodes`` maps node id to :class:`AstNode`. ``spans`` is only present for
    trees parsed from source text and maps node id to byte offsets.
    """

    root: int
    nodes: Mapping[int, AstNode]
    source_id: str = ""
    spans: Optional[Mapping[int, SourceSpan]] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        if self.spans is not None:
            object.__setattr__(self, "spans", MappingProxyType(dict(self.spans)))
        _validate(self)
        object.__setattr__(self, "_parents", _parent_map(self))

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> AstNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise AstError(f"node {node_id} not in tree {self.source_id!r}") from None

    def parent(self, node_id: int) -> Optional[int]:
        return self._parents.get(node_id)

    def preorder(self, start: Optional[int] = None) -> list[int]:
        """Node ids in pre-order (children in source order)."""
        out = []
        stack = [self.root if start is None else start]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    def subtree_size(self, node_id: int) -> int:
        return len(self.preorder(self[node_id].id))

    def iter_nodes(self) -> Iterator[AstNode]:
        for nid in self.preorder():
            yield self.nodes[nid]

    def structure(self, node_id: Optional[int] = None) -> tuple:
        """Id-free nested tuple used for structural equality."""
        node = self.nodes[self.root if node_id is None else node_id]
        return (node.type_label, node.token, tuple(self.structure(c) for c in node.children))

    def structurally_equal(self, other: "Ast") -> bool:
        return self.structure() == other.structure()

    def with_tokens(self, tokens: Mapping[int, Optional[str]]) -> "Ast":
        """Copy of the tree with some node tokens replaced."""
        nodes = {
            nid: AstNode(n.id, n.type_label, tokens.get(nid, n.token), n.children)
            for nid, n in self.nodes.items()
        }
        return Ast(self.root, nodes, self.source_id, self.spans)


def _parent_map(ast: Ast) -> dict[int, int]:
    return {c: nid for nid, node in ast.nodes.items() for c in node.children}


def _validate(ast: Ast) -> None:
    nodes = ast.nodes
    if not nodes:
        raise AstError("tree has no nodes")
    if ast.root not in nodes:
        raise AstError(f"root {ast.root} is not in the node table")
    parents: dict[int, int] = {}
    for nid, node in nodes.items():
        if nid != node.id:
            raise AstError(f"node table key {nid} does not match node id {node.id}")
        if nid < 0:
            raise AstError(f"negative node id {nid}")
        for c in node.children:
            if c not in nodes:
                raise AstError(f"node {nid} has dangling child reference {c}")
            if c in parents:
                raise AstError(f"node {c} has more than one parent")
            parents[c] = nid
        if node.type_label in LEAF_TYPES:
            if node.token is None:
                raise AstError(f"{node.type_label} node {nid} has no token")
            if node.children:
                raise AstError(f"{node.type_label} node {nid} has children")
    if ast.root in parents:
        raise AstError("root node has a parent")
    orphans = sorted(set(nodes) - set(parents) - {ast.root})
    if orphans:
        raise AstError(f"multiple roots: {[ast.root] + orphans}")
    # every node has one parent and the root none; a cycle would leave nodes unreachable
    seen = 0
    stack = [ast.root]
    while stack:
        nid = stack.pop()
        seen += 1
        if seen > len(nodes):
            raise AstError("cycle in child relation")
        stack.extend(nodes[nid].children)
    if seen != len(nodes):
        raise AstError("cycle in child relation")
    if ast.spans is not None:
        for nid, span in ast.spans.items():
            if nid not in nodes or span.node_id != nid:
                raise AstError(f"span for unknown node {nid}")
            if span.start > span.end:
                raise AstError(f"span of node {nid} has start > end")


def build_ast(nodes, root: int = 0, source_id: str = "", spans=None) -> Ast:
    """Build an Ast from an iterable of AstNode."""
    return Ast(root, {n.id: n for n in nodes}, source_id, spans)


def renumber(ast: Ast) -> Ast:
    """Copy with ids reassigned 0..n-1 in pre-order."""
    order = ast.preorder()
    new_id = {old: i for i, old in enumerate(order)}
    nodes = {}
    for old in order:
        n = ast.nodes[old]
        nodes[new_id[old]] = AstNode(new_id[old], n.type_label, n.token,
                                     tuple(new_id[c] for c in n.children))
    spans = None
    if ast.spans is not None:
        spans = {new_id[o]: SourceSpan(new_id[o], s.start, s.end)
                 for o, s in ast.spans.items() if o in new_id}
    return Ast(0, nodes, ast.source_id, spans)


# -- interchange format ------------------------------------------------------

def save_ast_file(ast: Ast) -> bytes:
    doc = {
        "source_id": ast.source_id,
        "root": ast.root,
        "nodes": [
            {"id": n.id, "type": n.type_label, "token": n.token, "children": list(n.children)}
            for n in (ast.nodes[i] for i in sorted(ast.nodes))
        ],
    }
    return (json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


def load_ast_file(data: bytes) -> Ast:
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise AstFormatError(f"malformed AST document: {exc}") from None
    if not isinstance(doc, dict):
        raise AstFormatError("AST document must be a JSON object")
    for key in ("root", "nodes"):
        if key not in doc:
            raise AstFormatError(f"AST document is missing {key!r}")
    source_id = doc.get("source_id", "")
    root = doc["root"]
    if not isinstance(source_id, str) or not _is_int(root) or not isinstance(doc["nodes"], list):
        raise AstFormatError("AST document has fields of the wrong type")
    nodes: dict[int, AstNode] = {}
    for entry in doc["nodes"]:
        if not isinstance(entry, dict) or "id" not in entry or "type" not in entry:
            raise AstFormatError(f"bad node entry: {entry!r}")
        nid, label = entry["id"], entry["type"]
        token = entry.get("token")
        children = entry.get("children", [])
        if (not _is_int(nid) or not isinstance(label, str) or not label
                or not (token is None or isinstance(token, str))
                or not isinstance(children, list) or not all(_is_int(c) for c in children)):
            raise AstFormatError(f"bad node entry: {entry!r}")
        if nid in nodes:
            raise AstError(f"duplicate node id {nid}")
        nodes[nid] = AstNode(nid, label, token, tuple(children))
    return Ast(root, nodes, source_id)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def rename_identifiers(ast: Ast, rename) -> Ast:
    """Apply ``rename`` (a callable or a mapping) to every ident token.

    Names missing from a mapping are kept.
    """
    fn = rename if callable(rename) else (lambda name: rename.get(name, name))
    return ast.with_tokens({n.id: fn(n.token) for n in ast.iter_nodes() if n.type_label == "ident"})


# -- perturbation ------------------------------------------------------------

def delete_component(ast: Ast, node_id: int) -> Ast:
    """Return a copy of ``ast`` with the subtree rooted at ``node_id`` removed."""
    if node_id not in ast.nodes:
        raise AstError(f"node {node_id} not in tree {ast.source_id!r}")
    if node_id == ast.root:
        raise AstError("cannot delete the root node")
    removed = set(ast.preorder(node_id))
    parent = ast.parent(node_id)
    nodes = {}
    for nid, n in ast.nodes.items():
        if nid in removed:
            continue
        if nid == parent:
            n = AstNode(n.id, n.type_label, n.token, tuple(c for c in n.children if c != node_id))
        nodes[nid] = n
    spans = None
    if ast.spans is not None:
        spans = {k: v for k, v in ast.spans.items() if k not in removed}
    return Ast(ast.root, nodes, ast.source_id, spans)
