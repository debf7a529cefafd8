"""Reading corpora from disk.

A corpus is a file or a directory tree of ``.ml`` (MiniLang source) and
``.json`` (AST interchange) files.  The source id of each snippet is its path
relative to the corpus root without suffix, so ``corpus/sort/003.ml`` has id
``sort/003`` and, in a labeled corpus, class ``sort`` (the first directory).
An optional ``manifest.tsv`` in the root gives ``source_id  language  task_id``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .minilang import parse_minilang
from .synthetic import Program
from .trees import Ast, load_ast_file, save_ast_file

SOURCE_SUFFIXES = (".ml",)
AST_SUFFIXES = (".json",)


@dataclass
class Snippet:
    ast: Ast
    path: Path
    source: Optional[str] = None
    label: Optional[str] = None


@dataclass
class Corpus:
    snippets: list
    languages: dict = field(default_factory=dict)
    task_ids: dict = field(default_factory=dict)

    @property
    def asts(self) -> list[Ast]:
        return [s.ast for s in self.snippets]

    def labeled(self) -> list[tuple[Ast, str]]:
        missing = [s.ast.source_id for s in self.snippets if s.label is None]
        if missing:
            raise ValueError(f"unlabeled snippets (place them in class subdirectories): {missing[:3]}")
        return [(s.ast, s.label) for s in self.snippets]


def read_snippet(path: Path, source_id: str) -> Snippet:
    if path.suffix in SOURCE_SUFFIXES:
        text = path.read_text(encoding="utf-8")
        return Snippet(parse_minilang(text, source_id), path, text)
    ast = load_ast_file(path.read_bytes())
    if not ast.source_id:
        ast = Ast(ast.root, ast.nodes, source_id)
    return Snippet(ast, path)


def load_corpus(path) -> Corpus:
    path = Path(path)
    if path.is_file():
        return Corpus([read_snippet(path, path.stem)])
    if not path.is_dir():
        raise FileNotFoundError(f"no corpus at {path}")
    snippets = []
    for f in sorted(p for p in path.rglob("*") if p.suffix in SOURCE_SUFFIXES + AST_SUFFIXES):
        rel = f.relative_to(path).with_suffix("")
        snip = read_snippet(f, rel.as_posix())
        if len(rel.parts) > 1:
            snip.label = rel.parts[0]
        snippets.append(snip)
    if not snippets:
        raise ValueError(f"corpus {path} contains no .ml or .json files")
    ids = [s.ast.source_id for s in snippets]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate source ids in corpus")
    corpus = Corpus(snippets)
    manifest = path / "manifest.tsv"
    if manifest.exists():
        corpus.languages, corpus.task_ids = read_manifest(manifest.read_text(encoding="utf-8"))
    return corpus


def read_manifest(text: str) -> tuple[dict, dict]:
    languages, tasks = {}, {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        languages[parts[0]] = parts[1] if len(parts) > 1 and parts[1] else "minilang"
        if len(parts) > 2 and parts[2]:
            tasks[parts[0]] = parts[2]
    return languages, tasks


def read_truth(text: str) -> dict[str, str]:
    """``source_id <tab> label`` lines; ``#`` lines are comments."""
    truth = {}
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ValueError(f"truth line {n}: expected source_id and label")
        truth[parts[0]] = parts[1]
    return truth


def write_programs(programs: list[Program], root, as_ast: bool = False) -> list[Path]:
    """Write generated programs as ``root/<label>/<n>.ml`` plus ``truth.tsv``."""
    root = Path(root)
    written = []
    for p in programs:
        target = root / f"{p.source_id}{'.json' if as_ast else '.ml'}"
        target.parent.mkdir(parents=True, exist_ok=True)
        if as_ast:
            target.write_bytes(save_ast_file(parse_minilang(p.source, p.source_id)))
        else:
            target.write_text(p.source + "\n", encoding="utf-8")
        written.append(target)
    (root / "truth.tsv").write_text(
        "".join(f"{p.source_id}\t{p.label}\n" for p in programs), encoding="utf-8")
    return written
