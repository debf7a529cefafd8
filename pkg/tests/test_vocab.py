from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from subtree2vec.minilang import parse_minilang
from subtree2vec.trees import AstNode, build_ast, rename_identifiers
from subtree2vec.vocab import (
    UNK, SubtreeVocab, Vocab, VocabError, build_token_vocab, build_vocab, canonical_id,
    function_names, identify_subtrees, label_set, mask_method_names, raw_labels, split_subtokens,
    vocab_from_counts,
)
from conftest import random_asts


class TestCanonicalIds:
    def test_nested_index_example(self):
        tree = parse_minilang("a[i] + b[j + 1];")
        ids = [r.canonical_id for r in identify_subtrees(tree)]
        assert ids[0] == "expr_stmt(expr(binop(index(ident,expr(ident)),index(ident,expr(binop(ident,literal))))))"
        assert "expr(binop(index(ident,expr(ident)),index(ident,expr(binop(ident,literal)))))" in ids

    def test_keywords_are_size_one(self):
        tree = parse_minilang("while (x) { x = x - 1; }")
        refs = identify_subtrees(tree)
        kw = [r for r in refs if r.canonical_id == "while"]
        assert len(kw) == 1 and kw[0].size == 1

    def test_literal_only_tree_has_no_subtrees(self):
        assert identify_subtrees(build_ast([AstNode(0, "literal", "1")])) == []

    def test_operators_optional(self):
        tree = parse_minilang("a + b;")
        assert canonical_id(tree, 1) == "expr_stmt(expr(binop(ident,ident)))"
        assert canonical_id(tree, 1, with_operators=True) == "expr_stmt(expr(binop[+](ident,ident)))"

    @settings(max_examples=80, deadline=None)
    @given(random_asts(max_nodes=12), st.text(alphabet="xyz_", min_size=1, max_size=4))
    def test_renaming_invariance(self, tree, prefix):
        renamed = rename_identifiers(tree, lambda name: prefix + name)
        renamed = renamed.with_tokens({n.id: "7" for n in renamed.iter_nodes() if n.type_label == "literal"})
        assert identify_subtrees(renamed) == identify_subtrees(tree)


class TestVocab:
    def corpus(self):
        return [parse_minilang(s, str(i)) for i, s in enumerate(["x = 1; y = 2;", "z = 3;", "if (a) b;"])]

    def test_ordering_and_min_count(self):
        v = build_vocab(self.corpus(), min_count=2)
        assert v.entries[0] == "expr(binop(ident,literal))"
        assert v.counts[0] == 3
        assert all(c >= 2 for c in v.counts)
        assert "if" not in v

    def test_tie_break_lexicographic(self):
        v = vocab_from_counts(Counter({"b": 2, "a": 2, "c": 5}), 1)
        assert v.entries == ["c", "a", "b"]

    def test_tsv_round_trip(self):
        v = build_vocab(self.corpus(), 1)
        text = v.to_tsv()
        assert text.startswith("#subtree-vocab v1 min_count=1\n")
        assert SubtreeVocab.from_tsv(text) == v

    @pytest.mark.parametrize("text", ["", "0\t1\tx\n", "#subtree-vocab v1 min_count=1\n3\t1\tx\n"])
    def test_bad_tsv(self, text):
        with pytest.raises(VocabError):
            SubtreeVocab.from_tsv(text)

    def test_empty_after_threshold(self):
        with pytest.raises(VocabError):
            build_vocab(self.corpus(), min_count=100)

    def test_label_set_skips_unknown(self):
        v = build_vocab(self.corpus(), 2)
        # if(a) b; has labels if, condition(..), expr(ident) x2, expr_stmt(..); only expr(ident) recurs
        assert label_set(self.corpus()[2], v) == [v.index("expr(ident)")] * 2

    def test_unknown_mode(self):
        with pytest.raises(VocabError):
            raw_labels(self.corpus()[0], "bogus")


class TestTokensAndNames:
    def test_split(self):
        assert split_subtokens("computeResult") == ["compute", "result"]
        assert split_subtokens("result_compute") == ["result", "compute"]
        assert split_subtokens("__x") == ["x"]

    def test_function_names_and_mask(self):
        tree = parse_minilang("int sumDigits(int n) { return n; }")
        assert function_names(tree) == ["sumDigits"]
        masked = mask_method_names(tree)
        assert function_names(masked) == ["<method>"]
        assert raw_labels(tree, "method_name") == ["sum", "digits"]

    def test_method_name_needs_function(self):
        with pytest.raises(VocabError):
            raw_labels(parse_minilang("x;"), "method_name")

    def test_symbol_vocab_unk_row(self):
        v = build_token_vocab([parse_minilang("x = x + y;")])
        assert v.symbols[0] == UNK
        assert v.symbols[1] == "x"
        assert v.lookup("never") == 0 and v.lookup(None) == 0
        assert Vocab.from_tsv(v.to_tsv()).symbols == v.symbols
