import json

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from subtree2vec.downstream import finetune
from subtree2vec.interpret import (
    SHADES, PerturbationRecord, UndefinedCorrelation, confidence, confidence_delta,
    delta_attention_correlation, explain, node_attention_scores, perturb_all, render_heat, shade,
    spearman,
)
from subtree2vec.minilang import parse_minilang
from subtree2vec.trainer import TrainConfig
from subtree2vec.vocab import SELECTABLE_TYPES


@pytest.fixture(scope="module")
def classifier(asts, programs, small_ckpt):
    items = [(a, p.label) for a, p in zip(asts, programs)]
    return finetune(small_ckpt, items, 1.0, "pretrained", TrainConfig(epochs=2, batch_size=8)).checkpoint


class TestCorrelation:
    def test_hand_value(self):
        assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 1)), min_size=3, max_size=20))
    def test_matches_scipy_with_ties(self, pairs):
        x, y = [p[0] for p in pairs], [p[1] for p in pairs]
        if len(set(x)) < 2 or len(set(y)) < 2:
            with pytest.raises(UndefinedCorrelation):
                spearman(x, y)
            return
        assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)

    def test_too_few_records(self):
        recs = [PerturbationRecord(i, "expr", 0.1 * i, 0.2 * i) for i in range(2)]
        with pytest.raises(UndefinedCorrelation):
            delta_attention_correlation(recs)

    def test_constant_delta(self):
        recs = [PerturbationRecord(i, "expr", 0.0, 0.2 * i) for i in range(4)]
        with pytest.raises(UndefinedCorrelation):
            delta_attention_correlation(recs)


class TestPerturbation:
    def test_one_copy_per_selectable_node(self):
        tree = parse_minilang("int f(int a) { if (a) { a = 1; } return a; }")
        copies = perturb_all(tree)
        expected = [n for n in tree.preorder()[1:] if tree[n].type_label in SELECTABLE_TYPES]
        assert [nid for nid, _ in copies] == expected
        for nid, t in copies:
            assert nid not in t.nodes
            assert len(t) == len(tree) - tree.subtree_size(nid)

    def test_self_delta_is_exactly_zero(self, classifier, asts):
        for a in asts[:5]:
            assert confidence_delta(classifier, a, a, 0) == 0.0

    def test_confidence_range_and_bad_class(self, classifier, asts):
        assert 0 < confidence(classifier, asts[0], 1) < 1
        with pytest.raises(IndexError):
            confidence(classifier, asts[0], 3)

    def test_needs_classifier(self, small_ckpt, asts):
        with pytest.raises(ValueError):
            confidence(small_ckpt, asts[0], 0)


class TestExplain:
    def test_report(self, classifier, asts, programs):
        report = explain(classifier, asts[0], programs[0].label)
        assert report.correct_class == programs[0].label
        assert all(0 <= r.attention_mass <= 1 for r in report.records)
        assert max(report.display_scores.values()) == 1.0
        assert set(report.display_scores) == set(asts[0].nodes)
        doc = json.loads(report.to_json())
        assert doc["correlation"]["method"] == "spearman"
        assert len(doc["records"]) == len(report.records)

    def test_class_by_index(self, classifier, asts):
        assert explain(classifier, asts[0], 2).correct_class == classifier.head_labels[2]
        with pytest.raises(ValueError):
            explain(classifier, asts[0], "nope")

    def test_scores_normalized(self, classifier, asts):
        scores = node_attention_scores(asts[1], classifier)
        assert max(scores.values()) == 1.0
        assert min(scores.values()) > 0


class TestRendering:
    def test_shade_levels(self):
        assert shade(0.0) == " "
        assert shade(1.0) == SHADES[-1]
        assert [shade(x) for x in (0.1, 0.3, 0.5, 0.7, 0.9)] == list(SHADES)

    def test_source_heat_lines(self):
        src = "x = 1;\ny;"
        tree = parse_minilang(src)
        scores = {n: 0.0 for n in tree.nodes}
        y = [n.id for n in tree.iter_nodes() if n.token == "y"][0]
        scores[y] = 1.0
        lines = render_heat(tree, scores, src).splitlines()
        assert lines == ["x = 1;", "", "y;", SHADES[-1]]

    def test_tree_listing_without_source(self):
        tree = parse_minilang("x;")
        out = render_heat(tree, {n: 0.5 for n in tree.nodes})
        assert out.splitlines()[0].endswith("program")
        assert "ident x" in out

    def test_misaligned_scores(self):
        tree = parse_minilang("x;")
        with pytest.raises(ValueError):
            render_heat(tree, {0: 1.0})
