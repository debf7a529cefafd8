import pytest
from hypothesis import given, settings

from subtree2vec.trees import (
    AstError, AstFormatError, AstNode, build_ast, delete_component, load_ast_file,
    rename_identifiers, renumber, save_ast_file,
)
from conftest import random_asts


def small():
    return build_ast([
        AstNode(0, "program", None, (1,)),
        AstNode(1, "expr_stmt", None, (2,)),
        AstNode(2, "expr", None, (3,)),
        AstNode(3, "binop", "+", (4, 5)),
        AstNode(4, "ident", "x"),
        AstNode(5, "literal", "1"),
    ], source_id="s")


class TestValidation:
    def test_well_formed(self):
        ast = small()
        assert len(ast) == 6
        assert ast.parent(4) == 3
        assert ast.parent(0) is None
        assert ast.preorder() == [0, 1, 2, 3, 4, 5]
        assert ast.subtree_size(3) == 3

    @pytest.mark.parametrize("nodes,msg", [
        ([AstNode(0, "program", None, (9,))], "dangling"),
        ([AstNode(0, "program", None, (1, 1)), AstNode(1, "expr")], "more than one parent"),
        ([AstNode(0, "program"), AstNode(1, "expr")], "multiple roots"),
        ([AstNode(0, "program", None, (1,)), AstNode(1, "ident")], "no token"),
        ([AstNode(0, "program", None, (1,)), AstNode(1, "literal", "3", (2,)), AstNode(2, "expr")],
         "has children"),
    ])
    def test_rejects_malformed(self, nodes, msg):
        with pytest.raises(AstError, match=msg):
            build_ast(nodes)

    def test_cycle(self):
        with pytest.raises(AstError):
            build_ast([AstNode(0, "program", None, (1,)), AstNode(1, "expr", None, (2,)),
                       AstNode(2, "expr", None, (1,))])

    def test_missing_node_lookup(self):
        with pytest.raises(AstError):
            small()[42]

    def test_immutable(self):
        ast = small()
        with pytest.raises(Exception):
            ast.nodes[7] = AstNode(7, "expr")


class TestInterchange:
    def test_round_trip_bytes(self):
        data = save_ast_file(small())
        again = load_ast_file(data)
        assert save_ast_file(again) == data
        assert again.structurally_equal(small())

    @settings(max_examples=60, deadline=None)
    @given(random_asts(max_nodes=12))
    def test_round_trip_property(self, ast):
        data = save_ast_file(ast)
        assert save_ast_file(load_ast_file(data)) == data

    @pytest.mark.parametrize("doc", [
        b"{not json", b"[]", b'{"root": 0}', b'{"root": "0", "nodes": []}',
        b'{"root": 0, "nodes": [{"id": 0}]}',
        b'{"root": 0, "nodes": [{"id": 0, "type": "program", "children": ["x"]}]}',
    ])
    def test_malformed(self, doc):
        with pytest.raises(AstFormatError):
            load_ast_file(doc)

    def test_duplicate_id(self):
        doc = b'{"root":0,"nodes":[{"id":0,"type":"program"},{"id":0,"type":"expr"}]}'
        with pytest.raises(AstError, match="duplicate"):
            load_ast_file(doc)

    def test_renumber_preorder(self):
        ast = build_ast([AstNode(10, "program", None, (5, 7)), AstNode(7, "ident", "b"),
                         AstNode(5, "ident", "a")], root=10)
        r = renumber(ast)
        assert r.preorder() == [0, 1, 2]
        assert r[1].token == "a"


class TestDeletion:
    def test_delete_subtree(self):
        d = delete_component(small(), 3)
        assert sorted(d.nodes) == [0, 1, 2]
        assert d[2].children == ()

    def test_original_untouched(self):
        ast = small()
        delete_component(ast, 3)
        assert len(ast) == 6

    def test_root_and_missing(self):
        with pytest.raises(AstError):
            delete_component(small(), 0)
        with pytest.raises(AstError):
            delete_component(small(), 99)

    @settings(max_examples=60, deadline=None)
    @given(random_asts(max_nodes=10))
    def test_size_drops_by_subtree(self, ast):
        for nid in ast.preorder()[1:]:
            assert len(delete_component(ast, nid)) == len(ast) - ast.subtree_size(nid)


def test_rename_identifiers():
    r = rename_identifiers(small(), {"x": "y"})
    assert r[4].token == "y"
    assert r[5].token == "1"
    assert rename_identifiers(small(), str.upper)[4].token == "X"
