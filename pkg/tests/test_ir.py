import pytest

from conftest import load_program
from slicegc import corpus_path
from slicegc.ir import (
    Branch,
    Call,
    Copy,
    IRError,
    New,
    Return,
    format_program,
    parse_program,
    shadow_var,
)

CORPUS = sorted(p.name[:-3] for p in corpus_path("programs").iterdir() if p.name.endswith(".ir"))


def test_corpus_size():
    assert len(CORPUS) >= 10
    assert {"write_to_file", "write_tmp"} <= set(CORPUS)


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trip(name):
    p = load_program(name)
    text = format_program(p)
    again = parse_program(text)
    assert format_program(again) == text
    for m in p:
        assert [e for e in again[m.name].edges] == m.edges
        assert again[m.name].stmts == m.stmts


def test_write_tmp_edges():
    m = load_program("write_tmp")["write"]
    assert [(e.id, e.src, e.dst) for e in m.edges] == [(1, 0, 1), (2, 1, 2), (3, 2, 3), (4, 2, 4)]
    assert isinstance(m.stmts[0], Call) and m.stmts[0].site == "tmp"
    assert m.stmts[4] == Return(None)


def test_statement_forms():
    p = parse_program(
        """
method C.m(this, a) {
  x = new C
  y = x
  y.f = a
  z = y.f
  K::s = z
  w = K::s
  r = vcall m(w, null) @vc
  emit ev(x, y)
L:
  branch L E
E:
  if r E2 E2
E2:
  goto F
F:
}
"""
    )
    m = p["C.m"]
    assert isinstance(m.stmts[0], New) and m.stmts[0].site == "C.m:0"
    assert isinstance(m.stmts[1], Copy)
    assert m.stmts[6].virtual and m.stmts[6].args == ("w", None)
    assert isinstance(m.stmts[8], Branch) and m.succ[8] == (8, 9)
    # falling off the end is an implicit return
    assert m.stmts[-1] == Return(None)
    assert m.owner_class() == "C"
    assert p.targets(m.stmts[6]) == [m]


@pytest.mark.parametrize(
    "text, line",
    [
        ("method m() {\n  x = y\n}\n", 2),
        ("method m() {\n  x = new C\n  return x\n  x = null\n}\n", 4),
        ("method m() {\n  goto L\n}\n", 2),
        ("method m() {\n  what is this\n}\n", 2),
        ("method m() {\n  return\n", 1),
        ("method m() {\nL:\nL:\n  return\n}\n", 3),
        ("x = new C\n", 1),
        ("method m() {\n  emit e(null)\n}\n", 2),
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(IRError) as info:
        parse_program(text)
    assert info.value.line == line


def test_arity_checked():
    with pytest.raises(IRError):
        parse_program("method f(a) {\n  return\n}\nmethod g() {\n  call f()\n}\n")


def test_shadow_names():
    assert shadow_var("tmp") == "__free_tmp"
    assert shadow_var("m:3") == "__free_m_3"
