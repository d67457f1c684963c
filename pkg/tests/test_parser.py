from fractions import Fraction

import pytest

from racebox.parser import (
    DuplicateThreadId,
    ParseError,
    UndeclaredVariable,
    parse_program,
)
from racebox.syntax import (
    Assign,
    BinOp,
    Const,
    Guard,
    If,
    Neg,
    Seq,
    Var,
    classify_vars,
    collect_lock_sets,
    pretty_program,
    program_locations,
    sub_exprs,
    sub_stmts,
    stmt_exprs,
)


def test_single_assignment():
    p = parse_program("thread 1 { x <- [0,1]; }")
    assert len(p.threads) == 1
    body = p.threads[0].body
    assert isinstance(body, Assign)
    assert body.var == "x"
    assert body.expr == Const(Fraction(0), Fraction(1))
    assert p.variables == ("x",)


def test_if_produces_cmp():
    p = parse_program("thread 1 { if x = 0 then { y <- 1; } }")
    body = p.threads[0].body
    assert isinstance(body, If)
    assert body.cmp == "="
    assert body.expr == Var("x")
    assert isinstance(body.body, Assign)


def test_malformed_expression():
    with pytest.raises(ParseError):
        parse_program("thread 1 { x <- ; }")


def test_duplicate_thread_id():
    with pytest.raises(DuplicateThreadId):
        parse_program("thread 1 { x <- 1; } thread 1 { y <- 1; }")


def test_thread_ids_must_be_dense():
    with pytest.raises(ParseError):
        parse_program("thread 1 { x <- 1; } thread 3 { y <- 1; }")


def test_strict_mode_undeclared():
    with pytest.raises(UndeclaredVariable):
        parse_program("thread 1 { x <- 1; }", strict=True)
    p = parse_program("var x; thread 1 { x <- 1; }", strict=True)
    assert p.variables == ("x",)


def test_scalar_desugars_to_interval():
    p = parse_program("thread 1 { x <- 3; }")
    assert p.threads[0].body.expr == Const(Fraction(3), Fraction(3))


def test_rational_and_decimal_literals():
    p = parse_program("var x = [1/2,3/4]; var y = [-1.5,inf]; thread 1 { x <- 0; }")
    init = dict(p.initial)
    assert init["x"] == (Fraction(1, 2), Fraction(3, 4))
    assert init["y"][0] == Fraction(-3, 2)
    assert init["y"][1] == float("inf")


def test_empty_interval_rejected():
    with pytest.raises(ParseError):
        parse_program("thread 1 { x <- [2,1]; }")


def test_precedence_and_associativity():
    p = parse_program("thread 1 { x <- 1 + 2 * 3 - 4; }")
    e = p.threads[0].body.expr
    # (1 + (2*3)) - 4
    assert isinstance(e, BinOp) and e.op == "-"
    assert isinstance(e.left, BinOp) and e.left.op == "+"
    assert isinstance(e.left.right, BinOp) and e.left.right.op == "*"


def test_roundtrip_identity():
    src = """
    var a = [0,2]; var b; mutex m; mutex n;
    thread 1 {
      a <- (a + 1) * [2,3];
      while a - 10 < 0 do { a <- a / 2; yield; }
      lock(m); b <- islocked(n); unlock(m);
    }
    thread 2 { if b != 0 then { b <- -b - 1/4; } }
    """
    p = parse_program(src)
    assert parse_program(pretty_program(p)) == p
    # and pretty is a fixpoint
    assert pretty_program(parse_program(pretty_program(p))) == pretty_program(p)


def test_labels_unique_and_count_operators():
    src = "thread 1 { x <- 1 + 2 * 3; y <- -x / (x - 1); }"
    p = parse_program(src)
    locs = program_locations(p)
    n_ops = 0
    for t in p.threads:
        for e in stmt_exprs(t.body):
            n_ops += sum(1 for x in sub_exprs(e)
                         if isinstance(x, (BinOp, Neg)))
    assert len(locs) == n_ops
    assert len({l.label for l in locs}) == len(locs)


def test_labels_deterministic_left_to_right():
    p = parse_program("thread 1 { x <- (1 + 2) - (3 * 4); }")
    e = p.threads[0].body.expr
    # canonical order is node-before-subtree, depth-first, left-to-right
    labels = [x.loc.label for x in sub_exprs(e) if isinstance(x, BinOp)]
    assert labels == sorted(labels) == [1, 2, 3]


def test_collect_lock_sets_priority_example(corpus):
    p = corpus("priority_mutex")
    ls = collect_lock_sets(p)
    assert ls[1] == frozenset({"m"})
    assert ls[2] == frozenset()


def test_collect_lock_sets_dead_branch_is_syntactic():
    p = parse_program(
        "mutex m; thread 1 { if [1,1] = 0 then { lock(m); } }")
    assert collect_lock_sets(p)[1] == frozenset({"m"})


def test_collect_lock_sets_empty():
    p = parse_program("thread 1 { x <- 1; }")
    assert collect_lock_sets(p)[1] == frozenset()


def test_classify_vars_dekker(corpus):
    p = corpus("dekker")
    fresh, local = classify_vars(p)
    assert "flag1" not in local[1] and "flag1" not in local[2]
    assert "flag2" not in local[1] and "flag2" not in local[2]
    assert fresh == frozenset()


def test_classify_vars_fresh_and_local():
    p = parse_program("var z; var w; thread 1 { w <- 1; } thread 2 { x <- w; }")
    fresh, local = classify_vars(p)
    assert "z" in fresh
    assert local[2] == frozenset({"x"})
    assert "w" not in local[1]  # read by thread 2


def test_guard_never_parsed():
    src = "thread 1 { if x = 0 then { y <- 1; } while y > 0 do { y <- 0; } }"
    p = parse_program(src)
    # guards only appear as synthesized statements, never in the parsed AST
    assert not any(isinstance(s, Guard) for s in sub_stmts(p.threads[0].body))


def test_comments_and_blocks():
    p = parse_program("# header\nthread 1 { { x <- 1; y <- 2; } # tail\n }")
    assert isinstance(p.threads[0].body, Seq)


@pytest.mark.parametrize("seed", range(30))
def test_roundtrip_random_programs(seed):
    import random

    from racebox.randgen import random_program

    p = random_program(random.Random(12_000 + seed))
    assert parse_program(pretty_program(p)) == p
