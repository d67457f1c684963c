"""Recursive-descent parser for the concurrent toy language.

Numeric literals are exact rationals (decimal or p/q syntax inside interval
brackets); a scalar constant c is sugar for [c,c].  `#` starts a line
comment.  Operator labels and statement ids are assigned canonically
(depth-first, left-to-right) after parsing, so pretty-printed programs
reparse to identical ASTs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .syntax import (
    INF,
    NEG_INF,
    Assign,
    BinOp,
    Const,
    Expr,
    Ext,
    Guard,
    If,
    IsLocked,
    Location,
    Lock,
    Neg,
    Program,
    Seq,
    Stmt,
    Thread,
    Unlock,
    Var,
    While,
    Yield,
    check_unique_labels,
    relabel_program,
    vars_of_stmt,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


class DuplicateThreadId(ParseError):
    pass


class UndeclaredVariable(ParseError):
    pass


_KEYWORDS = {
    "var", "mutex", "thread", "if", "then", "while", "do",
    "lock", "unlock", "yield", "islocked", "inf",
}

_PUNCT = ["<-", "<=", ">=", "!=", "{", "}", "(", ")", "[", "]",
          ",", ";", "=", "<", ">", "+", "-", "*", "/"]


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'ident' | 'num' | 'punct' | 'kw' | 'eof'
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in _KEYWORDS else "ident"
            toks.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            toks.append(_Tok("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(_Tok("punct", p, line, col))
                col += len(p)
                i += len(p)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], strict: bool):
        self.toks = toks
        self.pos = 0
        self.strict = strict
        self.declared_vars: dict[str, tuple[Ext, Ext] | None] = {}
        self.declared_mutexes: list[str] = []
        self.used_vars: list[str] = []
        self.used_mutexes: list[str] = []

    # -- token helpers

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        t = self.peek()
        if not self.at(kind, text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, found {t.text or t.kind!r}",
                             t.line, t.col)
        return self.next()

    def err(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    # -- program structure

    def program(self) -> Program:
        while self.at("kw", "var") or self.at("kw", "mutex"):
            self.decl()
        threads: list[Thread] = []
        seen: set[int] = set()
        while self.at("kw", "thread"):
            t = self.thread()
            if t.tid in seen:
                tok = self.toks[self.pos - 1]
                raise DuplicateThreadId(f"duplicate thread id {t.tid}",
                                        tok.line, tok.col)
            seen.add(t.tid)
            threads.append(t)
        if not threads:
            raise self.err("program needs at least one thread")
        self.expect("eof")
        n = len(threads)
        if seen != set(range(1, n + 1)):
            raise ParseError(
                f"thread ids must be exactly 1..{n}, got {sorted(seen)}", 1, 1)
        threads.sort(key=lambda t: t.tid)

        variables = sorted(set(self.declared_vars) | set(self.used_vars))
        initial = tuple(
            (v, iv) for v, iv in sorted(self.declared_vars.items())
            if iv is not None)
        mutexes = tuple(sorted(set(self.declared_mutexes) | set(self.used_mutexes)))
        prog = Program(
            threads=tuple(threads),
            mutexes=mutexes,
            variables=tuple(variables),
            initial=initial,
        )
        prog = relabel_program(prog)
        check_unique_labels(prog)
        return prog

    def decl(self) -> None:
        if self.at("kw", "var"):
            self.next()
            name = self.expect("ident").text
            init: tuple[Ext, Ext] | None = None
            if self.at("punct", "="):
                self.next()
                init = self.interval_literal()
            self.expect("punct", ";")
            self.declared_vars[name] = init
        else:
            self.expect("kw", "mutex")
            name = self.expect("ident").text
            self.expect("punct", ";")
            self.declared_mutexes.append(name)

    def thread(self) -> Thread:
        self.expect("kw", "thread")
        tok = self.expect("num")
        if "." in tok.text:
            raise ParseError("thread id must be an integer", tok.line, tok.col)
        tid = int(tok.text)
        if tid <= 0:
            raise ParseError("thread id must be positive", tok.line, tok.col)
        body = self.block()
        return Thread(tid, body)

    def block(self) -> Stmt:
        self.expect("punct", "{")
        stmts: list[Stmt] = []
        while not self.at("punct", "}"):
            stmts.append(self.stmt())
        self.expect("punct", "}")
        if not stmts:
            # empty block: an always-true internal guard acts as a no-op
            return Guard(0, Const(Fraction(0), Fraction(0)), "=")
        out = stmts[-1]
        for s in reversed(stmts[:-1]):
            out = Seq(0, s, out)
        return out

    def stmt(self) -> Stmt:
        if self.at("punct", "{"):
            return self.block()
        if self.at("kw", "if"):
            self.next()
            e, cmp = self.condition()
            self.expect("kw", "then")
            return If(0, e, cmp, self.block())
        if self.at("kw", "while"):
            self.next()
            e, cmp = self.condition()
            self.expect("kw", "do")
            return While(0, e, cmp, self.block())
        if self.at("kw", "lock") or self.at("kw", "unlock"):
            kw = self.next().text
            self.expect("punct", "(")
            m = self.mutex_name()
            self.expect("punct", ")")
            self.expect("punct", ";")
            return Lock(0, m) if kw == "lock" else Unlock(0, m)
        if self.at("kw", "yield"):
            self.next()
            self.expect("punct", ";")
            return Yield(0)
        if self.at("ident"):
            name = self.var_name()
            self.expect("punct", "<-")
            if self.at("kw", "islocked"):
                self.next()
                self.expect("punct", "(")
                m = self.mutex_name()
                self.expect("punct", ")")
                self.expect("punct", ";")
                return IsLocked(0, name, m)
            e = self.expr()
            self.expect("punct", ";")
            return Assign(0, name, e)
        raise self.err("expected a statement")

    def condition(self) -> tuple[Expr, str]:
        e = self.expr()
        t = self.peek()
        if t.kind == "punct" and t.text in ("=", "!=", "<", ">", "<=", ">="):
            self.next()
        else:
            raise self.err("expected a comparison operator")
        zero = self.expect("num")
        if zero.text != "0":
            raise ParseError("comparisons are against 0", zero.line, zero.col)
        return e, t.text

    def var_name(self) -> str:
        t = self.expect("ident")
        if self.strict and t.text not in self.declared_vars:
            raise UndeclaredVariable(f"undeclared variable {t.text!r}",
                                     t.line, t.col)
        self.used_vars.append(t.text)
        return t.text

    def mutex_name(self) -> str:
        t = self.expect("ident")
        if self.strict and t.text not in self.declared_mutexes:
            raise ParseError(f"undeclared mutex {t.text!r}", t.line, t.col)
        self.used_mutexes.append(t.text)
        return t.text

    # -- expressions

    def expr(self) -> Expr:
        e = self.term()
        while self.at("punct", "+") or self.at("punct", "-"):
            t = self.next()
            loc = Location(0, t.line, t.col, t.text)
            e = BinOp(t.text, loc, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.at("punct", "*") or self.at("punct", "/"):
            t = self.next()
            loc = Location(0, t.line, t.col, t.text)
            e = BinOp(t.text, loc, e, self.factor())
        return e

    def factor(self) -> Expr:
        if self.at("punct", "-"):
            t = self.next()
            loc = Location(0, t.line, t.col, "-u")
            return Neg(loc, self.factor())
        return self.atom()

    def atom(self) -> Expr:
        if self.at("punct", "("):
            self.next()
            e = self.expr()
            self.expect("punct", ")")
            return e
        if self.at("punct", "["):
            lo, hi = self.interval_literal()
            tok = self.toks[self.pos - 1]
            if lo > hi:
                raise ParseError(f"empty interval [{lo},{hi}]", tok.line, tok.col)
            return Const(lo, hi)
        if self.at("num"):
            c = self.number()
            return Const(c, c)
        if self.at("ident"):
            return Var(self.var_name())
        raise self.err("expected an expression")

    def number(self) -> Fraction:
        t = self.expect("num")
        return Fraction(t.text)

    def endpoint(self) -> Ext:
        neg = False
        if self.at("punct", "-"):
            self.next()
            neg = True
        if self.at("kw", "inf"):
            self.next()
            return NEG_INF if neg else INF
        c = self.number()
        # p/q rational syntax is only available inside interval brackets
        if self.at("punct", "/"):
            self.next()
            d = self.number()
            if d == 0:
                t = self.toks[self.pos - 1]
                raise ParseError("zero denominator in rational literal",
                                 t.line, t.col)
            c = c / d
        return -c if neg else c

    def interval_literal(self) -> tuple[Ext, Ext]:
        tok = self.expect("punct", "[")
        lo = self.endpoint()
        self.expect("punct", ",")
        hi = self.endpoint()
        self.expect("punct", "]")
        if lo > hi:
            raise ParseError(f"empty interval [{lo},{hi}]", tok.line, tok.col)
        return lo, hi


def parse_program(text: str, strict: bool = False) -> Program:
    """Parse source text into a labeled Program.

    With strict=True, any variable or mutex mentioned before its
    declaration is an error; otherwise names are collected implicitly.
    """
    p = _Parser(_tokenize(text), strict)
    prog = p.program()
    # well-formedness: every referenced variable/mutex is in the program sets
    for t in prog.threads:
        for v in vars_of_stmt(t.body):
            assert v in prog.variables
    return prog
